//! Procedural datasets for tests, examples and the end-to-end benchmark.
//!
//! Normal images show a fixed arrangement of a disc, a square and a bar on a
//! textured background with small positional jitter. Structural anomalies add
//! a foreign blob; layout anomalies move one element to a place where it
//! never appears in normal images.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::image::{save_mask_png, save_unit_png, standardize};
use crate::io::{write_features, write_manifest, ManifestRow};
use crate::nets::{pdn, ArchConfig, Network, PdnRole};
use crate::tensor::{bilinear_resize, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub size: usize,
    pub train_normals: usize,
    pub test_normals: usize,
    pub blobs: usize,
    pub layouts: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            size: 128,
            train_normals: 64,
            test_normals: 20,
            blobs: 20,
            layouts: 10,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Defect {
    None,
    Blob,
    Layout,
}

impl Defect {
    pub fn category(self) -> &'static str {
        match self {
            Defect::None => "good",
            Defect::Blob => "blob",
            Defect::Layout => "layout",
        }
    }
}

/// A rendered image with its defect mask (all false for normal images).
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Vec<bool>,
    pub defect: Defect,
}

/// Shapes in unit coordinates, `(x, y)` with origin at the top left.
#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc {
        cx: f32,
        cy: f32,
        r: f32,
    },
    Square {
        cx: f32,
        cy: f32,
        half: f32,
    },
    Bar {
        x0: f32,
        x1: f32,
        cy: f32,
        half: f32,
    },
    Ellipse {
        cx: f32,
        cy: f32,
        rx: f32,
        ry: f32,
        angle: f32,
    },
}

impl Shape {
    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Square { cx, cy, half } => (x - cx).abs() <= half && (y - cy).abs() <= half,
            Shape::Bar { x0, x1, cy, half } => x >= x0 && x <= x1 && (y - cy).abs() <= half,
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
        }
    }

    fn translated(self, dx: f32, dy: f32) -> Shape {
        match self {
            Shape::Disc { cx, cy, r } => Shape::Disc {
                cx: cx + dx,
                cy: cy + dy,
                r,
            },
            Shape::Square { cx, cy, half } => Shape::Square {
                cx: cx + dx,
                cy: cy + dy,
                half,
            },
            Shape::Bar { x0, x1, cy, half } => Shape::Bar {
                x0: x0 + dx,
                x1: x1 + dx,
                cy: cy + dy,
                half,
            },
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                angle,
            } => Shape::Ellipse {
                cx: cx + dx,
                cy: cy + dy,
                rx,
                ry,
                angle,
            },
        }
    }
}

const BACKGROUND: [f32; 3] = [0.80, 0.78, 0.72];
const DISC: (Shape, [f32; 3]) = (
    Shape::Disc {
        cx: 0.30,
        cy: 0.32,
        r: 0.11,
    },
    [0.15, 0.25, 0.60],
);
const SQUARE: (Shape, [f32; 3]) = (
    Shape::Square {
        cx: 0.70,
        cy: 0.64,
        half: 0.09,
    },
    [0.70, 0.15, 0.12],
);
const BAR: (Shape, [f32; 3]) = (
    Shape::Bar {
        x0: 0.15,
        x1: 0.55,
        cy: 0.86,
        half: 0.035,
    },
    [0.20, 0.50, 0.22],
);
/// Places elements may be moved to in layout anomalies; empty in normal images.
const FREE_SPOTS: [(f32, f32); 2] = [(0.74, 0.26), (0.30, 0.64)];
const JITTER: f32 = 0.02;
const SUPERSAMPLE: usize = 3;

struct Canvas {
    size: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn background<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Canvas {
        let noise = Normal::new(0.0f32, 0.015).expect("valid normal");
        let tint: Vec<f32> = (0..3).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let plane = size * size;
        let mut data = vec![0.0; 3 * plane];
        for y in 0..size {
            for x in 0..size {
                let shade = 0.04 * ((y as f32 / size as f32) - 0.5);
                let grain = noise.sample(rng);
                for c in 0..3 {
                    data[c * plane + y * size + x] = BACKGROUND[c] + tint[c] + shade + grain;
                }
            }
        }
        Canvas { size, data }
    }

    /// Paints `shape` with anti-aliased edges and returns its pixel coverage.
    fn paint(&mut self, shape: &Shape, color: [f32; 3]) -> Vec<bool> {
        let n = self.size;
        let plane = n * n;
        let mut covered = vec![false; plane];
        let sub = SUPERSAMPLE as f32;
        for y in 0..n {
            for x in 0..n {
                let mut hits = 0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let u = (x as f32 + (sx as f32 + 0.5) / sub) / n as f32;
                        let v = (y as f32 + (sy as f32 + 0.5) / sub) / n as f32;
                        hits += usize::from(shape.contains(u, v));
                    }
                }
                if hits == 0 {
                    continue;
                }
                let a = hits as f32 / (sub * sub);
                for (c, &col) in color.iter().enumerate() {
                    let p = &mut self.data[c * plane + y * n + x];
                    *p = (1.0 - a) * *p + a * col;
                }
                covered[y * n + x] = a >= 0.5;
            }
        }
        covered
    }

    fn finish(self) -> Tensor {
        let n = self.size;
        let data = self.data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Tensor::from_vec(&[3, n, n], data).expect("canvas dims")
    }
}

fn jittered<R: Rng + ?Sized>(element: (Shape, [f32; 3]), rng: &mut R) -> (Shape, [f32; 3]) {
    let (shape, color) = element;
    let shape = shape.translated(
        rng.gen_range(-JITTER..JITTER),
        rng.gen_range(-JITTER..JITTER),
    );
    let color = color.map(|c| c + rng.gen_range(-0.03..0.03));
    (shape, color)
}

fn center(shape: &Shape) -> (f32, f32) {
    match *shape {
        Shape::Disc { cx, cy, .. }
        | Shape::Square { cx, cy, .. }
        | Shape::Ellipse { cx, cy, .. } => (cx, cy),
        Shape::Bar { x0, x1, cy, .. } => ((x0 + x1) / 2.0, cy),
    }
}

/// Renders one image of the given kind.
pub fn render<R: Rng + ?Sized>(size: usize, defect: Defect, rng: &mut R) -> Sample {
    let mut canvas = Canvas::background(size, rng);
    let mut elements = vec![
        jittered(DISC, rng),
        jittered(SQUARE, rng),
        jittered(BAR, rng),
    ];
    let mut mask = vec![false; size * size];

    if defect == Defect::Layout {
        let which = rng.gen_range(0..2);
        let (shape, color) = elements[which];
        let (cx, cy) = center(&shape);
        let spot = FREE_SPOTS[which];
        let moved = shape.translated(
            spot.0 - cx + rng.gen_range(-JITTER..JITTER),
            spot.1 - cy + rng.gen_range(-JITTER..JITTER),
        );
        // The vacated area counts as defective as well.
        let mut probe = Canvas {
            size,
            data: vec![0.0; 3 * size * size],
        };
        let vacated = probe.paint(&shape, color);
        for (m, v) in mask.iter_mut().zip(vacated) {
            *m |= v;
        }
        elements[which] = (moved, color);
    }
    for (shape, color) in &elements {
        let covered = canvas.paint(shape, *color);
        if defect == Defect::Layout && matches!(shape, Shape::Disc { .. } | Shape::Square { .. }) {
            let (cx, cy) = center(shape);
            let displaced = FREE_SPOTS
                .iter()
                .any(|&(fx, fy)| (fx - cx).abs() < 0.1 && (fy - cy).abs() < 0.1);
            if displaced {
                for (m, v) in mask.iter_mut().zip(covered) {
                    *m |= v;
                }
            }
        }
    }
    if defect == Defect::Blob {
        let blob = Shape::Ellipse {
            cx: rng.gen_range(0.15..0.85),
            cy: rng.gen_range(0.15..0.85),
            rx: rng.gen_range(0.04..0.08),
            ry: rng.gen_range(0.03..0.06),
            angle: rng.gen_range(0.0..std::f32::consts::PI),
        };
        let color = [
            rng.gen_range(0.25..0.45),
            rng.gen_range(0.18..0.32),
            rng.gen_range(0.05..0.15),
        ];
        mask = canvas.paint(&blob, color);
    }
    Sample {
        image: canvas.finish(),
        mask,
        defect,
    }
}

/// Dead-leaves style clutter: overlapping random discs and rectangles in
/// random colors. Used as a stand-in for a generic natural-image corpus.
pub fn clutter_image<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Tensor {
    let base = [rng.gen(), rng.gen(), rng.gen()];
    let plane = size * size;
    let mut canvas = Canvas {
        size,
        data: (0..3)
            .flat_map(|c| std::iter::repeat_n(base[c], plane))
            .collect(),
    };
    let count = rng.gen_range(20..50);
    for _ in 0..count {
        // Heavy-tailed sizes give structure at several scales.
        let scale = 0.02 + 0.25 * rng.gen::<f32>().powi(3);
        let (cx, cy) = (rng.gen(), rng.gen());
        let shape = if rng.gen_bool(0.5) {
            Shape::Disc { cx, cy, r: scale }
        } else {
            Shape::Ellipse {
                cx,
                cy,
                rx: scale,
                ry: scale * rng.gen_range(0.3..1.0),
                angle: rng.gen_range(0.0..std::f32::consts::PI),
            }
        };
        canvas.paint(&shape, [rng.gen(), rng.gen(), rng.gen()]);
    }
    canvas.finish()
}

pub fn clutter_corpus(count: usize, size: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| clutter_image(size, &mut rng)).collect()
}

/// Train normals followed by the test set (normals, blobs, layouts).
pub struct SyntheticSet {
    pub train: Vec<Tensor>,
    pub test: Vec<Sample>,
}

pub fn generate(config: &SyntheticConfig) -> SyntheticSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.size;
    let train = (0..config.train_normals)
        .map(|_| render(s, Defect::None, &mut rng).image)
        .collect();
    let mut test = Vec::new();
    for (kind, n) in [
        (Defect::None, config.test_normals),
        (Defect::Blob, config.blobs),
        (Defect::Layout, config.layouts),
    ] {
        test.extend((0..n).map(|_| render(s, kind, &mut rng)));
    }
    SyntheticSet { train, test }
}

/// Writes the set in the standard dataset layout under `root`.
pub fn write_dataset(set: &SyntheticSet, root: &Path) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let train_dir = root.join("train").join("good");
    mkdir(&train_dir)?;
    for (i, img) in set.train.iter().enumerate() {
        save_unit_png(img, &train_dir.join(format!("{i:03}.png")))?;
    }
    let mut counters = [0usize; 3];
    for sample in &set.test {
        let cat = sample.defect.category();
        let k = &mut counters[sample.defect as usize];
        let stem = format!("{:03}", *k);
        *k += 1;
        let dir = root.join("test").join(cat);
        mkdir(&dir)?;
        save_unit_png(&sample.image, &dir.join(format!("{stem}.png")))?;
        if sample.defect != Defect::None {
            let gt = root.join("ground_truth").join(cat);
            mkdir(&gt)?;
            let (_, h, w) = sample.image.chw()?;
            save_mask_png(&sample.mask, h, w, &gt.join(format!("{stem}_mask.png")))?;
        }
    }
    Ok(())
}

/// Randomly initialized teacher-shaped network standing in for a pretrained
/// feature extractor.
pub fn reference_backbone(arch: &ArchConfig, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pdn(arch, PdnRole::Teacher, &mut rng)
}

/// Backbone features of a unit-range image at the backbone's input size.
pub fn backbone_features(backbone: &Network, unit: &Tensor) -> Result<Tensor> {
    let input = match backbone.fixed_input() {
        Some((h, w)) if unit.dims()[1..] != [h, w] => bilinear_resize(unit, h, w)?,
        _ => unit.clone(),
    };
    backbone.forward(&standardize(&input))
}

/// Saves `images` as PNGs with one EAD1 feature file each (plus a gray
/// variant if requested) and writes `manifest.tsv` in `dir`.
pub fn export_features(
    backbone: &Network,
    images: &[Tensor],
    dir: &Path,
    with_gray: bool,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let image = dir.join(format!("img{i:04}.png"));
        let features = dir.join(format!("img{i:04}.ead1"));
        save_unit_png(img, &image)?;
        write_features(&features, &backbone_features(backbone, img)?)?;
        let gray_features = if with_gray {
            let path = dir.join(format!("img{i:04}.gray.ead1"));
            write_features(
                &path,
                &backbone_features(backbone, &crate::io::image::to_gray(img))?,
            )?;
            Some(path)
        } else {
            None
        };
        rows.push(ManifestRow {
            image,
            features,
            gray_features,
        });
    }
    let manifest = dir.join("manifest.tsv");
    write_manifest(
        &manifest,
        &rows,
        &["reference backbone features".to_string()],
    )?;
    Ok(manifest)
}
