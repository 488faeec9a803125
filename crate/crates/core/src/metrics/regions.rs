use crate::error::{Error, Result};

/// Binary ground-truth mask in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("mask", "length", height * width, data.len()));
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
}

/// Connected foreground components, each a list of row-major pixel indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSet {
    /// Per-pixel region id; 0 is background, regions are numbered from 1.
    pub labels: Vec<u32>,
    pub regions: Vec<Vec<usize>>,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// 8-connected labeling. Regions are numbered in the raster order of their
/// first pixel.
pub fn connected_components(mask: &Mask) -> RegionSet {
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![0u32; h * w];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let id = regions.len() as u32 + 1;
        let mut pixels = Vec::new();
        labels[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (y, x) = ((p / w) as isize, (p % w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask.data[q] && labels[q] == 0 {
                        labels[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        regions.push(pixels);
    }
    RegionSet { labels, regions }
}
