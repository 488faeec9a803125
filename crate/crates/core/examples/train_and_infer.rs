//! Trains a small model on procedural normal images and writes the anomaly
//! map of one blob anomaly as a 16-bit PNG.
//!
//! cargo run --release --example train_and_infer -- /tmp/out [iterations]

use std::path::PathBuf;

use efficientad::io::image::standardize;
use efficientad::io::maps::write_map_png16;
use efficientad::synthetic::{clutter_corpus, generate, Defect, SyntheticConfig};
use efficientad::{infer, train, ArchConfig, ModelBundle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "train_and_infer".into()));
    let iterations = args
        .next()
        .map_or(200, |n| n.parse().expect("iteration count"));
    std::fs::create_dir_all(&out)?;
    let arch = ArchConfig {
        image_size: 128,
        width_divisor: 16,
        feature_channels: 16,
        ..ArchConfig::default()
    };
    let data = generate(&SyntheticConfig {
        size: arch.image_size,
        train_normals: 16,
        test_normals: 2,
        blobs: 1,
        layouts: 0,
        seed: 3,
    });

    // A random teacher stands in for a distilled one here.
    let teacher = ModelBundle::init(arch, 1)?.teacher;
    let config = TrainConfig {
        arch,
        ..TrainConfig::default()
    }
    .with_iterations(iterations);
    let trained = train(
        teacher,
        &data.train,
        &clutter_corpus(8, 2 * arch.image_size, 4),
        &config,
    )?;
    let last = trained
        .history
        .smoothed
        .last()
        .map_or(f32::NAN, |r| r.l_total);
    println!("trained {iterations} steps, smoothed total loss {last:.4}");

    for (i, sample) in data.test.iter().enumerate() {
        let result = infer(&trained.bundle, &standardize(&sample.image))?;
        println!(
            "{:<6} score {:+.4}",
            sample.defect.category(),
            result.image_score
        );
        if sample.defect == Defect::Blob {
            let path = out.join(format!("blob{i}.png"));
            write_map_png16(&result.combined, &path)?;
            println!("map written to {}", path.display());
        }
    }
    Ok(())
}
