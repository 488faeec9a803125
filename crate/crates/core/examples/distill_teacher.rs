//! Exports reference features for a clutter corpus, then distills a small
//! teacher from the manifest and saves it.
//!
//! cargo run --release --example distill_teacher -- /tmp/distill [iterations]

use std::path::PathBuf;

use efficientad::distill::load_pairs;
use efficientad::io::manifest::read_manifest;
use efficientad::io::save_teacher;
use efficientad::synthetic::{clutter_corpus, export_features, reference_backbone};
use efficientad::{distill, ArchConfig, DistillConfig};

fn main() -> efficientad::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "distill".into()));
    let iterations = args
        .next()
        .map_or(50, |n| n.parse().expect("iteration count"));
    let arch = ArchConfig {
        image_size: 128,
        width_divisor: 16,
        feature_channels: 16,
        ..ArchConfig::default()
    };

    let backbone = reference_backbone(&arch, 1)?;
    let manifest = export_features(
        &backbone,
        &clutter_corpus(8, arch.image_size, 2),
        &dir,
        true,
    )?;
    let f = arch.feature_size();
    let pairs = load_pairs(
        &read_manifest(&manifest)?,
        arch.image_size,
        &[arch.feature_channels, f, f],
    )?;

    let config = DistillConfig {
        arch,
        iterations,
        batch_size: 4,
        ..DistillConfig::default()
    };
    let out = distill(&pairs, &config)?;
    if let (Some(first), Some(last)) = (out.losses.first(), out.losses.last()) {
        println!(
            "{} pairs, loss {first:.4} -> {last:.4} over {iterations} steps",
            pairs.len()
        );
    }
    let path = dir.join("teacher.ead1");
    save_teacher(&out.teacher, &arch, &path)?;
    println!("teacher written to {}", path.display());
    Ok(())
}
