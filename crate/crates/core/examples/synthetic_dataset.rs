//! Writes the procedural benchmark dataset in the standard directory layout.
//!
//! cargo run --example synthetic_dataset -- /tmp/synthetic

use std::path::PathBuf;

use efficientad::synthetic::{generate, write_dataset, SyntheticConfig};

fn main() -> efficientad::Result<()> {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "synthetic".into()),
    );
    let set = generate(&SyntheticConfig::default());
    write_dataset(&set, &root)?;
    println!(
        "wrote {} train and {} test images to {}",
        set.train.len(),
        set.test.len(),
        root.display()
    );
    Ok(())
}
