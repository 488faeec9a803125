//! Writes a feature tensor as an EAD1 file, dumps its header bytes, and reads it back.
//!
//! cargo run --example ead1_features -- /tmp/features.ead1

use std::path::PathBuf;

use efficientad::io::ead1::{read_features, write_features};
use efficientad::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "features.ead1".into()),
    );
    let data = (0..2 * 3 * 4).map(|i| i as f32 * 0.5).collect();
    let features = Tensor::from_vec(&[2, 3, 4], data)?;
    write_features(&path, &features)?;

    let bytes = std::fs::read(&path)?;
    println!("{} bytes; first 48:", bytes.len());
    for row in bytes[..48.min(bytes.len())].chunks(16) {
        let hex: Vec<String> = row.iter().map(|b| format!("{b:02x}")).collect();
        println!("  {}", hex.join(" "));
    }

    let back = read_features(&path, Some(&[2, 3, 4]))?;
    assert_eq!(back, features);
    println!("round trip ok: dims {:?}", back.dims());
    Ok(())
}
