//! Image- and pixel-level metrics on a hand-made example.
//!
//! cargo run --example evaluate_metrics

use efficientad::metrics::{connected_components, EvalImage, EvalOptions, EvalSet, Mask};
use efficientad::Tensor;

fn main() -> efficientad::Result<()> {
    // Two defects in one 4x4 mask: an L-shaped blob and a single pixel.
    #[rustfmt::skip]
    let mask = Mask::new(4, 4, vec![
        true, true, false, false,
        true, false, false, false,
        false, false, false, false,
        false, false, false, true,
    ])?;
    let regions = connected_components(&mask);
    println!(
        "{} regions, sizes {:?}",
        regions.len(),
        regions.regions.iter().map(Vec::len).collect::<Vec<_>>()
    );

    #[rustfmt::skip]
    let map = Tensor::from_vec(&[1, 4, 4], vec![
        0.9, 0.8, 0.1, 0.0,
        0.7, 0.2, 0.1, 0.0,
        0.3, 0.1, 0.0, 0.0,
        0.0, 0.0, 0.2, 0.4,
    ])?;
    let mut set = EvalSet::default();
    for (i, (score, anomalous)) in [(0.1, false), (0.4, false), (0.35, true), (0.8, true)]
        .into_iter()
        .enumerate()
    {
        set.push(EvalImage {
            name: format!("img{i}"),
            category: if anomalous { "defect" } else { "good" }.into(),
            anomalous,
            score,
            map: Some(if anomalous {
                map.clone()
            } else {
                Tensor::zeros(&[1, 4, 4])
            }),
            mask: Some(if anomalous {
                mask.clone()
            } else {
                Mask::empty(4, 4)
            }),
        });
    }
    let report = set.evaluate(&EvalOptions::default(), serde_json::json!({}))?;
    let m = &report.metrics;
    println!(
        "image AU-ROC {:.4} (expected 0.75), AU-PRC {:.4}",
        m.auroc, m.auprc
    );
    println!(
        "AU-PRO@0.3 {:?}, pixel AU-ROC@0.3 {:?}",
        m.aupro, m.pixel_auroc
    );
    Ok(())
}
