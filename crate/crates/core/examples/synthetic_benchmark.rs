//! Distill, train and evaluate on the procedural dataset, printing the metrics.
//!
//! cargo run --release --example synthetic_benchmark -- [train_iterations] [distill_iterations]

use efficientad::pipeline::{run_synthetic_benchmark, BenchmarkConfig};

fn main() -> efficientad::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("iteration count"));
    let mut config = BenchmarkConfig::default();
    if let Some(n) = args.next() {
        config.train_iterations = n;
    }
    if let Some(n) = args.next() {
        config.distill_iterations = n;
    }
    let outcome = run_synthetic_benchmark(&config)?;
    let m = &outcome.report.metrics;
    println!("image AU-ROC {:.4}  AU-PRC {:.4}", m.auroc, m.auprc);
    for (cat, v) in &m.category_auroc {
        println!("  {cat:<8} AU-ROC {v:.4}");
    }
    if let (Some(pro), Some(pix)) = (m.aupro, m.pixel_auroc) {
        println!("AU-PRO@0.3 {pro:.4}  pixel AU-ROC@0.3 {pix:.4}");
    }
    println!("total {:.1}s", outcome.seconds);
    Ok(())
}
