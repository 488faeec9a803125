//! Fast student-teacher anomaly detection on the CPU.
//!
//! The crate bundles a small tensor core with hand-written backward passes,
//! the patch description networks and autoencoder, distillation and training
//! loops, the inference pipeline with quantile map normalization, evaluation
//! metrics, a binary tensor container, and a latency harness.

pub mod bench;
pub mod cli;
pub mod distill;
pub mod error;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nets;
pub mod optim;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use distill::{distill, DistillConfig};
pub use error::{Error, Result};
pub use inference::{infer, infer_raw_maps, AnomalyResult};
pub use model::{MapQuantiles, ModelBundle};
pub use nets::{ArchConfig, Variant};
pub use tensor::Tensor;
pub use training::{train, TrainConfig};
