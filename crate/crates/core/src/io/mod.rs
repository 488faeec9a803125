//! Files on disk: images, datasets, EAD1 containers, checkpoints, manifests.

pub mod checkpoint;
pub mod dataset;
pub mod ead1;
pub mod image;
pub mod manifest;
pub mod maps;

pub use checkpoint::{load_bundle, load_teacher, save_bundle, save_teacher};
pub use dataset::{index_dataset, DatasetIndex, Label, TestEntry};
pub use ead1::{read_features, write_features, Container};
pub use image::{load_image, load_unit_image, standardize};
pub use manifest::{read_manifest, write_manifest, ManifestRow};
