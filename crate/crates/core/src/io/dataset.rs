//! Directory layout of an anomaly-detection dataset.
//!
//! ```text
//! root/
//!   train/good/*.png
//!   test/good/*.png
//!   test/<defect>/*.png
//!   ground_truth/<defect>/<stem>_mask.png   (or <stem>.png)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub path: PathBuf,
    pub label: Label,
    /// Defect directory name (`"good"` for normal images).
    pub category: String,
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub train: Vec<PathBuf>,
    pub test: Vec<TestEntry>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn find_mask(root: &Path, category: &str, image: &Path) -> Option<PathBuf> {
    let stem = image.file_stem()?.to_str()?;
    let dir = root.join("ground_truth").join(category);
    [format!("{stem}_mask.png"), format!("{stem}.png")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

/// Indexes `root`; ordering is lexicographic so the result depends only on the tree.
pub fn index_dataset(root: &Path) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let train_dir = root.join("train").join("good");
    if !train_dir.is_dir() {
        return Err(Error::Dataset(format!("missing {}", train_dir.display())));
    }
    let train = list_images(&train_dir)?;
    let mut test = Vec::new();
    let test_dir = root.join("test");
    if test_dir.is_dir() {
        for dir in sorted_subdirs(&test_dir)? {
            let category = dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let label = if category == "good" {
                Label::Normal
            } else {
                Label::Anomalous
            };
            for path in list_images(&dir)? {
                let mask = match label {
                    Label::Normal => None,
                    Label::Anomalous => find_mask(root, &category, &path),
                };
                if let Some(mask_path) = &mask {
                    let image_dims = image::image_dimensions(&path).map_err(|e| Error::Image {
                        path: path.clone(),
                        msg: e.to_string(),
                    })?;
                    let mask_dims =
                        image::image_dimensions(mask_path).map_err(|e| Error::Image {
                            path: mask_path.clone(),
                            msg: e.to_string(),
                        })?;
                    if image_dims != mask_dims {
                        return Err(Error::Dataset(format!(
                            "mask {} is {:?}, image is {:?}",
                            mask_path.display(),
                            mask_dims,
                            image_dims
                        )));
                    }
                }
                test.push(TestEntry {
                    path,
                    label,
                    category: category.clone(),
                    mask,
                });
            }
        }
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        train,
        test,
    })
}
