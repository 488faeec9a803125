//! Image- and pixel-level evaluation.
//!
//! All curves are built from every distinct score value by default, so
//! results are exact; [`Thresholds::Binned`] trades a little accuracy for
//! speed on large maps.

mod curves;
mod regions;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use curves::{auprc, aupro, auroc, pixel_auroc, Thresholds};
pub use regions::{connected_components, Mask, RegionSet};

/// One evaluated test image.
#[derive(Clone, Debug)]
pub struct EvalImage {
    pub name: String,
    /// Defect category; `"good"` for normal images.
    pub category: String,
    pub anomalous: bool,
    pub score: f64,
    pub map: Option<Tensor>,
    pub mask: Option<Mask>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalSet {
    pub images: Vec<EvalImage>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub pro_fpr_limit: f64,
    pub pixel_fpr_limit: f64,
    /// `None` for exact curves, otherwise the bin count for pixel metrics.
    pub bins: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            pro_fpr_limit: 0.3,
            pixel_fpr_limit: 0.3,
            bins: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub name: String,
    pub category: String,
    pub anomalous: bool,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub auroc: f64,
    pub auprc: f64,
    /// Absent when no image carries a defect mask.
    pub aupro: Option<f64>,
    pub pixel_auroc: Option<f64>,
    /// Image AU-ROC of each defect category against all normal images.
    pub category_auroc: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub metrics: MetricValues,
    pub options: EvalOptions,
    pub images: Vec<ImageRecord>,
    /// Free-form echo of the configuration that produced the scores.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path, format!("serializing report: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

impl EvalSet {
    pub fn push(&mut self, image: EvalImage) {
        self.images.push(image);
    }

    /// Computes every metric the set supports. Pixel metrics use images that
    /// have a map and either a mask or a normal label.
    pub fn evaluate(&self, options: &EvalOptions, config: serde_json::Value) -> Result<EvalReport> {
        let scores: Vec<f64> = self.images.iter().map(|i| i.score).collect();
        let labels: Vec<bool> = self.images.iter().map(|i| i.anomalous).collect();
        let mut category_auroc = BTreeMap::new();
        let mut categories: Vec<&str> = self
            .images
            .iter()
            .filter(|i| i.anomalous)
            .map(|i| i.category.as_str())
            .collect();
        categories.sort_unstable();
        categories.dedup();
        for cat in categories {
            let (s, l): (Vec<f64>, Vec<bool>) = self
                .images
                .iter()
                .filter(|i| !i.anomalous || i.category == cat)
                .map(|i| (i.score, i.anomalous))
                .unzip();
            if l.iter().any(|&x| !x) {
                category_auroc.insert(cat.to_string(), auroc(&s, &l)?);
            }
        }

        let mut maps = Vec::new();
        let mut masks = Vec::new();
        for img in &self.images {
            let Some(map) = &img.map else { continue };
            let (h, w) = match map.dims() {
                [h, w] | [1, h, w] => (*h, *w),
                d => {
                    return Err(Error::shape(
                        "evaluate",
                        "map",
                        "HxW or 1xHxW",
                        format!("{d:?}"),
                    ))
                }
            };
            match (&img.mask, img.anomalous) {
                (Some(m), _) => masks.push(m.clone()),
                (None, false) => masks.push(Mask::empty(h, w)),
                (None, true) => continue,
            }
            maps.push(map.clone());
        }
        let thresholds = options.bins.map_or(Thresholds::Exact, Thresholds::Binned);
        let has_defects = masks.iter().any(|m| m.foreground() > 0);
        let (aupro_v, pixel_v) = if has_defects {
            (
                Some(aupro(&maps, &masks, options.pro_fpr_limit, thresholds)?),
                Some(pixel_auroc(
                    &maps,
                    &masks,
                    options.pixel_fpr_limit,
                    thresholds,
                )?),
            )
        } else {
            (None, None)
        };

        Ok(EvalReport {
            schema_version: 1,
            metrics: MetricValues {
                auroc: auroc(&scores, &labels)?,
                auprc: auprc(&scores, &labels)?,
                aupro: aupro_v,
                pixel_auroc: pixel_v,
                category_auroc,
            },
            options: *options,
            images: self
                .images
                .iter()
                .map(|i| ImageRecord {
                    name: i.name.clone(),
                    category: i.category.clone(),
                    anomalous: i.anomalous,
                    score: i.score,
                })
                .collect(),
            config,
        })
    }
}
