use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::regions::{connected_components, Mask};

/// One scored sample contributing `neg` to the false-positive count and
/// `pos` to the (weighted) true-positive mass.
#[derive(Clone, Copy, Debug)]
struct Item {
    score: f64,
    neg: u32,
    pos: f64,
}

/// How threshold candidates are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Thresholds {
    /// Every distinct score value.
    #[default]
    Exact,
    /// Scores are quantized into this many equal-width bins first.
    Binned(usize),
}

fn check_finite(op: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(op, format!("non-finite score {x}")))
    }
}

fn check_limit(op: &'static str, limit: f64) -> Result<()> {
    if limit > 0.0 && limit <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            op,
            format!("fpr_limit must lie in (0, 1], got {limit}"),
        ))
    }
}

/// Replaces scores by their bin index over `[min, max]`.
fn quantize(items: &mut [Item], bins: usize) {
    let lo = items.iter().map(|i| i.score).fold(f64::INFINITY, f64::min);
    let hi = items
        .iter()
        .map(|i| i.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let bins = bins.max(1);
    for it in items {
        it.score = if span > 0.0 {
            (((it.score - lo) / span * bins as f64).floor() as usize).min(bins - 1) as f64
        } else {
            0.0
        };
    }
}

/// Curve points `(fpr, tpr)` for thresholds running from +inf downwards,
/// starting at `(0, 0)`. Tied scores form a single step.
fn sweep(
    mut items: Vec<Item>,
    neg_total: u64,
    pos_total: f64,
    thresholds: Thresholds,
) -> Vec<(f64, f64)> {
    if let Thresholds::Binned(bins) = thresholds {
        quantize(&mut items, bins);
    }
    items.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::with_capacity(items.len() + 1);
    points.push((0.0, 0.0));
    let (mut neg, mut pos) = (0u64, 0.0f64);
    let mut i = 0;
    while i < items.len() {
        let s = items[i].score;
        while i < items.len() && items[i].score == s {
            neg += items[i].neg as u64;
            pos += items[i].pos;
            i += 1;
        }
        points.push((neg as f64 / neg_total as f64, pos / pos_total));
    }
    points
}

/// Trapezoidal area under a monotone curve for `x <= limit`, divided by
/// `limit`. The segment crossing the limit is linearly interpolated.
fn partial_area(points: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area / limit
}

fn image_items(op: &'static str, scores: &[f64], labels: &[bool]) -> Result<(Vec<Item>, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(op, "labels", scores.len(), labels.len()));
    }
    let mut items = Vec::with_capacity(scores.len());
    let (mut pos, mut neg) = (0u64, 0u64);
    for (&score, &label) in scores.iter().zip(labels) {
        check_finite(op, score)?;
        if label {
            pos += 1;
        } else {
            neg += 1;
        }
        items.push(Item {
            score,
            neg: u32::from(!label),
            pos: if label { 1.0 } else { 0.0 },
        });
    }
    Ok((items, pos, neg))
}

/// Area under the ROC curve; `labels[i]` is true for anomalous samples.
///
/// Ties share one threshold step, so the result equals the tie-corrected
/// Mann-Whitney statistic.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (items, pos, neg) = image_items("auroc", scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "auroc",
            "needs at least one positive and one negative",
        ));
    }
    Ok(partial_area(
        &sweep(items, neg, pos as f64, Thresholds::Exact),
        1.0,
    ))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (mut items, pos, _) = image_items("auprc", scores, labels)?;
    if pos == 0 {
        return Err(Error::invalid("auprc", "needs at least one positive"));
    }
    items.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (mut tp, mut fp, mut recall, mut ap) = (0u64, 0u64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < items.len() {
        let s = items[i].score;
        while i < items.len() && items[i].score == s {
            if items[i].neg == 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let r = tp as f64 / pos as f64;
        ap += (r - recall) * tp as f64 / (tp + fp) as f64;
        recall = r;
    }
    Ok(ap)
}

fn map_values<'a>(op: &'static str, map: &'a Tensor, mask: &Mask) -> Result<&'a [f32]> {
    let hw = match map.dims() {
        [h, w] | [1, h, w] => (*h, *w),
        d => return Err(Error::shape(op, "map", "HxW or 1xHxW", format!("{d:?}"))),
    };
    if hw != (mask.height(), mask.width()) {
        return Err(Error::shape(
            op,
            "mask",
            format!("{}x{}", hw.0, hw.1),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    Ok(map.data())
}

fn check_pairs(op: &'static str, maps: &[Tensor], masks: &[Mask]) -> Result<()> {
    if maps.len() != masks.len() {
        return Err(Error::shape(op, "masks", maps.len(), masks.len()));
    }
    if maps.is_empty() {
        return Err(Error::Empty { op });
    }
    Ok(())
}

/// Area under the per-region-overlap curve up to `fpr_limit`, normalized by
/// the limit. False positives are pooled over all images and every
/// ground-truth region carries equal weight.
pub fn aupro(
    maps: &[Tensor],
    masks: &[Mask],
    fpr_limit: f64,
    thresholds: Thresholds,
) -> Result<f64> {
    const OP: &str = "aupro";
    check_limit(OP, fpr_limit)?;
    check_pairs(OP, maps, masks)?;
    let region_count: usize = masks.iter().map(|m| connected_components(m).len()).sum();
    if region_count == 0 {
        return Err(Error::invalid(OP, "no ground-truth regions"));
    }
    let mut items = Vec::new();
    let mut neg_total = 0u64;
    for (map, mask) in maps.iter().zip(masks) {
        let values = map_values(OP, map, mask)?;
        let regions = connected_components(mask);
        for (p, &v) in values.iter().enumerate() {
            check_finite(OP, v as f64)?;
            let label = regions.labels[p];
            let item = if label == 0 {
                neg_total += 1;
                Item {
                    score: v as f64,
                    neg: 1,
                    pos: 0.0,
                }
            } else {
                Item {
                    score: v as f64,
                    neg: 0,
                    pos: 1.0 / regions.regions[label as usize - 1].len() as f64,
                }
            };
            items.push(item);
        }
    }
    if neg_total == 0 {
        return Err(Error::invalid(OP, "no negative pixels"));
    }
    Ok(partial_area(
        &sweep(items, neg_total, region_count as f64, thresholds),
        fpr_limit,
    ))
}

/// Pooled-pixel ROC area up to `fpr_limit`, normalized by the limit.
pub fn pixel_auroc(
    maps: &[Tensor],
    masks: &[Mask],
    fpr_limit: f64,
    thresholds: Thresholds,
) -> Result<f64> {
    const OP: &str = "pixel_auroc";
    check_limit(OP, fpr_limit)?;
    check_pairs(OP, maps, masks)?;
    let mut items = Vec::new();
    let (mut pos, mut neg) = (0u64, 0u64);
    for (map, mask) in maps.iter().zip(masks) {
        let values = map_values(OP, map, mask)?;
        for (&v, &m) in values.iter().zip(mask.data()) {
            check_finite(OP, v as f64)?;
            if m {
                pos += 1;
            } else {
                neg += 1;
            }
            items.push(Item {
                score: v as f64,
                neg: u32::from(!m),
                pos: if m { 1.0 } else { 0.0 },
            });
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(OP, "needs both anomalous and normal pixels"));
    }
    Ok(partial_area(
        &sweep(items, neg, pos as f64, thresholds),
        fpr_limit,
    ))
}
