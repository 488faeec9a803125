//! Brute-force reference implementations of the evaluation metrics.

/// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn distinct_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut t: Vec<f64> = values.collect();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// Precision at each distinct threshold weighted by the recall it adds.
pub fn threshold_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(scores.iter().copied()) {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l && s >= t)
            .count() as f64;
        let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / predicted;
        prev_recall = recall;
    }
    ap
}

/// Area under a piecewise-linear curve from x = 0 to `limit`, divided by `limit`.
fn area_to(points: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= limit {
            break;
        }
        let xe = x1.min(limit);
        let ye = if x1 > x0 {
            y0 + (y1 - y0) * (xe - x0) / (x1 - x0)
        } else {
            y1
        };
        area += (xe - x0) * (y0 + ye) / 2.0;
    }
    area / limit
}

/// 8-connected flood fill, independent of the library's labeling.
pub fn flood_regions(mask: &[bool], h: usize, w: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut region = vec![];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            region.push(p);
            let (y, x) = (p / w, p % w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        region.sort_unstable();
        out.push(region);
    }
    out
}

/// One image of a pixel-level instance.
pub struct PixelCase {
    pub h: usize,
    pub w: usize,
    pub scores: Vec<f32>,
    pub mask: Vec<bool>,
}

/// Recomputes FPR and mean region overlap from scratch at every distinct
/// score, plus the +inf and -inf endpoints.
pub fn dense_pro(cases: &[PixelCase], limit: f64) -> f64 {
    let thresholds = distinct_desc(
        cases
            .iter()
            .flat_map(|c| c.scores.iter().map(|&s| s as f64)),
    );
    let regions: Vec<(usize, Vec<usize>)> = cases
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            flood_regions(&c.mask, c.h, c.w)
                .into_iter()
                .map(move |r| (i, r))
        })
        .collect();
    let negatives: usize = cases
        .iter()
        .map(|c| c.mask.iter().filter(|&&m| !m).count())
        .sum();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let fp: usize = cases
            .iter()
            .map(|c| {
                c.scores
                    .iter()
                    .zip(&c.mask)
                    .filter(|(&s, &m)| !m && s as f64 >= t)
                    .count()
            })
            .sum();
        let pro: f64 = regions
            .iter()
            .map(|(i, r)| {
                let hit = r
                    .iter()
                    .filter(|&&p| cases[*i].scores[p] as f64 >= t)
                    .count();
                hit as f64 / r.len() as f64
            })
            .sum::<f64>()
            / regions.len() as f64;
        points.push((fp as f64 / negatives as f64, pro));
    }
    area_to(&points, limit)
}

/// Pooled pixel ROC from scratch at every distinct score.
pub fn dense_pixel_roc(cases: &[PixelCase], limit: f64) -> f64 {
    let thresholds = distinct_desc(
        cases
            .iter()
            .flat_map(|c| c.scores.iter().map(|&s| s as f64)),
    );
    let count = |pos: bool, t: f64| -> usize {
        cases
            .iter()
            .map(|c| {
                c.scores
                    .iter()
                    .zip(&c.mask)
                    .filter(|(&s, &m)| m == pos && s as f64 >= t)
                    .count()
            })
            .sum()
    };
    let p = count(true, f64::NEG_INFINITY) as f64;
    let n = count(false, f64::NEG_INFINITY) as f64;
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        points.push((count(false, t) as f64 / n, count(true, t) as f64 / p));
    }
    area_to(&points, limit)
}
