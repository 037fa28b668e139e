//! ROC curve, AUC and EER for binary scores.
//!
//! Label 1 is the positive (fake) class and higher scores mean "more fake".
//! Tied scores count one half in the AUC, which is also what the trapezoid
//! over the ROC curve gives when tied scores share a single sweep point.

use crate::error::{Error, Result};

/// ROC sweep with its derived summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RocReport {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub eer: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("label {bad} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Mann–Whitney AUC from mid-ranks, `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are 1-based; a tie block over positions i..j gets (i + 1 + j) / 2.
    // Doubled to stay integral.
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_rank = (i + 1 + j) as u64;
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        pos_rank_sum2 += twice_rank * pos_in_block;
        i = j;
    }
    let p = n_pos as u64;
    // 2U = 2R - p(p + 1)
    let twice_u = pos_rank_sum2 - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Threshold sweep from high to low score; tied scores move together.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut counts = Vec::with_capacity(order.len() + 1);
    let (mut fp, mut tp) = (0u64, 0u64);
    counts.push((0, 0));
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        counts.push((fp, tp));
    }
    counts
}

fn eer_from_points(points: &[(f64, f64)]) -> f64 {
    // g = fpr - fnr = fpr + tpr - 1 rises from -1 to 1 along the sweep.
    let g = |p: &(f64, f64)| p.0 + p.1 - 1.0;
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ga, gb) = (g(a), g(b));
        if gb >= 0.0 {
            if gb == 0.0 {
                return b.0;
            }
            let t = -ga / (gb - ga);
            return a.0 + t * (b.0 - a.0);
        }
    }
    // unreachable for valid sweeps ending at (1, 1)
    1.0
}

/// Full ROC report. `auc` is the trapezoid over the sweep.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocReport> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    let counts = sweep(scores, labels);
    let (p, n) = (n_pos as f64, n_neg as f64);
    let points: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(fp, tp)| (fp as f64 / n, tp as f64 / p))
        .collect();
    // Trapezoid in integer counts: sum of dfp * (tp0 + tp1), halved.
    let twice_area: u64 = counts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    let auc = twice_area as f64 / (2.0 * p * n);
    let eer = eer_from_points(&points);
    Ok(RocReport {
        points,
        auc,
        eer,
        n_pos,
        n_neg,
    })
}

/// Equal error rate: where `fpr = 1 - tpr`, linearly interpolated on the ROC.
pub fn eer(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(roc_curve(scores, labels)?.eer)
}
