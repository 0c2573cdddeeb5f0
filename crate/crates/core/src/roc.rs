//! ROC curves over a descending threshold sweep.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    /// Cases with `score >= threshold` are flagged.
    pub threshold: f64,
}

/// One point per distinct score, from the strictest threshold to the loosest.
/// The implicit starting point `(0, 0)` is not stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve, starting from `(0, 0)`. Tied scores
    /// contribute a diagonal segment, i.e. count half.
    pub fn auc(&self) -> f64 {
        let mut prev = (0.0, 0.0);
        let mut area = 0.0;
        for p in &self.points {
            area += (p.false_positive_rate - prev.0) * (p.true_positive_rate + prev.1) / 2.0;
            prev = (p.false_positive_rate, p.true_positive_rate);
        }
        area
    }
}

/// Builds the ROC staircase for `scores` (larger = more likely positive).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Domain(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores must not be NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut n = 0;
    while n < order.len() {
        let threshold = scores[order[n]];
        while n < order.len() && scores[order[n]] == threshold {
            if labels[order[n]] {
                tp += 1;
            } else {
                fp += 1;
            }
            n += 1;
        }
        points.push(RocPoint {
            false_positive_rate: fp as f64 / negatives as f64,
            true_positive_rate: tp as f64 / positives as f64,
            threshold,
        });
    }
    Ok(RocCurve { points })
}

pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    roc_curve(scores, labels).map(|c| c.auc())
}

/// Paired bootstrap of `AUC(a) - AUC(b)` over cases. Returns the standard
/// deviation of the resampled differences; resamples with a single class are
/// redrawn.
pub fn bootstrap_auc_difference_se<R: Rng>(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    resamples: usize,
    rng: &mut R,
) -> Result<f64> {
    // surface degenerate input before sampling
    auc(scores_a, labels)?;
    auc(scores_b, labels)?;
    let n = labels.len();
    let mut diffs = Vec::with_capacity(resamples);
    let (mut sa, mut sb, mut sl) = (vec![0.0; n], vec![0.0; n], vec![false; n]);
    let mut attempts = 0;
    while diffs.len() < resamples {
        attempts += 1;
        if attempts > resamples * 100 {
            return Err(Error::DegenerateLabels);
        }
        for slot in 0..n {
            let c = rng.random_range(0..n);
            sa[slot] = scores_a[c];
            sb[slot] = scores_b[c];
            sl[slot] = labels[c];
        }
        match (auc(&sa, &sl), auc(&sb, &sl)) {
            (Ok(a), Ok(b)) => diffs.push(a - b),
            (Err(Error::DegenerateLabels), _) | (_, Err(Error::DegenerateLabels)) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() as f64 - 1.0).max(1.0);
    Ok(var.sqrt())
}
