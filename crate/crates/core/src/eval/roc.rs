//! ROC curves and AUC.
//!
//! [`auc`] integrates the curve with the trapezoid rule; the rank-based
//! [`mann_whitney_auc`] computes `P(score+ > score-) + 0.5 P(tie)`
//! directly. The two agree to floating-point accuracy on the same data,
//! which the property tests pin at 1e-9.

use super::EvalError;

/// An ROC curve: (fpr, tpr) points from (0,0) to (1,1), both coordinates
/// non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    /// Index of the label this curve belongs to.
    pub label: usize,
}

/// Sweep thresholds at distinct score values descending, ties grouped at
/// one threshold. Requires at least one positive and one negative.
pub fn roc_points(scores: &[f64], truth: &[u8]) -> Result<RocCurve, EvalError> {
    assert_eq!(scores.len(), truth.len(), "scores and truth must align");
    let positives = truth.iter().filter(|&&t| t == 1).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateRoc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("scores must not be NaN")
    });

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        // consume the whole tie group before emitting a point
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    debug_assert_eq!(*points.last().unwrap(), (1.0, 1.0));
    Ok(RocCurve { points, label: 0 })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        area += (x2 - x1) * (y1 + y2) * 0.5;
    }
    area
}

/// Rank-based Mann-Whitney statistic: the probability that a random
/// positive outranks a random negative, ties counting half.
pub fn mann_whitney_auc(scores: &[f64], truth: &[u8]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), truth.len(), "scores and truth must align");
    let positives = truth.iter().filter(|&&t| t == 1).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateRoc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a].partial_cmp(&scores[b]).expect("scores must not be NaN")
    });

    // average ranks over tie groups, then sum positive ranks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let start = i;
        while i < order.len() && scores[order[i]] == score {
            i += 1;
        }
        // 1-based ranks start+1 ..= i averaged
        let avg_rank = (start + 1 + i) as f64 / 2.0;
        for &idx in &order[start..i] {
            if truth[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
    }
    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}
