//! ROC curves, trapezoidal AUC, threshold metrics and vertical ROC averaging.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One operating point. `threshold` is the score cut-off that produces it
/// (classify positive iff `score >= threshold`); the end points carry ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "super::float_text")]
    pub threshold: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NonFinite(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Sweeps the threshold from +∞ down through every distinct score to −∞.
/// Equal scores form a single step, so ties produce diagonal segments.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    points.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        threshold: f64::NEG_INFINITY,
    });
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    Ok(auc(&roc_curve(scores, labels)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// Metrics when every score `>= t` is called positive.
pub fn metrics_at_threshold(
    scores: &[f64],
    labels: &[bool],
    t: f64,
) -> Result<ThresholdMetrics, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut tp = 0;
    let mut tn = 0;
    for (&s, &l) in scores.iter().zip(labels) {
        let called = s >= t;
        if called && l {
            tp += 1;
        } else if !called && !l {
            tn += 1;
        }
    }
    Ok(ThresholdMetrics {
        sensitivity: tp as f64 / pos as f64,
        specificity: tn as f64 / neg as f64,
        accuracy: (tp + tn) as f64 / (pos + neg) as f64,
    })
}

/// Threshold maximising sensitivity + specificity − 1 over the finite ROC
/// thresholds. Ties go to the highest threshold.
pub fn youden_threshold(points: &[RocPoint]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut threshold = f64::NAN;
    for p in points.iter().filter(|p| p.threshold.is_finite()) {
        let j = p.tpr - p.fpr;
        if j > best {
            best = j;
            threshold = p.threshold;
        }
    }
    threshold
}

pub const MEAN_ROC_GRID: usize = 101;

/// Fold curves averaged vertically on a fixed FPR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRoc {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Arithmetic mean of the fold AUCs, not the area under the mean curve.
    pub mean_auc: f64,
    pub std_auc: f64,
}

/// TPR of a curve at `x`. At a vertical jump the highest TPR is taken;
/// between distinct FPR values the curve is linear.
pub fn interpolate_tpr(points: &[RocPoint], x: f64) -> f64 {
    let idx = points.partition_point(|p| p.fpr <= x);
    if idx == 0 {
        return 0.0;
    }
    let left = points[idx - 1];
    match points.get(idx) {
        Some(right) if left.fpr < x => {
            let w = (x - left.fpr) / (right.fpr - left.fpr);
            left.tpr + w * (right.tpr - left.tpr)
        }
        _ => left.tpr,
    }
}

pub fn fpr_grid() -> Vec<f64> {
    (0..MEAN_ROC_GRID)
        .map(|i| i as f64 / (MEAN_ROC_GRID - 1) as f64)
        .collect()
}

pub fn mean_roc(curves: &[Vec<RocPoint>]) -> Result<MeanRoc, EvalError> {
    if curves.is_empty() {
        return Err(EvalError::Empty("no fold curves to average".into()));
    }
    let grid = fpr_grid();
    let n = curves.len() as f64;
    let tpr = grid
        .iter()
        .map(|&x| curves.iter().map(|c| interpolate_tpr(c, x)).sum::<f64>() / n)
        .collect();
    let aucs: Vec<f64> = curves.iter().map(|c| auc(c)).collect();
    let (mean_auc, std_auc) = mean_std(&aucs);
    Ok(MeanRoc {
        fpr: grid,
        tpr,
        mean_auc,
        std_auc,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let mut won = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    won += 1.0;
                } else if scores[i] == scores[j] {
                    won += 0.5;
                }
            }
        }
        won / pairs
    }

    #[test]
    fn perfect_separation() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let labels = [true, true, false, false];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!(auc(&roc), 1.0);
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
    }

    #[test]
    fn all_ties_give_the_diagonal() {
        let scores = [0.5; 6];
        let labels = [true, false, true, false, false, true];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!(roc.len(), 3);
        assert_eq!(auc(&roc), 0.5);
    }

    #[test]
    fn curve_endpoints_and_sentinels() {
        let roc = roc_curve(&[0.2, 0.7, 0.4], &[false, true, true]).unwrap();
        let first = roc.first().unwrap();
        let last = roc.last().unwrap();
        assert_eq!((first.fpr, first.tpr, first.threshold), (0.0, 0.0, f64::INFINITY));
        assert_eq!((last.fpr, last.tpr, last.threshold), (1.0, 1.0, f64::NEG_INFINITY));
    }

    #[test]
    fn single_class_is_an_error() {
        assert_eq!(roc_curve(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass));
        assert!(metrics_at_threshold(&[0.1], &[false], 0.5).is_err());
    }

    #[test]
    fn hand_counted_fixture() {
        let scores = [0.9, 0.6, 0.4, 0.7];
        let labels = [true, true, false, false];
        let m = metrics_at_threshold(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.sensitivity, 1.0);
        assert_eq!(m.specificity, 0.5);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn extreme_thresholds() {
        let scores = [0.9, 0.6, 0.4, 0.7, 0.2];
        let labels = [true, true, false, false, true];
        assert_eq!(metrics_at_threshold(&scores, &labels, 0.0).unwrap().sensitivity, 1.0);
        let above = metrics_at_threshold(&scores, &labels, 0.9 + 1e-12).unwrap();
        assert_eq!((above.sensitivity, above.specificity), (0.0, 1.0));
    }

    #[test]
    fn youden_picks_the_separating_cut() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let roc = roc_curve(&scores, &[true, true, false, false]).unwrap();
        assert_eq!(youden_threshold(&roc), 0.8);
    }

    #[test]
    fn mean_auc_is_arithmetic() {
        let perfect = roc_curve(&[1.0, 0.0], &[true, false]).unwrap();
        let diagonal = roc_curve(&[0.5, 0.5], &[true, false]).unwrap();
        let m = mean_roc(&[perfect, diagonal]).unwrap();
        assert_eq!(m.mean_auc, 0.75);
        assert_eq!(m.fpr.len(), 101);
        assert_eq!(m.tpr[0], 0.5);
        assert_eq!(m.tpr[100], 1.0);
    }

    #[test]
    fn identical_folds_average_to_themselves() {
        let roc = roc_curve(&[0.9, 0.4, 0.6, 0.1, 0.5], &[true, false, true, false, true]).unwrap();
        let m = mean_roc(&[roc.clone(), roc.clone(), roc.clone()]).unwrap();
        for (x, y) in m.fpr.iter().zip(&m.tpr) {
            assert!((interpolate_tpr(&roc, *x) - y).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_takes_the_top_of_vertical_jumps() {
        let roc = roc_curve(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
        assert_eq!(interpolate_tpr(&roc, 0.0), 1.0);
        let tied = roc_curve(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(interpolate_tpr(&tied, 0.25), 0.25);
    }

    fn scored_sets() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..12, n).prop_map(|v| v.into_iter().map(|s| s as f64 / 11.0).collect()),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_equals_mann_whitney((scores, labels) in scored_sets()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = roc_auc(&scores, &labels).unwrap();
            prop_assert!((a - mann_whitney(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_is_invariant_under_monotone_maps((scores, labels) in scored_sets()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&mapped, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn curve_is_monotone((scores, labels) in scored_sets()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let roc = roc_curve(&scores, &labels).unwrap();
            for w in roc.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let m = mean_roc(&[roc]).unwrap();
            for w in m.tpr.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn accuracy_is_the_class_weighted_mean((scores, labels) in scored_sets(), t in 0.0f64..1.0) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let m = metrics_at_threshold(&scores, &labels, t).unwrap();
            let p = labels.iter().filter(|&&l| l).count() as f64;
            let n = labels.len() as f64 - p;
            prop_assert!((m.accuracy - (m.sensitivity * p + m.specificity * n) / (p + n)).abs() < 1e-12);
        }
    }
}
