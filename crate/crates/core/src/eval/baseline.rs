//! Energy-only baseline: score each event by its mean-removed mean square.
//!
//! The baseline has no parameters beyond the score direction. The pooled
//! variant picks the better direction on the whole corpus; the cross-validated
//! variant picks it on each fold's training patients.

use super::cv::loocv_folds;
use super::roc::{mean_std, roc_auc};
use super::EvalError;
use crate::corpus::Dataset;

pub fn event_energy(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// AUC of the energy score on the whole corpus, oriented to be >= 0.5.
pub fn energy_baseline_auc(ds: &Dataset) -> Result<f64, EvalError> {
    let scores: Vec<f64> = ds.events().iter().map(|e| event_energy(&e.samples)).collect();
    let labels: Vec<bool> = ds.events().iter().map(|e| e.label.is_cough()).collect();
    let a = roc_auc(&scores, &labels)?;
    Ok(a.max(1.0 - a))
}

/// Mean held-out-patient AUC of the energy score, with the direction chosen
/// on the training patients of each fold.
pub fn energy_baseline_loocv(ds: &Dataset) -> Result<f64, EvalError> {
    let scores: Vec<f64> = ds.events().iter().map(|e| event_energy(&e.samples)).collect();
    let labels: Vec<bool> = ds.events().iter().map(|e| e.label.is_cough()).collect();
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) {
        (idx.iter().map(|&i| scores[i]).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let mut aucs = Vec::new();
    for fold in loocv_folds(ds)? {
        let (train_s, train_l) = pick(&fold.train);
        let (test_s, test_l) = pick(&fold.test);
        let flip = roc_auc(&train_s, &train_l)? < 0.5;
        let a = roc_auc(&test_s, &test_l)?;
        aucs.push(if flip { 1.0 - a } else { a });
    }
    Ok(mean_std(&aucs).0)
}
