//! Fixed-shape feature matrices from variable-length events.
//!
//! Each event is covered by exactly `C` frames of `Ψ` samples whose start
//! positions are spread evenly from the first to the last sample, so frames
//! overlap for short events and leave gaps for long ones. Every frame yields
//! one row: the `Ψ/2 + 1` bin log-periodogram followed by RMS, kurtosis, mean
//! and crest factor, giving a `(C, Ψ/2 + 5)` matrix.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Event, Label};

pub const DEFAULT_LOG_EPSILON: f64 = 1e-10;

/// Frame lengths and segment counts explored by the grid search.
pub const FRAME_LENGTHS: [usize; 3] = [16, 32, 64];
pub const SEGMENT_COUNTS: [usize; 2] = [5, 10];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("frame has {got} samples, expected {expected}")]
    FrameLength { expected: usize, got: usize },
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("event is empty")]
    EmptyEvent,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("cannot fit a standardizer on an empty training set")]
    EmptyTrainingSet,
    #[error("matrix shape ({rows}, {cols}) does not match standardizer width {width}")]
    Shape { rows: usize, cols: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Frame length Ψ in samples.
    pub frame_len: usize,
    /// Number of segments C, i.e. rows of the feature matrix.
    pub segments: usize,
    pub log_epsilon: f64,
}

impl FeatureConfig {
    pub fn new(frame_len: usize, segments: usize) -> Result<Self, FeatureError> {
        let cfg = FeatureConfig {
            frame_len,
            segments,
            log_epsilon: DEFAULT_LOG_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.frame_len < 2 || !self.frame_len.is_power_of_two() {
            return Err(FeatureError::Config(format!(
                "frame length must be a power of two >= 2, got {}",
                self.frame_len
            )));
        }
        if self.segments < 2 {
            return Err(FeatureError::Config(format!(
                "segments must be >= 2, got {}",
                self.segments
            )));
        }
        if !(self.log_epsilon > 0.0) {
            return Err(FeatureError::Config("log_epsilon must be > 0".into()));
        }
        Ok(())
    }

    pub fn spectrum_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Ψ/2 + 5.
    pub fn columns(&self) -> usize {
        self.frame_len / 2 + 5
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.segments, self.columns())
    }
}

/// The six (Ψ, C) pairs of the feature hyperparameter grid.
pub fn feature_grid() -> Vec<FeatureConfig> {
    FRAME_LENGTHS
        .iter()
        .flat_map(|&psi| {
            SEGMENT_COUNTS
                .iter()
                .map(move |&c| FeatureConfig::new(psi, c).expect("grid values are valid"))
        })
        .collect()
}

/// Row-major `(rows, cols)` feature matrix of one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub patient_id: String,
    pub label: Label,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn check_finite(&self) -> Result<(), FeatureError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(FeatureError::NonFinite {
                row: idx / self.cols,
                col: idx % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// Start index of each of the `segments` frames on an event of `event_len`
/// samples, after zero-padding to at least `frame_len`:
/// `start_i = round(i · (N − Ψ) / (C − 1))`.
pub fn frame_starts(event_len: usize, frame_len: usize, segments: usize) -> Vec<usize> {
    let padded = event_len.max(frame_len);
    let span = padded - frame_len;
    if segments < 2 {
        return vec![0; segments];
    }
    let denom = segments - 1;
    // round half up, in exact integer arithmetic
    (0..segments)
        .map(|i| (2 * i * span + denom) / (2 * denom))
        .collect()
}

/// Periodogram of real frames of one fixed length.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    frame_len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("frame_len", &self.frame_len)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(frame_len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        SpectrumAnalyzer { frame_len, fft }
    }

    /// Single-sided periodogram `|X_k|² / Ψ` for bins `0..=Ψ/2`, rectangular window.
    pub fn power(&self, frame: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if frame.len() != self.frame_len {
            return Err(FeatureError::FrameLength {
                expected: self.frame_len,
                got: frame.len(),
            });
        }
        // shifting by a sample leaves bins k >= 1 unchanged and is exact for
        // frames riding on a large offset such as gravity
        let shift = frame.first().copied().unwrap_or(0.0);
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x - shift, 0.0)).collect();
        self.fft.process(&mut buf);
        let n = self.frame_len as f64;
        if let Some(bin) = buf.first_mut() {
            *bin = Complex::new(frame.iter().sum(), 0.0);
        }
        Ok(buf[..=self.frame_len / 2]
            .iter()
            .map(|c| c.norm_sqr() / n)
            .collect())
    }

    /// `log10(power + epsilon)` per bin.
    pub fn log_power(&self, frame: &[f64], epsilon: f64) -> Result<Vec<f64>, FeatureError> {
        Ok(self
            .power(frame)?
            .into_iter()
            .map(|p| (p + epsilon).log10())
            .collect())
    }
}

/// Log-periodogram of one frame; see [`SpectrumAnalyzer::log_power`].
pub fn power_spectrum(frame: &[f64], epsilon: f64) -> Result<Vec<f64>, FeatureError> {
    SpectrumAnalyzer::new(frame.len()).log_power(frame, epsilon)
}

/// Per-frame summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFeatures {
    pub rms: f64,
    /// Raw `m4 / m2²` of the mean-removed frame; 0 for constant frames.
    pub kurtosis: f64,
    /// Frame mean.
    pub moving_average: f64,
    /// `max|x| / rms`; 0 for all-zero frames.
    pub crest_factor: f64,
}

pub fn scalar_features(frame: &[f64]) -> ScalarFeatures {
    let n = frame.len() as f64;
    let mean = frame.iter().sum::<f64>() / n;
    let mean_square = frame.iter().map(|x| x * x).sum::<f64>() / n;
    let rms = mean_square.sqrt();
    let (m2, m4) = frame.iter().fold((0.0, 0.0), |(m2, m4), &x| {
        let d = (x - mean) * (x - mean);
        (m2 + d, m4 + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    // a constant frame can leave rounding residue in m2
    let kurtosis = if m2 <= 1e-20 * mean_square || m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2)
    };
    let peak = frame.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let crest_factor = if rms > 0.0 { peak / rms } else { 0.0 };
    ScalarFeatures {
        rms,
        kurtosis,
        moving_average: mean,
        crest_factor,
    }
}

/// Feature extractor bound to one configuration.
#[derive(Debug, Clone)]
pub struct Featurizer {
    cfg: FeatureConfig,
    analyzer: SpectrumAnalyzer,
}

impl Featurizer {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        Ok(Featurizer {
            cfg,
            analyzer: SpectrumAnalyzer::new(cfg.frame_len),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn featurize_samples(
        &self,
        samples: &[f64],
        patient_id: &str,
        label: Label,
    ) -> Result<FeatureMatrix, FeatureError> {
        if samples.is_empty() {
            return Err(FeatureError::EmptyEvent);
        }
        let psi = self.cfg.frame_len;
        let padded: std::borrow::Cow<'_, [f64]> = if samples.len() < psi {
            let mut v = samples.to_vec();
            v.resize(psi, 0.0);
            v.into()
        } else {
            samples.into()
        };
        let cols = self.cfg.columns();
        let mut values = Vec::with_capacity(self.cfg.segments * cols);
        for start in frame_starts(samples.len(), psi, self.cfg.segments) {
            let frame = &padded[start..start + psi];
            values.extend(self.analyzer.log_power(frame, self.cfg.log_epsilon)?);
            let s = scalar_features(frame);
            values.extend([s.rms, s.kurtosis, s.moving_average, s.crest_factor]);
        }
        let matrix = FeatureMatrix {
            rows: self.cfg.segments,
            cols,
            values,
            patient_id: patient_id.to_string(),
            label,
        };
        matrix.check_finite()?;
        Ok(matrix)
    }

    pub fn featurize(&self, event: &Event) -> Result<FeatureMatrix, FeatureError> {
        self.featurize_samples(&event.samples, &event.patient_id, event.label)
    }
}

pub fn featurize(event: &Event, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    Featurizer::new(*cfg)?.featurize(event)
}

/// Featurizes many events in parallel, preserving order.
pub fn featurize_all(events: &[Event], cfg: &FeatureConfig) -> Result<Vec<FeatureMatrix>, FeatureError> {
    use rayon::prelude::*;
    let featurizer = Featurizer::new(*cfg)?;
    events.par_iter().map(|e| featurizer.featurize(e)).collect()
}

/// Per-column z-scoring fitted on training matrices only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns with a standard deviation below this are left unscaled.
const MIN_STD: f64 = 1e-12;

impl Standardizer {
    /// Pools every row of every matrix; uses the population standard deviation.
    pub fn fit<'a>(
        matrices: impl IntoIterator<Item = &'a FeatureMatrix>,
    ) -> Result<Self, FeatureError> {
        let mut iter = matrices.into_iter().peekable();
        let cols = iter.peek().ok_or(FeatureError::EmptyTrainingSet)?.cols;
        let mut sum = vec![0.0; cols];
        let mut sum_sq = vec![0.0; cols];
        let mut count = 0usize;
        let mut seen = Vec::new();
        for m in iter {
            if m.cols != cols {
                return Err(FeatureError::Shape {
                    rows: m.rows,
                    cols: m.cols,
                    width: cols,
                });
            }
            for r in 0..m.rows {
                for (c, v) in m.row(r).iter().enumerate() {
                    sum[c] += v;
                }
            }
            count += m.rows;
            seen.push(m);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        // second pass on centered values for accuracy
        for m in &seen {
            for r in 0..m.rows {
                for (c, v) in m.row(r).iter().enumerate() {
                    let d = v - mean[c];
                    sum_sq[c] += d * d;
                }
            }
        }
        let std = sum_sq
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        let mut out = matrix.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, matrix: &mut FeatureMatrix) -> Result<(), FeatureError> {
        if matrix.cols != self.mean.len() {
            return Err(FeatureError::Shape {
                rows: matrix.rows,
                cols: matrix.cols,
                width: self.mean.len(),
            });
        }
        let cols = matrix.cols;
        for (i, v) in matrix.values.iter_mut().enumerate() {
            let c = i % cols;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Direct O(Ψ²) periodogram, independent of the FFT path.
    fn naive_power(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                (re * re + im * im) / n as f64
            })
            .collect()
    }

    #[test]
    fn frame_starts_examples() {
        assert_eq!(
            frame_starts(100, 32, 10),
            vec![0, 8, 15, 23, 30, 38, 45, 53, 60, 68]
        );
        assert_eq!(frame_starts(32, 32, 10), vec![0; 10]);
        assert_eq!(frame_starts(80, 16, 5), vec![0, 16, 32, 48, 64]);
        // short events are padded to one frame
        assert_eq!(frame_starts(3, 16, 5), vec![0; 5]);
    }

    #[test]
    fn dc_frame_spectrum() {
        let p = SpectrumAnalyzer::new(16).power(&[1.0; 16]).unwrap();
        assert_eq!(p.len(), 9);
        assert!((p[0] - 16.0).abs() < 1e-12);
        assert!(p[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cosine_at_exact_bin() {
        let frame: Vec<f64> = (0..16).map(|k| (2.0 * PI * k as f64 * 4.0 / 16.0).cos()).collect();
        let p = SpectrumAnalyzer::new(16).power(&frame).unwrap();
        let oracle = naive_power(&frame);
        for (k, (a, b)) in p.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-9, "bin {k}");
        }
        assert!((p[4] - 4.0).abs() < 1e-12);
        let rest: f64 = p.iter().enumerate().filter(|(k, _)| *k != 4).map(|(_, v)| v).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn wrong_frame_length_is_shape_error() {
        assert_eq!(
            SpectrumAnalyzer::new(16).power(&[0.0; 15]),
            Err(FeatureError::FrameLength { expected: 16, got: 15 })
        );
    }

    #[test]
    fn alternating_frame_scalars() {
        let frame: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = scalar_features(&frame);
        assert!((s.rms - 1.0).abs() < 1e-15);
        assert!((s.kurtosis - 1.0).abs() < 1e-15);
        assert_eq!(s.moving_average, 0.0);
        assert!((s.crest_factor - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_frame_scalars() {
        let s = scalar_features(&[0.7; 32]);
        assert!((s.rms - 0.7).abs() < 1e-15);
        assert!((s.moving_average - 0.7).abs() < 1e-15);
        assert_eq!(s.kurtosis, 0.0);
        assert!((s.crest_factor - 1.0).abs() < 1e-12);
        let z = scalar_features(&[0.0; 16]);
        assert_eq!((z.rms, z.kurtosis, z.crest_factor), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sine_crest_factor() {
        let amp = 2.5;
        let frame: Vec<f64> = (0..64).map(|k| amp * (2.0 * PI * k as f64 / 64.0).sin()).collect();
        let s = scalar_features(&frame);
        assert!((s.crest_factor - 2f64.sqrt()).abs() < 1e-6);
        assert!((s.rms - amp / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shapes_follow_frame_and_segment_counts() {
        let event = Event::new("P", Label::Cough, (0..150).map(|i| (i as f64).sin()).collect(), 100.0);
        let m = featurize(&event, &FeatureConfig::new(32, 10).unwrap()).unwrap();
        assert_eq!(m.shape(), (10, 21));
        let m = featurize(&event, &FeatureConfig::new(16, 5).unwrap()).unwrap();
        assert_eq!(m.shape(), (5, 13));
        for cfg in feature_grid() {
            let m = featurize(&event, &cfg).unwrap();
            assert_eq!(m.shape(), (cfg.segments, cfg.frame_len / 2 + 5));
        }
        assert_eq!(feature_grid().len(), 6);
    }

    #[test]
    fn single_sample_event_is_padded() {
        let event = Event::new("P", Label::NonCough, vec![9.81], 100.0);
        for cfg in feature_grid() {
            let m = featurize(&event, &cfg).unwrap();
            assert_eq!(m.shape(), cfg.shape());
            assert!(m.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn empty_event_is_rejected() {
        let event = Event::new("P", Label::NonCough, vec![], 100.0);
        assert_eq!(
            featurize(&event, &FeatureConfig::new(16, 5).unwrap()),
            Err(FeatureError::EmptyEvent)
        );
    }

    #[test]
    fn invalid_configs() {
        assert!(FeatureConfig::new(24, 5).is_err());
        assert!(FeatureConfig::new(16, 1).is_err());
    }

    fn matrix(values: Vec<f64>, cols: usize) -> FeatureMatrix {
        FeatureMatrix {
            rows: values.len() / cols,
            cols,
            values,
            patient_id: "P".into(),
            label: Label::Cough,
        }
    }

    #[test]
    fn identical_matrices_clamp_std() {
        let a = matrix(vec![1.0, 2.0, 3.0], 3);
        let s = Standardizer::fit([&a, &a]).unwrap();
        assert_eq!(s.std, vec![1.0; 3]);
        let out = s.apply(&a).unwrap();
        assert_eq!(out.values, vec![0.0; 3]);
    }

    #[test]
    fn two_point_column() {
        let a = matrix(vec![0.0], 1);
        let b = matrix(vec![2.0], 1);
        let s = Standardizer::fit([&a, &b]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        assert_eq!(s.apply(&a).unwrap().values, vec![-1.0]);
        assert_eq!(s.apply(&b).unwrap().values, vec![1.0]);
    }

    #[test]
    fn empty_training_set_is_error() {
        assert_eq!(
            Standardizer::fit(std::iter::empty()),
            Err(FeatureError::EmptyTrainingSet)
        );
    }

    #[test]
    fn standardizer_reads_only_training_matrices() {
        let train = [matrix(vec![1.0, 10.0, 3.0, 30.0], 2), matrix(vec![5.0, 50.0], 2)];
        let test = matrix(vec![1000.0, -1000.0], 2);
        let s = Standardizer::fit(train.iter()).unwrap();
        // oracle: column means over the three training rows
        assert!((s.mean[0] - 3.0).abs() < 1e-12);
        assert!((s.mean[1] - 30.0).abs() < 1e-12);
        let out = s.apply(&test).unwrap();
        assert!(out.values[0] > 100.0);
        let z = Standardizer::fit(train.iter()).unwrap();
        assert_eq!(s, z);
        let train_out: Vec<FeatureMatrix> = train.iter().map(|m| s.apply(m).unwrap()).collect();
        let col0: Vec<f64> = train_out.iter().flat_map(|m| (0..m.rows).map(|r| m.get(r, 0)).collect::<Vec<_>>()).collect();
        let mean: f64 = col0.iter().sum::<f64>() / col0.len() as f64;
        let var: f64 = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col0.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fft_matches_naive_dft(frame in prop::collection::vec(-10.0f64..10.0, 32)) {
            let fast = SpectrumAnalyzer::new(32).power(&frame).unwrap();
            let slow = naive_power(&frame);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-9));
            }
        }

        #[test]
        fn parseval(frame in prop::collection::vec(-5.0f64..5.0, 64)) {
            let p = SpectrumAnalyzer::new(64).power(&frame).unwrap();
            let last = p.len() - 1;
            let folded: f64 = p.iter().enumerate()
                .map(|(k, v)| if k == 0 || k == last { *v } else { 2.0 * v })
                .sum();
            let mean_square = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
            prop_assert!((folded / 64.0 - mean_square).abs() <= 1e-9 * mean_square.max(1e-300));
        }

        #[test]
        fn amplitude_scaling(frame in prop::collection::vec(-5.0f64..5.0, 16), c in 0.1f64..10.0) {
            let scaled: Vec<f64> = frame.iter().map(|x| c * x).collect();
            let a = scalar_features(&frame);
            let b = scalar_features(&scaled);
            prop_assert!((b.rms - c * a.rms).abs() < 1e-9 * (1.0 + b.rms));
            prop_assert!((b.moving_average - c * a.moving_average).abs() < 1e-9 * (1.0 + b.rms));
            prop_assert!((b.kurtosis - a.kurtosis).abs() < 1e-8 * (1.0 + a.kurtosis));
            prop_assert!((b.crest_factor - a.crest_factor).abs() < 1e-9 * (1.0 + a.crest_factor));
            let analyzer = SpectrumAnalyzer::new(16);
            let la = analyzer.log_power(&frame, 0.0).unwrap();
            let lb = analyzer.log_power(&scaled, 0.0).unwrap();
            for (x, y) in la.iter().zip(&lb) {
                if x.is_finite() && *x > -20.0 {
                    prop_assert!((y - x - 2.0 * c.log10()).abs() < 1e-8);
                }
            }
        }
    }
}
