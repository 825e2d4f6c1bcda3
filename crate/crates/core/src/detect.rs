//! Energy-threshold detection of candidate events in a magnitude stream.
//!
//! Energy is computed per window on mean-removed samples so the gravity offset
//! carried by a magnitude signal never triggers a detection. The threshold is a
//! multiplier on the noise floor, taken as the median window energy of the
//! same stream, which makes detection invariant to the overall signal scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("series has {len} samples, shorter than the window length {window_len}")]
    TooShort { len: usize, window_len: usize },
    #[error("invalid detector config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window_len: usize,
    pub hop: usize,
    /// Multiplier on the median window energy.
    pub threshold: f64,
    pub min_event_len: usize,
    pub merge_gap: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_len: 16,
            hop: 8,
            threshold: 4.0,
            min_event_len: 20,
            merge_gap: 30,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.window_len < 1 {
            return Err(DetectError::Config("window_len must be >= 1".into()));
        }
        if self.hop < 1 || self.hop > self.window_len {
            return Err(DetectError::Config(format!(
                "hop must be in [1, window_len={}], got {}",
                self.window_len, self.hop
            )));
        }
        if self.min_event_len < 1 {
            return Err(DetectError::Config("min_event_len must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(DetectError::Config(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Energy of one analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEnergy {
    pub start: usize,
    pub energy: f64,
}

/// Half-open sample interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleInterval {
    pub start: usize,
    pub end: usize,
}

impl SampleInterval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &SampleInterval) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

/// Mean of squared mean-removed samples, one entry per full window at stride `hop`.
pub fn short_time_energy(
    samples: &[f64],
    window_len: usize,
    hop: usize,
) -> Result<Vec<FrameEnergy>, DetectError> {
    if window_len == 0 || hop == 0 {
        return Err(DetectError::Config("window_len and hop must be >= 1".into()));
    }
    if samples.len() < window_len {
        return Err(DetectError::TooShort {
            len: samples.len(),
            window_len,
        });
    }
    let n = window_len as f64;
    Ok((0..=samples.len() - window_len)
        .step_by(hop)
        .map(|start| {
            let window = &samples[start..start + window_len];
            let mean = window.iter().sum::<f64>() / n;
            let energy = window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            FrameEnergy { start, energy }
        })
        .collect())
}

/// Median window energy.
pub fn noise_floor(energies: &[FrameEnergy]) -> f64 {
    if energies.is_empty() {
        return 0.0;
    }
    let mut values: Vec<f64> = energies.iter().map(|e| e.energy).collect();
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

/// Converts frames above `threshold · noise_floor` into sorted, disjoint sample
/// intervals: runs of active frames become `[first.start, last.start + window_len)`,
/// runs separated by fewer than `merge_gap` samples are merged, and intervals
/// shorter than `min_event_len` are dropped.
pub fn detect_events(energies: &[FrameEnergy], config: &DetectorConfig) -> Vec<SampleInterval> {
    let level = config.threshold * noise_floor(energies);
    let mut runs: Vec<SampleInterval> = Vec::new();
    for frame in energies.iter().filter(|f| f.energy > level) {
        let span = SampleInterval {
            start: frame.start,
            end: frame.start + config.window_len,
        };
        match runs.last_mut() {
            Some(last) if span.start <= last.end => last.end = last.end.max(span.end),
            _ => runs.push(span),
        }
    }

    let mut merged: Vec<SampleInterval> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.start - last.end < config.merge_gap => last.end = run.end,
            _ => merged.push(run),
        }
    }
    merged.retain(|iv| iv.len() >= config.min_event_len);
    merged
}

/// Energy computation followed by thresholding with `config`.
pub fn detect(samples: &[f64], config: &DetectorConfig) -> Result<Vec<SampleInterval>, DetectError> {
    config.validate()?;
    let energies = short_time_energy(samples, config.window_len, config.hop)?;
    Ok(detect_events(&energies, config))
}
