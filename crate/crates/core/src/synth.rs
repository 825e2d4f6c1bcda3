//! Seeded synthetic accelerometer corpora with exact ground truth.
//!
//! Each patient's recording is a gravity baseline plus white sensor noise,
//! with events laid out one after another and separated by quiet gaps.
//! Coughs are short bursts of damped sinusoids in the 8-35 Hz band;
//! non-coughs are slow, smooth movements below a few Hz. Either label can be
//! given either waveform model, which is how the difficulty of a corpus is
//! dialled up or down.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_dataset, write_annotations, write_signal, CorpusError, Dataset, Label, LabeledInterval,
    SampleSeries,
};
use crate::eval::{energy_baseline_auc, EvalError};
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(String),
}

/// Closed interval `[min, max]` that values are drawn uniformly from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn check(&self, name: &str) -> Result<(), SynthError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(SynthError::Config(format!(
                "{name}: range [{}, {}] is empty or not finite",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }

    /// Log-uniform draw; both ends must be positive.
    fn sample_log(&self, rng: &mut Rng) -> f64 {
        Range::new(self.min.ln(), self.max.ln()).sample(rng).exp()
    }
}

/// Sum of damped sinusoids starting at the event onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstModel {
    pub components: (usize, usize),
    pub frequency_hz: Range,
    /// Peak amplitude of each component, in the signal's units.
    pub amplitude: Range,
    /// Exponential decay rate in 1/s.
    pub decay_per_s: Range,
}

impl Default for BurstModel {
    fn default() -> Self {
        BurstModel {
            components: (2, 3),
            frequency_hz: Range::new(8.0, 35.0),
            amplitude: Range::new(0.06, 0.2),
            decay_per_s: Range::new(2.0, 8.0),
        }
    }
}

/// Smooth movement: random-phase sinusoids below `max_frequency_hz` with a
/// 1/f amplitude roll-off, under a Hann envelope, scaled to a drawn RMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub components: usize,
    pub min_frequency_hz: f64,
    pub max_frequency_hz: f64,
    pub rms: Range,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            components: 8,
            min_frequency_hz: 0.2,
            max_frequency_hz: 3.0,
            rms: Range::new(0.02, 0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventModel {
    Burst(BurstModel),
    Drift(DriftModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub coughs_per_patient: usize,
    pub non_coughs_per_patient: usize,
    pub sample_rate_hz: f64,
    pub cough_duration_s: Range,
    pub non_cough_duration_s: Range,
    /// Quiet time before each event.
    pub gap_s: Range,
    pub noise_rms: f64,
    pub baseline: f64,
    pub cough_model: EventModel,
    pub non_cough_model: EventModel,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 14,
            coughs_per_patient: 6,
            non_coughs_per_patient: 68,
            sample_rate_hz: 100.0,
            cough_duration_s: Range::new(0.3, 3.0),
            non_cough_duration_s: Range::new(0.5, 4.0),
            gap_s: Range::new(0.5, 2.0),
            noise_rms: 0.02,
            baseline: GRAVITY,
            cough_model: EventModel::Burst(BurstModel::default()),
            non_cough_model: EventModel::Drift(DriftModel::default()),
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fs = self.sample_rate_hz;
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(SynthError::Config(format!("sample rate {fs} must be > 0")));
        }
        self.cough_duration_s.check("cough_duration_s")?;
        self.non_cough_duration_s.check("non_cough_duration_s")?;
        self.gap_s.check("gap_s")?;
        for (name, r) in [
            ("cough_duration_s", self.cough_duration_s),
            ("non_cough_duration_s", self.non_cough_duration_s),
        ] {
            if r.min * fs < 1.0 {
                return Err(SynthError::Config(format!(
                    "{name}: minimum {} s is shorter than one sample",
                    r.min
                )));
            }
        }
        if self.gap_s.min < 0.0 {
            return Err(SynthError::Config("gap_s must be >= 0".into()));
        }
        if !(self.noise_rms >= 0.0 && self.noise_rms.is_finite()) {
            return Err(SynthError::Config(format!("noise_rms {} must be >= 0", self.noise_rms)));
        }
        if !self.baseline.is_finite() {
            return Err(SynthError::Config("baseline must be finite".into()));
        }
        let nyquist = fs / 2.0;
        for (name, model) in [("cough_model", &self.cough_model), ("non_cough_model", &self.non_cough_model)] {
            match model {
                EventModel::Burst(b) => {
                    if b.components.0 < 1 || b.components.0 > b.components.1 {
                        return Err(SynthError::Config(format!(
                            "{name}: component range {:?} is invalid",
                            b.components
                        )));
                    }
                    b.frequency_hz.check(name)?;
                    b.amplitude.check(name)?;
                    b.decay_per_s.check(name)?;
                    if b.frequency_hz.min <= 0.0 || b.frequency_hz.max >= nyquist {
                        return Err(SynthError::Config(format!(
                            "{name}: frequencies must lie in (0, {nyquist}) Hz"
                        )));
                    }
                    if b.amplitude.min < 0.0 || b.decay_per_s.min < 0.0 {
                        return Err(SynthError::Config(format!(
                            "{name}: amplitude and decay must be >= 0"
                        )));
                    }
                }
                EventModel::Drift(d) => {
                    if d.components < 1 {
                        return Err(SynthError::Config(format!("{name}: needs >= 1 component")));
                    }
                    if !(d.min_frequency_hz > 0.0 && d.min_frequency_hz <= d.max_frequency_hz) {
                        return Err(SynthError::Config(format!(
                            "{name}: frequency range [{}, {}] is invalid",
                            d.min_frequency_hz, d.max_frequency_hz
                        )));
                    }
                    if d.max_frequency_hz >= nyquist {
                        return Err(SynthError::Config(format!(
                            "{name}: frequencies must lie below {nyquist} Hz"
                        )));
                    }
                    d.rms.check(name)?;
                    if d.rms.min <= 0.0 {
                        return Err(SynthError::Config(format!("{name}: rms must be > 0")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let width = self.n_patients.to_string().len().max(2);
        (1..=self.n_patients).map(|i| format!("P{i:0width$}")).collect()
    }
}

fn burst(model: &BurstModel, len: usize, fs: f64, rng: &mut Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let n = rng.gen_range(model.components.0..=model.components.1);
    for _ in 0..n {
        let f = model.frequency_hz.sample(rng);
        let a = model.amplitude.sample(rng);
        let decay = model.decay_per_s.sample(rng);
        let phase = rng.gen_range(0.0..2.0 * PI);
        for (k, v) in out.iter_mut().enumerate() {
            let t = k as f64 / fs;
            *v += a * (-decay * t).exp() * (2.0 * PI * f * t + phase).sin();
        }
    }
    out
}

fn drift(model: &DriftModel, len: usize, fs: f64, rng: &mut Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for _ in 0..model.components {
        let f = rng.gen_range(model.min_frequency_hz..=model.max_frequency_hz);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let weight = 1.0 / f;
        for (k, v) in out.iter_mut().enumerate() {
            *v += weight * (2.0 * PI * f * k as f64 / fs + phase).sin();
        }
    }
    let denom = len.max(2) as f64 - 1.0;
    for (k, v) in out.iter_mut().enumerate() {
        *v *= 0.5 - 0.5 * (2.0 * PI * k as f64 / denom).cos();
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let target = model.rms.sample_log(rng);
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= target / rms);
    }
    out
}

fn waveform(model: &EventModel, len: usize, fs: f64, rng: &mut Rng) -> Vec<f64> {
    match model {
        EventModel::Burst(b) => burst(b, len, fs, rng),
        EventModel::Drift(d) => drift(d, len, fs, rng),
    }
}

/// Event labels in recording order, then one event at a time: gap, waveform.
fn generate_patient(cfg: &SynthConfig, patient_id: &str, seed: u64) -> (SampleSeries, Vec<LabeledInterval>) {
    let mut rng = rng_from_seed(seed);
    let fs = cfg.sample_rate_hz;
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Cough, cfg.coughs_per_patient)
        .chain(std::iter::repeat_n(Label::NonCough, cfg.non_coughs_per_patient))
        .collect();
    labels.shuffle(&mut rng);
    let mut signal = Vec::new();
    let mut intervals = Vec::with_capacity(labels.len());
    let samples_of = |seconds: f64| (seconds * fs).round() as usize;
    for label in labels {
        let (duration, model) = match label {
            Label::Cough => (cfg.cough_duration_s, &cfg.cough_model),
            Label::NonCough => (cfg.non_cough_duration_s, &cfg.non_cough_model),
        };
        signal.resize(signal.len() + samples_of(cfg.gap_s.sample(&mut rng)).max(1), 0.0);
        let len = samples_of(duration.sample(&mut rng)).max(1);
        let start = signal.len();
        signal.extend(waveform(model, len, fs, &mut rng));
        intervals.push(LabeledInterval {
            patient_id: patient_id.to_string(),
            start_s: start as f64 / fs,
            end_s: (start + len) as f64 / fs,
            label,
        });
    }
    signal.resize(signal.len() + samples_of(cfg.gap_s.sample(&mut rng)).max(1), 0.0);
    for v in signal.iter_mut() {
        *v += cfg.baseline + cfg.noise_rms * rng.sample::<f64, _>(StandardNormal);
    }
    (SampleSeries::new(patient_id, fs, signal), intervals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub series: Vec<SampleSeries>,
    pub annotations: Vec<LabeledInterval>,
    pub dataset: Dataset,
}

/// Patients are generated in parallel, each from its own derived seed.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let ids = cfg.patient_ids();
    let generated: Vec<(SampleSeries, Vec<LabeledInterval>)> = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| generate_patient(cfg, id, derive_seed(cfg.rng_seed, &[i as u64])))
        .collect();
    let mut series = Vec::with_capacity(generated.len());
    let mut annotations = Vec::new();
    for (s, a) in generated {
        series.push(s);
        annotations.extend(a);
    }
    let dataset = build_dataset(&series, &annotations)?;
    Ok(SynthCorpus {
        config: cfg.clone(),
        series,
        annotations,
        dataset,
    })
}

/// Pooled AUC of the energy-only classifier on the generated corpus.
pub fn corpus_difficulty(cfg: &SynthConfig) -> Result<f64, SynthError> {
    Ok(energy_baseline_auc(&generate_corpus(cfg)?.dataset)?)
}

pub const SIGNAL_DIR: &str = "signals";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

/// Writes `signals/<patient>.csv` and `annotations.csv` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<(), SynthError> {
    let signals = dir.join(SIGNAL_DIR);
    fs::create_dir_all(&signals).map_err(|e| SynthError::Io(format!("{}: {e}", signals.display())))?;
    for s in &corpus.series {
        write_signal(s, signals.join(format!("{}.csv", s.patient_id)))?;
    }
    write_annotations(&corpus.annotations, dir.join(ANNOTATIONS_FILE))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::signal_to_csv;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_patients: 3,
            coughs_per_patient: 4,
            non_coughs_per_patient: 9,
            rng_seed: seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_patients_is_an_empty_corpus() {
        let c = generate_corpus(&SynthConfig {
            n_patients: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(c.series.is_empty() && c.annotations.is_empty() && c.dataset.is_empty());
    }

    #[test]
    fn counts_and_ids() {
        let c = generate_corpus(&small(1)).unwrap();
        assert_eq!(c.series.len(), 3);
        assert_eq!(c.dataset.label_counts(), (12, 27));
        assert_eq!(c.series[0].patient_id, "P01");
        for id in c.config.patient_ids() {
            assert_eq!(c.dataset.count(&id, Label::Cough), 4);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_corpus(&small(5)).unwrap();
        let b = generate_corpus(&small(5)).unwrap();
        let c = generate_corpus(&small(6)).unwrap();
        for (x, y) in a.series.iter().zip(&b.series) {
            assert_eq!(signal_to_csv(x), signal_to_csv(y));
        }
        assert_eq!(a.annotations, b.annotations);
        assert_ne!(signal_to_csv(&a.series[0]), signal_to_csv(&c.series[0]));
    }

    #[test]
    fn intervals_bracket_the_injected_waveform() {
        let cfg = SynthConfig {
            noise_rms: 0.0,
            ..small(2)
        };
        let c = generate_corpus(&cfg).unwrap();
        for s in &c.series {
            let own: Vec<_> = c.annotations.iter().filter(|iv| iv.patient_id == s.patient_id).collect();
            let mut inside = vec![false; s.len()];
            for iv in &own {
                let (a, b) = (s.index_of(iv.start_s) as usize, s.index_of(iv.end_s) as usize);
                inside[a..b].iter_mut().for_each(|v| *v = true);
                assert!(s.samples[a..b].iter().any(|v| *v != GRAVITY));
            }
            for (k, v) in s.samples.iter().enumerate() {
                if !inside[k] {
                    assert_eq!(*v, GRAVITY, "{} sample {k}", s.patient_id);
                }
            }
        }
    }

    #[test]
    fn signals_are_finite_and_positive() {
        let c = generate_corpus(&small(3)).unwrap();
        for s in &c.series {
            assert!(s.samples.iter().all(|v| v.is_finite() && *v > 0.0));
        }
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        let bad = [
            SynthConfig {
                cough_duration_s: Range::new(2.0, 1.0),
                ..small(0)
            },
            SynthConfig {
                cough_model: EventModel::Burst(BurstModel {
                    frequency_hz: Range::new(8.0, 60.0),
                    ..BurstModel::default()
                }),
                ..small(0)
            },
            SynthConfig {
                noise_rms: -1.0,
                ..small(0)
            },
            SynthConfig {
                sample_rate_hz: 0.0,
                ..small(0)
            },
        ];
        for cfg in bad {
            assert!(matches!(generate_corpus(&cfg), Err(SynthError::Config(_))));
        }
    }

    #[test]
    fn drift_hits_its_target_rms() {
        let model = DriftModel {
            rms: Range::new(0.3, 0.3),
            ..DriftModel::default()
        };
        let w = drift(&model, 250, 100.0, &mut rng_from_seed(1));
        let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((rms - 0.3).abs() < 1e-12);
    }
}
