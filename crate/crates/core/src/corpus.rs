//! Signals, annotations, events and datasets, plus their CSV formats.
//!
//! Signal files carry a two-line key/value header followed by one magnitude
//! per row:
//!
//! ```text
//! patient_id,P01
//! sample_rate_hz,100
//! 9.81
//! 9.83
//! ```
//!
//! An optional `start_time_s,<seconds>` line may follow the sample rate.
//! Annotation files are `patient_id,start_s,end_s,label` with a header row and
//! labels `cough` or `non-cough`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate of the bed-mounted accelerometer stream.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// Absorbs representation error when mapping decimal seconds to sample indices,
/// e.g. `0.29 * 100.0 == 28.999999999999996`.
const INDEX_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("no samples in {0}")]
    NoSamples(String),
    #[error("interval {interval} lies outside the series span [{span_start}, {span_end}) s")]
    OutOfRange {
        interval: String,
        span_start: f64,
        span_end: f64,
    },
    #[error("invalid interval {0}: end must be greater than start")]
    EmptyInterval(String),
    #[error("overlapping annotations for patient {patient}: {first} and {second}")]
    Overlap {
        patient: String,
        first: String,
        second: String,
    },
    #[error("patient mismatch: series belongs to {series}, interval to {interval}")]
    PatientMismatch { series: String, interval: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Binary event label. `Cough` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "cough")]
    Cough,
    #[serde(rename = "non-cough")]
    NonCough,
}

impl Label {
    pub fn is_cough(self) -> bool {
        self == Label::Cough
    }

    /// Class index used by the classifiers: non-cough = 0, cough = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::NonCough => 0,
            Label::Cough => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cough => "cough",
            Label::NonCough => "non-cough",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "cough" => Ok(Label::Cough),
            "non-cough" => Ok(Label::NonCough),
            other => Err(format!("unknown label {other:?} (expected cough|non-cough)")),
        }
    }
}

/// Uniformly sampled accelerometer magnitude stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub start_time: f64,
}

impl SampleSeries {
    pub fn new(patient_id: impl Into<String>, sample_rate_hz: f64, samples: Vec<f64>) -> Self {
        SampleSeries {
            patient_id: patient_id.into(),
            sample_rate_hz,
            samples,
            start_time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration_s()
    }

    /// Time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate_hz
    }

    /// Index of the sample at or before time `t` (floor mapping).
    pub fn index_of(&self, t: f64) -> i64 {
        ((t - self.start_time) * self.sample_rate_hz + INDEX_EPSILON).floor() as i64
    }
}

/// Annotated time span of one patient's recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub patient_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
}

impl fmt::Display for LabeledInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:[{}, {}) {}",
            self.patient_id, self.start_s, self.end_s, self.label
        )
    }
}

/// A labeled contiguous slice of a patient's signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub patient_id: String,
    pub label: Label,
    pub samples: Vec<f64>,
    pub duration_s: f64,
}

impl Event {
    pub fn new(
        patient_id: impl Into<String>,
        label: Label,
        samples: Vec<f64>,
        sample_rate_hz: f64,
    ) -> Self {
        let duration_s = samples.len() as f64 / sample_rate_hz;
        Event {
            patient_id: patient_id.into(),
            label,
            samples,
            duration_s,
        }
    }
}

/// Immutable collection of events with the set of patients they belong to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    events: Vec<Event>,
    patients: BTreeSet<String>,
}

impl Dataset {
    /// Patients are taken from the events themselves.
    pub fn new(events: Vec<Event>) -> Self {
        let patients = events.iter().map(|e| e.patient_id.clone()).collect();
        Dataset { events, patients }
    }

    /// Registers patients that may have no events at all.
    pub fn with_patients(events: Vec<Event>, patients: impl IntoIterator<Item = String>) -> Self {
        let mut ds = Dataset::new(events);
        ds.patients.extend(patients);
        ds
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn patients(&self) -> &BTreeSet<String> {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, patient_id: &str, label: Label) -> usize {
        self.events
            .iter()
            .filter(|e| e.patient_id == patient_id && e.label == label)
            .count()
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let coughs = self.events.iter().filter(|e| e.label.is_cough()).count();
        (coughs, self.events.len() - coughs)
    }
}

/// One row of the ground-truth summary table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SummaryRow {
    pub patient_id: String,
    pub coughs: usize,
    pub non_coughs: usize,
    pub cough_seconds: f64,
    pub non_cough_seconds: f64,
}

impl SummaryRow {
    fn add(&mut self, label: Label, seconds: f64) {
        match label {
            Label::Cough => {
                self.coughs += 1;
                self.cough_seconds += seconds;
            }
            Label::NonCough => {
                self.non_coughs += 1;
                self.non_cough_seconds += seconds;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub rows: Vec<SummaryRow>,
    pub total: SummaryRow,
}

impl DatasetSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("patient,coughs,non_coughs,cough_time_s,non_cough_time_s\n");
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            out.push_str(&format!(
                "{},{},{},{:.2},{:.2}\n",
                row.patient_id, row.coughs, row.non_coughs, row.cough_seconds, row.non_cough_seconds
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.patient_id.len())
            .chain([self.total.patient_id.len(), "Patient".len()])
            .max()
            .unwrap_or(7);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>10}  {:>12}  {:>14}\n",
            "Patient", "Coughs", "Non coughs", "Cough time", "Non-cough time"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>10}  {:>12.2}  {:>14.2}\n",
                row.patient_id, row.coughs, row.non_coughs, row.cough_seconds, row.non_cough_seconds
            ));
        }
        out
    }
}

/// Per-patient counts and durations plus a totals row.
pub fn dataset_summary(ds: &Dataset) -> DatasetSummary {
    let mut per_patient: BTreeMap<&str, SummaryRow> = ds
        .patients
        .iter()
        .map(|p| {
            (
                p.as_str(),
                SummaryRow {
                    patient_id: p.clone(),
                    ..SummaryRow::default()
                },
            )
        })
        .collect();
    for event in &ds.events {
        per_patient
            .get_mut(event.patient_id.as_str())
            .expect("event patient registered in dataset")
            .add(event.label, event.duration_s);
    }
    let rows: Vec<SummaryRow> = per_patient.into_values().collect();
    let mut total = SummaryRow {
        patient_id: "TOTAL".to_string(),
        ..SummaryRow::default()
    };
    for row in &rows {
        total.coughs += row.coughs;
        total.non_coughs += row.non_coughs;
        total.cough_seconds += row.cough_seconds;
        total.non_cough_seconds += row.non_cough_seconds;
    }
    DatasetSummary { rows, total }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a signal CSV.
pub fn load_signal(path: impl AsRef<Path>) -> Result<SampleSeries, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_signal(&text, &path.display().to_string())
}

/// Parses signal CSV text; `origin` names the source in error messages.
pub fn parse_signal(text: &str, origin: &str) -> Result<SampleSeries, CorpusError> {
    let format_err = |message: String| CorpusError::Format {
        path: origin.to_string(),
        message,
    };
    let mut lines = text.lines().enumerate().peekable();
    let mut header_field = |key: &str| -> Result<String, CorpusError> {
        let (_, line) = lines
            .next()
            .ok_or_else(|| format_err(format!("missing header line `{key},...`")))?;
        match line.split_once(',') {
            Some((k, v)) if k.trim() == key => Ok(v.trim().to_string()),
            _ => Err(format_err(format!("missing header line `{key},...`"))),
        }
    };
    let patient_id = header_field("patient_id")?;
    let rate_text = header_field("sample_rate_hz")?;
    let sample_rate_hz: f64 = rate_text
        .parse()
        .map_err(|_| format_err(format!("invalid sample_rate_hz {rate_text:?}")))?;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(format_err(format!("sample_rate_hz must be > 0, got {sample_rate_hz}")));
    }
    let mut start_time = 0.0;
    if let Some((_, line)) = lines.peek() {
        if let Some(("start_time_s", v)) = line.split_once(',').map(|(k, v)| (k.trim(), v)) {
            start_time = v
                .trim()
                .parse()
                .map_err(|_| format_err(format!("invalid start_time_s {v:?}")))?;
            lines.next();
        }
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| CorpusError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            message: format!("invalid magnitude {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(CorpusError::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message: format!("non-finite magnitude {line:?}"),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(CorpusError::NoSamples(origin.to_string()));
    }
    Ok(SampleSeries {
        patient_id,
        sample_rate_hz,
        samples,
        start_time,
    })
}

/// Serializes a series in the signal CSV format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn signal_to_csv(series: &SampleSeries) -> String {
    let mut out = String::with_capacity(series.samples.len() * 8 + 64);
    out.push_str(&format!("patient_id,{}\n", series.patient_id));
    out.push_str(&format!("sample_rate_hz,{}\n", series.sample_rate_hz));
    if series.start_time != 0.0 {
        out.push_str(&format!("start_time_s,{}\n", series.start_time));
    }
    for v in &series.samples {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_signal(series: &SampleSeries, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, signal_to_csv(series)).map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
struct AnnotationRecord {
    patient_id: String,
    start_s: f64,
    end_s: f64,
    label: String,
}

/// Reads an annotation CSV; rejects empty and overlapping intervals.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<LabeledInterval>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<LabeledInterval>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for required in ["patient_id", "start_s", "end_s", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CorpusError::Format {
                path: origin.to_string(),
                message: format!("missing column {required:?}"),
            });
        }
    }
    let mut intervals = Vec::new();
    for record in reader.deserialize::<AnnotationRecord>() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CorpusError::Parse {
                path: origin.to_string(),
                line,
                message: e.to_string(),
            }
        })?;
        let label = record.label.parse().map_err(|message| CorpusError::Parse {
            path: origin.to_string(),
            line: intervals.len() + 2,
            message,
        })?;
        intervals.push(LabeledInterval {
            patient_id: record.patient_id,
            start_s: record.start_s,
            end_s: record.end_s,
            label,
        });
    }
    validate_annotations(&intervals)?;
    Ok(intervals)
}

/// Every interval must be non-empty and a patient's intervals must not overlap.
pub fn validate_annotations(intervals: &[LabeledInterval]) -> Result<(), CorpusError> {
    let mut by_patient: BTreeMap<&str, Vec<&LabeledInterval>> = BTreeMap::new();
    for iv in intervals {
        if !(iv.end_s > iv.start_s) {
            return Err(CorpusError::EmptyInterval(iv.to_string()));
        }
        by_patient.entry(iv.patient_id.as_str()).or_default().push(iv);
    }
    for (patient, mut ivs) in by_patient {
        ivs.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for pair in ivs.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(CorpusError::Overlap {
                    patient: patient.to_string(),
                    first: pair[0].to_string(),
                    second: pair[1].to_string(),
                });
            }
        }
    }
    Ok(())
}

pub fn annotations_to_csv(intervals: &[LabeledInterval]) -> String {
    let mut out = String::from("patient_id,start_s,end_s,label\n");
    for iv in intervals {
        out.push_str(&format!(
            "{},{},{},{}\n",
            iv.patient_id, iv.start_s, iv.end_s, iv.label
        ));
    }
    out
}

pub fn write_annotations(
    intervals: &[LabeledInterval],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(annotations_to_csv(intervals).as_bytes())
        .map_err(io_err(path))
}

/// Cuts one event per interval, taking samples `floor(start·fs) ≤ i < floor(end·fs)`.
///
/// Intervals belonging to other patients are rejected.
pub fn slice_events(
    series: &SampleSeries,
    annotations: &[LabeledInterval],
) -> Result<Vec<Event>, CorpusError> {
    annotations
        .iter()
        .map(|iv| {
            if iv.patient_id != series.patient_id {
                return Err(CorpusError::PatientMismatch {
                    series: series.patient_id.clone(),
                    interval: iv.to_string(),
                });
            }
            if !(iv.end_s > iv.start_s) {
                return Err(CorpusError::EmptyInterval(iv.to_string()));
            }
            let out_of_range = || CorpusError::OutOfRange {
                interval: iv.to_string(),
                span_start: series.start_time,
                span_end: series.end_time(),
            };
            let start = series.index_of(iv.start_s);
            let end = series.index_of(iv.end_s);
            if start < 0 || end > series.len() as i64 {
                return Err(out_of_range());
            }
            let (start, end) = (start as usize, end as usize);
            if end <= start {
                return Err(CorpusError::EmptyInterval(iv.to_string()));
            }
            Ok(Event::new(
                iv.patient_id.clone(),
                iv.label,
                series.samples[start..end].to_vec(),
                series.sample_rate_hz,
            ))
        })
        .collect()
}

/// Builds a dataset from per-patient series and one annotation list.
/// Events keep annotation order within each patient; patients are visited in
/// series order.
pub fn build_dataset(
    series: &[SampleSeries],
    annotations: &[LabeledInterval],
) -> Result<Dataset, CorpusError> {
    validate_annotations(annotations)?;
    let mut events = Vec::new();
    for s in series {
        let own: Vec<LabeledInterval> = annotations
            .iter()
            .filter(|iv| iv.patient_id == s.patient_id)
            .cloned()
            .collect();
        events.extend(slice_events(s, &own)?);
    }
    Ok(Dataset::with_patients(
        events,
        series.iter().map(|s| s.patient_id.clone()),
    ))
}

/// Loads every `*.csv` signal in `dir`, sorted by file name.
pub fn load_signal_dir(dir: impl AsRef<Path>) -> Result<Vec<SampleSeries>, CorpusError> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(load_signal).collect()
}
