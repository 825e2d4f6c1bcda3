use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use coughsense::balance::SmoteConfig;
use coughsense::corpus::{
    annotations_to_csv, build_dataset, dataset_summary, load_annotations, load_signal_dir, Dataset,
    Label, LabeledInterval, SampleSeries,
};
use coughsense::detect::{detect, DetectorConfig, SampleInterval};
use coughsense::eval::cv::fit_fold;
use coughsense::eval::grid::best_per_kind;
use coughsense::eval::{
    energy_baseline_loocv, grid_search, mean_roc_csv, mean_roc_svg, metrics_at_threshold,
    report_csv, roc_auc, roc_points_csv, thresholds_csv, Fold, GridResult, GridSpec, PipelineConfig,
};
use coughsense::features::{feature_grid, featurize_all, FeatureConfig, FeatureMatrix};
use coughsense::nnet::{predict_proba, Architecture, Checkpoint, TrainConfig};
use coughsense::seed::derive_seed;
use coughsense::synth::{
    generate_corpus, write_corpus, SynthConfig, ANNOTATIONS_FILE, SIGNAL_DIR,
};

use crate::args::*;
use crate::manifest::{Manifest, OutDir};

/// Bad arguments or missing inputs; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input not found: {}", path.display())))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Feature matrices of a corpus together with the config that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct FeatureFile {
    pub feature_config: FeatureConfig,
    pub matrices: Vec<FeatureMatrix>,
}

pub const FEATURES_FILE: &str = "features.json";
pub const MODEL_FILE: &str = "model.json";
pub const RESULTS_FILE: &str = "results.json";

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Detect(a) => detect_cmd(a, seed),
        Command::Featurize(a) => featurize(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Predict(a) => predict(a, seed),
        Command::Crossval(a) => crossval(a, seed),
        Command::Report(a) => report(a, seed),
    }
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("synth", seed);
    let mut cfg: SynthConfig = match &a.config {
        Some(path) => {
            manifest.input(path);
            read_json(path)?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = a.patients {
        cfg.n_patients = n;
    }
    if let Some(n) = a.coughs_per_patient {
        cfg.coughs_per_patient = n;
    }
    if let Some(n) = a.non_coughs_per_patient {
        cfg.non_coughs_per_patient = n;
    }
    if let Some(v) = a.noise_rms {
        cfg.noise_rms = v;
    }
    cfg.rng_seed = seed;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = generate_corpus(&cfg)?;
    let out = OutDir::create(&a.out)?;
    write_corpus(&corpus, &out.root)?;
    for s in &corpus.series {
        manifest.outputs.push(format!("{SIGNAL_DIR}/{}.csv", s.patient_id));
    }
    manifest.outputs.push(ANNOTATIONS_FILE.into());
    let summary = dataset_summary(&corpus.dataset);
    out.write(&mut manifest, "summary.csv", summary.to_csv())?;
    let baseline = coughsense::eval::energy_baseline_auc(&corpus.dataset).ok();
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.summary = json!({
        "patients": cfg.n_patients,
        "coughs": summary.total.coughs,
        "non_coughs": summary.total.non_coughs,
        "energy_baseline_auc": baseline,
    });
    manifest.write(&out.root)?;
    println!(
        "wrote {} patients, {} coughs, {} non-coughs to {}",
        cfg.n_patients,
        summary.total.coughs,
        summary.total.non_coughs,
        a.out.display()
    );
    Ok(())
}

/// Resolves signal and annotation paths and checks that they exist.
fn corpus_paths(c: &CorpusArgs, need_annotations: bool) -> Result<(PathBuf, Option<PathBuf>)> {
    let signals = c
        .signals
        .clone()
        .or_else(|| c.corpus.as_ref().map(|d| d.join(SIGNAL_DIR)))
        .ok_or_else(|| usage("pass --corpus or --signals"))?;
    require(&signals)?;
    let annotations = c
        .annotations
        .clone()
        .or_else(|| c.corpus.as_ref().map(|d| d.join(ANNOTATIONS_FILE)));
    match &annotations {
        Some(p) if need_annotations || c.annotations.is_some() => require(p)?,
        None if need_annotations => return Err(usage("pass --corpus or --annotations")),
        _ => {}
    }
    let annotations = annotations.filter(|p| p.exists());
    Ok((signals, annotations))
}

fn load_corpus(c: &CorpusArgs, manifest: &mut Manifest) -> Result<Dataset> {
    let (signals, annotations) = corpus_paths(c, true)?;
    let annotations = annotations.expect("annotations required");
    manifest.input(&signals);
    manifest.input(&annotations);
    let series = load_signal_dir(&signals)?;
    let intervals = load_annotations(&annotations)?;
    Ok(build_dataset(&series, &intervals)?)
}

/// Label of the annotation overlapping `d` the most; non-cough when none does.
fn detection_label(series: &SampleSeries, d: &SampleInterval, annotations: &[LabeledInterval]) -> Label {
    let mut best = (0, Label::NonCough);
    for iv in annotations.iter().filter(|iv| iv.patient_id == series.patient_id) {
        let span = SampleInterval {
            start: series.index_of(iv.start_s).max(0) as usize,
            end: series.index_of(iv.end_s).max(0) as usize,
        };
        let overlap = d.overlap(&span);
        if overlap > best.0 {
            best = (overlap, iv.label);
        }
    }
    best.1
}

fn detect_cmd(a: DetectArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("detect", seed);
    let cfg = DetectorConfig {
        window_len: a.window_len,
        hop: a.hop,
        threshold: a.threshold,
        min_event_len: a.min_event_len,
        merge_gap: a.merge_gap,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (signals, annotations) = corpus_paths(&a.corpus, false)?;
    manifest.input(&signals);
    let series = load_signal_dir(&signals)?;
    let truth = match &annotations {
        Some(p) => {
            manifest.input(p);
            Some(load_annotations(p)?)
        }
        None => None,
    };
    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record(["patient_id", "start_s", "end_s", "start_sample", "end_sample"])?;
    let mut labeled = Vec::new();
    let mut total = 0;
    for s in &series {
        for d in detect(&s.samples, &cfg).with_context(|| s.patient_id.clone())? {
            total += 1;
            let (start_s, end_s) = (s.time_of(d.start), s.time_of(d.end));
            rows.write_record([
                s.patient_id.clone(),
                start_s.to_string(),
                end_s.to_string(),
                d.start.to_string(),
                d.end.to_string(),
            ])?;
            if let Some(truth) = &truth {
                labeled.push(LabeledInterval {
                    patient_id: s.patient_id.clone(),
                    start_s,
                    end_s,
                    label: detection_label(s, &d, truth),
                });
            }
        }
    }
    let out = OutDir::create(&a.out)?;
    out.write(&mut manifest, "detections.csv", rows.into_inner()?)?;
    let mut summary = json!({ "detections": total });
    if truth.is_some() {
        out.write(&mut manifest, "labeled_detections.csv", annotations_to_csv(&labeled))?;
        let coughs = labeled.iter().filter(|l| l.label.is_cough()).count();
        summary["cough_detections"] = json!(coughs);
        summary["non_cough_detections"] = json!(labeled.len() - coughs);
    }
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.summary = summary;
    manifest.write(&out.root)?;
    println!("{total} detections in {} series", series.len());
    Ok(())
}

fn featurize(a: FeaturizeArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("featurize", seed);
    let cfg = FeatureConfig::new(a.frame_len, a.segments).map_err(|e| usage(e.to_string()))?;
    let ds = load_corpus(&a.corpus, &mut manifest)?;
    let matrices = featurize_all(ds.events(), &cfg)?;
    let out = OutDir::create(&a.out)?;
    let (coughs, non_coughs) = ds.label_counts();
    out.write_json(
        &mut manifest,
        FEATURES_FILE,
        &FeatureFile {
            feature_config: cfg,
            matrices,
        },
    )?;
    out.write(&mut manifest, "summary.csv", dataset_summary(&ds).to_csv())?;
    manifest.config = serde_json::to_value(cfg)?;
    manifest.summary = json!({
        "events": ds.len(),
        "coughs": coughs,
        "non_coughs": non_coughs,
        "shape": cfg.shape(),
    });
    manifest.write(&out.root)?;
    println!("{} events -> {:?} matrices", ds.len(), cfg.shape());
    Ok(())
}

fn load_features(path: &Path) -> Result<FeatureFile> {
    let mut path = path.to_path_buf();
    if path.is_dir() {
        path.push(FEATURES_FILE);
    }
    read_json(&path)
}

fn train_config(f: &FitArgs) -> Result<TrainConfig> {
    if f.batch_size == 0 {
        return Err(usage("--batch-size must be >= 1"));
    }
    if let Some(lr) = f.lr {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(usage(format!("--lr must be >= 0, got {lr}")));
        }
    }
    Ok(TrainConfig {
        batch_size: f.batch_size,
        epochs: f.epochs,
        learning_rate: f.lr,
        rng_seed: 0,
        optimizer: f.optimizer,
    })
}

fn smote_config(f: &FitArgs) -> Result<SmoteConfig> {
    let cfg = SmoteConfig {
        k_neighbors: f.smote_k,
        target_ratio: f.target_ratio,
        rng_seed: 0,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("train", seed);
    manifest.input(&a.features);
    let ff = load_features(&a.features)?;
    let architecture = match &a.arch {
        Some(path) => {
            manifest.input(path);
            read_json(path)?
        }
        None => Architecture::default_for(a.classifier),
    };
    architecture.validate().map_err(|e| usage(e.to_string()))?;
    let pipeline = PipelineConfig {
        architecture,
        train: train_config(&a.fit)?,
        smote: smote_config(&a.fit)?,
    };
    let fold = Fold {
        index: 0,
        test_patient: String::new(),
        train: (0..ff.matrices.len()).collect(),
        test: Vec::new(),
    };
    let fitted = fit_fold(&ff.matrices, &fold, &pipeline, seed)?;
    let checkpoint = Checkpoint::new(
        &fitted.model,
        ff.feature_config,
        fitted.standardizer,
        TrainConfig {
            rng_seed: derive_seed(seed, &[2]),
            ..pipeline.train.clone()
        },
        derive_seed(seed, &[1]),
    );
    let out = OutDir::create(&a.out)?;
    out.write(&mut manifest, MODEL_FILE, checkpoint.to_json()? + "\n")?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in fitted.train_report.loss_curve.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    out.write(&mut manifest, "loss.csv", loss)?;
    manifest.config = serde_json::to_value(&pipeline)?;
    manifest.summary = json!({
        "events": ff.matrices.len(),
        "synthetic": fitted.synthetic,
        "parameters": checkpoint.param_count,
        "learning_rate": fitted.train_report.learning_rate,
        "final_loss": fitted.train_report.loss_curve.last(),
    });
    manifest.write(&out.root)?;
    println!(
        "trained {} on {} events (+{} synthetic)",
        pipeline.architecture.kind(),
        ff.matrices.len(),
        fitted.synthetic
    );
    Ok(())
}

fn predict(a: PredictArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("predict", seed);
    manifest.input(&a.model);
    manifest.input(&a.features);
    require(&a.model)?;
    let checkpoint = Checkpoint::load(&a.model).map_err(|e| usage(e.to_string()))?;
    let ff = load_features(&a.features)?;
    if ff.feature_config != checkpoint.feature_config {
        return Err(usage(format!(
            "features were computed with {:?} but the model expects {:?}",
            ff.feature_config, checkpoint.feature_config
        )));
    }
    let model = checkpoint.model()?;
    let standardized: Vec<FeatureMatrix> = ff
        .matrices
        .iter()
        .map(|m| checkpoint.standardizer.apply(m))
        .collect::<Result<_, _>>()?;
    let scores = predict_proba(&model, &standardized)?;
    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record(["index", "patient_id", "label", "p_cough", "predicted"])?;
    for (i, (m, p)) in ff.matrices.iter().zip(&scores).enumerate() {
        let predicted = if *p >= a.threshold { Label::Cough } else { Label::NonCough };
        rows.write_record([
            i.to_string(),
            m.patient_id.clone(),
            m.label.as_str().to_string(),
            p.to_string(),
            predicted.as_str().to_string(),
        ])?;
    }
    let out = OutDir::create(&a.out)?;
    out.write(&mut manifest, "predictions.csv", rows.into_inner()?)?;
    let labels: Vec<bool> = ff.matrices.iter().map(|m| m.label.is_cough()).collect();
    let metrics = match (roc_auc(&scores, &labels), metrics_at_threshold(&scores, &labels, a.threshold)) {
        (Ok(auc), Ok(m)) => json!({
            "auc": auc,
            "threshold": a.threshold,
            "sensitivity": m.sensitivity,
            "specificity": m.specificity,
            "accuracy": m.accuracy,
        }),
        _ => json!(null),
    };
    if !metrics.is_null() {
        out.write_json(&mut manifest, "metrics.json", &metrics)?;
    }
    manifest.config = json!({ "threshold": a.threshold });
    manifest.summary = json!({ "events": scores.len(), "metrics": metrics });
    manifest.write(&out.root)?;
    println!("scored {} events", scores.len());
    Ok(())
}

fn grid_spec(a: &CrossvalArgs, manifest: &mut Manifest) -> Result<GridSpec> {
    if let Some(path) = &a.grid {
        manifest.input(path);
        return read_json(path);
    }
    let features = if a.full_grid {
        feature_grid()
    } else {
        let mut v = Vec::new();
        for &psi in &a.frame_len {
            for &c in &a.segments {
                v.push(FeatureConfig::new(psi, c).map_err(|e| usage(e.to_string()))?);
            }
        }
        v
    };
    let mut kinds = a.classifier.clone();
    kinds.dedup();
    Ok(GridSpec {
        features,
        architectures: kinds.into_iter().map(Architecture::default_for).collect(),
        train: vec![train_config(&a.fit)?],
        smote: smote_config(&a.fit)?,
    })
}

fn check_grid(spec: &GridSpec) -> Result<()> {
    if spec.features.is_empty() || spec.architectures.is_empty() || spec.train.is_empty() {
        return Err(usage("grid has an empty axis"));
    }
    for f in &spec.features {
        f.validate().map_err(|e| usage(e.to_string()))?;
    }
    for arch in &spec.architectures {
        arch.validate().map_err(|e| usage(e.to_string()))?;
    }
    spec.smote.validate().map_err(|e| usage(e.to_string()))
}

fn write_report_files(results: &[GridResult], out: &OutDir, manifest: &mut Manifest, max_curves: usize) -> Result<()> {
    out.write(manifest, "report.csv", report_csv(results)?)?;
    out.write(manifest, "thresholds.csv", thresholds_csv(results)?)?;
    out.write(manifest, "roc_points.csv", roc_points_csv(results)?)?;
    out.write(manifest, "mean_roc.csv", mean_roc_csv(results)?)?;
    out.write(manifest, "mean_roc.svg", mean_roc_svg(results, max_curves))?;
    Ok(())
}

fn ranking(results: &[GridResult]) -> serde_json::Value {
    json!({
        "rows": results.len(),
        "best": best_per_kind(results)
            .into_iter()
            .map(|r| json!({
                "classifier": r.point.kind().label(),
                "frame_len": r.point.feature.frame_len,
                "segments": r.point.feature.segments,
                "mean_auc": r.summary.mean_auc,
            }))
            .collect::<Vec<_>>(),
    })
}

fn crossval(a: CrossvalArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("crossval", seed);
    let spec = grid_spec(&a, &mut manifest)?;
    check_grid(&spec)?;
    if a.jobs == Some(0) {
        return Err(usage("--jobs must be >= 1"));
    }
    let ds = load_corpus(&a.corpus, &mut manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()?;
    let results = pool.install(|| grid_search(&ds, &spec, seed))?;
    let baseline = energy_baseline_loocv(&ds).ok();
    let out = OutDir::create(&a.out)?;
    write_report_files(&results, &out, &mut manifest, 6)?;
    out.write_json(&mut manifest, RESULTS_FILE, &results)?;
    manifest.config = serde_json::to_value(&spec)?;
    let mut summary = ranking(&results);
    summary["energy_baseline_auc"] = json!(baseline);
    manifest.summary = summary;
    manifest.write(&out.root)?;
    print!("{}", report_csv(&results)?);
    Ok(())
}

fn report(a: ReportArgs, seed: u64) -> Result<()> {
    let mut manifest = Manifest::new("report", seed);
    let mut path = a.results.clone();
    if path.is_dir() {
        path.push(RESULTS_FILE);
    }
    manifest.input(&path);
    let results: Vec<GridResult> = read_json(&path)?;
    if results.is_empty() {
        return Err(anyhow!("{} holds no results", path.display()));
    }
    let out = OutDir::create(&a.out)?;
    write_report_files(&results, &out, &mut manifest, a.max_curves)?;
    manifest.config = json!({ "max_curves": a.max_curves });
    manifest.summary = ranking(&results);
    manifest.write(&out.root)?;
    print!("{}", report_csv(&results)?);
    Ok(())
}
