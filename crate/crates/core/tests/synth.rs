use coughsense::corpus::{dataset_summary, Label};
use coughsense::eval::energy_baseline_auc;
use coughsense::synth::*;

fn separated() -> SynthConfig {
    SynthConfig {
        n_patients: 4,
        coughs_per_patient: 10,
        non_coughs_per_patient: 40,
        cough_model: EventModel::Burst(BurstModel {
            amplitude: Range::new(1.0, 2.0),
            ..BurstModel::default()
        }),
        non_cough_model: EventModel::Drift(DriftModel {
            rms: Range::new(0.02, 0.05),
            ..DriftModel::default()
        }),
        ..SynthConfig::default()
    }
}

#[test]
fn clinical_sized_config_has_the_target_imbalance() {
    let c = generate_corpus(&SynthConfig {
        coughs_per_patient: 430,
        non_coughs_per_patient: 4860,
        cough_duration_s: Range::new(0.3, 1.0),
        non_cough_duration_s: Range::new(0.5, 1.0),
        gap_s: Range::new(0.1, 0.2),
        rng_seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let summary = dataset_summary(&c.dataset);
    assert_eq!(summary.rows.len(), 14);
    assert_eq!(summary.total.coughs, 14 * 430);
    assert_eq!(summary.total.non_coughs, 14 * 4860);
    let ratio = summary.total.non_coughs as f64 / summary.total.coughs as f64;
    assert!((ratio - 68005.0 / 6000.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn default_corpus_mirrors_the_clinical_imbalance() {
    let cfg = SynthConfig::default();
    assert_eq!(cfg.n_patients, 14);
    let ratio = cfg.non_coughs_per_patient as f64 / cfg.coughs_per_patient as f64;
    assert!((ratio - 68005.0 / 6000.0).abs() < 0.01);
}

#[test]
fn widely_separated_models_are_easy_for_the_energy_baseline() {
    let auc = corpus_difficulty(&separated()).unwrap();
    assert!(auc > 0.9, "baseline AUC {auc}");
}

#[test]
fn identical_models_are_indistinguishable() {
    let burst = EventModel::Burst(BurstModel::default());
    let cfg = SynthConfig {
        coughs_per_patient: 30,
        non_coughs_per_patient: 300,
        cough_duration_s: Range::new(0.3, 1.5),
        non_cough_duration_s: Range::new(0.3, 1.5),
        cough_model: burst.clone(),
        non_cough_model: burst,
        rng_seed: 8,
        ..SynthConfig::default()
    };
    let auc = corpus_difficulty(&cfg).unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "baseline AUC {auc}");
}

#[test]
fn more_noise_never_helps_the_baseline() {
    let noise = [0.0, 0.05, 0.2, 1.0];
    let mut means = Vec::new();
    for rms in noise {
        let total: f64 = (0..5)
            .map(|seed| {
                corpus_difficulty(&SynthConfig {
                    noise_rms: rms,
                    rng_seed: seed,
                    ..separated()
                })
                .unwrap()
            })
            .sum();
        means.push(total / 5.0);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
}

#[test]
fn written_corpora_are_byte_identical() {
    let cfg = SynthConfig {
        n_patients: 3,
        coughs_per_patient: 2,
        non_coughs_per_patient: 5,
        rng_seed: 77,
        ..SynthConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_corpus(&generate_corpus(&cfg).unwrap(), d.path()).unwrap();
    }
    let read = |d: &tempfile::TempDir, rel: String| std::fs::read(d.path().join(rel)).unwrap();
    let mut files = vec![ANNOTATIONS_FILE.to_string()];
    files.extend(cfg.patient_ids().iter().map(|p| format!("{SIGNAL_DIR}/{p}.csv")));
    for f in files {
        assert_eq!(read(&dirs[0], f.clone()), read(&dirs[1], f));
    }
}

#[test]
fn different_seeds_give_different_corpora() {
    let a = generate_corpus(&SynthConfig { rng_seed: 1, ..separated() }).unwrap();
    let b = generate_corpus(&SynthConfig { rng_seed: 2, ..separated() }).unwrap();
    assert_ne!(a.series, b.series);
}

#[test]
fn events_carry_the_configured_labels() {
    let c = generate_corpus(&separated()).unwrap();
    for p in c.config.patient_ids() {
        assert_eq!(c.dataset.count(&p, Label::Cough), 10);
        assert_eq!(c.dataset.count(&p, Label::NonCough), 40);
    }
    assert!(energy_baseline_auc(&c.dataset).unwrap() > 0.9);
}
