use coughsense::balance::SmoteConfig;
use coughsense::corpus::{Dataset, Event, Label};
use coughsense::eval::cv::{fit_fold, folds_for, loocv};
use coughsense::eval::grid::{grid_points, grid_search, point_seed, GridSpec};
use coughsense::eval::*;
use coughsense::features::{featurize_all, FeatureConfig, FeatureMatrix};
use coughsense::nnet::{Architecture, CnnSpec, NnetError, TrainConfig};
use coughsense::seed::rng_from_seed;
use coughsense::synth::{generate_corpus, SynthConfig};
use rand::Rng;

fn corpus(patients: usize, seed: u64) -> Dataset {
    generate_corpus(&SynthConfig {
        n_patients: patients,
        coughs_per_patient: 4,
        non_coughs_per_patient: 12,
        rng_seed: seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .dataset
}

fn pipeline() -> PipelineConfig {
    PipelineConfig {
        architecture: Architecture::Cnn(CnnSpec::default()),
        train: TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        },
        smote: SmoteConfig::default(),
    }
}

fn feature_cfg() -> FeatureConfig {
    FeatureConfig::new(16, 4).unwrap()
}

#[test]
fn fourteen_patients_give_fourteen_disjoint_exhaustive_folds() {
    let ds = corpus(14, 3);
    let folds = loocv_folds(&ds).unwrap();
    assert_eq!(folds.len(), 14);
    let mut seen = vec![0usize; ds.len()];
    for fold in &folds {
        for &i in &fold.test {
            assert_eq!(ds.events()[i].patient_id, fold.test_patient);
            seen[i] += 1;
        }
        for &i in &fold.train {
            assert_ne!(ds.events()[i].patient_id, fold.test_patient);
        }
        assert_eq!(fold.train.len() + fold.test.len(), ds.len());
    }
    assert!(seen.iter().all(|&n| n == 1));
}

#[test]
fn two_patients_train_on_each_other() {
    let events = vec![
        Event::new("A", Label::Cough, vec![1.0; 4], 100.0),
        Event::new("B", Label::NonCough, vec![1.0; 4], 100.0),
        Event::new("A", Label::NonCough, vec![1.0; 4], 100.0),
    ];
    let folds = loocv_folds(&Dataset::new(events)).unwrap();
    assert_eq!(folds.len(), 2);
    assert_eq!((folds[0].test.clone(), folds[0].train.clone()), (vec![0, 2], vec![1]));
    assert_eq!((folds[1].test.clone(), folds[1].train.clone()), (vec![1], vec![0, 2]));
}

#[test]
fn single_patient_is_rejected() {
    let ds = Dataset::new(vec![Event::new("A", Label::Cough, vec![1.0], 100.0)]);
    assert!(matches!(loocv_folds(&ds), Err(EvalError::TooFewPatients(1))));
    let none: Vec<String> = Vec::new();
    assert!(matches!(folds_for(&none, &[]), Err(EvalError::TooFewPatients(0))));
}

#[test]
fn poisoned_test_features_do_not_reach_training() {
    let ds = corpus(4, 5);
    let features = featurize_all(ds.events(), &feature_cfg()).unwrap();
    let folds = loocv_folds(&ds).unwrap();
    let fold = &folds[1];
    let mut poisoned: Vec<FeatureMatrix> = features.clone();
    for &i in &fold.test {
        poisoned[i].values.iter_mut().for_each(|v| *v = f64::NAN);
    }
    let cfg = pipeline();
    let clean = fit_fold(&features, fold, &cfg, 11).unwrap();
    let dirty = fit_fold(&poisoned, fold, &cfg, 11).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(clean.model.flat_params()), bits(dirty.model.flat_params()));
    assert_eq!(bits(clean.standardizer.mean.clone()), bits(dirty.standardizer.mean.clone()));
    assert_eq!(bits(clean.standardizer.std.clone()), bits(dirty.standardizer.std.clone()));
    assert_eq!(clean.train_report, dirty.train_report);
    assert!(evaluate_fold(&clean, &features, fold).is_ok());
    assert!(matches!(
        evaluate_fold(&dirty, &poisoned, fold),
        Err(EvalError::Nnet(NnetError::NonFinite(_)))
    ));
}

#[test]
fn single_point_grid_matches_direct_loocv() {
    let ds = corpus(3, 9);
    let spec = GridSpec {
        features: vec![feature_cfg()],
        architectures: vec![pipeline().architecture],
        train: vec![pipeline().train],
        smote: SmoteConfig::default(),
    };
    let results = grid_search(&ds, &spec, 42).unwrap();
    assert_eq!(results.len(), 1);
    let point = &grid_points(&spec)[0];
    let features = featurize_all(ds.events(), &feature_cfg()).unwrap();
    let direct = loocv(&features, &loocv_folds(&ds).unwrap(), &point.pipeline, point_seed(42, point)).unwrap();
    assert_eq!(results[0].summary, direct);
    assert_eq!(results[0].seed, point_seed(42, point));
}

#[test]
fn grid_reports_are_deterministic_and_ranked() {
    let ds = corpus(3, 10);
    let spec = GridSpec {
        features: vec![feature_cfg(), FeatureConfig::new(32, 5).unwrap()],
        architectures: vec![
            pipeline().architecture,
            Architecture::Cnn(CnnSpec {
                kernel_size: 2,
                ..CnnSpec::default()
            }),
        ],
        train: vec![pipeline().train],
        smote: SmoteConfig::default(),
    };
    let a = grid_search(&ds, &spec, 1).unwrap();
    let b = grid_search(&ds, &spec, 1).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(report_csv(&a).unwrap(), report_csv(&b).unwrap());
    assert_eq!(thresholds_csv(&a).unwrap(), thresholds_csv(&b).unwrap());
    assert_eq!(roc_points_csv(&a).unwrap(), roc_points_csv(&b).unwrap());
    assert!(a.windows(2).all(|w| w[0].summary.mean_auc >= w[1].summary.mean_auc));
    let text = report_csv(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn point_seed_ignores_grid_position() {
    let spec = GridSpec {
        features: vec![feature_cfg(), FeatureConfig::new(32, 5).unwrap()],
        architectures: vec![pipeline().architecture],
        train: vec![pipeline().train],
        smote: SmoteConfig::default(),
    };
    let points = grid_points(&spec);
    let reversed = GridSpec {
        features: spec.features.iter().rev().copied().collect(),
        ..spec.clone()
    };
    let other = grid_points(&reversed);
    assert_eq!(point_seed(3, &points[0]), point_seed(3, &other[1]));
    assert_ne!(point_seed(3, &points[0]), point_seed(3, &points[1]));
}

fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let mut won = 0.0;
    let (mut pos, mut neg) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            neg += 1.0;
            continue;
        }
        pos += 1.0;
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                won += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    won / (pos * neg)
}

#[test]
fn trapezoid_auc_equals_pairwise_count_on_random_sets() {
    let mut rng = rng_from_seed(2024);
    for _ in 0..200 {
        let n = rng.gen_range(2..120);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse grid forces ties
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 20.0).floor() / 20.0).collect();
        let got = roc_auc(&scores, &labels).unwrap();
        assert!((got - mann_whitney(&scores, &labels)).abs() < 1e-12);
    }
}
