//! Cross-validation report files.
//!
//! - `report.csv`: one row per grid point with the columns of [`REPORT_COLUMNS`]
//! - `thresholds.csv`: threshold-dependent metrics and the configuration of each row
//! - `roc_points.csv`: every fold's ROC points
//! - `mean_roc.csv`: the averaged curves on the fixed FPR grid
//! - `mean_roc.svg`: a static plot of the averaged curves

use std::fmt::Write as _;
use std::path::Path;

use super::grid::GridResult;
use super::EvalError;

pub const REPORT_COLUMNS: [&str; 7] = [
    "Frame",
    "Seg",
    "Classifier",
    "Mean Spec",
    "Mean Sens",
    "Mean Accuracy",
    "Mean AUC",
];

pub const THRESHOLD_COLUMNS: [&str; 12] = [
    "Frame",
    "Seg",
    "Classifier",
    "Threshold",
    "Youden Threshold",
    "Youden Spec",
    "Youden Sens",
    "AUC Std",
    "Folds",
    "Seed",
    "Architecture",
    "Training",
];

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn write_rows(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn key(r: &GridResult) -> Vec<String> {
    vec![
        r.point.feature.frame_len.to_string(),
        r.point.feature.segments.to_string(),
        r.point.kind().label().to_string(),
    ]
}

pub fn report_csv(results: &[GridResult]) -> Result<String, EvalError> {
    let rows = results
        .iter()
        .map(|r| {
            let s = &r.summary;
            let mut row = key(r);
            row.extend([s.mean_spec, s.mean_sens, s.mean_accuracy, s.mean_auc].map(num));
            row
        })
        .collect();
    write_rows(&REPORT_COLUMNS, rows)
}

pub fn thresholds_csv(results: &[GridResult]) -> Result<String, EvalError> {
    let rows = results
        .iter()
        .map(|r| {
            let s = &r.summary;
            let mut row = key(r);
            row.extend(
                [
                    s.folds.first().map_or(f64::NAN, |f| f.threshold),
                    s.mean_youden_threshold,
                    s.mean_youden_spec,
                    s.mean_youden_sens,
                    s.mean_roc.std_auc,
                ]
                .map(num),
            );
            let t = &r.point.pipeline.train;
            row.extend([
                s.folds.len().to_string(),
                r.seed.to_string(),
                r.point.pipeline.architecture.describe(),
                format!(
                    "batch={} epochs={} lr={} optimizer={:?}",
                    t.batch_size,
                    t.epochs,
                    t.learning_rate
                        .unwrap_or_else(|| r.point.pipeline.architecture.default_learning_rate()),
                    t.optimizer
                )
                .to_lowercase(),
            ]);
            row
        })
        .collect();
    write_rows(&THRESHOLD_COLUMNS, rows)
}

pub fn roc_points_csv(results: &[GridResult]) -> Result<String, EvalError> {
    let mut rows = Vec::new();
    for r in results {
        for fold in &r.summary.folds {
            for p in &fold.roc {
                let mut row = key(r);
                row.extend([fold.index.to_string(), fold.test_patient.clone()]);
                row.extend([p.fpr, p.tpr, p.threshold].map(num));
                rows.push(row);
            }
        }
    }
    write_rows(
        &["Frame", "Seg", "Classifier", "Fold", "Patient", "FPR", "TPR", "Threshold"],
        rows,
    )
}

pub fn mean_roc_csv(results: &[GridResult]) -> Result<String, EvalError> {
    let mut rows = Vec::new();
    for r in results {
        let m = &r.summary.mean_roc;
        for (x, y) in m.fpr.iter().zip(&m.tpr) {
            let mut row = key(r);
            row.extend([*x, *y].map(num));
            rows.push(row);
        }
    }
    write_rows(&["Frame", "Seg", "Classifier", "FPR", "TPR"], rows)
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Mean ROC curves of up to the first `max_curves` results as a static SVG.
pub fn mean_roc_svg(results: &[GridResult], max_curves: usize) -> String {
    let (size, pad) = (400.0, 50.0);
    let sx = |x: f64| pad + x * size;
    let sy = |y: f64| pad + (1.0 - y) * size;
    let mut svg = String::new();
    let total = size + 2.0 * pad;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            sx(v),
            sy(0.0) + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#,
            sx(0.0) - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#,
        sx(0.5),
        total - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">True positive rate</text>"#,
        sy(0.5),
        sy(0.5)
    );
    for (i, r) in results.iter().take(max_curves).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let m = &r.summary.mean_roc;
        let pts: Vec<String> = m
            .fpr
            .iter()
            .zip(&m.tpr)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{} Ψ={} C={} AUC={:.4}</text>"#,
            sx(0.35),
            sy(0.3) + 16.0 * i as f64,
            r.point.kind().label(),
            r.point.feature.frame_len,
            r.point.feature.segments,
            m.mean_auc
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes all report files into `dir`.
pub fn write_reports(results: &[GridResult], dir: &Path) -> Result<(), EvalError> {
    let files = [
        ("report.csv", report_csv(results)?),
        ("thresholds.csv", thresholds_csv(results)?),
        ("roc_points.csv", roc_points_csv(results)?),
        ("mean_roc.csv", mean_roc_csv(results)?),
        ("mean_roc.svg", mean_roc_svg(results, PALETTE.len())),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
