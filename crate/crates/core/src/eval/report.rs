//! Report emission: metrics CSV, JSON summary, and ROC SVG plots.
//!
//! Outputs embed no timestamps and use fixed float formatting, so reruns
//! over the same inputs are byte-identical. Vocabularies wider than 20
//! labels get one SVG per 10 labels to keep the plots readable.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::labels::LabelVocabulary;

use super::{EvalError, MetricsReport, RocCurve};

const SVG_LABELS_PER_FILE: usize = 10;
const SINGLE_FILE_LABEL_LIMIT: usize = 20;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io { path: path.to_path_buf(), source }
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

fn write_metrics_csv(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "label",
        "kind",
        "short_title",
        "n_pos",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc",
    ])
    .map_err(EvalError::from_csv)?;

    for m in &report.per_label {
        w.write_record([
            m.label.as_str(),
            m.kind.as_str(),
            m.short_title.as_str(),
            &m.n_pos.to_string(),
            &fmt_metric(m.accuracy),
            &fmt_metric(m.precision),
            &fmt_metric(m.recall),
            &fmt_metric(m.f1),
            &m.auc.map(fmt_metric).unwrap_or_default(),
        ])
        .map_err(EvalError::from_csv)?;
    }

    let total_pos: u64 = report.per_label.iter().map(|m| m.n_pos).sum();
    for (name, agg) in [("micro", &report.micro), ("macro", &report.macro_avg)] {
        w.write_record([
            name,
            "aggregate",
            "",
            &total_pos.to_string(),
            &fmt_metric(agg.accuracy),
            &fmt_metric(agg.precision),
            &fmt_metric(agg.recall),
            &fmt_metric(agg.f1),
            &agg.auc.map(fmt_metric).unwrap_or_default(),
        ])
        .map_err(EvalError::from_csv)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

impl EvalError {
    fn from_csv(e: csv::Error) -> Self {
        EvalError::Shape(format!("csv write failed: {e}"))
    }
}

// plot geometry inside the 1000x800 viewbox
const PLOT_X0: f64 = 80.0;
const PLOT_X1: f64 = 660.0;
const PLOT_Y0: f64 = 740.0; // svg y grows downward; y0 is fpr axis
const PLOT_Y1: f64 = 50.0;

fn plot_x(fpr: f64) -> f64 {
    PLOT_X0 + fpr * (PLOT_X1 - PLOT_X0)
}

fn plot_y(tpr: f64) -> f64 {
    PLOT_Y0 + tpr * (PLOT_Y1 - PLOT_Y0)
}

fn write_roc_svg(
    curves: &[&RocCurve],
    vocab: &LabelVocabulary,
    aucs: &[Option<f64>],
    path: &Path,
) -> Result<(), EvalError> {
    let mut svg = String::new();
    svg.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 800\">\n");
    svg.push_str("<rect width=\"1000\" height=\"800\" fill=\"white\"/>\n");

    // axes
    svg.push_str(&format!(
        "<line x1=\"{PLOT_X0}\" y1=\"{PLOT_Y0}\" x2=\"{PLOT_X1}\" y2=\"{PLOT_Y0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{PLOT_X0}\" y1=\"{PLOT_Y0}\" x2=\"{PLOT_X0}\" y2=\"{PLOT_Y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"16\" text-anchor=\"middle\">{:.1}</text>\n",
            plot_x(f),
            PLOT_Y0 + 24.0,
            f
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"16\" text-anchor=\"end\">{:.1}</text>\n",
            PLOT_X0 - 8.0,
            plot_y(f) + 5.0,
            f
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"18\" text-anchor=\"middle\">false positive rate</text>\n",
        (PLOT_X0 + PLOT_X1) / 2.0,
        PLOT_Y0 + 50.0
    ));
    svg.push_str(&format!(
        "<text x=\"24\" y=\"{:.2}\" font-size=\"18\" text-anchor=\"middle\" transform=\"rotate(-90 24 {:.2})\">true positive rate</text>\n",
        (PLOT_Y0 + PLOT_Y1) / 2.0,
        (PLOT_Y0 + PLOT_Y1) / 2.0
    ));

    // chance diagonal
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999999\" stroke-dasharray=\"8 6\"/>\n",
        plot_x(0.0),
        plot_y(0.0),
        plot_x(1.0),
        plot_y(1.0)
    ));

    // curves and legend
    let legend_x = PLOT_X1 + 30.0;
    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: String = curve
            .points
            .iter()
            .map(|(fpr, tpr)| format!("{:.2},{:.2}", plot_x(*fpr), plot_y(*tpr)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));

        let entry = &vocab.entries()[curve.label];
        let auc_text = aucs[i].map(|a| format!(" (auc {a:.3})")).unwrap_or_default();
        let y = PLOT_Y1 + 20.0 + i as f64 * 26.0;
        svg.push_str(&format!(
            "<line x1=\"{legend_x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            y - 5.0,
            legend_x + 28.0,
            y - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"15\">{}{auc_text}</text>\n",
            legend_x + 36.0,
            xml_escape(&entry.short_title),
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(svg.as_bytes()).map_err(|e| io_err(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `metrics.csv`, `metrics.json`, and the ROC SVG file(s) into
/// `out_dir`. Returns the paths written. Reruns are byte-identical.
pub fn emit_reports(
    report: &MetricsReport,
    curves: &[RocCurve],
    vocab: &LabelVocabulary,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, EvalError> {
    if report.per_label.is_empty() {
        return Err(EvalError::Empty);
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("metrics.csv");
    write_metrics_csv(report, &csv_path)?;
    written.push(csv_path);

    let json_path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&json_path, json + "\n").map_err(|e| io_err(&json_path, e))?;
    written.push(json_path);

    let auc_of = |curve: &RocCurve| report.per_label[curve.label].auc;
    if vocab.len() <= SINGLE_FILE_LABEL_LIMIT {
        let path = out_dir.join("roc.svg");
        let refs: Vec<&RocCurve> = curves.iter().collect();
        let aucs: Vec<Option<f64>> = refs.iter().map(|c| auc_of(c)).collect();
        write_roc_svg(&refs, vocab, &aucs, &path)?;
        written.push(path);
    } else {
        // one plot per group of 10 labels, skipping groups with no curves
        let groups = vocab.len().div_ceil(SVG_LABELS_PER_FILE);
        for g in 0..groups {
            let lo = g * SVG_LABELS_PER_FILE;
            let hi = ((g + 1) * SVG_LABELS_PER_FILE).min(vocab.len());
            let refs: Vec<&RocCurve> =
                curves.iter().filter(|c| c.label >= lo && c.label < hi).collect();
            if refs.is_empty() {
                continue;
            }
            let path = out_dir.join(format!("roc_{:03}-{:03}.svg", lo + 1, hi));
            let aucs: Vec<Option<f64>> = refs.iter().map(|c| auc_of(c)).collect();
            write_roc_svg(&refs, vocab, &aucs, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
