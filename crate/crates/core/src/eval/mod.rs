//! Per-label and aggregate evaluation of multi-label predictions.
//!
//! Probabilities are thresholded at `tau` (default 0.5, `>=` semantics)
//! into bit predictions, counted into per-label and pooled confusion
//! tables, and summarized as accuracy, precision, recall, F1, and AUC.
//! The 0/0 convention for precision/recall/F1 is 0. Labels without
//! positives in the truth have no defined AUC and are flagged rather than
//! scored 0. Micro aggregation pools confusion counts; macro averages
//! per-label values; both are always emitted. Accuracy is cell-wise
//! pooled.

mod report;
mod roc;

pub use report::emit_reports;
pub use roc::{auc, mann_whitney_auc, roc_points, RocCurve};

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::labels::LabelVocabulary;
use crate::model::{forward_batch, sigmoid, Matrix, ModelConfig, ModelError, ParameterSet, RunMode};
use crate::tokenizer::CachedExample;

/// Default decision threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const PREDICT_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty prediction set")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    BadThreshold(f64),
    #[error("ROC requires at least one positive and one negative example")]
    DegenerateRoc,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-example probabilities and ground truth.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    /// n x num_labels, entries in [0,1].
    pub probabilities: Matrix,
    /// n x num_labels, entries 0/1.
    pub truth: Matrix,
    pub admission_ids: Vec<u64>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.admission_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admission_ids.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.probabilities.cols()
    }
}

/// Run the model in eval mode over cached examples, producing sigmoid
/// probabilities per label.
pub fn predict(
    params: &ParameterSet,
    config: &ModelConfig,
    data: &[CachedExample],
) -> Result<PredictionSet, ModelError> {
    let n = data.len();
    let mut probabilities = Matrix::zeros(n, config.num_labels);
    let mut truth = Matrix::zeros(n, config.num_labels);
    let mut admission_ids = Vec::with_capacity(n);

    for (chunk_start, chunk) in data.chunks(PREDICT_BATCH).enumerate().map(|(i, c)| (i * PREDICT_BATCH, c)) {
        let examples: Vec<&crate::tokenizer::EncodedExample> =
            chunk.iter().map(|c| &c.example).collect();
        let activation = forward_batch(&examples, params, config, RunMode::Eval)?;
        for (offset, cache) in activation.examples.iter().enumerate() {
            let row = chunk_start + offset;
            for (c, &z) in cache.head.logits.iter().enumerate() {
                probabilities.set(row, c, sigmoid(z));
            }
            for (c, &bit) in chunk[offset].example.labels.iter().enumerate() {
                truth.set(row, c, f64::from(bit));
            }
        }
    }
    for c in data {
        admission_ids.push(c.admission_id);
    }
    Ok(PredictionSet { probabilities, truth, admission_ids })
}

/// Threshold probabilities into bits: 1 iff `p >= tau`.
pub fn threshold_predictions(probs: &Matrix, tau: f64) -> Result<Matrix, EvalError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(EvalError::BadThreshold(tau));
    }
    let data = probs.data().iter().map(|&p| f64::from(p >= tau)).collect();
    Ok(Matrix::from_vec(probs.rows(), probs.cols(), data))
}

/// A standard 2x2 confusion table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / total as f64
    }
}

fn count_cells(preds: &[f64], truth: &[f64]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p != 0.0, t != 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Pooled confusion counts over every (example, label) cell.
pub fn confusion_counts(preds: &Matrix, truth: &Matrix) -> Result<ConfusionCounts, EvalError> {
    if preds.shape() != truth.shape() {
        return Err(EvalError::Shape(format!(
            "predictions {:?} vs truth {:?}",
            preds.shape(),
            truth.shape()
        )));
    }
    Ok(count_cells(preds.data(), truth.data()))
}

/// Confusion counts per label (per column).
pub fn per_label_confusion(
    preds: &Matrix,
    truth: &Matrix,
) -> Result<Vec<ConfusionCounts>, EvalError> {
    if preds.shape() != truth.shape() {
        return Err(EvalError::Shape(format!(
            "predictions {:?} vs truth {:?}",
            preds.shape(),
            truth.shape()
        )));
    }
    let mut out = vec![ConfusionCounts::default(); preds.cols()];
    for r in 0..preds.rows() {
        let prow = preds.row(r);
        let trow = truth.row(r);
        for c in 0..preds.cols() {
            match (prow[c] != 0.0, trow[c] != 0.0) {
                (true, true) => out[c].tp += 1,
                (true, false) => out[c].fp += 1,
                (false, true) => out[c].fn_ += 1,
                (false, false) => out[c].tn += 1,
            }
        }
    }
    Ok(out)
}

/// Precision, recall, F1 with the 0/0 -> 0 convention.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let precision =
        if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let recall = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Fraction of (example, label) cells where prediction equals truth.
pub fn multilabel_accuracy(preds: &Matrix, truth: &Matrix) -> Result<f64, EvalError> {
    let counts = confusion_counts(preds, truth)?;
    Ok(counts.accuracy())
}

/// Micro F1 at the given threshold; a convenience used by training
/// summaries.
pub fn micro_f1(predictions: &PredictionSet, tau: f64) -> Result<f64, EvalError> {
    let preds = threshold_predictions(&predictions.probabilities, tau)?;
    let counts = confusion_counts(&preds, &predictions.truth)?;
    Ok(precision_recall_f1(&counts).2)
}

/// Metrics for one label.
#[derive(Debug, Clone, Serialize)]
pub struct LabelMetrics {
    pub label: String,
    pub kind: String,
    pub short_title: String,
    pub n_pos: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// None when the label has no positives (flagged, not scored 0).
    pub auc: Option<f64>,
}

/// One aggregate view (micro or macro).
#[derive(Debug, Clone, Serialize)]
pub struct AggregateMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

/// Min-max across labels plus the chosen aggregate, mirroring the
/// "lo-hi (agg)" reporting style.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
    pub aggregate: f64,
}

/// Full evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub n_examples: usize,
    pub per_label: Vec<LabelMetrics>,
    pub micro: AggregateMetrics,
    pub macro_avg: AggregateMetrics,
    /// Cell-wise pooled accuracy (identical to `micro.accuracy`).
    pub pooled_accuracy: f64,
    pub accuracy_range: MetricRange,
    pub precision_range: MetricRange,
    pub recall_range: MetricRange,
    pub f1_range: MetricRange,
    /// Range over labels with a defined AUC; absent when none have one.
    pub auc_range: Option<MetricRange>,
    /// Labels without positives in the truth (AUC undefined).
    pub labels_without_positives: Vec<String>,
}

fn range_of(values: impl Iterator<Item = f64> + Clone, aggregate: f64) -> MetricRange {
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    MetricRange { min, max, aggregate }
}

/// Build per-label metrics, micro/macro aggregates, ranges, and ROC
/// curves for every label with both classes present.
pub fn aggregate_report(
    predictions: &PredictionSet,
    vocab: &LabelVocabulary,
    tau: f64,
) -> Result<(MetricsReport, Vec<RocCurve>), EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    if predictions.num_labels() != vocab.len() {
        return Err(EvalError::Shape(format!(
            "prediction width {} vs vocabulary length {}",
            predictions.num_labels(),
            vocab.len()
        )));
    }

    let preds = threshold_predictions(&predictions.probabilities, tau)?;
    let per_label_counts = per_label_confusion(&preds, &predictions.truth)?;

    let n = predictions.len();
    let mut per_label = Vec::with_capacity(vocab.len());
    let mut curves = Vec::new();
    let mut labels_without_positives = Vec::new();
    for (l, entry) in vocab.entries().iter().enumerate() {
        let counts = &per_label_counts[l];
        let (precision, recall, f1) = precision_recall_f1(counts);
        let scores: Vec<f64> = (0..n).map(|r| predictions.probabilities.get(r, l)).collect();
        let truth_bits: Vec<u8> =
            (0..n).map(|r| (predictions.truth.get(r, l) != 0.0) as u8).collect();
        let auc_value = match roc_points(&scores, &truth_bits) {
            Ok(mut curve) => {
                curve.label = l;
                let area = auc(&curve);
                curves.push(curve);
                Some(area)
            }
            Err(EvalError::DegenerateRoc) => None,
            Err(e) => return Err(e),
        };
        let n_pos = counts.tp + counts.fn_;
        if n_pos == 0 {
            labels_without_positives.push(entry.column_name());
        }
        per_label.push(LabelMetrics {
            label: entry.column_name(),
            kind: entry.kind.as_str().to_string(),
            short_title: entry.short_title.clone(),
            n_pos,
            accuracy: counts.accuracy(),
            precision,
            recall,
            f1,
            auc: auc_value,
        });
    }

    // micro: pooled counts; micro AUC ranks all cells together
    let pooled = confusion_counts(&preds, &predictions.truth)?;
    let (micro_p, micro_r, micro_f1) = precision_recall_f1(&pooled);
    let all_scores: Vec<f64> = predictions.probabilities.data().to_vec();
    let all_truth: Vec<u8> =
        predictions.truth.data().iter().map(|&t| (t != 0.0) as u8).collect();
    let micro_auc = match roc_points(&all_scores, &all_truth) {
        Ok(curve) => Some(auc(&curve)),
        Err(EvalError::DegenerateRoc) => None,
        Err(e) => return Err(e),
    };
    let micro = AggregateMetrics {
        accuracy: pooled.accuracy(),
        precision: micro_p,
        recall: micro_r,
        f1: micro_f1,
        auc: micro_auc,
    };

    // macro: unweighted mean of per-label values; AUC over defined labels
    let l = per_label.len() as f64;
    let mean = |f: fn(&LabelMetrics) -> f64| per_label.iter().map(f).sum::<f64>() / l;
    let defined_aucs: Vec<f64> = per_label.iter().filter_map(|m| m.auc).collect();
    let macro_auc = if defined_aucs.is_empty() {
        None
    } else {
        Some(defined_aucs.iter().sum::<f64>() / defined_aucs.len() as f64)
    };
    let macro_avg = AggregateMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        auc: macro_auc,
    };

    let report = MetricsReport {
        threshold: tau,
        n_examples: n,
        accuracy_range: range_of(per_label.iter().map(|m| m.accuracy), pooled.accuracy()),
        precision_range: range_of(per_label.iter().map(|m| m.precision), macro_avg.precision),
        recall_range: range_of(per_label.iter().map(|m| m.recall), macro_avg.recall),
        f1_range: range_of(per_label.iter().map(|m| m.f1), macro_avg.f1),
        auc_range: macro_auc.map(|agg| {
            range_of(defined_aucs.iter().copied(), agg)
        }),
        pooled_accuracy: pooled.accuracy(),
        labels_without_positives,
        per_label,
        micro,
        macro_avg,
    };
    Ok((report, curves))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CodeKind;
    use crate::labels::LabelEntry;
    use rand::Rng;

    fn bits(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn threshold_uses_greater_or_equal() {
        let probs = bits(&[vec![0.5, 0.4999, 0.9]]);
        let out = threshold_predictions(&probs, 0.5).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn high_threshold_zeroes_everything() {
        let probs = bits(&[vec![0.9, 0.85], vec![0.2, 0.88]]);
        let out = threshold_predictions(&probs, 0.999).unwrap();
        assert!(out.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn threshold_matches_elementwise_oracle() {
        let mut rng = crate::rng::seeded_rng(4, "eval.threshold");
        let data: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let probs = Matrix::from_vec(20, 10, data.clone());
        let tau = 0.37;
        let out = threshold_predictions(&probs, tau).unwrap();
        for (o, p) in out.data().iter().zip(&data) {
            assert_eq!(*o != 0.0, *p >= tau);
        }
    }

    #[test]
    fn threshold_rejects_degenerate_tau() {
        let probs = bits(&[vec![0.5]]);
        assert!(threshold_predictions(&probs, 0.0).is_err());
        assert!(threshold_predictions(&probs, 1.0).is_err());
    }

    #[test]
    fn confusion_hand_count() {
        let preds = bits(&[vec![1.0, 0.0, 1.0]]);
        let truth = bits(&[vec![1.0, 1.0, 0.0]]);
        let c = confusion_counts(&preds, &truth).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 });
    }

    #[test]
    fn perfect_predictions_have_no_errors() {
        let m = bits(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = confusion_counts(&m, &m).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn pooled_counts_are_sum_of_per_label() {
        let preds = bits(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]);
        let truth = bits(&[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]);
        let pooled = confusion_counts(&preds, &truth).unwrap();
        let mut summed = ConfusionCounts::default();
        for c in per_label_confusion(&preds, &truth).unwrap() {
            summed.add(&c);
        }
        assert_eq!(pooled, summed);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = bits(&[vec![1.0, 0.0]]);
        let b = bits(&[vec![1.0, 0.0, 1.0]]);
        assert!(confusion_counts(&a, &b).is_err());
    }

    #[test]
    fn prf1_hand_values() {
        let c = ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 };
        assert_eq!(precision_recall_f1(&c), (0.5, 0.5, 0.5));

        let perfect = ConfusionCounts { tp: 5, fp: 0, tn: 5, fn_: 0 };
        assert_eq!(precision_recall_f1(&perfect), (1.0, 1.0, 1.0));

        let nothing_predicted = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 5 };
        assert_eq!(precision_recall_f1(&nothing_predicted), (0.0, 0.0, 0.0));
    }

    #[test]
    fn accuracy_counts_cells() {
        let a = bits(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(multilabel_accuracy(&a, &a).unwrap(), 1.0);

        let b = bits(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(multilabel_accuracy(&a, &b).unwrap(), 0.75);

        let complement = bits(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(multilabel_accuracy(&a, &complement).unwrap(), 0.0);
    }

    fn vocab(n: usize) -> LabelVocabulary {
        let entries: Vec<LabelEntry> = (0..n)
            .map(|i| LabelEntry {
                code: format!("{i:03}.0"),
                kind: if i % 2 == 0 { CodeKind::Diagnosis } else { CodeKind::Procedure },
                short_title: format!("Label {i}"),
            })
            .collect();
        LabelVocabulary::from_entries(entries, n / 2)
    }

    #[test]
    fn single_label_report_reduces_to_scalar_ops() {
        let predictions = PredictionSet {
            probabilities: bits(&[vec![0.9], vec![0.4], vec![0.8], vec![0.2]]),
            truth: bits(&[vec![1.0], vec![0.0], vec![0.0], vec![0.0]]),
            admission_ids: vec![1, 2, 3, 4],
        };
        let (report, curves) = aggregate_report(&predictions, &vocab(1), 0.5).unwrap();
        let m = &report.per_label[0];
        // preds [1,0,1,0]: tp=1 fp=1 tn=2 fn=0
        assert_eq!(m.n_pos, 1);
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(curves.len(), 1);
        assert_eq!(report.micro.f1, report.per_label[0].f1);
        assert_eq!(report.pooled_accuracy, report.micro.accuracy);
    }

    #[test]
    fn label_without_positives_is_flagged_not_scored() {
        let predictions = PredictionSet {
            probabilities: bits(&[vec![0.9, 0.1], vec![0.2, 0.3]]),
            truth: bits(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            admission_ids: vec![1, 2],
        };
        let (report, curves) = aggregate_report(&predictions, &vocab(2), 0.5).unwrap();
        assert_eq!(report.per_label[1].auc, None);
        assert_eq!(report.labels_without_positives, vec!["procedure_001.0"]);
        // only the defined label contributes a curve and the macro AUC
        assert_eq!(curves.len(), 1);
        assert_eq!(report.macro_avg.auc, report.per_label[0].auc);
    }

    #[test]
    fn macro_f1_is_mean_and_ranges_bracket() {
        let predictions = PredictionSet {
            probabilities: bits(&[
                vec![0.9, 0.2, 0.7, 0.6],
                vec![0.1, 0.8, 0.4, 0.3],
                vec![0.7, 0.7, 0.2, 0.9],
                vec![0.3, 0.1, 0.6, 0.8],
            ]),
            truth: bits(&[
                vec![1.0, 0.0, 1.0, 1.0],
                vec![0.0, 1.0, 1.0, 0.0],
                vec![1.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]),
            admission_ids: vec![1, 2, 3, 4],
        };
        let (report, _) = aggregate_report(&predictions, &vocab(4), 0.5).unwrap();
        let mean_f1: f64 =
            report.per_label.iter().map(|m| m.f1).sum::<f64>() / report.per_label.len() as f64;
        assert!((report.macro_avg.f1 - mean_f1).abs() < 1e-12);
        assert!(report.f1_range.min <= report.micro.f1 && report.micro.f1 <= report.f1_range.max);
        assert!(report.f1_range.min <= report.macro_avg.f1);
        assert!(report.macro_avg.f1 <= report.f1_range.max);
    }

    #[test]
    fn empty_predictions_rejected() {
        let predictions = PredictionSet {
            probabilities: Matrix::zeros(0, 2),
            truth: Matrix::zeros(0, 2),
            admission_ids: vec![],
        };
        assert!(matches!(aggregate_report(&predictions, &vocab(2), 0.5), Err(EvalError::Empty)));
    }

    #[test]
    fn vocabulary_width_must_match() {
        let predictions = PredictionSet {
            probabilities: bits(&[vec![0.5, 0.5]]),
            truth: bits(&[vec![1.0, 0.0]]),
            admission_ids: vec![1],
        };
        assert!(matches!(
            aggregate_report(&predictions, &vocab(3), 0.5),
            Err(EvalError::Shape(_))
        ));
    }
}
