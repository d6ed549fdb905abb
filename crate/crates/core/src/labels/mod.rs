//! Label pipeline: top-K vocabulary, one-hot encoding, joining, splitting.
//!
//! The most frequent K diagnosis codes and K procedure codes form a label
//! vocabulary of width 2K (diagnoses first). Admissions are one-hot
//! encoded against it; admissions carrying none of the vocabulary codes
//! are excluded (inner-join semantics), and every note of a surviving
//! admission inherits the admission's full label vector.
//!
//! Code frequency counts DISTINCT admissions, not raw rows, since the
//! source tables can repeat a code within one admission. Ties are broken
//! by ascending lexicographic code so ranking is deterministic.

mod dataset_io;

pub use dataset_io::{
    read_label_file, read_label_vocabulary_csv, read_prepared_csv, write_eda_csv,
    write_label_file, write_label_vocabulary_csv, write_prepared_csv,
};

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::ingest::{CodeDescriptor, CodeKind, CodeRecord, NoteEvent};
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("total admission count must be positive")]
    ZeroTotalAdmissions,
    #[error("labeled admissions ({labeled}) exceed total admissions ({total})")]
    LabeledExceedsTotal { labeled: u64, total: u64 },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("{0}")]
    Schema(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One label: a code of a kind plus its human-readable short title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub code: String,
    pub kind: CodeKind,
    pub short_title: String,
}

impl LabelEntry {
    /// Stable column name used in the prepared dataset and the label file.
    pub fn column_name(&self) -> String {
        format!("{}_{}", self.kind.as_str(), self.code)
    }
}

/// Ordered top-K diagnosis codes followed by top-K procedure codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    entries: Vec<LabelEntry>,
    k: usize,
}

impl LabelVocabulary {
    pub fn from_entries(entries: Vec<LabelEntry>, k: usize) -> Self {
        Self { entries, k }
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// K per kind as requested; the actual length can be shorter when the
    /// data has fewer distinct codes.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column_names(&self) -> Vec<String> {
        self.entries.iter().map(LabelEntry::column_name).collect()
    }

    pub fn position(&self, code: &str, kind: CodeKind) -> Option<usize> {
        self.entries.iter().position(|e| e.kind == kind && e.code == code)
    }
}

/// One note joined with its admission's label vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledNote {
    pub admission_id: u64,
    pub text: String,
    /// Bit vector aligned to the label vocabulary order.
    pub labels: Vec<u8>,
}

/// Deterministic train/test partition of the labeled rows.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledNote>,
    pub test: Vec<LabeledNote>,
    pub seed: u64,
    pub ratio: f64,
}

/// Rank codes of `kind` by the number of distinct admissions carrying them.
///
/// Returns the top `k` codes in descending frequency, ties broken by
/// ascending lexicographic code. Fewer than `k` distinct codes returns all
/// of them; an empty stream returns an empty list.
pub fn rank_codes_by_frequency(
    records: impl IntoIterator<Item = CodeRecord>,
    k: usize,
    kind: CodeKind,
) -> Vec<String> {
    assert!(k >= 1, "k must be at least 1");
    let mut admissions_per_code: HashMap<String, HashSet<u64>> = HashMap::new();
    for record in records {
        if record.kind == kind {
            admissions_per_code.entry(record.code).or_default().insert(record.admission_id);
        }
    }
    let mut ranked: Vec<(String, usize)> =
        admissions_per_code.into_iter().map(|(code, ids)| (code, ids.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(code, _)| code).collect()
}

/// Build the 2K-wide label vocabulary: top-K diagnoses then top-K
/// procedures, each annotated with its descriptor short title (falling
/// back to the code itself when no descriptor exists).
pub fn build_label_vocabulary(
    diag_records: impl IntoIterator<Item = CodeRecord>,
    proc_records: impl IntoIterator<Item = CodeRecord>,
    k: usize,
    descriptors: &[CodeDescriptor],
) -> LabelVocabulary {
    let title_of: HashMap<(&str, CodeKind), &str> = descriptors
        .iter()
        .map(|d| ((d.code.as_str(), d.kind), d.short_title.as_str()))
        .collect();
    let mut entries = Vec::with_capacity(2 * k);
    for (records, kind) in [
        (rank_codes_by_frequency(diag_records, k, CodeKind::Diagnosis), CodeKind::Diagnosis),
        (rank_codes_by_frequency(proc_records, k, CodeKind::Procedure), CodeKind::Procedure),
    ] {
        for code in records {
            let short_title = title_of
                .get(&(code.as_str(), kind))
                .map(|t| t.to_string())
                .unwrap_or_else(|| code.clone());
            entries.push(LabelEntry { code, kind, short_title });
        }
    }
    LabelVocabulary::from_entries(entries, k)
}

/// One-hot encode admissions against the vocabulary.
///
/// Bit i is set iff the admission has at least one record matching
/// vocabulary entry i. Admissions whose vector would be all-zero are
/// excluded from the map entirely (inner-join semantics).
pub fn one_hot_encode_admissions(
    records: impl IntoIterator<Item = CodeRecord>,
    vocab: &LabelVocabulary,
) -> HashMap<u64, Vec<u8>> {
    assert!(!vocab.is_empty(), "label vocabulary must be non-empty");
    let index: HashMap<(&str, CodeKind), usize> = vocab
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.code.as_str(), e.kind), i))
        .collect();
    let mut map: HashMap<u64, Vec<u8>> = HashMap::new();
    for record in records {
        if let Some(&i) = index.get(&(record.code.as_str(), record.kind)) {
            map.entry(record.admission_id).or_insert_with(|| vec![0u8; vocab.len()])[i] = 1;
        }
    }
    map
}

/// Inner-join notes with the one-hot label map.
///
/// Yields one [`LabeledNote`] per note whose admission is in the map, in
/// note order; every note of an admission inherits the admission's full
/// label vector. Notes of unlabeled admissions are dropped.
pub fn join_notes_with_labels(
    notes: impl IntoIterator<Item = NoteEvent>,
    label_map: &HashMap<u64, Vec<u8>>,
) -> Vec<LabeledNote> {
    notes
        .into_iter()
        .filter_map(|note| {
            label_map.get(&note.admission_id).map(|labels| LabeledNote {
                admission_id: note.admission_id,
                text: note.text,
                labels: labels.clone(),
            })
        })
        .collect()
}

/// Percentage of admissions covered by the label vocabulary, rounded
/// half-up to two decimals.
pub fn coverage_fraction(n_labeled: u64, n_total: u64) -> Result<f64, LabelError> {
    if n_total == 0 {
        return Err(LabelError::ZeroTotalAdmissions);
    }
    if n_labeled > n_total {
        return Err(LabelError::LabeledExceedsTotal { labeled: n_labeled, total: n_total });
    }
    let raw = 100.0 * n_labeled as f64 / n_total as f64;
    Ok((raw * 100.0 + 0.5).floor() / 100.0)
}

/// Deterministically split rows into train and test.
///
/// The shuffle is a seeded Fisher-Yates; `|train| = floor(ratio * n)`.
/// With `group_by_admission` no admission spans both sides: whole
/// admissions are assigned to train, in shuffled order, until the train
/// side has reached its target row count (the achieved ratio is then
/// approximate).
pub fn split_train_test(
    rows: Vec<LabeledNote>,
    ratio: f64,
    seed: u64,
    group_by_admission: bool,
) -> Result<DatasetSplit, LabelError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(LabelError::InvalidRatio(ratio));
    }
    let n = rows.len();
    let target = (ratio * n as f64).floor() as usize;
    let mut rng = seeded_rng(seed, "labels.split");

    let (train, test) = if group_by_admission {
        let mut admission_order: Vec<u64> = Vec::new();
        let mut seen = HashSet::new();
        for row in &rows {
            if seen.insert(row.admission_id) {
                admission_order.push(row.admission_id);
            }
        }
        fisher_yates(&mut admission_order, &mut rng);
        let mut rows_of: HashMap<u64, Vec<LabeledNote>> = HashMap::new();
        for row in rows {
            rows_of.entry(row.admission_id).or_default().push(row);
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for admission in admission_order {
            let batch = rows_of.remove(&admission).unwrap_or_default();
            if train.len() < target {
                train.extend(batch);
            } else {
                test.extend(batch);
            }
        }
        (train, test)
    } else {
        let mut rows = rows;
        fisher_yates(&mut rows, &mut rng);
        let test = rows.split_off(target);
        (rows, test)
    };

    Ok(DatasetSplit { train, test, seed, ratio })
}

fn fisher_yates<T>(items: &mut [T], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Per-label dataset statistics: note count and mean whitespace-token
/// word count over the notes carrying that label.
#[derive(Debug, Clone, PartialEq)]
pub struct EdaRow {
    pub label: String,
    pub kind: CodeKind,
    pub short_title: String,
    pub note_count: u64,
    pub mean_word_count: f64,
    /// Set when no note carries the label; the mean is reported as 0.
    pub no_notes: bool,
}

/// Compute per-label note counts and mean word counts, in vocabulary order.
pub fn eda_report(rows: &[LabeledNote], vocab: &LabelVocabulary) -> Vec<EdaRow> {
    let mut counts = vec![0u64; vocab.len()];
    let mut word_totals = vec![0u64; vocab.len()];
    for row in rows {
        let words = row.text.split_whitespace().count() as u64;
        for (i, &bit) in row.labels.iter().enumerate() {
            if bit != 0 {
                counts[i] += 1;
                word_totals[i] += words;
            }
        }
    }
    vocab
        .entries()
        .iter()
        .enumerate()
        .map(|(i, entry)| EdaRow {
            label: entry.column_name(),
            kind: entry.kind,
            short_title: entry.short_title.clone(),
            note_count: counts[i],
            mean_word_count: if counts[i] == 0 {
                0.0
            } else {
                word_totals[i] as f64 / counts[i] as f64
            },
            no_notes: counts[i] == 0,
        })
        .collect()
}
