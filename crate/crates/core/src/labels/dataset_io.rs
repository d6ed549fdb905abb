//! Prepared-dataset file formats.
//!
//! The prepared dataset is one CSV with columns `admission_id`, `text`,
//! then 2K label columns named `<kind>_<code>` holding 0/1. A sidecar
//! plain-text label file lists the label column names, one per line; a
//! companion vocabulary CSV (`code,kind,short_title`) preserves the short
//! titles for reports.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::ingest::CodeKind;

use super::{EdaRow, LabelEntry, LabelError, LabelVocabulary, LabeledNote};

fn io_err(path: &Path, source: std::io::Error) -> LabelError {
    LabelError::Io { path: path.to_path_buf(), source }
}

/// Write labeled rows as the prepared dataset CSV.
pub fn write_prepared_csv(
    rows: &[LabeledNote],
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<(), LabelError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);

    let mut header = vec!["admission_id".to_string(), "text".to_string()];
    header.extend(vocab.column_names());
    w.write_record(&header)?;

    for row in rows {
        debug_assert_eq!(row.labels.len(), vocab.len());
        let mut record = Vec::with_capacity(2 + row.labels.len());
        record.push(row.admission_id.to_string());
        record.push(row.text.clone());
        record.extend(row.labels.iter().map(|b| b.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read a prepared dataset CSV back. Returns the rows and the label column
/// names in file order.
pub fn read_prepared_csv(
    path: impl AsRef<Path>,
) -> Result<(Vec<LabeledNote>, Vec<String>), LabelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::Reader::from_reader(file);

    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "admission_id" || &headers[1] != "text" {
        return Err(LabelError::Schema(format!(
            "{}: expected header starting with admission_id,text",
            path.display()
        )));
    }
    let label_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();

    let mut rows = Vec::new();
    for record in reader.into_records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let admission_id = record
            .get(0)
            .unwrap_or("")
            .parse::<u64>()
            .map_err(|_| LabelError::Schema(format!("line {line}: bad admission_id")))?;
        let text = record.get(1).unwrap_or("").to_string();
        let mut labels = Vec::with_capacity(label_names.len());
        for i in 0..label_names.len() {
            match record.get(2 + i) {
                Some("0") => labels.push(0),
                Some("1") => labels.push(1),
                other => {
                    return Err(LabelError::Schema(format!(
                        "line {line}: label cell must be 0 or 1, got {other:?}"
                    )))
                }
            }
        }
        rows.push(LabeledNote { admission_id, text, labels });
    }
    Ok((rows, label_names))
}

/// Write the sidecar label list, one label column name per line.
pub fn write_label_file(
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<(), LabelError> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    for name in vocab.column_names() {
        writeln!(file, "{name}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Read the sidecar label list.
pub fn read_label_file(path: impl AsRef<Path>) -> Result<Vec<String>, LabelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut names = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.is_empty() {
            names.push(line);
        }
    }
    Ok(names)
}

/// Write the vocabulary with short titles as CSV (`code,kind,short_title`).
pub fn write_label_vocabulary_csv(
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<(), LabelError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["code", "kind", "short_title"])?;
    for entry in vocab.entries() {
        w.write_record([entry.code.as_str(), entry.kind.as_str(), entry.short_title.as_str()])?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read a vocabulary CSV written by [`write_label_vocabulary_csv`].
pub fn read_label_vocabulary_csv(path: impl AsRef<Path>) -> Result<LabelVocabulary, LabelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let kind = match record.get(1) {
            Some("diagnosis") => CodeKind::Diagnosis,
            Some("procedure") => CodeKind::Procedure,
            other => {
                return Err(LabelError::Schema(format!("unknown code kind {other:?}")));
            }
        };
        entries.push(LabelEntry {
            code: record.get(0).unwrap_or("").to_string(),
            kind,
            short_title: record.get(2).unwrap_or("").to_string(),
        });
    }
    let k = entries.iter().filter(|e| e.kind == CodeKind::Diagnosis).count();
    Ok(LabelVocabulary::from_entries(entries, k))
}

/// Write the per-label EDA report as CSV, in vocabulary order.
pub fn write_eda_csv(rows: &[EdaRow], path: impl AsRef<Path>) -> Result<(), LabelError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["label", "kind", "short_title", "note_count", "mean_word_count", "no_notes"])?;
    for row in rows {
        w.write_record([
            row.label.as_str(),
            row.kind.as_str(),
            row.short_title.as_str(),
            &row.note_count.to_string(),
            &format!("{:.2}", row.mean_word_count),
            if row.no_notes { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}
