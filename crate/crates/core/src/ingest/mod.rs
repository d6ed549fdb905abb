//! Streaming loaders for MIMIC-shaped CSV tables.
//!
//! Notes, diagnosis codes, procedure codes, and code descriptors are read
//! from RFC-4180 CSV files with a header row. Column names are configurable
//! and default to the MIMIC-III V1.4 headers. Loaders are single-consumer
//! streams; ingest is lossless (no text rewriting happens here).
//!
//! Two parse modes exist. In strict mode (the default) any malformed record
//! is a fatal error carrying its line number. Under the lenient flag
//! malformed records are skipped and counted instead. Rows with a null
//! admission ID are skipped and counted in both modes, since they cannot be
//! joined to anything downstream.

mod synthetic;

pub use synthetic::{
    build_synthetic_corpus, generate_synthetic_corpus, write_descriptor_tables,
    write_fixture_vocabulary, SyntheticConfig, SyntheticCorpus, SyntheticFiles,
    FIXTURE_VOCAB_SIZE,
};

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// One clinical-note row keyed by admission ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteEvent {
    pub admission_id: u64,
    pub subject_id: u64,
    pub category: String,
    pub text: String,
}

/// Whether a code labels a diagnosis or a procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

impl CodeKind {
    /// Stable lowercase name used in label columns and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::Diagnosis => "diagnosis",
            CodeKind::Procedure => "procedure",
        }
    }
}

impl std::fmt::Display for CodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One coded diagnosis or procedure attached to an admission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeRecord {
    pub admission_id: u64,
    pub code: String,
    pub kind: CodeKind,
    /// Coding order within the admission (1-based).
    pub seq_num: u32,
}

/// Human-readable descriptor for a code, e.g. "Venous cath NEC".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeDescriptor {
    pub code: String,
    pub kind: CodeKind,
    pub short_title: String,
}

/// Errors raised while loading CSV tables.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { column: String, path: PathBuf },
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
}

/// Column names for the note-events table. Defaults match MIMIC-III V1.4.
#[derive(Debug, Clone)]
pub struct NoteColumns {
    pub admission_id: String,
    pub subject_id: String,
    pub category: String,
    pub text: String,
}

impl Default for NoteColumns {
    fn default() -> Self {
        Self {
            admission_id: "HADM_ID".into(),
            subject_id: "SUBJECT_ID".into(),
            category: "CATEGORY".into(),
            text: "TEXT".into(),
        }
    }
}

/// Column names for the code tables. Defaults match MIMIC-III V1.4.
#[derive(Debug, Clone)]
pub struct CodeColumns {
    pub admission_id: String,
    pub code: String,
    pub seq_num: String,
}

impl Default for CodeColumns {
    fn default() -> Self {
        Self {
            admission_id: "HADM_ID".into(),
            code: "ICD9_CODE".into(),
            seq_num: "SEQ_NUM".into(),
        }
    }
}

/// Loader behaviour shared by all readers.
#[derive(Debug, Clone, Default)]
pub struct LoaderOptions {
    /// Skip-and-count malformed records instead of failing.
    pub lenient: bool,
    /// Stop after yielding this many records.
    pub limit: Option<usize>,
    /// When non-empty, only note categories in this set pass through
    /// (matched after trimming, case-insensitively).
    pub categories: Vec<String>,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn column_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &Path,
) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn {
            column: name.to_string(),
            path: path.to_path_buf(),
        })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Outcome of validating one raw row.
enum RowOutcome<T> {
    Keep(T),
    /// Null admission ID: skipped and counted in both modes.
    NullAdmission,
    /// Anything else invalid: fatal in strict mode, skip-and-count in lenient.
    Malformed(String),
}

fn parse_positive_u64(field: &str) -> Result<u64, String> {
    let trimmed = field.trim();
    let value: u64 = trimmed
        .parse()
        .map_err(|_| format!("expected a positive integer, got {trimmed:?}"))?;
    if value == 0 {
        return Err("expected a positive integer, got 0".into());
    }
    Ok(value)
}

/// Streaming reader over a note-events table.
///
/// Implements [`Iterator`] with `Result<NoteEvent, IngestError>` items;
/// consume with `by_ref()` to keep access to the skip counters afterwards.
pub struct NoteEventReader {
    rows: csv::StringRecordsIntoIter<File>,
    admission_idx: usize,
    subject_idx: usize,
    category_idx: usize,
    text_idx: usize,
    opts: LoaderOptions,
    skipped: u64,
    filtered: u64,
    yielded: usize,
}

/// Open a note-events CSV for streaming.
pub fn load_note_events(
    path: impl AsRef<Path>,
    columns: &NoteColumns,
    opts: LoaderOptions,
) -> Result<NoteEventReader, IngestError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    Ok(NoteEventReader {
        admission_idx: column_index(&headers, &columns.admission_id, path)?,
        subject_idx: column_index(&headers, &columns.subject_id, path)?,
        category_idx: column_index(&headers, &columns.category, path)?,
        text_idx: column_index(&headers, &columns.text, path)?,
        rows: reader.into_records(),
        opts,
        skipped: 0,
        filtered: 0,
        yielded: 0,
    })
}

impl NoteEventReader {
    /// Rows skipped so far (null admission IDs, plus malformed rows under
    /// the lenient flag).
    pub fn skipped_rows(&self) -> u64 {
        self.skipped
    }

    /// Rows dropped so far by the category filter.
    pub fn filtered_rows(&self) -> u64 {
        self.filtered
    }

    fn validate(&self, record: &csv::StringRecord) -> RowOutcome<NoteEvent> {
        let admission_field = record.get(self.admission_idx).unwrap_or("");
        if admission_field.trim().is_empty() {
            return RowOutcome::NullAdmission;
        }
        let admission_id = match parse_positive_u64(admission_field) {
            Ok(v) => v,
            Err(e) => return RowOutcome::Malformed(format!("admission id: {e}")),
        };
        let subject_id = match parse_positive_u64(record.get(self.subject_idx).unwrap_or("")) {
            Ok(v) => v,
            Err(e) => return RowOutcome::Malformed(format!("subject id: {e}")),
        };
        let text = record.get(self.text_idx).unwrap_or("");
        if text.trim().is_empty() {
            return RowOutcome::Malformed("note text is empty".into());
        }
        RowOutcome::Keep(NoteEvent {
            admission_id,
            subject_id,
            category: record.get(self.category_idx).unwrap_or("").trim().to_string(),
            text: text.to_string(),
        })
    }
}

impl Iterator for NoteEventReader {
    type Item = Result<NoteEvent, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(limit) = self.opts.limit {
                if self.yielded >= limit {
                    return None;
                }
            }
            let record = match self.rows.next()? {
                Ok(r) => r,
                Err(e) => {
                    if self.opts.lenient {
                        self.skipped += 1;
                        continue;
                    }
                    return Some(Err(e.into()));
                }
            };
            match self.validate(&record) {
                RowOutcome::Keep(event) => {
                    if !self.opts.categories.is_empty()
                        && !self
                            .opts
                            .categories
                            .iter()
                            .any(|c| c.eq_ignore_ascii_case(&event.category))
                    {
                        self.filtered += 1;
                        continue;
                    }
                    self.yielded += 1;
                    return Some(Ok(event));
                }
                RowOutcome::NullAdmission => {
                    self.skipped += 1;
                }
                RowOutcome::Malformed(message) => {
                    if self.opts.lenient {
                        self.skipped += 1;
                    } else {
                        return Some(Err(IngestError::Record {
                            line: record_line(&record),
                            message,
                        }));
                    }
                }
            }
        }
    }
}

/// Streaming reader over a diagnosis or procedure code table.
pub struct CodeRecordReader {
    rows: csv::StringRecordsIntoIter<File>,
    admission_idx: usize,
    code_idx: usize,
    seq_idx: usize,
    kind: CodeKind,
    opts: LoaderOptions,
    skipped: u64,
    yielded: usize,
}

/// Open a code CSV for streaming; every record is tagged with `kind`.
///
/// Duplicate (admission, code) rows pass through unmodified; deduplication
/// is the label pipeline's job.
pub fn load_code_records(
    path: impl AsRef<Path>,
    kind: CodeKind,
    columns: &CodeColumns,
    opts: LoaderOptions,
) -> Result<CodeRecordReader, IngestError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    Ok(CodeRecordReader {
        admission_idx: column_index(&headers, &columns.admission_id, path)?,
        code_idx: column_index(&headers, &columns.code, path)?,
        seq_idx: column_index(&headers, &columns.seq_num, path)?,
        rows: reader.into_records(),
        kind,
        opts,
        skipped: 0,
        yielded: 0,
    })
}

impl CodeRecordReader {
    pub fn skipped_rows(&self) -> u64 {
        self.skipped
    }

    fn validate(&self, record: &csv::StringRecord) -> RowOutcome<CodeRecord> {
        let admission_field = record.get(self.admission_idx).unwrap_or("");
        if admission_field.trim().is_empty() {
            return RowOutcome::NullAdmission;
        }
        let admission_id = match parse_positive_u64(admission_field) {
            Ok(v) => v,
            Err(e) => return RowOutcome::Malformed(format!("admission id: {e}")),
        };
        let code = record.get(self.code_idx).unwrap_or("").trim();
        if code.is_empty() {
            return RowOutcome::Malformed("code is empty".into());
        }
        let seq_num = match record.get(self.seq_idx).unwrap_or("").trim().parse::<u32>() {
            Ok(v) if v > 0 => v,
            _ => return RowOutcome::Malformed("sequence number is not a positive integer".into()),
        };
        RowOutcome::Keep(CodeRecord {
            admission_id,
            code: code.to_string(),
            kind: self.kind,
            seq_num,
        })
    }
}

impl Iterator for CodeRecordReader {
    type Item = Result<CodeRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(limit) = self.opts.limit {
                if self.yielded >= limit {
                    return None;
                }
            }
            let record = match self.rows.next()? {
                Ok(r) => r,
                Err(e) => {
                    if self.opts.lenient {
                        self.skipped += 1;
                        continue;
                    }
                    return Some(Err(e.into()));
                }
            };
            match self.validate(&record) {
                RowOutcome::Keep(code) => {
                    self.yielded += 1;
                    return Some(Ok(code));
                }
                RowOutcome::NullAdmission => self.skipped += 1,
                RowOutcome::Malformed(message) => {
                    if self.opts.lenient {
                        self.skipped += 1;
                    } else {
                        return Some(Err(IngestError::Record {
                            line: record_line(&record),
                            message,
                        }));
                    }
                }
            }
        }
    }
}

/// Load a descriptor table (code to short title) for the given kind.
///
/// Expects columns `ICD9_CODE` and `SHORT_TITLE`. Descriptor tables are
/// small, so this returns a vector rather than a stream. Duplicate
/// (code, kind) entries are an error.
pub fn load_code_descriptors(
    path: impl AsRef<Path>,
    kind: CodeKind,
) -> Result<Vec<CodeDescriptor>, IngestError> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let code_idx = column_index(&headers, "ICD9_CODE", path)?;
    let title_idx = column_index(&headers, "SHORT_TITLE", path)?;

    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for record in reader.into_records() {
        let record = record?;
        let code = record.get(code_idx).unwrap_or("").trim().to_string();
        if code.is_empty() {
            return Err(IngestError::Record {
                line: record_line(&record),
                message: "descriptor code is empty".into(),
            });
        }
        if !seen.insert(code.clone()) {
            return Err(IngestError::Record {
                line: record_line(&record),
                message: format!("duplicate descriptor for code {code:?}"),
            });
        }
        out.push(CodeDescriptor {
            code,
            kind,
            short_title: record.get(title_idx).unwrap_or("").trim().to_string(),
        });
    }
    Ok(out)
}
