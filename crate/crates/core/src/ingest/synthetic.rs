//! Deterministic synthetic corpus generator.
//!
//! Stands in for the credentialed clinical tables: emits NOTEEVENTS-,
//! DIAGNOSES_ICD- and PROCEDURES_ICD-shaped CSV files whose code
//! frequencies follow a Zipf-like distribution, so top-K extraction is
//! meaningful. Every note embeds one keyword per code carried by its
//! admission, which makes the code-from-text mapping genuinely learnable.
//! Output is a pure function of the arguments: same seed, same bytes.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{CodeDescriptor, CodeKind, CodeRecord, IngestError, NoteEvent};
use crate::rng::seeded_rng;

/// Size of the vocabulary file emitted by [`write_fixture_vocabulary`].
pub const FIXTURE_VOCAB_SIZE: usize = 200;

/// Arguments for corpus generation.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_admissions: usize,
    /// Number of distinct codes per kind (diagnoses and procedures each).
    pub n_codes: usize,
    /// Zipf exponent for code popularity; larger means steeper.
    pub zipf_exponent: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { seed: 7, n_admissions: 200, n_codes: 30, zipf_exponent: 1.1 }
    }
}

/// The generated corpus, in memory.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub notes: Vec<NoteEvent>,
    pub diagnoses: Vec<CodeRecord>,
    pub procedures: Vec<CodeRecord>,
    pub diagnosis_descriptors: Vec<CodeDescriptor>,
    pub procedure_descriptors: Vec<CodeDescriptor>,
}

/// Paths of the three corpus files written by [`generate_synthetic_corpus`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub notes: PathBuf,
    pub diagnoses: PathBuf,
    pub procedures: PathBuf,
}

const ROOTS: [&str; 10] = [
    "cardio", "neuro", "pulmo", "nephro", "hepato", "gastro", "dermo", "osteo", "angio", "septo",
];
const DIAG_SUFFIXES: [&str; 6] = ["sis", "itis", "pathy", "emia", "oma", "algia"];
const PROC_SUFFIXES: [&str; 6] = ["ectomy", "oplasty", "ogram", "oscopy", "otomy", "plication"];

const FILLER_WORDS: [&str; 50] = [
    "patient", "stable", "admitted", "history", "exam", "plan", "continue", "monitor", "daily",
    "labs", "noted", "improved", "without", "acute", "distress", "chest", "clear", "abdomen",
    "soft", "alert", "oriented", "medications", "reviewed", "discharge", "follow", "up", "with",
    "the", "and", "was", "on", "for", "of", "to", "in", "no", "left", "right", "mild", "severe",
    "chronic", "status", "post", "tolerated", "well", "vital", "signs", "within", "normal",
    "limits",
];

const PUNCT_TOKENS: [&str; 10] = [".", ",", ":", ";", "-", "(", ")", "/", "?", "%"];

const CATEGORIES: [&str; 3] = ["Discharge summary", "Nursing", "Radiology"];

const DEID_SPANS: [&str; 4] = [
    "[**2101-10-4**]",
    "[**Hospital Ward 3**]",
    "[**First Name (Titles) 12**]",
    "[**2102-1-15**]",
];

/// Keyword embedded in note text for the i-th code of a kind.
///
/// The first `ROOTS.len() * SUFFIXES.len()` keywords are root+suffix
/// compounds; beyond that an index is appended to keep them unique.
pub fn code_keyword(kind: CodeKind, index: usize) -> String {
    let suffixes: &[&str] = match kind {
        CodeKind::Diagnosis => &DIAG_SUFFIXES,
        CodeKind::Procedure => &PROC_SUFFIXES,
    };
    let base = format!("{}{}", ROOTS[index % ROOTS.len()], suffixes[(index / ROOTS.len()) % suffixes.len()]);
    if index < ROOTS.len() * suffixes.len() {
        base
    } else {
        format!("{base}{index}")
    }
}

/// ICD-9-styled code string for the i-th code of a kind.
pub fn code_string(kind: CodeKind, index: usize) -> String {
    match kind {
        CodeKind::Diagnosis => format!("{:03}.{}", 100 + index, index % 10),
        CodeKind::Procedure => format!("{:02}.{:02}", 10 + index / 100, index % 100),
    }
}

fn short_title(kind: CodeKind, index: usize) -> String {
    let kw = code_keyword(kind, index);
    let mut chars = kw.chars();
    let capitalized = match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => kw.clone(),
    };
    match kind {
        CodeKind::Diagnosis => format!("{capitalized} NOS"),
        CodeKind::Procedure => format!("{capitalized} NEC"),
    }
}

/// Sample a code rank from a Zipf-like distribution over `n` ranks.
fn sample_zipf(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("non-empty cumulative table");
    let u: f64 = rng.random_range(0.0..total);
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn zipf_cumulative(n: usize, exponent: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..n)
        .map(|rank| {
            acc += 1.0 / ((rank + 1) as f64).powf(exponent);
            acc
        })
        .collect()
}

fn sample_distinct_codes(
    rng: &mut ChaCha8Rng,
    cumulative: &[f64],
    want: usize,
) -> Vec<usize> {
    let mut picked = BTreeSet::new();
    // bounded tries keep generation deterministic even for tiny code sets
    for _ in 0..want * 8 {
        if picked.len() == want {
            break;
        }
        picked.insert(sample_zipf(rng, cumulative));
    }
    picked.into_iter().collect()
}

fn build_note_text(
    rng: &mut ChaCha8Rng,
    diag_keywords: &[String],
    proc_keywords: &[String],
) -> String {
    let mut text = String::new();
    text.push_str("Admission note: patient presents with ");
    text.push_str(&diag_keywords.join(", "));
    text.push_str(". Procedures performed: ");
    text.push_str(&proc_keywords.join(", "));
    text.push('.');

    let n_sentences = rng.random_range(3..=8);
    for _ in 0..n_sentences {
        text.push('\n');
        if rng.random_range(0..10) < 2 {
            text.push_str(DEID_SPANS[rng.random_range(0..DEID_SPANS.len())]);
            text.push(' ');
        }
        let n_words = rng.random_range(5..=12);
        for w in 0..n_words {
            if w > 0 {
                text.push(' ');
            }
            text.push_str(FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())]);
        }
        text.push('.');
    }
    // restate the findings so keywords also appear late in the note
    text.push_str("\nImpression: ");
    text.push_str(&diag_keywords.join(" "));
    text.push(' ');
    text.push_str(&proc_keywords.join(" "));
    text.push('.');
    text
}

/// Build the corpus in memory. Deterministic given the config.
pub fn build_synthetic_corpus(cfg: &SyntheticConfig) -> SyntheticCorpus {
    assert!(cfg.n_admissions >= 1, "n_admissions must be at least 1");
    assert!(cfg.n_codes >= 1, "n_codes must be at least 1");

    let mut rng = seeded_rng(cfg.seed, "fixture.corpus");
    let cumulative = zipf_cumulative(cfg.n_codes, cfg.zipf_exponent);

    let diag_codes: Vec<String> =
        (0..cfg.n_codes).map(|i| code_string(CodeKind::Diagnosis, i)).collect();
    let proc_codes: Vec<String> =
        (0..cfg.n_codes).map(|i| code_string(CodeKind::Procedure, i)).collect();
    let diag_keywords: Vec<String> =
        (0..cfg.n_codes).map(|i| code_keyword(CodeKind::Diagnosis, i)).collect();
    let proc_keywords: Vec<String> =
        (0..cfg.n_codes).map(|i| code_keyword(CodeKind::Procedure, i)).collect();

    let mut notes = Vec::new();
    let mut diagnoses = Vec::new();
    let mut procedures = Vec::new();

    for a in 0..cfg.n_admissions {
        let admission_id = 100_000 + a as u64;
        let subject_id = 10_000 + (a / 2) as u64;

        let n_diag = rng.random_range(1..=4.min(cfg.n_codes));
        let n_proc = rng.random_range(1..=3.min(cfg.n_codes));
        let diag_picks = sample_distinct_codes(&mut rng, &cumulative, n_diag);
        let proc_picks = sample_distinct_codes(&mut rng, &cumulative, n_proc);

        for (seq, &code_idx) in diag_picks.iter().enumerate() {
            diagnoses.push(CodeRecord {
                admission_id,
                code: diag_codes[code_idx].clone(),
                kind: CodeKind::Diagnosis,
                seq_num: (seq + 1) as u32,
            });
        }
        for (seq, &code_idx) in proc_picks.iter().enumerate() {
            procedures.push(CodeRecord {
                admission_id,
                code: proc_codes[code_idx].clone(),
                kind: CodeKind::Procedure,
                seq_num: (seq + 1) as u32,
            });
        }

        let admission_diag_kw: Vec<String> =
            diag_picks.iter().map(|&i| diag_keywords[i].clone()).collect();
        let admission_proc_kw: Vec<String> =
            proc_picks.iter().map(|&i| proc_keywords[i].clone()).collect();

        let n_notes = rng.random_range(1..=3);
        for n in 0..n_notes {
            let category = if n == 0 {
                CATEGORIES[0]
            } else {
                CATEGORIES[rng.random_range(0..CATEGORIES.len())]
            };
            notes.push(NoteEvent {
                admission_id,
                subject_id,
                category: category.to_string(),
                text: build_note_text(&mut rng, &admission_diag_kw, &admission_proc_kw),
            });
        }
    }

    let diagnosis_descriptors = (0..cfg.n_codes)
        .map(|i| CodeDescriptor {
            code: diag_codes[i].clone(),
            kind: CodeKind::Diagnosis,
            short_title: short_title(CodeKind::Diagnosis, i),
        })
        .collect();
    let procedure_descriptors = (0..cfg.n_codes)
        .map(|i| CodeDescriptor {
            code: proc_codes[i].clone(),
            kind: CodeKind::Procedure,
            short_title: short_title(CodeKind::Procedure, i),
        })
        .collect();

    SyntheticCorpus { notes, diagnoses, procedures, diagnosis_descriptors, procedure_descriptors }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn write_notes(corpus: &SyntheticCorpus, path: &Path) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["ROW_ID", "SUBJECT_ID", "HADM_ID", "CATEGORY", "TEXT"])?;
    for (row, note) in corpus.notes.iter().enumerate() {
        w.write_record([
            (row + 1).to_string(),
            note.subject_id.to_string(),
            note.admission_id.to_string(),
            note.category.clone(),
            note.text.clone(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn write_codes(records: &[CodeRecord], path: &Path) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"])?;
    for (row, rec) in records.iter().enumerate() {
        // SUBJECT_ID mirrors the admission mapping used for notes
        let subject_id = 10_000 + (rec.admission_id - 100_000) / 2;
        w.write_record([
            (row + 1).to_string(),
            subject_id.to_string(),
            rec.admission_id.to_string(),
            rec.seq_num.to_string(),
            rec.code.clone(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Generate the three corpus files (notes, diagnoses, procedures) under
/// `out_dir`. Files are bit-identical across runs with the same arguments.
pub fn generate_synthetic_corpus(
    cfg: &SyntheticConfig,
    out_dir: impl AsRef<Path>,
) -> Result<SyntheticFiles, IngestError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| IngestError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let corpus = build_synthetic_corpus(cfg);
    let files = SyntheticFiles {
        notes: out_dir.join("NOTEEVENTS.csv"),
        diagnoses: out_dir.join("DIAGNOSES_ICD.csv"),
        procedures: out_dir.join("PROCEDURES_ICD.csv"),
    };
    write_notes(&corpus, &files.notes)?;
    write_codes(&corpus.diagnoses, &files.diagnoses)?;
    write_codes(&corpus.procedures, &files.procedures)?;
    Ok(files)
}

/// Write the descriptor tables (D_ICD_DIAGNOSES.csv, D_ICD_PROCEDURES.csv).
pub fn write_descriptor_tables(
    corpus: &SyntheticCorpus,
    out_dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), IngestError> {
    let out_dir = out_dir.as_ref();
    let diag_path = out_dir.join("D_ICD_DIAGNOSES.csv");
    let proc_path = out_dir.join("D_ICD_PROCEDURES.csv");
    for (descriptors, path) in [
        (&corpus.diagnosis_descriptors, &diag_path),
        (&corpus.procedure_descriptors, &proc_path),
    ] {
        let mut w = csv_writer(path)?;
        w.write_record(["ICD9_CODE", "SHORT_TITLE"])?;
        for d in descriptors.iter() {
            w.write_record([d.code.clone(), d.short_title.clone()])?;
        }
        w.flush().map_err(|source| IngestError::Io { path: path.clone(), source })?;
    }
    Ok((diag_path, proc_path))
}

/// Write a WordPiece vocabulary covering the fixture corpus, exactly
/// [`FIXTURE_VOCAB_SIZE`] tokens: specials, punctuation, the filler words,
/// keyword roots and continuation suffixes, whole-word code keywords, and
/// `[unused#]` padding.
pub fn write_fixture_vocabulary(
    cfg: &SyntheticConfig,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut tokens: Vec<String> = vec![
        "[PAD]".into(),
        "[UNK]".into(),
        "[CLS]".into(),
        "[SEP]".into(),
        "[MASK]".into(),
        "deid".into(),
    ];
    tokens.extend(PUNCT_TOKENS.iter().map(|s| s.to_string()));
    tokens.extend(FILLER_WORDS.iter().map(|s| s.to_string()));
    tokens.extend(ROOTS.iter().map(|s| s.to_string()));
    tokens.extend(DIAG_SUFFIXES.iter().map(|s| format!("##{s}")));
    tokens.extend(PROC_SUFFIXES.iter().map(|s| format!("##{s}")));

    // whole-word keywords for the most frequent codes of each kind
    let budget = FIXTURE_VOCAB_SIZE.saturating_sub(tokens.len());
    let per_kind = (budget / 2).min(cfg.n_codes);
    for i in 0..per_kind {
        tokens.push(code_keyword(CodeKind::Diagnosis, i));
    }
    for i in 0..per_kind {
        tokens.push(code_keyword(CodeKind::Procedure, i));
    }

    tokens.dedup();
    let mut unused = 0;
    while tokens.len() < FIXTURE_VOCAB_SIZE {
        tokens.push(format!("[unused{unused}]"));
        unused += 1;
    }
    tokens.truncate(FIXTURE_VOCAB_SIZE);

    std::fs::write(path, tokens.join("\n") + "\n").map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
