//! Text normalization, WordPiece tokenization, and input encoding.
//!
//! The vocabulary is a UTF-8 file with one token per line; the line index
//! is the token id. Continuation pieces begin with `##`. Tokenization is
//! uncased: text is lowercased and accents are stripped (after
//! lowercasing), whitespace and punctuation delimit words, and
//! de-identification placeholders of the form `[**...**]` collapse to the
//! single word `deid`.
//!
//! WordPiece is greedy longest-match-first: each step takes the longest
//! vocabulary entry matching the remaining prefix (continuation pieces
//! matched with `##` prepended). A word with no match at any step, or one
//! longer than [`MAX_WORD_CHARS`] characters, maps to `[UNK]` whole.

mod cache;

pub use cache::{read_token_cache, write_token_cache, CachedExample, TokenCacheHeader};

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Words longer than this tokenize to `[UNK]` without segmentation.
pub const MAX_WORD_CHARS: usize = 100;

/// Default fixed sequence length.
pub const DEFAULT_MAX_LEN: usize = 512;

const CONTINUATION_PREFIX: &str = "##";
const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("failed to read vocabulary {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is missing special token {token}")]
    MissingSpecial { token: String },
    #[error("duplicate vocabulary token {token:?} on lines {first} and {second}")]
    DuplicateToken { token: String, first: usize, second: usize },
    #[error("empty vocabulary token on line {line}")]
    EmptyToken { line: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("token cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// Ids of the five special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokenIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

/// An immutable WordPiece vocabulary. Safely shareable across threads.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    specials: SpecialTokenIds,
}

impl Vocabulary {
    /// Load a vocabulary file: one token per line, id = line index.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|source| TokenizerError::Io { path: path.to_path_buf(), source })?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            let line =
                line.map_err(|source| TokenizerError::Io { path: path.to_path_buf(), source })?;
            lines.push(line.trim_end_matches('\r').to_string());
        }
        // a trailing newline produces one empty final entry; drop it
        if lines.last().is_some_and(String::is_empty) {
            lines.pop();
        }
        Self::from_tokens(lines)
    }

    /// Build a vocabulary from an in-memory token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(TokenizerError::EmptyToken { line: i + 1 });
            }
            if let Some(first) = index.insert(token.clone(), i as u32) {
                return Err(TokenizerError::DuplicateToken {
                    token: token.clone(),
                    first: first as usize + 1,
                    second: i + 1,
                });
            }
        }
        let special = |name: &str| -> Result<u32, TokenizerError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| TokenizerError::MissingSpecial { token: name.to_string() })
        };
        let specials = SpecialTokenIds {
            pad: special(SPECIAL_TOKENS[0])?,
            unk: special(SPECIAL_TOKENS[1])?,
            cls: special(SPECIAL_TOKENS[2])?,
            sep: special(SPECIAL_TOKENS[3])?,
            mask: special(SPECIAL_TOKENS[4])?,
        };
        Ok(Self { tokens, index, specials })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> SpecialTokenIds {
        self.specials
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }
}

/// One fixed-length model input.
///
/// `attention_mask[i]` is 1 exactly where `input_ids[i]` is a non-pad
/// token; the mask is a prefix of ones. Position 0 holds `[CLS]` and the
/// last non-pad position holds `[SEP]`. Segment ids are all 0 for this
/// single-sequence task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_ids: Vec<u8>,
    pub labels: Vec<u8>,
}

impl EncodedExample {
    /// Number of non-pad positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    // common non-ASCII punctuation blocks
    let cp = c as u32;
    (0x2000..=0x206F).contains(&cp)       // General Punctuation
        || (0x2E00..=0x2E7F).contains(&cp) // Supplemental Punctuation
        || (0x3000..=0x303F).contains(&cp) // CJK Symbols and Punctuation
        || (0xFE50..=0xFE6F).contains(&cp) // Small Form Variants
        || (0xFF01..=0xFF0F).contains(&cp) // Fullwidth forms
        || (0xFF1A..=0xFF20).contains(&cp)
        || (0xFF3B..=0xFF40).contains(&cp)
        || (0xFF5B..=0xFF65).contains(&cp)
}

/// Replace `[**...**]` de-identification spans with the single word `deid`.
fn replace_deid_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[**") {
        match rest[start + 3..].find("**]") {
            Some(end) => {
                out.push_str(&rest[..start]);
                out.push_str(" deid ");
                rest = &rest[start + 3 + end + 3..];
            }
            None => break, // unterminated span: leave it verbatim
        }
    }
    out.push_str(rest);
    out
}

/// Normalize text into a word list.
///
/// Lowercase, strip accents, collapse de-id placeholders to `deid`, split
/// on whitespace, split punctuation into standalone words, drop control
/// characters. Empty input yields an empty list.
pub fn normalize(text: &str) -> Vec<String> {
    let deided = replace_deid_spans(text);
    let lowered = deided.to_lowercase();

    let mut words = Vec::new();
    let mut current = String::new();
    for c in lowered.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_string());
        } else if c.is_control() {
            // non-whitespace control characters are dropped
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Greedy longest-match WordPiece segmentation of a single word.
///
/// Returns the subword token strings; a word that cannot be segmented (or
/// that exceeds [`MAX_WORD_CHARS`]) maps to `["[UNK]"]`.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    assert!(!word.is_empty(), "wordpiece_tokenize requires a non-empty word");
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_WORD_CHARS {
        return vec![SPECIAL_TOKENS[1].to_string()];
    }

    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut matched: Option<String> = None;
        while start < end {
            let mut candidate: String = if start > 0 {
                CONTINUATION_PREFIX.to_string()
            } else {
                String::new()
            };
            candidate.extend(&chars[start..end]);
            if vocab.id_of(&candidate).is_some() {
                matched = Some(candidate);
                break;
            }
            end -= 1;
        }
        match matched {
            Some(piece) => {
                pieces.push(piece);
                start = end;
            }
            // no match at this step: the whole word is unknown
            None => return vec![SPECIAL_TOKENS[1].to_string()],
        }
    }
    pieces
}

/// Encode one text into a fixed-length example.
///
/// The token stream is `[CLS]` + wordpieces head-truncated to
/// `max_len - 2` + `[SEP]`, padded with `[PAD]` to `max_len`.
pub fn encode_example(
    text: &str,
    labels: &[u8],
    vocab: &Vocabulary,
    max_len: usize,
) -> EncodedExample {
    assert!(max_len >= 3, "max_len must be at least 3");
    let specials = vocab.specials();
    let budget = max_len - 2;

    let mut piece_ids: Vec<u32> = Vec::new();
    'words: for word in normalize(text) {
        for piece in wordpiece_tokenize(&word, vocab) {
            if piece_ids.len() == budget {
                break 'words;
            }
            piece_ids.push(vocab.id_of(&piece).expect("wordpiece output is always in-vocab"));
        }
    }

    let real = piece_ids.len() + 2;
    let mut input_ids = Vec::with_capacity(max_len);
    input_ids.push(specials.cls);
    input_ids.extend(&piece_ids);
    input_ids.push(specials.sep);
    input_ids.resize(max_len, specials.pad);

    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..real].fill(1);

    EncodedExample {
        input_ids,
        attention_mask,
        segment_ids: vec![0u8; max_len],
        labels: labels.to_vec(),
    }
}

/// Map ids back to token strings, suppressing `[PAD]`.
pub fn decode_tokens(ids: &[u32], vocab: &Vocabulary) -> Result<Vec<String>, TokenizerError> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let token = vocab
            .token(id)
            .ok_or(TokenizerError::IdOutOfRange { id, vocab_size: vocab.len() })?;
        if id != vocab.specials().pad {
            out.push(token.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_vocab(extra: &[&str]) -> Vocabulary {
        let mut tokens: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(extra.iter().map(|s| s.to_string()));
        Vocabulary::from_tokens(tokens).unwrap()
    }

    #[test]
    fn vocabulary_assigns_ids_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        std::fs::write(&path, "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nhello\nworld\n##s\nthe\nchest\n")
            .unwrap();
        let vocab = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab.len(), 10);
        assert_eq!(vocab.specials().pad, 0);
        assert_eq!(vocab.id_of("hello"), Some(5));
        assert_eq!(vocab.token(6), Some("world"));
    }

    #[test]
    fn vocabulary_rejects_duplicates_with_both_lines() {
        let tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "the", "the"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        match Vocabulary::from_tokens(tokens) {
            Err(TokenizerError::DuplicateToken { token, first, second }) => {
                assert_eq!(token, "the");
                assert_eq!((first, second), (6, 7));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn vocabulary_names_missing_special() {
        let tokens: Vec<String> =
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].iter().map(|s| s.to_string()).collect();
        match Vocabulary::from_tokens(tokens) {
            Err(TokenizerError::MissingSpecial { token }) => assert_eq!(token, "[MASK]"),
            other => panic!("expected missing-special error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_splits_punctuation_and_lowercases() {
        assert_eq!(
            normalize("Chest X-Ray: clear."),
            vec!["chest", "x", "-", "ray", ":", "clear", "."]
        );
    }

    #[test]
    fn normalize_collapses_deid_spans() {
        assert_eq!(normalize("[**2101-10-4**] admitted"), vec!["deid", "admitted"]);
        assert_eq!(
            normalize("seen at [**Hospital Ward 3**] today"),
            vec!["seen", "at", "deid", "today"]
        );
    }

    #[test]
    fn normalize_empty_is_empty() {
        assert!(normalize("").is_empty());
        assert!(normalize("   \t\n ").is_empty());
    }

    #[test]
    fn normalize_strips_accents_and_controls() {
        assert_eq!(normalize("Caf\u{00E9}"), vec!["cafe"]);
        assert_eq!(normalize("a\u{0000}b"), vec!["ab"]);
    }

    #[test]
    fn normalize_leaves_unterminated_deid_verbatim() {
        assert_eq!(normalize("[**oops"), vec!["[", "*", "*", "oops"]);
    }

    #[test]
    fn wordpiece_greedy_longest_match() {
        let vocab = test_vocab(&["un", "##aff", "##able", "aff", "able", "unaff"]);
        // greedy takes "unaff" first, then "##able"
        assert_eq!(wordpiece_tokenize("unaffable", &vocab), vec!["unaff", "##able"]);

        let vocab = test_vocab(&["un", "##aff", "##able", "aff", "able"]);
        assert_eq!(wordpiece_tokenize("unaffable", &vocab), vec!["un", "##aff", "##able"]);
    }

    #[test]
    fn wordpiece_whole_word_hit() {
        let vocab = test_vocab(&["chest"]);
        assert_eq!(wordpiece_tokenize("chest", &vocab), vec!["chest"]);
    }

    #[test]
    fn wordpiece_unknown_word() {
        let vocab = test_vocab(&["chest"]);
        assert_eq!(wordpiece_tokenize("zzzz", &vocab), vec!["[UNK]"]);
    }

    #[test]
    fn wordpiece_mid_word_dead_end_is_unk() {
        // "ab" matches, then "c" has no continuation piece: whole word -> UNK
        let vocab = test_vocab(&["ab", "c"]);
        assert_eq!(wordpiece_tokenize("abc", &vocab), vec!["[UNK]"]);
    }

    #[test]
    fn wordpiece_overlong_word_is_unk() {
        let vocab = test_vocab(&["a", "##a"]);
        let word = "a".repeat(MAX_WORD_CHARS + 1);
        assert_eq!(wordpiece_tokenize(&word, &vocab), vec!["[UNK]"]);
        let word = "a".repeat(MAX_WORD_CHARS);
        assert_eq!(wordpiece_tokenize(&word, &vocab).len(), MAX_WORD_CHARS);
    }

    #[test]
    fn encode_lays_out_cls_pieces_sep_pad() {
        let vocab = test_vocab(&["chest", "clear", "x", "ray"]);
        let example = encode_example("chest x ray clear", &[1, 0], &vocab, 8);
        let s = vocab.specials();
        assert_eq!(
            example.input_ids,
            vec![
                s.cls,
                vocab.id_of("chest").unwrap(),
                vocab.id_of("x").unwrap(),
                vocab.id_of("ray").unwrap(),
                vocab.id_of("clear").unwrap(),
                s.sep,
                s.pad,
                s.pad
            ]
        );
        assert_eq!(example.attention_mask, vec![1, 1, 1, 1, 1, 1, 0, 0]);
        assert_eq!(example.segment_ids, vec![0; 8]);
        assert_eq!(example.labels, vec![1, 0]);
    }

    #[test]
    fn encode_head_truncates() {
        let vocab = test_vocab(&["w"]);
        let text = vec!["w"; 600].join(" ");
        let example = encode_example(&text, &[], &vocab, 512);
        assert_eq!(example.input_ids.len(), 512);
        // exactly 510 text pieces kept
        let w_id = vocab.id_of("w").unwrap();
        assert_eq!(example.input_ids.iter().filter(|&&id| id == w_id).count(), 510);
        assert_eq!(example.input_ids[511], vocab.specials().sep);
        assert_eq!(example.real_len(), 512);
    }

    #[test]
    fn encode_empty_text() {
        let vocab = test_vocab(&[]);
        let example = encode_example("", &[0], &vocab, 6);
        let s = vocab.specials();
        assert_eq!(example.input_ids, vec![s.cls, s.sep, s.pad, s.pad, s.pad, s.pad]);
        assert_eq!(example.attention_mask, vec![1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn encode_mask_sum_matches_piece_count() {
        let vocab = test_vocab(&["chest", "clear"]);
        for (text, pieces) in [("chest", 1usize), ("chest clear", 2), ("chest clear chest clear", 4)] {
            let example = encode_example(text, &[], &vocab, 5);
            let expected = 2 + pieces.min(3);
            assert_eq!(example.real_len(), expected, "text {text:?}");
        }
    }

    #[test]
    fn decode_suppresses_pad_and_checks_range() {
        let vocab = test_vocab(&["hello", "world"]);
        let example = encode_example("hello world", &[], &vocab, 6);
        let tokens = decode_tokens(&example.input_ids, &vocab).unwrap();
        assert_eq!(tokens, vec!["[CLS]", "hello", "world", "[SEP]"]);

        assert!(decode_tokens(&[], &vocab).unwrap().is_empty());

        let err = decode_tokens(&[vocab.len() as u32], &vocab).unwrap_err();
        assert!(matches!(err, TokenizerError::IdOutOfRange { .. }));
    }

    #[test]
    fn greedy_pieces_admit_no_longer_match() {
        // every emitted piece is maximal: no longer vocab entry matches at
        // its position
        let vocab = test_vocab(&["un", "una", "##ff", "##ffa", "##able", "##b", "##le"]);
        let word = "unaffable";
        let pieces = wordpiece_tokenize(word, &vocab);
        let chars: Vec<char> = word.chars().collect();
        let mut pos = 0;
        for piece in &pieces {
            let bare = piece.strip_prefix("##").unwrap_or(piece);
            let len = bare.chars().count();
            for longer in len + 1..=chars.len() - pos {
                let mut candidate =
                    if pos > 0 { "##".to_string() } else { String::new() };
                candidate.extend(&chars[pos..pos + longer]);
                assert!(
                    vocab.id_of(&candidate).is_none(),
                    "piece {piece:?} at {pos} is not maximal: {candidate:?} also matches"
                );
            }
            pos += len;
        }
        assert_eq!(pos, chars.len());
    }
}
