//! Tokenized-dataset cache file.
//!
//! Versioned length-prefixed binary layout, little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "NCTC"
//! version u32      currently 1
//! max_len u32
//! num_labels u32
//! vocab_size u32   tokenizer vocabulary the ids refer to
//! count   u64      number of records
//! then per record:
//!   admission_id   u64
//!   input_ids      max_len x u32
//!   attention_mask max_len x u8
//!   segment_ids    max_len x u8
//!   labels         num_labels x u8
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EncodedExample, TokenizerError};

const MAGIC: &[u8; 4] = b"NCTC";
const VERSION: u32 = 1;

/// One cached example plus the admission it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedExample {
    pub admission_id: u64,
    pub example: EncodedExample,
}

/// Header fields of a token cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenCacheHeader {
    pub max_len: usize,
    pub num_labels: usize,
    pub vocab_size: usize,
}

fn cache_err(path: &Path, message: impl Into<String>) -> TokenizerError {
    TokenizerError::Cache { path: path.to_path_buf(), message: message.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> TokenizerError {
    TokenizerError::Io { path: path.to_path_buf(), source }
}

/// Write examples to a cache file. All examples must share `max_len` and
/// `num_labels`.
pub fn write_token_cache(
    path: impl AsRef<Path>,
    examples: &[CachedExample],
    header: TokenCacheHeader,
) -> Result<(), TokenizerError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);

    let put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<(), TokenizerError> {
        w.write_all(bytes).map_err(|e| io_err(path, e))
    };

    put(&mut w, MAGIC)?;
    put(&mut w, &VERSION.to_le_bytes())?;
    put(&mut w, &(header.max_len as u32).to_le_bytes())?;
    put(&mut w, &(header.num_labels as u32).to_le_bytes())?;
    put(&mut w, &(header.vocab_size as u32).to_le_bytes())?;
    put(&mut w, &(examples.len() as u64).to_le_bytes())?;

    for cached in examples {
        let e = &cached.example;
        if e.input_ids.len() != header.max_len
            || e.attention_mask.len() != header.max_len
            || e.segment_ids.len() != header.max_len
            || e.labels.len() != header.num_labels
        {
            return Err(cache_err(
                path,
                format!(
                    "example for admission {} does not match header (max_len {}, num_labels {})",
                    cached.admission_id, header.max_len, header.num_labels
                ),
            ));
        }
        put(&mut w, &cached.admission_id.to_le_bytes())?;
        for &id in &e.input_ids {
            put(&mut w, &id.to_le_bytes())?;
        }
        put(&mut w, &e.attention_mask)?;
        put(&mut w, &e.segment_ids)?;
        put(&mut w, &e.labels)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a cache file written by [`write_token_cache`].
pub fn read_token_cache(
    path: impl AsRef<Path>,
) -> Result<(Vec<CachedExample>, TokenCacheHeader), TokenizerError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| cache_err(path, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(cache_err(path, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }

    let mut u32_buf = [0u8; 4];
    let mut u64_buf = [0u8; 8];
    let mut read_u32 = |r: &mut BufReader<File>, what: &str| -> Result<u32, TokenizerError> {
        r.read_exact(&mut u32_buf).map_err(|_| cache_err(path, format!("truncated {what}")))?;
        Ok(u32::from_le_bytes(u32_buf))
    };

    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(cache_err(path, format!("unsupported version {version}, expected {VERSION}")));
    }
    let max_len = read_u32(&mut r, "max_len")? as usize;
    let num_labels = read_u32(&mut r, "num_labels")? as usize;
    let vocab_size = read_u32(&mut r, "vocab_size")? as usize;
    r.read_exact(&mut u64_buf).map_err(|_| cache_err(path, "truncated count"))?;
    let count = u64::from_le_bytes(u64_buf) as usize;

    let mut examples = Vec::with_capacity(count);
    for i in 0..count {
        let fail = |what: &str| cache_err(path, format!("truncated record {i}: {what}"));
        r.read_exact(&mut u64_buf).map_err(|_| fail("admission_id"))?;
        let admission_id = u64::from_le_bytes(u64_buf);

        let mut input_ids = Vec::with_capacity(max_len);
        for _ in 0..max_len {
            r.read_exact(&mut u32_buf).map_err(|_| fail("input_ids"))?;
            input_ids.push(u32::from_le_bytes(u32_buf));
        }
        let mut attention_mask = vec![0u8; max_len];
        r.read_exact(&mut attention_mask).map_err(|_| fail("attention_mask"))?;
        let mut segment_ids = vec![0u8; max_len];
        r.read_exact(&mut segment_ids).map_err(|_| fail("segment_ids"))?;
        let mut labels = vec![0u8; num_labels];
        r.read_exact(&mut labels).map_err(|_| fail("labels"))?;

        examples.push(CachedExample {
            admission_id,
            example: EncodedExample { input_ids, attention_mask, segment_ids, labels },
        });
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(cache_err(path, "trailing bytes after final record"));
    }
    Ok((examples, TokenCacheHeader { max_len, num_labels, vocab_size }))
}
