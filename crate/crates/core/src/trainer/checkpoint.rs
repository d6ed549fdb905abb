//! Versioned binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   4 bytes "NCCP"
//! version u32     currently 1
//! config  7 x u64 (vocab_size, hidden, layers, heads, ff_dim, max_len,
//!                  num_labels) + f64 dropout
//! seed    u64     base training seed
//! epoch   u64     completed epochs
//! step    u64     global optimizer steps taken
//! t       u64     Adam step counter
//! then three tensor groups (params, first moments, second moments), each:
//!   count u32, then per tensor:
//!     name_len u32, name bytes, rows u64, cols u64, rows*cols f64 values
//! ```
//!
//! All training randomness derives from `(seed, epoch, step)`, so those
//! three counters are the complete RNG cursor: a resumed run replays the
//! exact shuffles and dropout masks of an uninterrupted one. Writing the
//! same state twice produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::OptimizerState;
use super::TrainError;
use crate::model::{Matrix, ModelConfig, ModelError, ParameterSet};

const MAGIC: &[u8; 4] = b"NCCP";
const VERSION: u32 = 1;

/// Everything needed to resume training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCheckpoint {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub optimizer: OptimizerState,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Global optimizer steps taken.
    pub global_step: u64,
}

fn io_err(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io { path: path.to_path_buf(), source }
}

fn corrupt(path: &Path, message: impl Into<String>) -> TrainError {
    TrainError::Checkpoint { path: path.to_path_buf(), message: message.into() }
}

fn write_tensor_group<W: Write>(
    w: &mut W,
    tensors: &[(String, &Matrix)],
) -> std::io::Result<()> {
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.rows() as u64).to_le_bytes())?;
        w.write_all(&(tensor.cols() as u64).to_le_bytes())?;
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Serialize a checkpoint. Byte-stable given identical state.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    checkpoint: &TrainingCheckpoint,
) -> Result<(), TrainError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<(), TrainError> {
        w.write_all(bytes).map_err(|e| io_err(path, e))
    };

    write(&mut w, MAGIC)?;
    write(&mut w, &VERSION.to_le_bytes())?;
    let c = &checkpoint.config;
    for field in
        [c.vocab_size, c.hidden, c.layers, c.heads, c.ff_dim, c.max_len, c.num_labels]
    {
        write(&mut w, &(field as u64).to_le_bytes())?;
    }
    write(&mut w, &c.dropout.to_le_bytes())?;
    write(&mut w, &checkpoint.seed.to_le_bytes())?;
    write(&mut w, &checkpoint.epoch.to_le_bytes())?;
    write(&mut w, &checkpoint.global_step.to_le_bytes())?;
    write(&mut w, &checkpoint.optimizer.t.to_le_bytes())?;

    for group in [
        &checkpoint.params.named_tensors(),
        &checkpoint.optimizer.m.named_tensors(),
        &checkpoint.optimizer.v.named_tensors(),
    ] {
        write_tensor_group(&mut w, group).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_tensor_group<R: Read>(
    r: &mut R,
    path: &Path,
    into: &mut ParameterSet,
    group: &str,
) -> Result<(), TrainError> {
    let mut u32_buf = [0u8; 4];
    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u32_buf).map_err(|_| corrupt(path, format!("truncated {group} count")))?;
    let count = u32::from_le_bytes(u32_buf) as usize;

    let expected_names: Vec<String> =
        into.named_tensors().into_iter().map(|(n, _)| n).collect();
    if count != expected_names.len() {
        return Err(corrupt(
            path,
            format!("{group}: {count} tensors, expected {}", expected_names.len()),
        ));
    }

    for _ in 0..count {
        r.read_exact(&mut u32_buf)
            .map_err(|_| corrupt(path, format!("truncated {group} tensor name length")))?;
        let name_len = u32::from_le_bytes(u32_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| corrupt(path, format!("truncated {group} tensor name")))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| corrupt(path, format!("{group}: tensor name is not UTF-8")))?;

        r.read_exact(&mut u64_buf)
            .map_err(|_| corrupt(path, format!("truncated {group} tensor {name} rows")))?;
        let rows = u64::from_le_bytes(u64_buf) as usize;
        r.read_exact(&mut u64_buf)
            .map_err(|_| corrupt(path, format!("truncated {group} tensor {name} cols")))?;
        let cols = u64::from_le_bytes(u64_buf) as usize;

        let tensor = into
            .tensor_mut(&name)
            .ok_or_else(|| corrupt(path, format!("{group}: unknown tensor {name}")))?;
        if tensor.shape() != (rows, cols) {
            return Err(TrainError::Model(ModelError::ShapeMismatch {
                name,
                expected: tensor.shape(),
                found: (rows, cols),
            }));
        }
        for v in tensor.data_mut() {
            r.read_exact(&mut u64_buf)
                .map_err(|_| corrupt(path, format!("truncated {group} tensor {name} data")))?;
            *v = f64::from_le_bytes(u64_buf);
        }
    }
    Ok(())
}

/// Load a checkpoint. When `expected` is given, the stored tensor shapes
/// must match it exactly; the first mismatching tensor is named in the
/// error.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<TrainingCheckpoint, TrainError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt(path, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(corrupt(path, format!("bad magic {magic:?}")));
    }
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf).map_err(|_| corrupt(path, "truncated version"))?;
    let version = u32::from_le_bytes(u32_buf);
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}, expected {VERSION}")));
    }

    let mut u64_buf = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>, what: &str| -> Result<u64, TrainError> {
        r.read_exact(&mut u64_buf).map_err(|_| corrupt(path, format!("truncated {what}")))?;
        Ok(u64::from_le_bytes(u64_buf))
    };

    let stored_config = ModelConfig {
        vocab_size: read_u64(&mut r, "vocab_size")? as usize,
        hidden: read_u64(&mut r, "hidden")? as usize,
        layers: read_u64(&mut r, "layers")? as usize,
        heads: read_u64(&mut r, "heads")? as usize,
        ff_dim: read_u64(&mut r, "ff_dim")? as usize,
        max_len: read_u64(&mut r, "max_len")? as usize,
        num_labels: read_u64(&mut r, "num_labels")? as usize,
        dropout: f64::from_le_bytes({
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| corrupt(path, "truncated dropout"))?;
            b
        }),
    };
    stored_config.validate()?;

    let seed = read_u64(&mut r, "seed")?;
    let epoch = read_u64(&mut r, "epoch")?;
    let global_step = read_u64(&mut r, "global_step")?;
    let t = read_u64(&mut r, "adam step counter")?;

    // tensors are validated against the shapes the caller expects
    let shape_config = expected.unwrap_or(&stored_config);
    let mut params = ParameterSet::zeros(shape_config);
    read_tensor_group(&mut r, path, &mut params, "parameters")?;
    let mut optimizer = OptimizerState::new(shape_config);
    optimizer.t = t;
    read_tensor_group(&mut r, path, &mut optimizer.m, "first moments")?;
    read_tensor_group(&mut r, path, &mut optimizer.v, "second moments")?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(corrupt(path, "trailing bytes after final tensor"));
    }

    Ok(TrainingCheckpoint { config: stored_config, params, optimizer, seed, epoch, global_step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_parameters;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            hidden: 4,
            layers: 1,
            heads: 2,
            ff_dim: 8,
            max_len: 6,
            num_labels: 2,
            dropout: 0.1,
        }
    }

    fn sample_checkpoint() -> TrainingCheckpoint {
        let config = tiny_config();
        let params = init_parameters(&config, 3).unwrap();
        let mut optimizer = OptimizerState::new(&config);
        optimizer.t = 17;
        optimizer.m.classifier_b.data_mut()[0] = 0.25;
        optimizer.v.classifier_b.data_mut()[1] = 0.5;
        TrainingCheckpoint { config, params, optimizer, seed: 9, epoch: 2, global_step: 40 }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let checkpoint = sample_checkpoint();
        save_checkpoint(&path, &checkpoint).unwrap();
        let loaded = load_checkpoint(&path, Some(&tiny_config())).unwrap();
        assert_eq!(loaded, checkpoint);
    }

    #[test]
    fn save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        let checkpoint = sample_checkpoint();
        save_checkpoint(&a, &checkpoint).unwrap();
        save_checkpoint(&b, &checkpoint).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn truncated_file_is_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_checkpoint(&path, None).unwrap_err();
        assert!(matches!(err, TrainError::Checkpoint { .. }), "got {err}");
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path, None).unwrap_err();
        assert!(err.to_string().contains("unsupported version"), "got {err}");
    }

    #[test]
    fn shape_mismatch_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        // loading into a differently-shaped config must fail loudly
        let bigger = ModelConfig { hidden: 8, heads: 2, ..tiny_config() };
        let err = load_checkpoint(&path, Some(&bigger)).unwrap_err();
        match err {
            TrainError::Model(ModelError::ShapeMismatch { name, .. }) => {
                assert_eq!(name, "embeddings.token");
            }
            other => panic!("expected shape mismatch, got {other}"),
        }
    }
}
