//! Fine-tuning loop: Adam over every parameter, deterministic and
//! resumable.
//!
//! All randomness derives from `(seed, epoch, step)`: batch order is
//! shuffled by an epoch-keyed generator and dropout masks are keyed by the
//! global step, so `(seed, data, config)` fully determine the final
//! parameters and a resumed run is bitwise identical to an uninterrupted
//! one. Batches run on a single logical stream; gradient accumulation
//! within a batch is in fixed example order.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamHyper, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, TrainingCheckpoint};

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::model::{
    compute_gradients, init_parameters, Matrix, ModelConfig, ModelError, ParameterSet, RunMode,
};
use crate::rng::seeded_rng;
use crate::tokenizer::CachedExample;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite gradient in tensor {tensor}: step refused")]
    RefusedStep { tensor: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

/// Training hyperparameters and bookkeeping paths.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a log row every this many steps.
    pub eval_every: u64,
    pub checkpoint_dir: PathBuf,
    /// Stop after this many optimizer steps (for short calibration runs).
    pub max_steps: Option<u64>,
    /// Fill `wall_ms` in log rows. Off by default so logs stay
    /// byte-identical across runs.
    pub timing: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            epochs: 6,
            batch_size: 16,
            seed: 42,
            eval_every: 10,
            checkpoint_dir: PathBuf::from("checkpoints"),
            max_steps: None,
            timing: false,
        }
    }
}

impl TrainingConfig {
    /// A zero learning rate is allowed: it turns training into a null
    /// update, which is useful as a plumbing check.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::InvalidConfig("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: u64,
    pub step: u64,
    pub loss: f64,
    pub wall_ms: u64,
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub mean_loss: f64,
    pub steps: u64,
}

fn targets_of(batch: &[&CachedExample]) -> Matrix {
    let rows: Vec<Vec<f64>> = batch
        .iter()
        .map(|c| c.example.labels.iter().map(|&b| f64::from(b)).collect())
        .collect();
    Matrix::from_rows(&rows)
}

/// Run one epoch: deterministic batch order under the epoch-derived seed,
/// gradient + Adam update per batch, log rows every `eval_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    params: &mut ParameterSet,
    optimizer: &mut OptimizerState,
    data: &[CachedExample],
    model_config: &ModelConfig,
    config: &TrainingConfig,
    epoch_index: u64,
    global_step: &mut u64,
    log: &mut Vec<TrainLogRow>,
) -> Result<EpochMetrics, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let started = Instant::now();
    let hyper = AdamHyper::new(config.learning_rate);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seeded_rng(config.seed, &format!("trainer.epoch.{epoch_index}"));
    for i in (1..order.len()).rev() {
        use rand::Rng;
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut loss_sum = 0.0;
    let mut steps = 0u64;
    for chunk in order.chunks(config.batch_size) {
        if config.max_steps.is_some_and(|cap| *global_step >= cap) {
            break;
        }
        let batch: Vec<&CachedExample> = chunk.iter().map(|&i| &data[i]).collect();
        let examples: Vec<&crate::tokenizer::EncodedExample> =
            batch.iter().map(|c| &c.example).collect();
        let targets = targets_of(&batch);
        let mode = RunMode::Train { seed: config.seed, step: *global_step };

        let result = compute_gradients(&examples, &targets, params, model_config, mode)?;
        adam_step(params, &result.grads, optimizer, &hyper)?;

        *global_step += 1;
        steps += 1;
        loss_sum += result.loss;

        if *global_step % config.eval_every == 0 {
            log.push(TrainLogRow {
                epoch: epoch_index,
                step: *global_step,
                loss: result.loss,
                wall_ms: if config.timing { started.elapsed().as_millis() as u64 } else { 0 },
            });
        }
    }

    if steps == 0 {
        return Ok(EpochMetrics { mean_loss: 0.0, steps: 0 });
    }
    Ok(EpochMetrics { mean_loss: loss_sum / steps as f64, steps })
}

/// Outcome of [`fine_tune`].
#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub params: ParameterSet,
    pub optimizer: OptimizerState,
    pub log: Vec<TrainLogRow>,
    pub epoch_mean_losses: Vec<f64>,
    pub epochs_completed: u64,
    pub global_step: u64,
    /// Path of the checkpoint written at the end of the run.
    pub final_checkpoint: PathBuf,
}

fn epoch_checkpoint_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("epoch-{epoch:04}.ckpt"))
}

/// Fine-tune for `config.epochs` epochs (all parameters unfrozen), writing
/// a checkpoint at each epoch end plus a final `model.ckpt`.
///
/// With `resume`, training continues from the stored epoch/step; the
/// resumed trajectory is bitwise identical to an uninterrupted run.
pub fn fine_tune(
    model_config: &ModelConfig,
    config: &TrainingConfig,
    data: &[CachedExample],
    resume: Option<&Path>,
) -> Result<FineTuneOutcome, TrainError> {
    model_config.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let (mut params, mut optimizer, start_epoch, mut global_step) = match resume {
        Some(path) => {
            let loaded = load_checkpoint(path, Some(model_config))?;
            if loaded.seed != config.seed {
                return Err(TrainError::InvalidConfig(format!(
                    "resume seed {} does not match configured seed {}",
                    loaded.seed, config.seed
                )));
            }
            (loaded.params, loaded.optimizer, loaded.epoch, loaded.global_step)
        }
        None => (
            init_parameters(model_config, config.seed)?,
            OptimizerState::new(model_config),
            0,
            0,
        ),
    };

    std::fs::create_dir_all(&config.checkpoint_dir)
        .map_err(|e| TrainError::Io { path: config.checkpoint_dir.clone(), source: e })?;

    let mut log = Vec::new();
    let mut epoch_mean_losses = Vec::new();
    let mut epochs_completed = start_epoch;
    for epoch in start_epoch..config.epochs {
        let metrics = train_epoch(
            &mut params,
            &mut optimizer,
            data,
            model_config,
            config,
            epoch,
            &mut global_step,
            &mut log,
        )?;
        epoch_mean_losses.push(metrics.mean_loss);
        epochs_completed = epoch + 1;

        let checkpoint = TrainingCheckpoint {
            config: model_config.clone(),
            params: params.clone(),
            optimizer: optimizer.clone(),
            seed: config.seed,
            epoch: epochs_completed,
            global_step,
        };
        save_checkpoint(
            epoch_checkpoint_path(&config.checkpoint_dir, epochs_completed),
            &checkpoint,
        )?;

        if config.max_steps.is_some_and(|cap| global_step >= cap) {
            break;
        }
    }

    let final_checkpoint = config.checkpoint_dir.join("model.ckpt");
    save_checkpoint(
        &final_checkpoint,
        &TrainingCheckpoint {
            config: model_config.clone(),
            params: params.clone(),
            optimizer: optimizer.clone(),
            seed: config.seed,
            epoch: epochs_completed,
            global_step,
        },
    )?;

    Ok(FineTuneOutcome {
        params,
        optimizer,
        log,
        epoch_mean_losses,
        epochs_completed,
        global_step,
        final_checkpoint,
    })
}
