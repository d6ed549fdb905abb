//! Bidirectional transformer encoder with a multi-label sigmoid head.
//!
//! Summed token/positional/segment embeddings feed a stack of identical
//! blocks: multi-head scaled dot-product self-attention (additive -1e4
//! bias on padded keys), residual + layer norm, GELU feed-forward,
//! residual + layer norm. The final hidden state at the `[CLS]` position
//! passes through a tanh pooler and a linear classifier; training
//! minimizes binary cross-entropy on the logits. Gradients are exact and
//! cover every parameter tensor.
//!
//! Everything runs in f64. Dropout is a counter-based deterministic
//! generator keyed by `(seed, site, step)`, so train-mode runs are
//! reproducible and the backward pass can regenerate the forward masks.

mod backward;
mod dropout;
mod forward;
mod loss;
mod ops;
mod params;
mod tensor;

pub use backward::compute_gradients;
pub use dropout::{dropout_multiplier, DropSite, RunMode};
pub use forward::{
    classify, embed_inputs, encoder_forward, forward_batch, forward_example, ExampleCache,
    ForwardActivation,
};
pub use loss::{bce_with_logits, bce_with_logits_grad, sigmoid};
pub use ops::{gelu, gelu_prime, layer_norm, softmax_row, LN_EPS};
pub use params::{LayerParams, ParameterSet};
pub use tensor::Matrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range (vocab size {vocab_size})")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("position {position} out of range (max_len {max_len})")]
    PositionOutOfRange { position: usize, max_len: usize },
    #[error("non-finite activation in encoder layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient in tensor {name}")]
    NonFiniteGradient { name: String },
    #[error("shape mismatch for tensor {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub num_labels: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// The bert-base-uncased shape: 12 blocks, 12 heads, hidden 768,
    /// feed-forward 3072, 512 positions, 30,522-token vocabulary.
    pub fn base() -> Self {
        Self {
            vocab_size: 30_522,
            hidden: 768,
            layers: 12,
            heads: 12,
            ff_dim: 3072,
            max_len: 512,
            num_labels: 20,
            dropout: 0.1,
        }
    }

    /// A small configuration that trains in seconds on a CPU.
    pub fn tiny() -> Self {
        Self {
            vocab_size: 200,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            max_len: 64,
            num_labels: 20,
            dropout: 0.1,
        }
    }

    /// Look up a preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "base" => Some(Self::base()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "hidden ({}) must be a positive multiple of heads ({})",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout must lie in [0,1), got {}",
                self.dropout
            )));
        }
        if self.num_labels == 0 {
            return Err(ModelError::InvalidConfig("num_labels must be at least 1".into()));
        }
        if self.vocab_size == 0 || self.layers == 0 || self.ff_dim == 0 || self.max_len < 3 {
            return Err(ModelError::InvalidConfig(
                "vocab_size, layers, ff_dim must be positive and max_len >= 3".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Closed-form total parameter count for this shape.
    pub fn parameter_count(&self) -> usize {
        let h = self.hidden;
        let ff = self.ff_dim;
        let embeddings = self.vocab_size * h + self.max_len * h + 2 * h + 2 * h;
        let per_layer = 4 * (h * h + h)      // q, k, v, output projections
            + (ff * h + ff) + (h * ff + h)   // feed-forward in and out
            + 4 * h;                         // two layer norms
        let head = (h * h + h)               // pooler
            + self.num_labels * h + self.num_labels;
        embeddings + self.layers * per_layer + head
    }
}

/// Initialize parameters for a config: weights ~ N(0, 0.02^2), biases 0,
/// layer-norm scale 1 and shift 0. Deterministic under `seed`.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<ParameterSet, ModelError> {
    config.validate()?;
    Ok(ParameterSet::init(config, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_preset_parameter_count_near_110m() {
        let count = ModelConfig::base().parameter_count() as f64;
        let relative = (count - 1.10e8).abs() / 1.10e8;
        assert!(relative < 0.02, "parameter count {count} deviates {relative} from 110M");
    }

    #[test]
    fn tiny_preset_count_matches_hand_shape_sum() {
        // shape arithmetic done independently of parameter_count():
        // embeddings: 200*64 + 64*64 + 2*64 + 64 + 64
        let emb = 12_800 + 4_096 + 128 + 128;
        // per layer: 4*(64*64+64) + (128*64+128) + (64*128+64) + 4*64
        let layer = 4 * 4_160 + 8_320 + 8_256 + 256;
        // pooler 64*64+64, classifier 4*64+4
        let head = 4_160 + 260;
        let cfg = ModelConfig { num_labels: 4, ..ModelConfig::tiny() };
        assert_eq!(cfg.parameter_count(), emb + 2 * layer + head);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut cfg = ModelConfig::tiny();
        cfg.heads = 5; // 64 % 5 != 0
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::tiny();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::tiny();
        cfg.num_labels = 0;
        assert!(cfg.validate().is_err());

        assert!(ModelConfig::tiny().validate().is_ok());
        assert!(ModelConfig::base().validate().is_ok());
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(ModelConfig::preset("base"), Some(ModelConfig::base()));
        assert_eq!(ModelConfig::preset("tiny"), Some(ModelConfig::tiny()));
        assert_eq!(ModelConfig::preset("huge"), None);
    }
}
