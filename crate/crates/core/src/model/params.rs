//! Model parameter storage with stable tensor naming.
//!
//! Tensor shapes follow the `y = x . W^T + b` convention: projection
//! weights are `out x in`. Named iteration order is fixed and documented
//! by `named_tensors`; the optimizer, checkpoints, and the gradient
//! checker all rely on it.

use rand::Rng;
use rand_distr::Normal;

use super::tensor::Matrix;
use super::ModelConfig;
use crate::rng::seeded_rng;

const INIT_STD: f64 = 0.02;

/// Parameters of one encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln1_scale: Matrix,
    pub ln1_shift: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_scale: Matrix,
    pub ln2_shift: Matrix,
}

impl LayerParams {
    fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden;
        let ff = config.ff_dim;
        Self {
            wq: Matrix::zeros(h, h),
            bq: Matrix::zeros(1, h),
            wk: Matrix::zeros(h, h),
            bk: Matrix::zeros(1, h),
            wv: Matrix::zeros(h, h),
            bv: Matrix::zeros(1, h),
            wo: Matrix::zeros(h, h),
            bo: Matrix::zeros(1, h),
            ln1_scale: Matrix::zeros(1, h),
            ln1_shift: Matrix::zeros(1, h),
            w1: Matrix::zeros(ff, h),
            b1: Matrix::zeros(1, ff),
            w2: Matrix::zeros(h, ff),
            b2: Matrix::zeros(1, h),
            ln2_scale: Matrix::zeros(1, h),
            ln2_shift: Matrix::zeros(1, h),
        }
    }
}

/// All embedding, encoder-layer, pooler, and classifier tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub segment_embedding: Matrix,
    pub emb_ln_scale: Matrix,
    pub emb_ln_shift: Matrix,
    pub layers: Vec<LayerParams>,
    pub pooler_w: Matrix,
    pub pooler_b: Matrix,
    pub classifier_w: Matrix,
    pub classifier_b: Matrix,
}

/// Role of a tensor, used to pick its initializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TensorRole {
    Weight,
    Bias,
    LnScale,
    LnShift,
}

impl ParameterSet {
    /// All tensors zero; also the shape template for gradients and
    /// optimizer moments.
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden;
        Self {
            token_embedding: Matrix::zeros(config.vocab_size, h),
            position_embedding: Matrix::zeros(config.max_len, h),
            segment_embedding: Matrix::zeros(2, h),
            emb_ln_scale: Matrix::zeros(1, h),
            emb_ln_shift: Matrix::zeros(1, h),
            layers: (0..config.layers).map(|_| LayerParams::zeros(config)).collect(),
            pooler_w: Matrix::zeros(h, h),
            pooler_b: Matrix::zeros(1, h),
            classifier_w: Matrix::zeros(config.num_labels, h),
            classifier_b: Matrix::zeros(1, config.num_labels),
        }
    }

    /// Deterministic initialization: weights and embeddings ~ N(0, 0.02^2),
    /// biases 0, layer-norm scale 1 and shift 0.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut rng = seeded_rng(seed, "model.init");
        for (_, role, tensor) in params.named_tensors_mut() {
            match role {
                TensorRole::Weight => {
                    for v in tensor.data_mut() {
                        *v = rng.sample(normal);
                    }
                }
                TensorRole::Bias | TensorRole::LnShift => {}
                TensorRole::LnScale => tensor.data_mut().fill(1.0),
            }
        }
        params
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Tensors in fixed iteration order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("embeddings.token".into(), &self.token_embedding),
            ("embeddings.position".into(), &self.position_embedding),
            ("embeddings.segment".into(), &self.segment_embedding),
            ("embeddings.ln.scale".into(), &self.emb_ln_scale),
            ("embeddings.ln.shift".into(), &self.emb_ln_shift),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer.{i}.attn.q.weight"), &layer.wq));
            out.push((format!("layer.{i}.attn.q.bias"), &layer.bq));
            out.push((format!("layer.{i}.attn.k.weight"), &layer.wk));
            out.push((format!("layer.{i}.attn.k.bias"), &layer.bk));
            out.push((format!("layer.{i}.attn.v.weight"), &layer.wv));
            out.push((format!("layer.{i}.attn.v.bias"), &layer.bv));
            out.push((format!("layer.{i}.attn.out.weight"), &layer.wo));
            out.push((format!("layer.{i}.attn.out.bias"), &layer.bo));
            out.push((format!("layer.{i}.ln1.scale"), &layer.ln1_scale));
            out.push((format!("layer.{i}.ln1.shift"), &layer.ln1_shift));
            out.push((format!("layer.{i}.ff.in.weight"), &layer.w1));
            out.push((format!("layer.{i}.ff.in.bias"), &layer.b1));
            out.push((format!("layer.{i}.ff.out.weight"), &layer.w2));
            out.push((format!("layer.{i}.ff.out.bias"), &layer.b2));
            out.push((format!("layer.{i}.ln2.scale"), &layer.ln2_scale));
            out.push((format!("layer.{i}.ln2.shift"), &layer.ln2_shift));
        }
        out.push(("pooler.weight".into(), &self.pooler_w));
        out.push(("pooler.bias".into(), &self.pooler_b));
        out.push(("classifier.weight".into(), &self.classifier_w));
        out.push(("classifier.bias".into(), &self.classifier_b));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, TensorRole, &mut Matrix)> {
        use TensorRole::*;
        let mut out: Vec<(String, TensorRole, &mut Matrix)> = vec![
            ("embeddings.token".into(), Weight, &mut self.token_embedding),
            ("embeddings.position".into(), Weight, &mut self.position_embedding),
            ("embeddings.segment".into(), Weight, &mut self.segment_embedding),
            ("embeddings.ln.scale".into(), LnScale, &mut self.emb_ln_scale),
            ("embeddings.ln.shift".into(), LnShift, &mut self.emb_ln_shift),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer.{i}.attn.q.weight"), Weight, &mut layer.wq));
            out.push((format!("layer.{i}.attn.q.bias"), Bias, &mut layer.bq));
            out.push((format!("layer.{i}.attn.k.weight"), Weight, &mut layer.wk));
            out.push((format!("layer.{i}.attn.k.bias"), Bias, &mut layer.bk));
            out.push((format!("layer.{i}.attn.v.weight"), Weight, &mut layer.wv));
            out.push((format!("layer.{i}.attn.v.bias"), Bias, &mut layer.bv));
            out.push((format!("layer.{i}.attn.out.weight"), Weight, &mut layer.wo));
            out.push((format!("layer.{i}.attn.out.bias"), Bias, &mut layer.bo));
            out.push((format!("layer.{i}.ln1.scale"), LnScale, &mut layer.ln1_scale));
            out.push((format!("layer.{i}.ln1.shift"), LnShift, &mut layer.ln1_shift));
            out.push((format!("layer.{i}.ff.in.weight"), Weight, &mut layer.w1));
            out.push((format!("layer.{i}.ff.in.bias"), Bias, &mut layer.b1));
            out.push((format!("layer.{i}.ff.out.weight"), Weight, &mut layer.w2));
            out.push((format!("layer.{i}.ff.out.bias"), Bias, &mut layer.b2));
            out.push((format!("layer.{i}.ln2.scale"), LnScale, &mut layer.ln2_scale));
            out.push((format!("layer.{i}.ln2.shift"), LnShift, &mut layer.ln2_shift));
        }
        out.push(("pooler.weight".into(), Weight, &mut self.pooler_w));
        out.push(("pooler.bias".into(), Bias, &mut self.pooler_b));
        out.push(("classifier.weight".into(), Weight, &mut self.classifier_w));
        out.push(("classifier.bias".into(), Bias, &mut self.classifier_b));
        out
    }

    /// Mutable tensors in the same order and naming as `named_tensors`.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.named_tensors_mut().into_iter().map(|(name, _, t)| (name, t)).collect()
    }

    /// Look up a tensor by its stable name.
    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.named_tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Mutable lookup by stable name.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors_mut().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}
