//! Forward pass with full activation caching.
//!
//! Examples are processed one at a time; a batch is a vector of per-example
//! caches, so batch results are independent of batching and permuting a
//! batch permutes the outputs identically. The caches carry everything the
//! backward pass needs.

use super::dropout::{apply_dropout, DropSite, RunMode};
use super::ops::{gelu, layer_norm_rows, softmax_row, LnCache};
use super::params::{LayerParams, ParameterSet};
use super::tensor::Matrix;
use super::{ModelConfig, ModelError};
use crate::tokenizer::EncodedExample;

/// Additive pre-softmax bias applied to padded key positions.
pub const MASK_BIAS: f64 = -1e4;

/// Embedding-stage activations for one example.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    /// token + position + segment sums, before layer norm.
    pub sum: Matrix,
    pub ln: LnCache,
    pub ln_out: Matrix,
    /// After embedding dropout; input to the first encoder layer.
    pub out: Matrix,
}

/// Attention activations for one layer of one example.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Post-softmax attention weights per head, before dropout.
    pub probs: Vec<Matrix>,
    /// Attention weights after dropout (identical to `probs` in eval mode).
    pub probs_dropped: Vec<Matrix>,
    /// Concatenated per-head contexts, before the output projection.
    pub context: Matrix,
}

/// One encoder block's activations for one example.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Matrix,
    pub attention: AttentionCache,
    pub ln1: LnCache,
    pub ln1_out: Matrix,
    /// Feed-forward pre-activation.
    pub ff_pre: Matrix,
    /// GELU output.
    pub ff_act: Matrix,
    pub ln2: LnCache,
    /// Block output.
    pub ln2_out: Matrix,
}

/// Classification-head activations for one example.
#[derive(Debug, Clone)]
pub struct ClassifyCache {
    pub cls_hidden: Vec<f64>,
    pub pool_pre: Vec<f64>,
    pub pooled: Vec<f64>,
    pub pooled_dropped: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Complete forward activations for one example.
#[derive(Debug, Clone)]
pub struct ExampleCache {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_ids: Vec<u8>,
    pub embed: EmbedCache,
    pub layers: Vec<LayerCache>,
    pub head: ClassifyCache,
}

impl ExampleCache {
    /// Hidden states after encoder layer `layer`.
    pub fn hidden_state(&self, layer: usize) -> &Matrix {
        &self.layers[layer].ln2_out
    }

    /// Attention weights (post-softmax, pre-dropout) for a layer and head.
    pub fn attention_weights(&self, layer: usize, head: usize) -> &Matrix {
        &self.layers[layer].attention.probs[head]
    }
}

/// Forward activations for a batch, one cache per example in input order.
#[derive(Debug, Clone)]
pub struct ForwardActivation {
    pub examples: Vec<ExampleCache>,
}

impl ForwardActivation {
    /// Logits as a batch x num_labels matrix.
    pub fn logits(&self) -> Matrix {
        let rows: Vec<Vec<f64>> =
            self.examples.iter().map(|e| e.head.logits.clone()).collect();
        Matrix::from_rows(&rows)
    }

    /// Pooled `[CLS]` vectors as a batch x hidden matrix.
    pub fn pooled(&self) -> Matrix {
        let rows: Vec<Vec<f64>> =
            self.examples.iter().map(|e| e.head.pooled.clone()).collect();
        Matrix::from_rows(&rows)
    }
}

/// Embed one example: `state[t] = LN(token[id_t] + position[t] +
/// segment[seg_t])`, then embedding dropout in train mode.
pub fn embed_inputs(
    example: &EncodedExample,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
) -> Result<EmbedCache, ModelError> {
    let seq = example.input_ids.len();
    if seq > config.max_len {
        return Err(ModelError::PositionOutOfRange { position: seq - 1, max_len: config.max_len });
    }
    let h = config.hidden;
    let mut sum = Matrix::zeros(seq, h);
    for t in 0..seq {
        let id = example.input_ids[t];
        if id as usize >= config.vocab_size {
            return Err(ModelError::IdOutOfRange { id, vocab_size: config.vocab_size });
        }
        let seg = example.segment_ids[t] as usize;
        let token_row = params.token_embedding.row(id as usize);
        let pos_row = params.position_embedding.row(t);
        let seg_row = params.segment_embedding.row(seg.min(1));
        let dst = sum.row_mut(t);
        for c in 0..h {
            dst[c] = token_row[c] + pos_row[c] + seg_row[c];
        }
    }
    let (ln_out, ln) = layer_norm_rows(&sum, &params.emb_ln_scale, &params.emb_ln_shift);
    let mut out = ln_out.clone();
    apply_dropout(&mut out, mode, DropSite::Embedding, example_index, 0, config.dropout);
    Ok(EmbedCache { sum, ln, ln_out, out })
}

fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut out = x.matmul_transpose_b(w);
    out.add_row_bias(b);
    out
}

fn layer_forward(
    input: Matrix,
    mask: &[u8],
    layer: &LayerParams,
    layer_index: usize,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
) -> Result<LayerCache, ModelError> {
    let seq = input.rows();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let q = linear(&input, &layer.wq, &layer.bq);
    let k = linear(&input, &layer.wk, &layer.bk);
    let v = linear(&input, &layer.wv, &layer.bv);

    let mut probs = Vec::with_capacity(config.heads);
    let mut probs_dropped = Vec::with_capacity(config.heads);
    let mut context = Matrix::zeros(seq, config.hidden);
    for head in 0..config.heads {
        let q_h = q.column_slice(head * dh, dh);
        let k_h = k.column_slice(head * dh, dh);
        let v_h = v.column_slice(head * dh, dh);

        let mut scores = q_h.matmul_transpose_b(&k_h);
        scores.scale(scale);
        for i in 0..seq {
            let row = scores.row_mut(i);
            for (j, &m) in mask.iter().enumerate() {
                if m == 0 {
                    row[j] += MASK_BIAS;
                }
            }
        }
        for i in 0..seq {
            softmax_row(scores.row_mut(i));
        }

        let mut dropped = scores.clone();
        apply_dropout(
            &mut dropped,
            mode,
            DropSite::AttnProbs { layer: layer_index },
            example_index,
            head * seq * seq,
            config.dropout,
        );
        context.add_into_columns(head * dh, &dropped.matmul(&v_h));
        probs.push(scores);
        probs_dropped.push(dropped);
    }

    let mut attn_out = linear(&context, &layer.wo, &layer.bo);
    apply_dropout(
        &mut attn_out,
        mode,
        DropSite::AttnOut { layer: layer_index },
        example_index,
        0,
        config.dropout,
    );

    let mut pre1 = input.clone();
    pre1.add_assign(&attn_out);
    let (ln1_out, ln1) = layer_norm_rows(&pre1, &layer.ln1_scale, &layer.ln1_shift);

    let ff_pre = linear(&ln1_out, &layer.w1, &layer.b1);
    let mut ff_act = ff_pre.clone();
    for v in ff_act.data_mut() {
        *v = gelu(*v);
    }
    let mut ff_out = linear(&ff_act, &layer.w2, &layer.b2);
    apply_dropout(
        &mut ff_out,
        mode,
        DropSite::FfnOut { layer: layer_index },
        example_index,
        0,
        config.dropout,
    );

    let mut pre2 = ln1_out.clone();
    pre2.add_assign(&ff_out);
    let (ln2_out, ln2) = layer_norm_rows(&pre2, &layer.ln2_scale, &layer.ln2_shift);

    if !ln2_out.all_finite() {
        return Err(ModelError::NonFiniteActivation { layer: layer_index });
    }

    Ok(LayerCache {
        input,
        attention: AttentionCache { q, k, v, probs, probs_dropped, context },
        ln1,
        ln1_out,
        ff_pre,
        ff_act,
        ln2,
        ln2_out,
    })
}

/// Run the encoder stack over embedded states.
pub fn encoder_forward(
    states: Matrix,
    mask: &[u8],
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
) -> Result<Vec<LayerCache>, ModelError> {
    let mut layers = Vec::with_capacity(config.layers);
    let mut current = states;
    for (i, layer) in params.layers.iter().enumerate() {
        let cache = layer_forward(current, mask, layer, i, config, mode, example_index)?;
        current = cache.ln2_out.clone();
        layers.push(cache);
    }
    Ok(layers)
}

/// Pool the `[CLS]` hidden state through the tanh dense pooler and apply
/// the linear classifier: `logits = W . pooled + b`.
pub fn classify(
    final_hidden: &Matrix,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
) -> ClassifyCache {
    let cls_hidden = final_hidden.row(0).to_vec();
    let cls_row = Matrix::from_vec(1, cls_hidden.len(), cls_hidden.clone());
    let pool_pre = linear(&cls_row, &params.pooler_w, &params.pooler_b);
    let pooled: Vec<f64> = pool_pre.row(0).iter().map(|&x| x.tanh()).collect();

    let mut pooled_row = Matrix::from_vec(1, pooled.len(), pooled.clone());
    apply_dropout(
        &mut pooled_row,
        mode,
        DropSite::Classifier,
        example_index,
        0,
        config.dropout,
    );
    let pooled_dropped = pooled_row.row(0).to_vec();

    let logits = linear(&pooled_row, &params.classifier_w, &params.classifier_b);
    ClassifyCache {
        cls_hidden,
        pool_pre: pool_pre.row(0).to_vec(),
        pooled,
        pooled_dropped,
        logits: logits.row(0).to_vec(),
    }
}

/// Full forward pass for one example.
pub fn forward_example(
    example: &EncodedExample,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
) -> Result<ExampleCache, ModelError> {
    let embed = embed_inputs(example, params, config, mode, example_index)?;
    let layers = encoder_forward(
        embed.out.clone(),
        &example.attention_mask,
        params,
        config,
        mode,
        example_index,
    )?;
    let final_hidden = &layers.last().expect("at least one layer").ln2_out;
    let head = classify(final_hidden, params, config, mode, example_index);
    Ok(ExampleCache {
        input_ids: example.input_ids.clone(),
        attention_mask: example.attention_mask.clone(),
        segment_ids: example.segment_ids.clone(),
        embed,
        layers,
        head,
    })
}

/// Forward a batch; caches are returned in input order.
pub fn forward_batch(
    batch: &[&EncodedExample],
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
) -> Result<ForwardActivation, ModelError> {
    let examples = batch
        .iter()
        .enumerate()
        .map(|(i, example)| forward_example(example, params, config, mode, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForwardActivation { examples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_parameters;

    fn small_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            hidden: 8,
            layers: 2,
            heads: 2,
            ff_dim: 16,
            max_len: 10,
            num_labels: 3,
            dropout: 0.0,
        }
    }

    fn example(ids: &[u32], real: usize) -> EncodedExample {
        EncodedExample {
            input_ids: ids.to_vec(),
            attention_mask: (0..ids.len()).map(|i| u8::from(i < real)).collect(),
            segment_ids: vec![0; ids.len()],
            labels: vec![1, 0, 1],
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let ex = example(&[2, 5, 6, 3, 0, 0], 4);
        let a = forward_example(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        let b = forward_example(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        assert_eq!(a.head.logits, b.head.logits);
    }

    #[test]
    fn attention_rows_are_stochastic_and_ignore_pads() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let ex = example(&[2, 5, 6, 3, 0, 0, 0, 0], 3);
        let cache = forward_example(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        for layer in 0..config.layers {
            for head in 0..config.heads {
                let probs = cache.attention_weights(layer, head);
                for i in 0..probs.rows() {
                    let row = probs.row(i);
                    let total: f64 = row.iter().sum();
                    assert!((total - 1.0).abs() <= 1e-6);
                    let pad_weight: f64 =
                        row.iter().enumerate().filter(|(j, _)| *j >= 3).map(|(_, &w)| w).sum();
                    assert!(pad_weight <= 1e-6, "pad weight {pad_weight}");
                }
            }
        }
    }

    #[test]
    fn pad_token_perturbation_does_not_leak() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let ex_a = example(&[2, 5, 6, 3, 0, 0, 0, 0], 4);
        // same real tokens, different ids at masked positions
        let ex_b = example(&[2, 5, 6, 3, 9, 11, 7, 1], 4);
        let a = forward_example(&ex_a, &params, &config, RunMode::Eval, 0).unwrap();
        let b = forward_example(&ex_b, &params, &config, RunMode::Eval, 0).unwrap();
        for (x, y) in a.head.logits.iter().zip(&b.head.logits) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn batch_permutation_permutes_logits() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let e1 = example(&[2, 5, 3, 0], 3);
        let e2 = example(&[7, 8, 9, 3], 4);
        let e3 = example(&[2, 2, 3, 0], 3);
        let fwd = forward_batch(&[&e1, &e2, &e3], &params, &config, RunMode::Eval).unwrap();
        let permuted = forward_batch(&[&e3, &e1, &e2], &params, &config, RunMode::Eval).unwrap();
        assert_eq!(fwd.examples[0].head.logits, permuted.examples[1].head.logits);
        assert_eq!(fwd.examples[1].head.logits, permuted.examples[2].head.logits);
        assert_eq!(fwd.examples[2].head.logits, permuted.examples[0].head.logits);
    }

    #[test]
    fn embed_rejects_out_of_range_id() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let ex = example(&[19, 20, 3, 0], 3);
        let err = embed_inputs(&ex, &params, &config, RunMode::Eval, 0).unwrap_err();
        assert!(matches!(err, ModelError::IdOutOfRange { id: 20, .. }));
    }

    #[test]
    fn embed_zero_tables_yield_shift_vector() {
        let config = small_config();
        let mut params = crate::model::ParameterSet::zeros(&config);
        params.emb_ln_scale.data_mut().fill(1.0);
        params.emb_ln_shift.data_mut().fill(0.25);
        let ex = example(&[1, 2, 3, 0], 4);
        let cache = embed_inputs(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        // all-zero embedding sum normalizes to zero, leaving only the shift
        for r in 0..cache.ln_out.rows() {
            for &v in cache.ln_out.row(r) {
                assert!((v - 0.25).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn embed_distinguishes_positions_of_same_token() {
        let config = small_config();
        let params = init_parameters(&config, 3).unwrap();
        let ex = example(&[5, 5, 3, 0], 3);
        let cache = embed_inputs(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        assert_ne!(cache.sum.row(0), cache.sum.row(1));
    }

    #[test]
    fn embed_sum_matches_hand_addition() {
        let config = ModelConfig { hidden: 4, heads: 2, ff_dim: 8, ..small_config() };
        let mut params = crate::model::ParameterSet::zeros(&config);
        params.emb_ln_scale.data_mut().fill(1.0);
        for (i, v) in params.token_embedding.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.01;
        }
        for (i, v) in params.position_embedding.data_mut().iter_mut().enumerate() {
            *v = 1.0 + i as f64 * 0.1;
        }
        for (i, v) in params.segment_embedding.data_mut().iter_mut().enumerate() {
            *v = 100.0 + i as f64;
        }
        let ex = example(&[3, 7], 2);
        let cache = embed_inputs(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        for t in 0..2 {
            let id = ex.input_ids[t] as usize;
            for c in 0..4 {
                let expected = (id * 4 + c) as f64 * 0.01
                    + 1.0 + (t * 4 + c) as f64 * 0.1
                    + 100.0 + c as f64;
                assert!((cache.sum.get(t, c) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classifier_with_zero_weights_returns_bias() {
        let config = small_config();
        let mut params = crate::model::ParameterSet::zeros(&config);
        params.classifier_b = Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]);
        let hidden = Matrix::from_rows(&[vec![0.3; 8], vec![0.1; 8]]);
        let head = classify(&hidden, &params, &config, RunMode::Eval, 0);
        assert_eq!(head.logits, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn classifier_hand_product() {
        let mut config = small_config();
        config.hidden = 2;
        config.heads = 1;
        config.num_labels = 2;
        let mut params = crate::model::ParameterSet::zeros(&config);
        // pooler: zero weight, bias chosen so pooled = tanh(b) hits targets
        let pooled_target = [0.5f64, -0.25];
        params.pooler_b =
            Matrix::from_vec(1, 2, pooled_target.iter().map(|p| p.atanh()).collect());
        params.classifier_w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        params.classifier_b = Matrix::from_vec(1, 2, vec![0.1, -0.1]);
        let hidden = Matrix::from_rows(&[vec![9.9, -3.2]]);
        let head = classify(&hidden, &params, &config, RunMode::Eval, 0);
        let expected = [
            1.0 * 0.5 + 2.0 * -0.25 + 0.1,
            3.0 * 0.5 + 4.0 * -0.25 - 0.1,
        ];
        for (l, e) in head.logits.iter().zip(expected) {
            assert!((l - e).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_dropout_is_reproducible_and_differs_from_eval() {
        let config = ModelConfig { dropout: 0.1, ..small_config() };
        let params = init_parameters(&config, 3).unwrap();
        let ex = example(&[2, 5, 6, 3], 4);
        let train_mode = RunMode::Train { seed: 1, step: 0 };
        let a = forward_example(&ex, &params, &config, train_mode, 0).unwrap();
        let b = forward_example(&ex, &params, &config, train_mode, 0).unwrap();
        assert_eq!(a.head.logits, b.head.logits);

        let eval = forward_example(&ex, &params, &config, RunMode::Eval, 0).unwrap();
        assert_ne!(a.head.logits, eval.head.logits);

        let later = forward_example(
            &ex,
            &params,
            &config,
            RunMode::Train { seed: 1, step: 1 },
            0,
        )
        .unwrap();
        assert_ne!(a.head.logits, later.head.logits);
    }
}
