//! Exact gradients of the BCE loss with respect to every parameter.
//!
//! Mirrors the forward pass in reverse, reading the per-example caches.
//! Dropout masks are regenerated from the same counters the forward pass
//! used, so train-mode gradients see exactly the forward masks. Batch
//! gradients accumulate example by example in input order.

use super::dropout::{apply_dropout, DropSite, RunMode};
use super::forward::{forward_batch, ExampleCache, ForwardActivation};
use super::loss::{bce_with_logits, bce_with_logits_grad};
use super::ops::{gelu_prime, layer_norm_rows_backward, softmax_row_backward};
use super::params::ParameterSet;
use super::tensor::Matrix;
use super::{ModelConfig, ModelError};
use crate::tokenizer::EncodedExample;

/// Loss, gradients, and the forward activations they came from.
pub struct GradientResult {
    pub loss: f64,
    pub grads: ParameterSet,
    pub activation: ForwardActivation,
}

/// Forward the batch, evaluate mean BCE against `targets`
/// (batch x num_labels, entries 0/1), and backpropagate into every
/// parameter tensor. Gradient shapes mirror parameter shapes.
pub fn compute_gradients(
    batch: &[&EncodedExample],
    targets: &Matrix,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
) -> Result<GradientResult, ModelError> {
    assert_eq!(targets.rows(), batch.len(), "one target row per example");
    let activation = forward_batch(batch, params, config, mode)?;
    let logits = activation.logits();
    let loss = bce_with_logits(&logits, targets);
    let dlogits = bce_with_logits_grad(&logits, targets);

    let mut grads = ParameterSet::zeros(config);
    for (i, cache) in activation.examples.iter().enumerate() {
        let dlogits_row = Matrix::from_vec(1, dlogits.cols(), dlogits.row(i).to_vec());
        backward_example(cache, dlogits_row, params, config, mode, i, &mut grads);
    }

    for (name, tensor) in grads.named_tensors() {
        if !tensor.all_finite() {
            return Err(ModelError::NonFiniteGradient { name });
        }
    }
    Ok(GradientResult { loss, grads, activation })
}

fn backward_example(
    cache: &ExampleCache,
    dlogits: Matrix,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
    grads: &mut ParameterSet,
) {
    let h = config.hidden;
    let seq = cache.input_ids.len();

    // classifier
    let pooled_dropped = Matrix::from_vec(1, h, cache.head.pooled_dropped.clone());
    grads.classifier_w.add_assign(&dlogits.matmul_transpose_a(&pooled_dropped));
    grads.classifier_b.add_assign(&dlogits);
    let mut dpooled = dlogits.matmul(&params.classifier_w);
    apply_dropout(&mut dpooled, mode, DropSite::Classifier, example_index, 0, config.dropout);

    // tanh pooler
    let mut dpool_pre = dpooled;
    for (d, &p) in dpool_pre.data_mut().iter_mut().zip(&cache.head.pooled) {
        *d *= 1.0 - p * p;
    }
    let cls_row = Matrix::from_vec(1, h, cache.head.cls_hidden.clone());
    grads.pooler_w.add_assign(&dpool_pre.matmul_transpose_a(&cls_row));
    grads.pooler_b.add_assign(&dpool_pre);
    let dcls = dpool_pre.matmul(&params.pooler_w);

    // only the [CLS] position feeds the head
    let mut dhidden = Matrix::zeros(seq, h);
    for (dst, &src) in dhidden.row_mut(0).iter_mut().zip(dcls.row(0)) {
        *dst = src;
    }

    for layer_index in (0..config.layers).rev() {
        dhidden = layer_backward(
            dhidden,
            &cache.layers[layer_index],
            params,
            config,
            mode,
            example_index,
            layer_index,
            grads,
        );
    }

    // embedding dropout, layer norm, then scatter into the tables
    apply_dropout(&mut dhidden, mode, DropSite::Embedding, example_index, 0, config.dropout);
    let dsum = layer_norm_rows_backward(
        &dhidden,
        &cache.embed.ln,
        &params.emb_ln_scale,
        &mut grads.emb_ln_scale,
        &mut grads.emb_ln_shift,
    );
    for t in 0..seq {
        let src = dsum.row(t);
        let token = cache.input_ids[t] as usize;
        for (dst, &v) in grads.token_embedding.row_mut(token).iter_mut().zip(src) {
            *dst += v;
        }
        for (dst, &v) in grads.position_embedding.row_mut(t).iter_mut().zip(src) {
            *dst += v;
        }
        let seg = (cache.segment_ids[t] as usize).min(1);
        for (dst, &v) in grads.segment_embedding.row_mut(seg).iter_mut().zip(src) {
            *dst += v;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    dout: Matrix,
    cache: &super::forward::LayerCache,
    params: &ParameterSet,
    config: &ModelConfig,
    mode: RunMode,
    example_index: usize,
    layer_index: usize,
    grads: &mut ParameterSet,
) -> Matrix {
    let layer = &params.layers[layer_index];
    let seq = cache.input.rows();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // second residual block: ln2(ln1_out + dropout(ff_out))
    let lg = &mut grads.layers[layer_index];
    let dpre2 = layer_norm_rows_backward(
        &dout,
        &cache.ln2,
        &layer.ln2_scale,
        &mut lg.ln2_scale,
        &mut lg.ln2_shift,
    );
    let mut dx_mid = dpre2.clone();
    let mut dff_out = dpre2;
    apply_dropout(
        &mut dff_out,
        mode,
        DropSite::FfnOut { layer: layer_index },
        example_index,
        0,
        config.dropout,
    );

    // feed-forward
    lg.w2.add_assign(&dff_out.matmul_transpose_a(&cache.ff_act));
    lg.b2.add_assign(&dff_out.column_sums());
    let mut dff_pre = dff_out.matmul(&layer.w2);
    for (d, &x) in dff_pre.data_mut().iter_mut().zip(cache.ff_pre.data()) {
        *d *= gelu_prime(x);
    }
    lg.w1.add_assign(&dff_pre.matmul_transpose_a(&cache.ln1_out));
    lg.b1.add_assign(&dff_pre.column_sums());
    dx_mid.add_assign(&dff_pre.matmul(&layer.w1));

    // first residual block: ln1(input + dropout(attn_out))
    let dpre1 = layer_norm_rows_backward(
        &dx_mid,
        &cache.ln1,
        &layer.ln1_scale,
        &mut lg.ln1_scale,
        &mut lg.ln1_shift,
    );
    let mut dinput = dpre1.clone();
    let mut dattn_out = dpre1;
    apply_dropout(
        &mut dattn_out,
        mode,
        DropSite::AttnOut { layer: layer_index },
        example_index,
        0,
        config.dropout,
    );

    // output projection
    lg.wo.add_assign(&dattn_out.matmul_transpose_a(&cache.attention.context));
    lg.bo.add_assign(&dattn_out.column_sums());
    let dcontext = dattn_out.matmul(&layer.wo);

    // per-head scaled dot-product attention
    let mut dq = Matrix::zeros(seq, config.hidden);
    let mut dk = Matrix::zeros(seq, config.hidden);
    let mut dv = Matrix::zeros(seq, config.hidden);
    for head in 0..config.heads {
        let q_h = cache.attention.q.column_slice(head * dh, dh);
        let k_h = cache.attention.k.column_slice(head * dh, dh);
        let v_h = cache.attention.v.column_slice(head * dh, dh);
        let probs = &cache.attention.probs[head];
        let probs_dropped = &cache.attention.probs_dropped[head];

        let dc_h = dcontext.column_slice(head * dh, dh);
        let mut dprobs = dc_h.matmul_transpose_b(&v_h);
        dv.add_into_columns(head * dh, &probs_dropped.matmul_transpose_a(&dc_h));
        apply_dropout(
            &mut dprobs,
            mode,
            DropSite::AttnProbs { layer: layer_index },
            example_index,
            head * seq * seq,
            config.dropout,
        );

        let mut dscores = Matrix::zeros(seq, seq);
        for i in 0..seq {
            softmax_row_backward(probs.row(i), dprobs.row(i), dscores.row_mut(i));
        }
        dscores.scale(scale);

        dq.add_into_columns(head * dh, &dscores.matmul(&k_h));
        dk.add_into_columns(head * dh, &dscores.matmul_transpose_a(&q_h));
    }

    // q/k/v projections
    lg.wq.add_assign(&dq.matmul_transpose_a(&cache.input));
    lg.bq.add_assign(&dq.column_sums());
    lg.wk.add_assign(&dk.matmul_transpose_a(&cache.input));
    lg.bk.add_assign(&dk.column_sums());
    lg.wv.add_assign(&dv.matmul_transpose_a(&cache.input));
    lg.bv.add_assign(&dv.column_sums());

    dinput.add_assign(&dq.matmul(&layer.wq));
    dinput.add_assign(&dk.matmul(&layer.wk));
    dinput.add_assign(&dv.matmul(&layer.wv));
    dinput
}
