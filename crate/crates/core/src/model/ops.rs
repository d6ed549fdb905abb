//! Scalar and row-wise primitives: GELU, layer norm, softmax.

use super::tensor::Matrix;

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-12;

/// Gaussian Error Linear Unit, exact form: `0.5 * x * (1 + erf(x / sqrt(2)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Derivative of [`gelu`]: `Phi(x) + x * phi(x)` with the standard normal
/// CDF and PDF.
pub fn gelu_prime(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Normalize a vector: `(v - mean) / sqrt(var + eps) * scale + shift`,
/// population variance.
pub fn layer_norm(v: &[f64], scale: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    assert!(v.len() >= 2, "layer_norm requires at least 2 elements");
    assert!(eps > 0.0, "eps must be positive");
    assert_eq!(v.len(), scale.len());
    assert_eq!(v.len(), shift.len());
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    v.iter()
        .zip(scale.iter().zip(shift))
        .map(|(&x, (&g, &b))| (x - mean) * inv_std * g + b)
        .collect()
}

/// Per-row layer-norm cache needed for the backward pass.
#[derive(Debug, Clone)]
pub struct LnCache {
    /// x-hat: the normalized input before scale/shift, one row per input row.
    pub normalized: Matrix,
    /// 1 / sqrt(var + eps) per row.
    pub inv_std: Vec<f64>,
}

/// Row-wise layer norm over a matrix, returning the output and the cache.
pub fn layer_norm_rows(input: &Matrix, scale: &Matrix, shift: &Matrix) -> (Matrix, LnCache) {
    let (rows, cols) = input.shape();
    debug_assert_eq!(scale.shape(), (1, cols));
    debug_assert_eq!(shift.shape(), (1, cols));
    let mut out = Matrix::zeros(rows, cols);
    let mut normalized = Matrix::zeros(rows, cols);
    let mut inv_stds = Vec::with_capacity(rows);
    let n = cols as f64;
    for r in 0..rows {
        let row = input.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        inv_stds.push(inv_std);
        for c in 0..cols {
            let xhat = (row[c] - mean) * inv_std;
            normalized.set(r, c, xhat);
            out.set(r, c, xhat * scale.get(0, c) + shift.get(0, c));
        }
    }
    (out, LnCache { normalized, inv_std: inv_stds })
}

/// Backward through row-wise layer norm.
///
/// Returns the input gradient and accumulates scale/shift gradients.
pub fn layer_norm_rows_backward(
    dout: &Matrix,
    cache: &LnCache,
    scale: &Matrix,
    dscale: &mut Matrix,
    dshift: &mut Matrix,
) -> Matrix {
    let (rows, cols) = dout.shape();
    let n = cols as f64;
    let mut dinput = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let dy = dout.row(r);
        let xhat = cache.normalized.row(r);
        let inv_std = cache.inv_std[r];

        // accumulate parameter gradients
        for c in 0..cols {
            dscale.row_mut(0)[c] += dy[c] * xhat[c];
            dshift.row_mut(0)[c] += dy[c];
        }

        // dxhat = dy * scale; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..cols {
            let dxhat = dy[c] * scale.get(0, c);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[c];
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        for c in 0..cols {
            let dxhat = dy[c] * scale.get(0, c);
            dinput.set(r, c, inv_std * (dxhat - mean_dxhat - xhat[c] * mean_dxhat_xhat));
        }
    }
    dinput
}

/// In-place numerically stable softmax over one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward through a row softmax: `ds = p * (dp - <dp, p>)`.
pub fn softmax_row_backward(probs: &[f64], dprobs: &[f64], dscores: &mut [f64]) {
    let dot: f64 = probs.iter().zip(dprobs).map(|(&p, &dp)| p * dp).sum();
    for ((ds, &p), &dp) in dscores.iter_mut().zip(probs).zip(dprobs) {
        *ds = p * (dp - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-6);
        // x * Phi(x) at x = 1: 1 * 0.841345 (normal CDF table)
        assert!((gelu(1.0) - 0.841345).abs() < 1e-5);
        // odd-ish symmetry: gelu(x) - gelu(-x) = x
        for x in [-3.0, -0.7, 0.3, 2.4] {
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_prime_matches_finite_difference() {
        let h = 1e-6;
        for x in [-2.5, -1.0, -0.1, 0.0, 0.4, 1.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_prime(x) - fd).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn layer_norm_constant_vector_is_shift() {
        let out = layer_norm(&[3.0, 3.0, 3.0, 3.0], &[1.0; 4], &[0.0; 4], LN_EPS);
        assert!(out.iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn layer_norm_hand_case() {
        // mean 2.5, population var 1.25
        let out = layer_norm(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], &[0.0; 4], LN_EPS);
        let expected = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (o, e) in out.iter().zip(expected) {
            assert!((o - e).abs() < 1e-3, "{o} vs {e}");
        }
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let v = [0.3, -1.2, 4.5, 2.2, 0.0, -3.3];
        let out = layer_norm(&v, &[1.0; 6], &[0.0; 6], LN_EPS);
        let mean: f64 = out.iter().sum::<f64>() / 6.0;
        let var: f64 = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 6.0;
        assert!(mean.abs() <= 1e-9);
        assert!((var - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn layer_norm_rows_matches_vector_form() {
        let input = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 2.0, 8.0]]);
        let scale = Matrix::from_vec(1, 4, vec![1.5, 1.0, 0.5, 2.0]);
        let shift = Matrix::from_vec(1, 4, vec![0.1, -0.2, 0.0, 0.3]);
        let (out, _) = layer_norm_rows(&input, &scale, &shift);
        for r in 0..2 {
            let expected = layer_norm(input.row(r), scale.row(0), shift.row(0), LN_EPS);
            for (a, b) in out.row(r).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_row_sums_to_one() {
        let mut row = vec![1.0, 2.0, 3.0, -1e4];
        softmax_row(&mut row);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row[3] < 1e-6);
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let input = Matrix::from_rows(&[vec![0.5, -1.0, 2.0, 0.3]]);
        let scale = Matrix::from_vec(1, 4, vec![1.2, 0.8, 1.0, -0.5]);
        let shift = Matrix::from_vec(1, 4, vec![0.0, 0.1, -0.1, 0.2]);
        let dout = Matrix::from_rows(&[vec![0.7, -0.3, 0.2, 1.1]]);

        let (_, cache) = layer_norm_rows(&input, &scale, &shift);
        let mut dscale = Matrix::zeros(1, 4);
        let mut dshift = Matrix::zeros(1, 4);
        let dinput = layer_norm_rows_backward(&dout, &cache, &scale, &mut dscale, &mut dshift);

        let loss = |m: &Matrix| -> f64 {
            let (out, _) = layer_norm_rows(m, &scale, &shift);
            out.row(0).iter().zip(dout.row(0)).map(|(o, d)| o * d).sum()
        };
        let h = 1e-6;
        for c in 0..4 {
            let mut plus = input.clone();
            plus.set(0, c, plus.get(0, c) + h);
            let mut minus = input.clone();
            minus.set(0, c, minus.get(0, c) - h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((dinput.get(0, c) - fd).abs() < 1e-6, "col {c}: {} vs {fd}", dinput.get(0, c));
        }
    }
}
