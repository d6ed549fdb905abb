//! Binary cross-entropy on logits.

use super::tensor::Matrix;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over all (example, label) cells, computed in
/// the overflow-safe form `max(z,0) - z*y + ln(1 + e^(-|z|))`. Finite for
/// any finite logits.
pub fn bce_with_logits(logits: &Matrix, targets: &Matrix) -> f64 {
    assert_eq!(logits.shape(), targets.shape(), "bce shape mismatch");
    let n = logits.len() as f64;
    let mut total = 0.0;
    for (&z, &y) in logits.data().iter().zip(targets.data()) {
        debug_assert!(y == 0.0 || y == 1.0, "targets must be 0 or 1");
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    }
    total / n
}

/// Gradient of [`bce_with_logits`] with respect to the logits:
/// `(sigmoid(z) - y) / N` where N is the total cell count.
pub fn bce_with_logits_grad(logits: &Matrix, targets: &Matrix) -> Matrix {
    assert_eq!(logits.shape(), targets.shape(), "bce shape mismatch");
    let n = logits.len() as f64;
    let data = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &y)| (sigmoid(z) - y) / n)
        .collect();
    Matrix::from_vec(logits.rows(), logits.cols(), data)
}
