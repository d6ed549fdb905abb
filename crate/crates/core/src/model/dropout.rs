//! Counter-based deterministic dropout.
//!
//! Each element's keep/drop decision is a pure function of
//! `(seed, site, step, example, element)`, hashed through SplitMix64.
//! The backward pass regenerates the forward masks instead of storing
//! them, and resumed runs see exactly the masks an uninterrupted run
//! would have seen.

use super::tensor::Matrix;
use crate::rng::mix64;

/// Execution mode for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Dropout active, keyed by the given seed and global step.
    Train { seed: u64, step: u64 },
    /// Deterministic inference; dropout disabled.
    Eval,
}

/// Where in the network a dropout mask applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropSite {
    Embedding,
    AttnProbs { layer: usize },
    AttnOut { layer: usize },
    FfnOut { layer: usize },
    Classifier,
}

impl DropSite {
    fn code(self) -> u64 {
        match self {
            DropSite::Embedding => 1,
            DropSite::AttnProbs { layer } => 0x10 | (layer as u64) << 8,
            DropSite::AttnOut { layer } => 0x20 | (layer as u64) << 8,
            DropSite::FfnOut { layer } => 0x30 | (layer as u64) << 8,
            DropSite::Classifier => 2,
        }
    }
}

/// Inverted-dropout multiplier for one element: `0.0` if dropped, else
/// `1/(1-p)`.
pub fn dropout_multiplier(
    seed: u64,
    step: u64,
    site: DropSite,
    example: usize,
    element: usize,
    p: f64,
) -> f64 {
    if p == 0.0 {
        return 1.0;
    }
    let h1 = mix64(seed ^ mix64(site.code()));
    let h2 = mix64(h1 ^ step);
    let h3 = mix64(h2 ^ ((example as u64) << 40) ^ element as u64);
    // 53 uniform bits in [0,1)
    let u = (h3 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    if u < p {
        0.0
    } else {
        1.0 / (1.0 - p)
    }
}

/// Apply dropout in place over a whole matrix. Elements are indexed in
/// row-major order starting at `element_offset`. No-op in eval mode.
pub fn apply_dropout(
    m: &mut Matrix,
    mode: RunMode,
    site: DropSite,
    example: usize,
    element_offset: usize,
    p: f64,
) {
    let RunMode::Train { seed, step } = mode else { return };
    if p == 0.0 {
        return;
    }
    for (i, v) in m.data_mut().iter_mut().enumerate() {
        *v *= dropout_multiplier(seed, step, site, example, element_offset + i, p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_is_deterministic() {
        let a = dropout_multiplier(9, 3, DropSite::Embedding, 0, 17, 0.1);
        let b = dropout_multiplier(9, 3, DropSite::Embedding, 0, 17, 0.1);
        assert_eq!(a, b);
    }

    #[test]
    fn keys_decorrelate_sites_steps_examples() {
        let base: Vec<f64> = (0..2000)
            .map(|i| dropout_multiplier(9, 3, DropSite::Embedding, 0, i, 0.5))
            .collect();
        for (step, site, example) in [
            (4u64, DropSite::Embedding, 0usize),
            (3, DropSite::FfnOut { layer: 0 }, 0),
            (3, DropSite::Embedding, 1),
        ] {
            let other: Vec<f64> =
                (0..2000).map(|i| dropout_multiplier(9, step, site, example, i, 0.5)).collect();
            assert_ne!(base, other);
        }
    }

    #[test]
    fn drop_rate_is_close_to_p() {
        let p = 0.1;
        let n = 50_000;
        let dropped = (0..n)
            .filter(|&i| dropout_multiplier(1, 0, DropSite::Classifier, 0, i, p) == 0.0)
            .count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - p).abs() < 0.01, "observed drop rate {rate}");
    }

    #[test]
    fn kept_elements_are_rescaled() {
        let kept = (0..100)
            .map(|i| dropout_multiplier(1, 0, DropSite::Classifier, 0, i, 0.2))
            .find(|&m| m != 0.0)
            .unwrap();
        assert!((kept - 1.25).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_identity() {
        let mut m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let original = m.clone();
        apply_dropout(&mut m, RunMode::Eval, DropSite::Embedding, 0, 0, 0.5);
        assert_eq!(m, original);
    }
}
