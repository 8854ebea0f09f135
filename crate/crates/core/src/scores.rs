//! Pointwise acquisition scores: least confident, predictive entropy, BALD.

use serde::{Deserialize, Serialize};

use crate::info::entropy;
use crate::tensor::{mean_of_point, PosteriorTensor, ScoreVector};

/// Entropy terms behind one BALD score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecomposition {
    /// Entropy of the predictive mean.
    pub marginal_entropy: f64,
    /// Member-averaged entropy of the individual predictions.
    pub mean_conditional_entropy: f64,
    /// `marginal_entropy - mean_conditional_entropy`.
    pub bald: f64,
}

/// `1 - max_c p̄(c | x)` on the predictive mean.
pub fn least_confident_scores(tensor: &PosteriorTensor) -> ScoreVector {
    let mean = tensor.predictive_mean();
    let values = (0..mean.pool_size())
        .map(|i| 1.0 - mean.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    ScoreVector::new("topk-lc", values)
}

/// Entropy of the predictive mean.
pub fn entropy_scores(tensor: &PosteriorTensor) -> ScoreVector {
    let mean = tensor.predictive_mean();
    let values = (0..mean.pool_size()).map(|i| entropy(mean.row(i))).collect();
    ScoreVector::new("topk-entropy", values)
}

pub(crate) fn decompose_point(tensor: &PosteriorTensor, i: usize, scratch: &mut [f64]) -> EntropyDecomposition {
    mean_of_point(tensor, i, scratch);
    let marginal_entropy = entropy(scratch);
    let k = tensor.members();
    let conditional: f64 = (0..k).map(|j| entropy(tensor.row(i, j))).sum();
    let mean_conditional_entropy = conditional / k as f64;
    EntropyDecomposition {
        marginal_entropy,
        mean_conditional_entropy,
        bald: marginal_entropy - mean_conditional_entropy,
    }
}

/// Mutual information between each point's label and the parameters.
///
/// Small negative values from rounding are reported as-is.
pub fn bald_scores(tensor: &PosteriorTensor) -> (ScoreVector, Vec<EntropyDecomposition>) {
    let mut scratch = vec![0.0; tensor.classes()];
    let parts: Vec<EntropyDecomposition> = (0..tensor.pool_size())
        .map(|i| decompose_point(tensor, i, &mut scratch))
        .collect();
    let values = parts.iter().map(|d| d.bald).collect();
    (ScoreVector::new("bald", values), parts)
}
