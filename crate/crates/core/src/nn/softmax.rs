use super::real::Real;
use crate::{Error, Result};

/// Row-wise numerically stable softmax of an N × `cols` logit block.
pub fn softmax_rows<S: Real>(logits: &[S], cols: usize) -> Vec<S> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub fn log_softmax_rows<S: Real>(logits: &[S], cols: usize) -> Vec<S> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Sharpens or flattens a distribution: `p_i^(1/T) / Σ_j p_j^(1/T)`.
pub fn softmax_t(probs: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {t}")));
    }
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Input("softmax_t expects a probability distribution".into()));
    }
    // Work in log space so tiny probabilities do not underflow before renormalizing.
    let scaled: Vec<f64> = probs.iter().map(|p| p.ln() / t).collect();
    Ok(softmax_rows(&scaled, probs.len()))
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy<S: Real>(p: &[S]) -> S {
    -p.iter()
        .filter(|&&v| v > S::zero())
        .map(|&v| v * v.ln())
        .sum::<S>()
}
