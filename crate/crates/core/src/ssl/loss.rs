//! Batch objectives of the open set classifier, as functions of network outputs.
//!
//! Each function returns the loss value and its gradient with respect to the
//! logits it differentiates through. Masks and pseudo-labels are treated as
//! constants (no gradient flows through them).

use crate::nn::{argmax, log_softmax_rows, softmax_rows, Real};

use super::SslConfig;

fn kl_rows<S: Real>(teacher: &[S], student_logp: &[S]) -> f64 {
    teacher
        .iter()
        .zip(student_logp)
        .filter(|(t, _)| **t > S::zero())
        .map(|(&t, &ls)| (t * (t.ln() - ls)).as_f64())
        .sum()
}

/// Known-class block of a row (all outputs except `novel`).
fn without<S: Copy>(row: &[S], novel: usize) -> Vec<S> {
    row.iter()
        .enumerate()
        .filter(|(j, _)| *j != novel)
        .map(|(_, v)| *v)
        .collect()
}

/// Adds `α·KL(t ‖ softmax(z_known / T))·scale` and its gradient for one row.
fn distill_row<S: Real>(z: &[S], grad: &mut [S], novel: Option<usize>, teacher: &[S], alpha: f64, temperature: f64, scale: f64) -> f64 {
    let known: Vec<S> = match novel {
        Some(n) => without(z, n),
        None => z.to_vec(),
    };
    let t = S::lit(temperature);
    let scaled: Vec<S> = known.iter().map(|&v| v / t).collect();
    let logs = log_softmax_rows(&scaled, scaled.len());
    let kl = kl_rows(teacher, &logs);
    let coef = S::lit(alpha * scale / temperature);
    let mut k = 0;
    for (j, g) in grad.iter_mut().enumerate() {
        if Some(j) == novel {
            continue;
        }
        *g += coef * (logs[k].exp() - teacher[k]);
        k += 1;
    }
    alpha * scale * kl
}

/// Supervised loss over labeled rows: `1/(2N) Σ [ℓ_s1 + α·ℓ_s2]`.
///
/// `ℓ_s1` is the cross-entropy of the target. With `cfg.gate_novel`, rows
/// whose target is the super-class `novel` only count when `g`'s top
/// probability reaches τ.
/// `ℓ_s2 = KL(teacher ‖ softmax_T(g without the super-class))`, where `teacher`
/// holds `softmax_T(f*(x))` (N × C).
pub fn supervised<S: Real>(logits: &[S], cols: usize, targets: &[usize], novel: usize, teacher: &[S], cfg: &SslConfig) -> (f64, Vec<S>) {
    let n = targets.len();
    let mut grad = vec![S::zero(); logits.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let logp = log_softmax_rows(logits, cols);
    let c = cols - 1;
    let mut loss = 0.0;
    for i in 0..n {
        let lp = &logp[i * cols..(i + 1) * cols];
        let g = &mut grad[i * cols..(i + 1) * cols];
        let target = targets[i];
        let gated_out = cfg.gate_novel && lp.iter().copied().fold(S::neg_infinity(), S::max).exp().as_f64() < cfg.tau;
        if target != novel || !gated_out {
            loss -= scale * lp[target].as_f64();
            for (gj, &l) in g.iter_mut().zip(lp) {
                *gj += S::lit(scale) * l.exp();
            }
            g[target] -= S::lit(scale);
        }
        if cfg.alpha > 0.0 {
            let z = &logits[i * cols..(i + 1) * cols];
            loss += distill_row(z, g, Some(novel), &teacher[i * c..(i + 1) * c], cfg.alpha, cfg.temperature, scale);
        }
    }
    (loss, grad)
}

/// Unsupervised loss: rows whose clean prediction reaches τ are pseudo-labeled
/// with its argmax and trained on the augmented view, plus distillation on the
/// augmented view. Returns the loss, its gradient w.r.t. `aug_logits` and the
/// number of retained rows.
pub fn unsupervised<S: Real>(
    clean_logits: &[S],
    aug_logits: &[S],
    cols: usize,
    novel: usize,
    teacher: &[S],
    cfg: &SslConfig,
) -> (f64, Vec<S>, usize) {
    let n = clean_logits.len() / cols;
    let mut grad = vec![S::zero(); aug_logits.len()];
    if n == 0 {
        return (0.0, grad, 0);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let q = softmax_rows(clean_logits, cols);
    let logp = log_softmax_rows(aug_logits, cols);
    let c = cols - 1;
    let mut loss = 0.0;
    let mut retained = 0;
    for i in 0..n {
        let qi = &q[i * cols..(i + 1) * cols];
        let pseudo = argmax(qi);
        if qi[pseudo].as_f64() < cfg.tau {
            continue;
        }
        retained += 1;
        let lp = &logp[i * cols..(i + 1) * cols];
        let g = &mut grad[i * cols..(i + 1) * cols];
        loss -= scale * lp[pseudo].as_f64();
        for (gj, &l) in g.iter_mut().zip(lp) {
            *gj += S::lit(scale) * l.exp();
        }
        g[pseudo] -= S::lit(scale);
        if cfg.alpha > 0.0 {
            let z = &aug_logits[i * cols..(i + 1) * cols];
            loss += distill_row(z, g, Some(novel), &teacher[i * c..(i + 1) * c], cfg.alpha, cfg.temperature, scale);
        }
    }
    (loss, grad, retained)
}

/// Labeled part of the known/unknown objective:
/// `1/(2N) Σ [H(ŷ, g2(x)) + α·KL(ψ(x) ‖ g2(Φ(x)))]` with two-way outputs
/// (0 = known, 1 = unknown). Returns the loss and gradients w.r.t. the clean
/// and augmented logits.
pub fn binary_labeled<S: Real>(clean_logits: &[S], aug_logits: &[S], targets: &[usize], psi: &[S], alpha: f64) -> (f64, Vec<S>, Vec<S>) {
    let n = targets.len();
    let mut g_clean = vec![S::zero(); clean_logits.len()];
    let mut g_aug = vec![S::zero(); aug_logits.len()];
    if n == 0 {
        return (0.0, g_clean, g_aug);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let logp = log_softmax_rows(clean_logits, 2);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss -= scale * logp[2 * i + t].as_f64();
        for j in 0..2 {
            g_clean[2 * i + j] += S::lit(scale) * logp[2 * i + j].exp();
        }
        g_clean[2 * i + t] -= S::lit(scale);
        if alpha > 0.0 {
            loss += distill_row(&aug_logits[2 * i..2 * i + 2], &mut g_aug[2 * i..2 * i + 2], None, &psi[2 * i..2 * i + 2], alpha, 1.0, scale);
        }
    }
    (loss, g_clean, g_aug)
}

/// Unlabeled part of the known/unknown objective, masked by the clean
/// prediction's confidence. Returns the loss, the gradient w.r.t. the
/// augmented logits and the number of retained rows.
pub fn binary_unlabeled<S: Real>(clean_logits: &[S], aug_logits: &[S], psi: &[S], cfg: &SslConfig) -> (f64, Vec<S>, usize) {
    let n = clean_logits.len() / 2;
    let mut grad = vec![S::zero(); aug_logits.len()];
    if n == 0 {
        return (0.0, grad, 0);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let q = softmax_rows(clean_logits, 2);
    let logp = log_softmax_rows(aug_logits, 2);
    let mut loss = 0.0;
    let mut retained = 0;
    for i in 0..n {
        let pseudo = usize::from(q[2 * i + 1] > q[2 * i]);
        if q[2 * i + pseudo].as_f64() < cfg.tau {
            continue;
        }
        retained += 1;
        loss -= scale * logp[2 * i + pseudo].as_f64();
        for j in 0..2 {
            grad[2 * i + j] += S::lit(scale) * logp[2 * i + j].exp();
        }
        grad[2 * i + pseudo] -= S::lit(scale);
        if cfg.alpha > 0.0 {
            loss += distill_row(&aug_logits[2 * i..2 * i + 2], &mut grad[2 * i..2 * i + 2], None, &psi[2 * i..2 * i + 2], cfg.alpha, 1.0, scale);
        }
    }
    (loss, grad, retained)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SslConfig {
        SslConfig::default()
    }

    #[test]
    fn alpha_zero_leaves_cross_entropy_only() {
        let logits = [2.0f64, 0.5, -1.0, 0.0, 0.3, 1.0];
        let teacher = [0.7, 0.3, 0.1, 0.9];
        let c = SslConfig { alpha: 0.0, ..cfg() };
        let (loss, _) = supervised(&logits, 3, &[0, 1], 2, &teacher, &c);
        let lp = log_softmax_rows(&logits, 3);
        assert!((loss - (-(lp[0] + lp[4]) / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn matching_teacher_has_zero_distillation() {
        let logits = [2.0f64, 0.5, -1.0];
        let scaled = [2.0 / 3.0, 0.5 / 3.0];
        let teacher = softmax_rows(&scaled, 2);
        let c = cfg();
        let with = supervised(&logits, 3, &[0], 2, &teacher, &c).0;
        let without = supervised(&logits, 3, &[0], 2, &teacher, &SslConfig { alpha: 0.0, ..c }).0;
        assert!((with - without).abs() < 1e-12);
    }

    #[test]
    fn novel_target_gate() {
        // Flat prediction: max probability 1/3 < τ, so the gated super-class target is ignored.
        let logits = [0.0f64, 0.0, 0.0];
        let gated = SslConfig { alpha: 0.0, gate_novel: true, ..cfg() };
        let (loss, grad) = supervised(&logits, 3, &[2], 2, &[0.5, 0.5], &gated);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        let (loss, _) = supervised(&[0.0f64, 0.0, 10.0], 3, &[2], 2, &[0.5, 0.5], &gated);
        assert!(loss > 0.0);
        let open = SslConfig { gate_novel: false, ..gated };
        let (loss, _) = supervised(&logits, 3, &[2], 2, &[0.5, 0.5], &open);
        assert!((loss - 3f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mask_monotone_in_tau() {
        let clean = [3.0f64, 0.0, 0.0, 0.2, 0.1, 0.0, 0.0, 5.0, 1.0];
        let teacher = [0.5; 6];
        let mut last = usize::MAX;
        for tau in [0.0, 0.3, 0.6, 0.85, 0.99] {
            let c = SslConfig { tau, ..cfg() };
            let (_, _, kept) = unsupervised(&clean, &clean, 3, 2, &teacher, &c);
            assert!(kept <= last);
            last = kept;
        }
        let all = unsupervised(&clean, &clean, 3, 2, &teacher, &SslConfig { tau: 1e-9, ..cfg() }).2;
        assert_eq!(all, 3);
    }

    #[test]
    fn binary_kl_vanishes_when_output_equals_psi() {
        let psi = [0.8f64, 0.2];
        let aug = [0.8f64.ln(), 0.2f64.ln()];
        let (with, _, _) = binary_labeled(&aug, &aug, &[0], &psi, 0.3);
        let (without, _, _) = binary_labeled(&aug, &aug, &[0], &psi, 0.0);
        assert!((with - without).abs() < 1e-12);
    }
}
