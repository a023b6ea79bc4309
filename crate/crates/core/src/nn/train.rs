use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Model, Output};
use super::network::Arch;
use super::real::Real;
use super::softmax::log_softmax_rows;
use crate::data::{class_set, Example};
use crate::{seeded, sub_seed, Error, Result};

/// Mini-batch SGD settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Settings for the in-class model `f`.
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            weight_decay: 0.001,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the open set classifier `g`.
    pub fn for_g() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.005,
            weight_decay: 0.0005,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Parameter(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Sgd<S> {
    pub learning_rate: S,
    momentum: S,
    weight_decay: S,
    velocity: Vec<S>,
}

impl<S: Real> Sgd<S> {
    pub fn new(cfg: &TrainConfig, n_params: usize) -> Self {
        Self {
            learning_rate: S::lit(cfg.learning_rate),
            momentum: S::lit(cfg.momentum),
            weight_decay: S::lit(cfg.weight_decay),
            velocity: vec![S::zero(); n_params],
        }
    }

    /// `g ← ∇ + wd·p; v ← μv + g; p ← p − lr·(g + μv)`.
    pub fn step(&mut self, params: &mut [S], grads: &[S]) {
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            let g = g + self.weight_decay * *p;
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * (g + self.momentum * *v);
        }
    }

    /// Grows the velocity buffer after the parameter vector was rebuilt.
    pub fn resize(&mut self, n_params: usize) {
        self.velocity = vec![S::zero(); n_params];
    }
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Mean cross-entropy of integer targets and its gradient w.r.t. the logits.
pub fn cross_entropy<S: Real>(logits: &[S], cols: usize, targets: &[usize]) -> (f64, Vec<S>) {
    let n = targets.len();
    let logp = log_softmax_rows(logits, cols);
    let scale = S::one() / S::lit(n as f64);
    let mut loss = 0.0;
    let mut grad = vec![S::zero(); logits.len()];
    for (i, &t) in targets.iter().enumerate() {
        loss -= logp[i * cols + t].as_f64();
        for j in 0..cols {
            grad[i * cols + j] = logp[i * cols + j].exp() * scale;
        }
        grad[i * cols + t] -= scale;
    }
    (loss / n as f64, grad)
}

/// Trains the in-class model on labeled known-class data by minimizing mean cross-entropy.
pub fn pretrain_f(train: &[Example], arch: &Arch, cfg: &TrainConfig) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    let Some(first) = train.first() else {
        return Err(Error::Precondition("empty training set".into()));
    };
    if let Some(e) = train.iter().find(|e| e.label.is_none()) {
        return Err(Error::Input(format!("training instance {} has no label", e.id)));
    }
    let classes = class_set(train);
    if classes.len() < 2 {
        return Err(Error::DegenerateTask(format!(
            "training set has {} class, need at least two",
            classes.len()
        )));
    }
    let outputs = classes.iter().map(|&c| Output::Class(c)).collect();
    let mut model: Model = Model::new(arch, first.shape, outputs, sub_seed(cfg.seed, 0xF0))?;
    if let Some(e) = train.iter().find(|e| e.shape != first.shape) {
        return Err(Error::Input(format!("instance {} has a different shape", e.id)));
    }
    let targets: Vec<usize> = train
        .iter()
        .map(|e| classes.binary_search(&e.class()).expect("class present"))
        .collect();
    let log = fit_labeled(&mut model, train, &targets, cfg)?;
    Ok((model, log))
}

/// Plain cross-entropy training on `(examples, target indices)`.
pub(crate) fn fit_labeled(model: &mut Model, examples: &[Example], targets: &[usize], cfg: &TrainConfig) -> Result<TrainLog> {
    let mut rng = seeded(sub_seed(cfg.seed, 0xF1));
    let mut opt = Sgd::new(cfg, model.net.n_params());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = vec![0.0f32; model.net.n_params()];
    let cols = model.n_outputs();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let t: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let pass = model.forward(&batch);
            let (loss, dlogits) = cross_entropy(pass.logits(), cols, &t);
            if !loss.is_finite() {
                return Err(Error::State(format!("training diverged in epoch {epoch}")));
            }
            total += loss * idx.len() as f64;
            grads.fill(0.0);
            model.net.backward(&pass, &dlogits, &mut grads);
            opt.step(model.net.params_mut(), &grads);
        }
        let mean = total / examples.len() as f64;
        log::debug!("f epoch {epoch}: loss {mean:.5}");
        log.epoch_loss.push(mean);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::gaussian_blobs;
    use crate::data::ImageShape;

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = [0.3f64, -1.2, 0.8, 2.0, 0.1, -0.4];
        let targets = [2, 0];
        let (_, g) = cross_entropy(&logits, 3, &targets);
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut p = logits;
            p[i] += h;
            let mut m = logits;
            m[i] -= h;
            let num = (cross_entropy(&p, 3, &targets).0 - cross_entropy(&m, 3, &targets).0) / (2.0 * h);
            assert!((num - g[i]).abs() <= 1e-4 * num.abs().max(1e-3), "{i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn sgd_matches_hand_computed_nesterov_steps() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let mut opt = Sgd::<f64>::new(&cfg, 1);
        let mut p = [1.0];
        opt.step(&mut p, &[2.0]);
        // g = 2 + 0.5 = 2.5, v = 2.5, p = 1 - 0.1 (2.5 + 2.25) = 0.525
        assert!((p[0] - 0.525).abs() < 1e-12);
        opt.step(&mut p, &[0.0]);
        // g = 0.2625, v = 2.25 + 0.2625 = 2.5125, p = 0.525 - 0.1 (0.2625 + 2.26125)
        assert!((p[0] - (0.525 - 0.1 * (0.2625 + 0.9 * 2.5125))).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_single_class() {
        let arch = Arch::Mlp { hidden: vec![] };
        assert!(matches!(pretrain_f(&[], &arch, &TrainConfig::default()), Err(Error::Precondition(_))));
        let one = vec![Example::new(0, ImageShape::new(1, 1, 1), vec![0.0], Some(3))];
        assert!(matches!(pretrain_f(&one, &arch, &TrainConfig::default()), Err(Error::DegenerateTask(_))));
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
    }

    #[test]
    fn loss_decreases_on_blobs() {
        let data = gaussian_blobs(&[vec![0.0, 0.0], vec![3.0, 3.0], vec![0.0, 3.0]], 40, 0.5, 1);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (model, log) = pretrain_f(&data, &Arch::Mlp { hidden: vec![8] }, &cfg).unwrap();
        assert_eq!(log.epoch_loss.len(), 10);
        assert!(log.epoch_loss.last().unwrap() < &log.epoch_loss[0]);
        assert_eq!(model.classes(), vec![0, 1, 2]);
    }

    #[test]
    fn training_is_deterministic() {
        let data = gaussian_blobs(&[vec![0.0, 0.0], vec![2.0, 2.0]], 20, 0.5, 2);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = pretrain_f(&data, &Arch::Mlp { hidden: vec![4] }, &cfg).unwrap().0;
        let b = pretrain_f(&data, &Arch::Mlp { hidden: vec![4] }, &cfg).unwrap().0;
        assert_eq!(a, b);
    }
}
