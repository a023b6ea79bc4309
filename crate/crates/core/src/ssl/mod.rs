//! Semi-supervised training of the open set classifier `g` over the known
//! classes plus an out-of-class super-class.

pub mod loss;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{AugmentDraw, Example};
use crate::nn::{argmax, batch_input, entropy, softmax_rows, Matrix, Model, Network, Output, Real, Sgd, TrainConfig};
use crate::{seeded, sub_seed, Error, InstanceId, Result, Warning};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `C + 1` outputs: every known class plus the super-class.
    Multiclass,
    /// Two outputs, known vs unknown; known predictions are refined by `f*`.
    BinarySuperclass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    /// Distillation weight.
    pub alpha: f64,
    /// Weight of the unlabeled loss.
    pub lambda_u: f64,
    /// Confidence threshold for pseudo-labels and for super-class targets.
    pub tau: f64,
    pub temperature: f64,
    pub train: TrainConfig,
    pub variant: Variant,
    /// Start `g` from `f*` (with an extra super-class output) instead of from scratch.
    pub init_from_f: bool,
    /// Apply the C′ cross-entropy only where `max g(x) ≥ τ`. Off by default:
    /// with the gate on, `g` stalls at the threshold and never learns C′.
    pub gate_novel: bool,
    /// Also treat labeled instances as unlabeled ones. Defaults to on for the
    /// binary variant and off for the multiclass one.
    pub fold_labeled: Option<bool>,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            lambda_u: 0.2,
            tau: 0.85,
            temperature: 3.0,
            train: TrainConfig::for_g(),
            variant: Variant::Multiclass,
            init_from_f: false,
            gate_novel: false,
            fold_labeled: None,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.alpha >= 0.0 && self.lambda_u >= 0.0) {
            return Err(Error::Parameter("alpha and lambda_u must be nonnegative".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!("temperature must be positive, got {}", self.temperature)));
        }
        self.train.validate()
    }

    pub fn folds_labeled(&self) -> bool {
        self.fold_labeled.unwrap_or(self.variant == Variant::BinarySuperclass)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SslBatchLoss {
    pub l_s: f64,
    pub l_u: f64,
    /// `l_s + λ_u·l_u`.
    pub total: f64,
    pub n_unlabeled_retained: usize,
    pub n_labeled_correct: usize,
}

/// Network inputs and cached teacher targets of one training step.
///
/// `labeled_teacher` / `unlabeled_teacher` hold `softmax_T(f*(x))` (N × C) in
/// the multiclass variant and `ψ(x)` (N × 2) in the binary one.
/// `labeled_aug` is only read by the binary variant.
#[derive(Clone, Debug, Default)]
pub struct SslBatch<S> {
    pub labeled: Vec<S>,
    pub labeled_aug: Vec<S>,
    pub targets: Vec<usize>,
    pub labeled_teacher: Vec<S>,
    pub unlabeled: Vec<S>,
    pub unlabeled_aug: Vec<S>,
    pub unlabeled_teacher: Vec<S>,
}

/// Evaluates one step. Returns the losses and the parameter gradients of
/// `L_s` and `L_u` separately; training descends `grad_s + λ_u·grad_u`.
pub fn batch_objective<S: Real>(net: &Network<S>, batch: &SslBatch<S>, variant: Variant, cfg: &SslConfig) -> (SslBatchLoss, Vec<S>, Vec<S>) {
    let cols = net.n_out();
    let n_lab = batch.targets.len();
    let n_unl = batch.unlabeled.len() / net.input_shape().len();
    let mut grad_s = vec![S::zero(); net.n_params()];
    let mut grad_u = vec![S::zero(); net.n_params()];
    let mut out = SslBatchLoss::default();

    if n_lab > 0 {
        let pass = net.forward(batch.labeled.clone(), n_lab);
        out.n_labeled_correct = (0..n_lab)
            .filter(|&i| argmax(&pass.logits()[i * cols..(i + 1) * cols]) == batch.targets[i])
            .count();
        match variant {
            Variant::Multiclass => {
                let (l, d) = loss::supervised(pass.logits(), cols, &batch.targets, cols - 1, &batch.labeled_teacher, cfg);
                out.l_s = l;
                net.backward(&pass, &d, &mut grad_s);
            }
            Variant::BinarySuperclass => {
                let aug = net.forward(batch.labeled_aug.clone(), n_lab);
                let (l, dc, da) = loss::binary_labeled(pass.logits(), aug.logits(), &batch.targets, &batch.labeled_teacher, cfg.alpha);
                out.l_s = l;
                net.backward(&pass, &dc, &mut grad_s);
                net.backward(&aug, &da, &mut grad_s);
            }
        }
    }
    if n_unl > 0 {
        let clean = net.forward(batch.unlabeled.clone(), n_unl);
        let aug = net.forward(batch.unlabeled_aug.clone(), n_unl);
        let (l, d, kept) = match variant {
            Variant::Multiclass => loss::unsupervised(clean.logits(), aug.logits(), cols, cols - 1, &batch.unlabeled_teacher, cfg),
            Variant::BinarySuperclass => loss::binary_unlabeled(clean.logits(), aug.logits(), &batch.unlabeled_teacher, cfg),
        };
        out.l_u = l;
        out.n_unlabeled_retained = kept;
        if kept > 0 {
            net.backward(&aug, &d, &mut grad_u);
        }
    }
    out.total = out.l_s + cfg.lambda_u * out.l_u;
    (out, grad_s, grad_u)
}

/// A training instance with its (possibly pseudo) target.
#[derive(Clone, Copy, Debug)]
pub struct Labeled<'a> {
    pub example: &'a Example,
    /// A known class or [`Output::Novel`].
    pub target: Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslEpochLog {
    pub epoch: usize,
    pub l_s: f64,
    pub l_u: f64,
    pub retained_fraction: f64,
    pub labeled_accuracy: f64,
}

pub fn write_epoch_csv<W: Write>(mut w: W, rows: &[SslEpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,l_s,l_u,retained_fraction,labeled_accuracy")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6},{:.6}", r.epoch, r.l_s, r.l_u, r.retained_fraction, r.labeled_accuracy)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainedG {
    pub model: Model,
    pub log: Vec<SslEpochLog>,
    pub warnings: Vec<Warning>,
}

/// `ψ(x) = [1 − ℓ, ℓ]` with `ℓ` the normalized prediction entropy of `f*`,
/// clamped away from 0 and 1.
pub fn psi(probs: &[f32]) -> Result<[f32; 2]> {
    const EPS: f64 = 1e-6;
    let c = probs.len();
    let ell = if c > 1 { f64::from(entropy(probs)) / (c as f64).ln() } else { 0.0 };
    let ell = ell.clamp(EPS, 1.0 - EPS);
    if !(0.0..=1.0).contains(&ell) {
        return Err(Error::State(format!("teacher score {ell} outside [0, 1]")));
    }
    Ok([(1.0 - ell) as f32, ell as f32])
}

/// Teacher targets for every example: `softmax_T(f*(x))` or `ψ(x)`.
fn teacher_targets(f_star: &Model, examples: &[&Example], variant: Variant, temperature: f64) -> Result<Vec<f32>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let logits = f_star.logits(examples)?;
    let c = logits.cols;
    match variant {
        Variant::Multiclass => {
            let t = temperature as f32;
            let scaled: Vec<f32> = logits.data.iter().map(|v| v / t).collect();
            Ok(softmax_rows(&scaled, c))
        }
        Variant::BinarySuperclass => {
            let p = softmax_rows(&logits.data, c);
            let mut out = Vec::with_capacity(2 * examples.len());
            for row in p.chunks_exact(c) {
                out.extend(psi(row)?);
            }
            Ok(out)
        }
    }
}

fn gather<T: Copy>(src: &[T], width: usize, idx: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

fn augmented(examples: &[&Example], rng: &mut crate::Rng) -> Vec<f32> {
    let len = examples.first().map_or(0, |e| e.pixels.len());
    let mut out = vec![0.0f32; examples.len() * len];
    for (e, chunk) in examples.iter().zip(out.chunks_exact_mut(len.max(1))) {
        AugmentDraw::sample(e.shape, rng).apply_into(&e.pixels, e.shape, chunk);
    }
    out
}

/// Builds and trains `g` on labeled instances (known-class exemplars plus
/// pseudo-labeled super-class instances) and the unlabeled pool, minus any
/// instance that is also labeled.
pub fn train_g(f_star: &Model, labeled: &[Labeled<'_>], unlabeled: &[Example], cfg: &SslConfig) -> Result<TrainedG> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::Precondition("no labeled instances for g".into()));
    }
    let mut warnings = Vec::new();
    let known = f_star.classes();
    let mut rng = seeded(sub_seed(cfg.train.seed, 0x6));

    // Targets as output indices.
    let (outputs, mut items): (Vec<Output>, Vec<(&Example, usize)>) = match cfg.variant {
        Variant::Multiclass => {
            let mut outputs: Vec<Output> = known.iter().map(|&c| Output::Class(c)).collect();
            outputs.push(Output::Novel);
            let items = labeled
                .iter()
                .map(|l| {
                    outputs
                        .iter()
                        .position(|o| *o == l.target)
                        .map(|t| (l.example, t))
                        .ok_or_else(|| Error::Input(format!("target {:?} is not an output of g", l.target)))
                })
                .collect::<Result<_>>()?;
            (outputs, items)
        }
        Variant::BinarySuperclass => {
            let novel: Vec<(&Example, usize)> = labeled.iter().filter(|l| l.target == Output::Novel).map(|l| (l.example, 1)).collect();
            let mut pos: Vec<(&Example, usize)> = labeled.iter().filter(|l| l.target != Output::Novel).map(|l| (l.example, 0)).collect();
            // Balance: as many known-class instances as super-class ones.
            if !novel.is_empty() && pos.len() > novel.len() {
                let mut keep = index::sample(&mut rng, pos.len(), novel.len()).into_vec();
                keep.sort_unstable();
                pos = keep.into_iter().map(|i| pos[i]).collect();
            }
            pos.extend(novel);
            (vec![Output::Known, Output::Novel], pos)
        }
    };
    items.sort_by_key(|(e, _)| e.id);

    // U excludes anything already labeled (D_out comes from the same pool).
    let labeled_ids: BTreeSet<InstanceId> = labeled.iter().map(|l| l.example.id).collect();
    let mut pool: Vec<&Example> = unlabeled.iter().filter(|e| !labeled_ids.contains(&e.id)).collect();
    if cfg.folds_labeled() {
        pool.extend(items.iter().map(|(e, _)| *e));
    }
    if pool.is_empty() {
        warnings.push(Warning::new("empty_unlabeled_pool", "training g on the supervised loss only"));
    }

    let input = f_star.net.input_shape();
    let mut model: Model = Model::new(f_star.net.arch(), input, outputs, sub_seed(cfg.train.seed, 0x9))?;
    if cfg.init_from_f {
        match cfg.variant {
            Variant::Multiclass => {
                model = f_star.clone();
                model.net.extend_head(1);
                model.outputs.push(Output::Novel);
            }
            Variant::BinarySuperclass => {
                let body = f_star.net.n_params() - f_star.net.n_out() * (f_star.net.embed_dim() + 1);
                model.net.params_mut()[..body].copy_from_slice(&f_star.net.params()[..body]);
            }
        }
    }

    let lab_examples: Vec<&Example> = items.iter().map(|(e, _)| *e).collect();
    let targets: Vec<usize> = items.iter().map(|(_, t)| *t).collect();
    let lab_teacher = teacher_targets(f_star, &lab_examples, cfg.variant, cfg.temperature)?;
    let pool_teacher = teacher_targets(f_star, &pool, cfg.variant, cfg.temperature)?;
    let tw = match cfg.variant {
        Variant::Multiclass => known.len(),
        Variant::BinarySuperclass => 2,
    };

    let mut opt = Sgd::new(&cfg.train, model.net.n_params());
    let lambda_u = cfg.lambda_u as f32;
    let mut lab_order: Vec<usize> = (0..items.len()).collect();
    let mut pool_order: Vec<usize> = (0..pool.len()).collect();
    pool_order.shuffle(&mut rng);
    let mut pool_cursor = 0;
    let mut log = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        lab_order.shuffle(&mut rng);
        let (mut ls, mut lu, mut kept, mut seen, mut correct, mut steps) = (0.0, 0.0, 0usize, 0usize, 0usize, 0usize);
        for idx in lab_order.chunks(cfg.train.batch_size) {
            let lab: Vec<&Example> = idx.iter().map(|&i| lab_examples[i]).collect();
            let mut uidx = Vec::with_capacity(idx.len());
            while !pool.is_empty() && uidx.len() < idx.len() {
                if pool_cursor == pool_order.len() {
                    pool_order.shuffle(&mut rng);
                    pool_cursor = 0;
                }
                uidx.push(pool_order[pool_cursor]);
                pool_cursor += 1;
            }
            let unl: Vec<&Example> = uidx.iter().map(|&i| pool[i]).collect();
            let batch = SslBatch {
                labeled: batch_input(&lab),
                labeled_aug: if cfg.variant == Variant::BinarySuperclass { augmented(&lab, &mut rng) } else { Vec::new() },
                targets: idx.iter().map(|&i| targets[i]).collect(),
                labeled_teacher: gather(&lab_teacher, tw, idx),
                unlabeled: batch_input(&unl),
                unlabeled_aug: augmented(&unl, &mut rng),
                unlabeled_teacher: gather(&pool_teacher, tw, &uidx),
            };
            let (loss, mut grad, grad_u) = batch_objective(&model.net, &batch, cfg.variant, cfg);
            if !loss.total.is_finite() {
                return Err(Error::State(format!("g training diverged in epoch {epoch}")));
            }
            for (g, u) in grad.iter_mut().zip(&grad_u) {
                *g += lambda_u * *u;
            }
            opt.step(model.net.params_mut(), &grad);
            ls += loss.l_s;
            lu += loss.l_u;
            kept += loss.n_unlabeled_retained;
            seen += unl.len();
            correct += loss.n_labeled_correct;
            steps += 1;
        }
        let row = SslEpochLog {
            epoch,
            l_s: ls / steps as f64,
            l_u: lu / steps as f64,
            retained_fraction: if seen > 0 { kept as f64 / seen as f64 } else { 0.0 },
            labeled_accuracy: correct as f64 / items.len() as f64,
        };
        log::debug!("g epoch {epoch}: {row:?}");
        log.push(row);
    }
    Ok(TrainedG { model, log, warnings })
}

/// Argmax output of `g` per instance; ties go to the lower output index.
pub fn classify_pool(g: &Model, pool: &[Example]) -> Result<BTreeMap<InstanceId, Output>> {
    if pool.is_empty() {
        return Ok(BTreeMap::new());
    }
    let logits = g.logits(pool)?;
    Ok(pool
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id, g.outputs[logits.argmax_row(i)]))
        .collect())
}

/// Two-stage decision of the binary variant: instances `g2` calls known get
/// `f*`'s argmax class, the rest the super-class.
pub fn classify_pool_binary(g2: &Model, f_star: &Model, pool: &[Example]) -> Result<BTreeMap<InstanceId, Output>> {
    if pool.is_empty() {
        return Ok(BTreeMap::new());
    }
    let known = g2
        .output_index(Output::Known)
        .ok_or_else(|| Error::Input("model has no known/unknown head".into()))?;
    let g_logits = g2.logits(pool)?;
    let f_logits = f_star.logits(pool)?;
    Ok(pool
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let out = if g_logits.argmax_row(i) == known { f_star.outputs[f_logits.argmax_row(i)] } else { Output::Novel };
            (e.id, out)
        })
        .collect())
}

/// Known-class probabilities of `g` renormalized without the super-class.
pub fn known_conditional<S: Real>(probs: &Matrix<S>, novel: usize) -> Matrix<S> {
    let mut data = Vec::with_capacity(probs.rows * (probs.cols - 1));
    for row in probs.iter_rows() {
        let sum: S = row.iter().enumerate().filter(|(j, _)| *j != novel).map(|(_, v)| *v).sum();
        data.extend(row.iter().enumerate().filter(|(j, _)| *j != novel).map(|(_, v)| *v / sum));
    }
    Matrix::new(probs.rows, probs.cols - 1, data)
}
