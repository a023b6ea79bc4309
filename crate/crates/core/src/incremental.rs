//! Exemplar memory and the replay-plus-distillation update of `f` when new
//! classes are revealed on a stream.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Example, OscSplit};
use crate::nn::{log_softmax_rows, softmax_rows, Model, Output, Real, Sgd, TrainConfig, TrainLog};
use crate::{seeded, sub_seed, ClassId, Error, InstanceId, Result, Warning};

/// Bounded per-class exemplar store.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBuffer {
    pub capacity: usize,
    /// Exemplars per class in insertion order.
    pub store: BTreeMap<ClassId, Vec<Example>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryManifest {
    pub capacity: usize,
    pub classes: BTreeMap<ClassId, Vec<InstanceId>>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            store: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `floor(capacity / #classes)`, or the whole capacity when empty.
    pub fn per_class_quota(&self) -> usize {
        self.capacity / self.store.len().max(1)
    }

    pub fn examples(&self) -> Vec<&Example> {
        self.store.values().flatten().collect()
    }

    /// Owned copy of every exemplar, ordered by class then insertion.
    pub fn to_vec(&self) -> Vec<Example> {
        self.store.values().flatten().cloned().collect()
    }

    pub fn manifest(&self) -> MemoryManifest {
        MemoryManifest {
            capacity: self.capacity,
            classes: self
                .store
                .iter()
                .map(|(c, v)| (*c, v.iter().map(|e| e.id).collect()))
                .collect(),
        }
    }
}

/// Adds the classes of `new_class_data` to the memory.
///
/// The quota becomes `floor(M / #classes)`; existing classes above it drop
/// their most recently added exemplars, and each new class stores a uniform
/// random sample of at most the quota. Classes in `declared` without data are
/// skipped with a warning.
pub fn update_memory(memory: &mut MemoryBuffer, declared: &[ClassId], new_class_data: &[Example], seed: u64) -> Result<Vec<Warning>> {
    let mut by_class: BTreeMap<ClassId, Vec<&Example>> = BTreeMap::new();
    for e in new_class_data {
        let c = e.label.ok_or_else(|| Error::Input(format!("instance {} has no label", e.id)))?;
        if memory.store.contains_key(&c) {
            return Err(Error::Protocol(format!("class {c} is already in memory")));
        }
        by_class.entry(c).or_default().push(e);
    }
    let mut warnings = Vec::new();
    for c in declared {
        if !by_class.contains_key(c) {
            warnings.push(Warning::new("empty_new_class", format!("class {c} has no instances; not stored")));
        }
    }
    if by_class.is_empty() {
        return Ok(warnings);
    }
    let n_classes = memory.store.len() + by_class.len();
    let quota = memory.capacity / n_classes;
    if quota == 0 {
        warnings.push(Warning::new(
            "memory_too_small",
            format!("capacity {} cannot hold one exemplar for each of {n_classes} classes", memory.capacity),
        ));
    }
    for v in memory.store.values_mut() {
        v.truncate(quota);
    }
    let mut rng = seeded(seed);
    for (c, items) in by_class {
        let take = quota.min(items.len());
        let idx = index::sample(&mut rng, items.len(), take);
        memory.store.insert(c, idx.into_iter().map(|i| items[i].clone()).collect());
    }
    Ok(warnings)
}

/// Labeled data handed to the update of window `window_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdatePacket {
    /// Instances flagged as novel, with their revealed labels.
    pub newly_labeled: Vec<Example>,
    /// Revealed classes that the previous model does not know.
    pub new_classes: Vec<ClassId>,
    pub window_index: usize,
    /// Raw output distribution of the previous model on every memory exemplar.
    pub q_targets: BTreeMap<InstanceId, Vec<f32>>,
}

/// Softmax outputs of `f_prev` on the memory, taken before any update.
pub fn compute_q_targets(f_prev: &Model, memory: &MemoryBuffer) -> Result<BTreeMap<InstanceId, Vec<f32>>> {
    let examples = memory.examples();
    if examples.is_empty() {
        return Ok(BTreeMap::new());
    }
    let logits = f_prev.logits(&examples)?;
    let probs = softmax_rows(&logits.data, logits.cols);
    Ok(examples
        .iter()
        .zip(probs.chunks_exact(logits.cols))
        .map(|(e, p)| (e.id, p.to_vec()))
        .collect())
}

/// SHA-256 over the stored targets, used to check they are never modified.
pub fn q_targets_digest(q: &BTreeMap<InstanceId, Vec<f32>>) -> String {
    let mut h = Sha256::new();
    for (id, p) in q {
        h.update(id.to_le_bytes());
        h.update((p.len() as u64).to_le_bytes());
        for v in p {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Instances predicted as the super-class, with their true labels attached.
pub fn label_oracle(predictions: &BTreeMap<InstanceId, Output>, truth_source: &OscSplit) -> Vec<Example> {
    truth_source
        .test_pool
        .iter()
        .filter(|e| predictions.get(&e.id) == Some(&Output::Novel))
        .cloned()
        .collect()
}

/// Per-batch mean of `−log p_y` over all rows plus `−Σ q·log p` over rows that carry a stored target.
/// Returns the loss and its gradient w.r.t. the logits.
pub fn incremental_loss<S: Real>(logits: &[S], cols: usize, targets: &[usize], q: &[Option<&[S]>]) -> (f64, Vec<S>) {
    let n = targets.len();
    let mut grad = vec![S::zero(); logits.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / n as f64;
    let s = S::lit(scale);
    let logp = log_softmax_rows(logits, cols);
    let mut loss = 0.0;
    for i in 0..n {
        let lp = &logp[i * cols..(i + 1) * cols];
        let g = &mut grad[i * cols..(i + 1) * cols];
        loss -= scale * lp[targets[i]].as_f64();
        for (gj, &l) in g.iter_mut().zip(lp) {
            *gj += s * l.exp();
        }
        g[targets[i]] -= s;
        if let Some(qi) = q[i] {
            let mass: S = qi.iter().copied().sum();
            for j in 0..cols {
                let qj = qi.get(j).copied().unwrap_or_else(S::zero);
                loss -= scale * (qj * lp[j]).as_f64();
                g[j] += s * (mass * lp[j].exp() - qj);
            }
        }
    }
    (loss, grad)
}

/// Result of one incremental update.
#[derive(Clone, Debug)]
pub struct UpdatedModel {
    pub model: Model,
    pub log: TrainLog,
}

/// Extends `f_prev` with the packet's new classes and trains it on the newly
/// labeled data plus the memory, distilling the stored targets on memory items.
pub fn incremental_update(f_prev: &Model, memory: &MemoryBuffer, packet: &UpdatePacket, cfg: &TrainConfig) -> Result<UpdatedModel> {
    cfg.validate()?;
    if packet.newly_labeled.is_empty() {
        return Err(Error::Precondition("no newly labeled instances".into()));
    }
    let mem = memory.examples();
    if mem.len() != packet.q_targets.len() || mem.iter().any(|e| !packet.q_targets.contains_key(&e.id)) {
        return Err(Error::Consistency("stored targets do not cover exactly the memory".into()));
    }
    let mut model = f_prev.clone();
    model.extend_classes(&packet.new_classes)?;
    let cols = model.n_outputs();

    let mut items: Vec<(&Example, usize, Option<&[f32]>)> = Vec::with_capacity(packet.newly_labeled.len() + mem.len());
    for e in packet.newly_labeled.iter() {
        let c = e.label.ok_or_else(|| Error::Input(format!("instance {} has no label", e.id)))?;
        let t = model.class_index(c).ok_or_else(|| Error::Input(format!("label {c} is neither known nor declared new")))?;
        items.push((e, t, None));
    }
    for e in mem {
        let c = e.class();
        let t = model.class_index(c).ok_or_else(|| Error::Consistency(format!("memory class {c} unknown to the model")))?;
        items.push((e, t, Some(packet.q_targets[&e.id].as_slice())));
    }

    let mut rng = seeded(sub_seed(cfg.seed, 0x1C));
    let mut opt = Sgd::new(cfg, model.net.n_params());
    let mut grads = vec![0.0f32; model.net.n_params()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| items[i].0).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| items[i].1).collect();
            let q: Vec<Option<&[f32]>> = idx.iter().map(|&i| items[i].2).collect();
            let pass = model.forward(&batch);
            let (loss, d) = incremental_loss(pass.logits(), cols, &targets, &q);
            if !loss.is_finite() {
                return Err(Error::State(format!("incremental update diverged in epoch {epoch}")));
            }
            total += loss * idx.len() as f64;
            grads.fill(0.0);
            model.net.backward(&pass, &d, &mut grads);
            opt.step(model.net.params_mut(), &grads);
        }
        log.epoch_loss.push(total / items.len() as f64);
    }
    Ok(UpdatedModel { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageShape;

    fn class_data(class: ClassId, n: usize, first_id: u64) -> Vec<Example> {
        (0..n as u64)
            .map(|i| Example::new(first_id + i, ImageShape::new(1, 1, 1), vec![0.0], Some(class)))
            .collect()
    }

    #[test]
    fn quota_shrinks_from_400_to_333() {
        let mut m = MemoryBuffer::new(2000);
        let mut data = Vec::new();
        for c in 0..5 {
            data.extend(class_data(c, 500, c as u64 * 1000));
        }
        update_memory(&mut m, &[], &data, 0).unwrap();
        assert!(m.store.values().all(|v| v.len() == 400));
        update_memory(&mut m, &[5], &class_data(5, 500, 9000), 1).unwrap();
        assert!(m.store.values().all(|v| v.len() == 333));
        assert!(m.len() <= 2000);
    }

    #[test]
    fn small_class_fits_entirely() {
        let mut m = MemoryBuffer::new(2000);
        update_memory(&mut m, &[3], &class_data(3, 10, 0), 0).unwrap();
        assert_eq!(m.len(), 10);
    }

    #[test]
    fn forced_quota_of_one() {
        let mut m = MemoryBuffer::new(4);
        let mut d = class_data(0, 2, 0);
        d.extend(class_data(1, 2, 10));
        update_memory(&mut m, &[], &d, 0).unwrap();
        let first: Vec<InstanceId> = m.store[&0].iter().map(|e| e.id).collect();
        let mut d = class_data(2, 2, 20);
        d.extend(class_data(3, 2, 30));
        update_memory(&mut m, &[], &d, 0).unwrap();
        assert!(m.store.values().all(|v| v.len() == 1));
        // The earliest stored exemplar survives.
        assert_eq!(m.store[&0][0].id, first[0]);
    }

    #[test]
    fn empty_new_class_warns_and_collisions_fail() {
        let mut m = MemoryBuffer::new(10);
        update_memory(&mut m, &[], &class_data(0, 3, 0), 0).unwrap();
        let warn = update_memory(&mut m, &[7], &[], 0).unwrap();
        assert_eq!(warn[0].code, "empty_new_class");
        assert!(matches!(update_memory(&mut m, &[], &class_data(0, 1, 50), 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn loss_without_memory_is_cross_entropy() {
        let logits = [0.2f64, 1.0, -0.5];
        let (l, _) = incremental_loss(&logits, 3, &[1], &[None]);
        let lp = log_softmax_rows(&logits, 3);
        assert!((l + lp[1]).abs() < 1e-12);
    }

    #[test]
    fn self_distillation_term_at_initialization() {
        // q equals the model's own distribution: the distillation term is its entropy.
        let logits = [0.3f64, -0.2];
        let q = softmax_rows(&logits, 2);
        let (with, _) = incremental_loss(&logits, 2, &[0], &[Some(&q)]);
        let (without, _) = incremental_loss(&logits, 2, &[0], &[None]);
        let h = -q.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((with - without - h).abs() < 1e-12);
    }
}
