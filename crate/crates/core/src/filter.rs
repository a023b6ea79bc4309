//! Self-taught weighting of the unlabeled pool and selection of the
//! pseudo-labeled out-of-class set and the stored in-class exemplars.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::nn::{entropy, softmax_rows, ClassCenters, Model};
use crate::{seeded, ClassId, Error, InstanceId, Result, Warning};

/// Entropy (nats) of a probability vector.
pub fn prediction_entropy(probs: &[f64]) -> Result<f64> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-4 {
        return Err(Error::Input(format!("not a probability distribution (sum {sum})")));
    }
    Ok(entropy(probs).max(0.0))
}

/// Smallest squared Euclidean distance from `embedding` to any class center.
pub fn center_distance(embedding: &[f32], centers: &ClassCenters) -> Result<f64> {
    if centers.centers.is_empty() {
        return Err(Error::State("no class centers available".into()));
    }
    if centers.dim() != embedding.len() {
        return Err(Error::Input(format!(
            "embedding has {} dims, centers have {}",
            embedding.len(),
            centers.dim()
        )));
    }
    Ok(centers
        .centers
        .values()
        .map(|c| {
            c.iter()
                .zip(embedding)
                .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min))
}

/// Weight of one pool instance and the two components it is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolScore {
    pub id: InstanceId,
    pub entropy: f64,
    pub distance: f64,
    pub weight: f64,
}

/// `w = entropy + λ·distance` for every pool instance, in pool order.
pub fn score_pool(model_f: &Model, centers: &ClassCenters, pool: &[Example], lambda: f64) -> Result<Vec<PoolScore>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let (logits, emb) = model_f.logits_and_embeddings(pool)?;
    let probs = softmax_rows(&logits.data, logits.cols);
    pool.iter()
        .enumerate()
        .map(|(i, e)| {
            let p: Vec<f64> = probs[i * logits.cols..(i + 1) * logits.cols].iter().map(|&v| f64::from(v)).collect();
            let u = prediction_entropy(&p)?;
            let d = center_distance(emb.row(i), centers)?;
            Ok(PoolScore {
                id: e.id,
                entropy: u,
                distance: d,
                weight: u + lambda * d,
            })
        })
        .collect()
}

/// Rank order: larger weight first, then smaller id.
fn rank(a: &(InstanceId, f64), b: &(InstanceId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` instances with the largest weights, best first. Asking for more
/// than the pool holds returns the whole pool with a warning.
pub fn select_filtered(weights: &BTreeMap<InstanceId, f64>, k: usize) -> Result<(Vec<InstanceId>, Vec<Warning>)> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let mut items: Vec<(InstanceId, f64)> = weights.iter().map(|(&id, &w)| (id, w)).collect();
    if k >= items.len() {
        if k > items.len() {
            warnings.push(Warning::new(
                "k_exceeds_pool",
                format!("K = {k} but the pool holds {}; selecting all", items.len()),
            ));
        }
    } else {
        items.select_nth_unstable_by(k - 1, rank);
        items.truncate(k);
    }
    items.sort_unstable_by(rank);
    Ok((items.into_iter().map(|(id, _)| id).collect(), warnings))
}

/// Uniformly samples `k` instances of every class in `train`; a class with
/// fewer contributes all of them, with a warning.
pub fn select_exemplars(train: &[Example], k: usize, seed: u64) -> Result<(BTreeMap<ClassId, Vec<InstanceId>>, Vec<Warning>)> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let mut by_class: BTreeMap<ClassId, Vec<InstanceId>> = BTreeMap::new();
    for e in train {
        let class = e.label.ok_or_else(|| Error::Input(format!("instance {} has no label", e.id)))?;
        by_class.entry(class).or_default().push(e.id);
    }
    let mut rng = seeded(seed);
    let mut warnings = Vec::new();
    let mut out = BTreeMap::new();
    for (class, ids) in by_class {
        let picked: Vec<InstanceId> = if ids.len() <= k {
            if ids.len() < k {
                warnings.push(Warning::new(
                    "class_smaller_than_k",
                    format!("class {class} has {} instances, fewer than K = {k}", ids.len()),
                ));
            }
            ids
        } else {
            let mut idx = index::sample(&mut rng, ids.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| ids[i]).collect()
        };
        out.insert(class, picked);
    }
    Ok((out, warnings))
}

/// Result of filtering one pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Per-instance scores; dropped from JSON for large pools.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<PoolScore>>,
    pub d_out: Vec<InstanceId>,
    pub d_in: BTreeMap<ClassId, Vec<InstanceId>>,
    pub lambda_used: f64,
    pub k: usize,
    pub warnings: Vec<Warning>,
}

impl FilterOutcome {
    pub fn weights(&self) -> BTreeMap<InstanceId, f64> {
        self.scores.iter().flatten().map(|s| (s.id, s.weight)).collect()
    }

    /// JSON with scores only when the pool has at most `max_scores` instances.
    pub fn to_json(&self, max_scores: usize) -> Result<String> {
        if self.scores.as_ref().is_some_and(|s| s.len() > max_scores) {
            let slim = FilterOutcome {
                scores: None,
                ..self.clone()
            };
            return Ok(serde_json::to_string_pretty(&slim)?);
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Scores the pool, takes the top `k` as super-class instances and samples
/// `k` exemplars per class from `exemplar_source`.
pub fn filter_pool(
    model_f: &Model,
    centers: &ClassCenters,
    pool: &[Example],
    exemplar_source: &[Example],
    k: usize,
    lambda: f64,
    seed: u64,
) -> Result<FilterOutcome> {
    let scores = score_pool(model_f, centers, pool, lambda)?;
    let weights = scores.iter().map(|s| (s.id, s.weight)).collect();
    let (d_out, mut warnings) = select_filtered(&weights, k)?;
    let (d_in, w2) = select_exemplars(exemplar_source, k, seed)?;
    warnings.extend(w2);
    Ok(FilterOutcome {
        scores: Some(scores),
        d_out,
        d_in,
        lambda_used: lambda,
        k,
        warnings,
    })
}

/// Fraction of `d_out` whose true class is unknown.
pub fn purity(d_out: &[InstanceId], truth: &BTreeMap<InstanceId, ClassId>, unknown: &BTreeSet<ClassId>) -> f64 {
    if d_out.is_empty() {
        return 0.0;
    }
    let hits = d_out
        .iter()
        .filter(|id| truth.get(id).is_some_and(|c| unknown.contains(c)))
        .count();
    hits as f64 / d_out.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(prediction_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((prediction_entropy(&[0.2; 5]).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!((prediction_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(prediction_entropy(&[0.5, 0.6]), Err(Error::Input(_))));
    }

    #[test]
    fn distance_examples() {
        let centers = ClassCenters {
            centers: [(0, vec![3.0, 4.0]), (1, vec![6.0, 8.0])].into_iter().collect(),
            source_model: String::new(),
        };
        assert_eq!(center_distance(&[0.0, 0.0], &centers).unwrap(), 25.0);
        assert_eq!(center_distance(&[6.0, 8.0], &centers).unwrap(), 0.0);
        let empty = ClassCenters {
            centers: BTreeMap::new(),
            source_model: String::new(),
        };
        assert!(matches!(center_distance(&[0.0], &empty), Err(Error::State(_))));
    }

    #[test]
    fn selection_examples() {
        let w: BTreeMap<InstanceId, f64> = [(1, 3.0), (2, 1.0), (3, 2.0)].into_iter().collect();
        assert_eq!(select_filtered(&w, 2).unwrap().0, vec![1, 3]);
        let (all, warn) = select_filtered(&w, 3).unwrap();
        assert_eq!(all.len(), 3);
        assert!(warn.is_empty());
        let (all, warn) = select_filtered(&w, 5).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(warn.len(), 1);
        let tie: BTreeMap<InstanceId, f64> = [(9, 1.0), (4, 1.0), (7, 0.5)].into_iter().collect();
        assert_eq!(select_filtered(&tie, 1).unwrap().0, vec![4]);
        assert!(matches!(select_filtered(&w, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn exemplars_per_class() {
        let train: Vec<Example> = (0..30)
            .map(|i| Example::new(i, crate::data::ImageShape::new(1, 1, 1), vec![0.0], Some((i % 3) as u32)))
            .collect();
        let (d_in, warn) = select_exemplars(&train, 4, 1).unwrap();
        assert!(d_in.values().all(|v| v.len() == 4));
        assert!(warn.is_empty());
        assert_eq!(d_in, select_exemplars(&train, 4, 1).unwrap().0);
        let (d_in, warn) = select_exemplars(&train, 12, 1).unwrap();
        assert!(d_in.values().all(|v| v.len() == 10));
        assert_eq!(warn.len(), 3);
    }

    #[test]
    fn json_elides_large_score_lists() {
        let out = FilterOutcome {
            scores: Some(vec![PoolScore { id: 1, entropy: 0.5, distance: 2.0, weight: 2.5 }]),
            d_out: vec![1],
            d_in: BTreeMap::new(),
            lambda_used: 1.0,
            k: 1,
            warnings: vec![],
        };
        assert!(out.to_json(10).unwrap().contains("scores"));
        let slim = FilterOutcome::from_json(&out.to_json(0).unwrap()).unwrap();
        assert!(slim.scores.is_none());
        assert_eq!(slim.d_out, vec![1]);
    }
}
