use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{class_set, Example};
use crate::{seeded, ClassId, Error, InstanceId, Result};

/// Known-class training data plus a mixed test pool whose labels are kept only for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct OscSplit {
    pub train: Vec<Example>,
    pub test_pool: Vec<Example>,
    pub known_classes: BTreeSet<ClassId>,
    pub unknown_classes: BTreeSet<ClassId>,
}

/// Id-level description of a split, persisted for replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub known_classes: Vec<ClassId>,
    pub unknown_classes: Vec<ClassId>,
    pub train_ids: Vec<InstanceId>,
    pub test_ids: Vec<InstanceId>,
}

impl OscSplit {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            known_classes: self.known_classes.iter().copied().collect(),
            unknown_classes: self.unknown_classes.iter().copied().collect(),
            train_ids: self.train.iter().map(|e| e.id).collect(),
            test_ids: self.test_pool.iter().map(|e| e.id).collect(),
        }
    }

    /// Ground truth for every test-pool instance.
    pub fn truth(&self) -> BTreeMap<InstanceId, ClassId> {
        self.test_pool.iter().map(|e| (e.id, e.class())).collect()
    }

    pub fn is_unknown(&self, class: ClassId) -> bool {
        self.unknown_classes.contains(&class)
    }
}

/// Builds an open set split.
///
/// `round(known_fraction × #classes)` classes are drawn as known and the next
/// `n_unknown` as unknown. Each known class is shuffled and
/// `round(known_holdout × count)` of it moves to the test pool (stratified);
/// every unknown-class instance goes to the test pool. Classes drawn as
/// neither are left out.
pub fn make_osc_split(
    dataset: &[Example],
    known_fraction: f64,
    n_unknown: usize,
    known_holdout: f64,
    seed: u64,
) -> Result<OscSplit> {
    if n_unknown == 0 {
        return Err(Error::Protocol(
            "open set classification needs at least one unknown class".into(),
        ));
    }
    if !(known_holdout > 0.0 && known_holdout < 1.0) {
        return Err(Error::Parameter(format!(
            "known_holdout must lie in (0, 1), got {known_holdout}"
        )));
    }
    if !(known_fraction > 0.0 && known_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "known_fraction must lie in (0, 1), got {known_fraction}"
        )));
    }
    if let Some(e) = dataset.iter().find(|e| e.label.is_none()) {
        return Err(Error::Input(format!("instance {} has no label", e.id)));
    }
    let mut classes = class_set(dataset);
    let n_known = ((known_fraction * classes.len() as f64).round() as usize).max(1);
    if n_known + n_unknown > classes.len() {
        return Err(Error::Precondition(format!(
            "{} classes available but {n_known} known + {n_unknown} unknown requested",
            classes.len()
        )));
    }

    let mut rng = seeded(seed);
    classes.shuffle(&mut rng);
    let known: BTreeSet<ClassId> = classes[..n_known].iter().copied().collect();
    let unknown: BTreeSet<ClassId> = classes[n_known..n_known + n_unknown].iter().copied().collect();

    let mut held_out: BTreeSet<InstanceId> = BTreeSet::new();
    for &class in &known {
        let mut ids: Vec<InstanceId> = dataset
            .iter()
            .filter(|e| e.label == Some(class))
            .map(|e| e.id)
            .collect();
        ids.shuffle(&mut rng);
        let take = (known_holdout * ids.len() as f64).round() as usize;
        held_out.extend(&ids[..take]);
    }

    let mut train = Vec::new();
    let mut test_pool = Vec::new();
    for e in dataset {
        let class = e.class();
        if unknown.contains(&class) || held_out.contains(&e.id) {
            test_pool.push(e.clone());
        } else if known.contains(&class) {
            train.push(e.clone());
        }
    }
    if !test_pool.iter().any(|e| known.contains(&e.class())) {
        return Err(Error::Precondition(
            "known_holdout leaves no known-class instance in the test pool".into(),
        ));
    }
    if !test_pool.iter().any(|e| unknown.contains(&e.class())) {
        return Err(Error::Precondition("unknown classes have no instances".into()));
    }

    Ok(OscSplit {
        train,
        test_pool,
        known_classes: known,
        unknown_classes: unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageShape;

    fn ten_class(per_class: usize) -> Vec<Example> {
        (0..10 * per_class)
            .map(|i| {
                Example::new(
                    i as u64,
                    ImageShape::new(1, 1, 1),
                    vec![0.5],
                    Some((i % 10) as u32),
                )
            })
            .collect()
    }

    #[test]
    fn half_known_one_unknown() {
        let ds = ten_class(100);
        let s = make_osc_split(&ds, 0.5, 1, 0.33, 7).unwrap();
        assert_eq!(s.known_classes.len(), 5);
        assert_eq!(s.unknown_classes.len(), 1);
        assert!(s.known_classes.is_disjoint(&s.unknown_classes));
        assert!(s.train.iter().all(|e| s.known_classes.contains(&e.class())));
        // 33 of each known class held out, plus the full unknown class.
        assert_eq!(s.train.len(), 5 * 67);
        assert_eq!(s.test_pool.len(), 5 * 33 + 100);
        for &c in &s.known_classes {
            assert_eq!(s.test_pool.iter().filter(|e| e.class() == c).count(), 33);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = ten_class(20);
        assert_eq!(
            make_osc_split(&ds, 0.5, 2, 0.33, 3).unwrap(),
            make_osc_split(&ds, 0.5, 2, 0.33, 3).unwrap()
        );
        assert_ne!(
            make_osc_split(&ds, 0.5, 2, 0.33, 3).unwrap().manifest(),
            make_osc_split(&ds, 0.5, 2, 0.33, 4).unwrap().manifest()
        );
    }

    #[test]
    fn five_unknown_uses_every_remaining_class() {
        let s = make_osc_split(&ten_class(10), 0.5, 5, 0.33, 1).unwrap();
        let all: BTreeSet<_> = s.known_classes.union(&s.unknown_classes).copied().collect();
        assert_eq!(all, (0..10).collect());
    }

    #[test]
    fn partition_covers_selected_classes() {
        let ds = ten_class(30);
        let s = make_osc_split(&ds, 0.5, 3, 0.4, 11).unwrap();
        let train: BTreeSet<_> = s.train.iter().map(|e| e.id).collect();
        let test: BTreeSet<_> = s.test_pool.iter().map(|e| e.id).collect();
        assert!(train.is_disjoint(&test));
        let used: BTreeSet<_> = ds
            .iter()
            .filter(|e| s.known_classes.contains(&e.class()) || s.unknown_classes.contains(&e.class()))
            .map(|e| e.id)
            .collect();
        assert_eq!(train.union(&test).copied().collect::<BTreeSet<_>>(), used);
    }

    #[test]
    fn rejects_zero_unknown_and_bad_holdout() {
        let ds = ten_class(5);
        assert!(matches!(make_osc_split(&ds, 0.5, 0, 0.33, 0), Err(Error::Protocol(_))));
        assert!(matches!(make_osc_split(&ds, 0.5, 1, 1.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(make_osc_split(&ds, 0.5, 6, 0.33, 0), Err(Error::Precondition(_))));
    }
}
