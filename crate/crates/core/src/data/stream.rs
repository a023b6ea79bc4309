use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::OscSplit;
use crate::{seeded, ClassId, Error, InstanceId, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassArrival {
    /// One novel class per window.
    Single,
    /// `l ~ U{1..|unknown|}` windows, unknown classes partitioned among them.
    Multi,
}

/// One segment of the stream: the pool that arrives together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// 1-based; window 0 is the initial training set.
    pub index: usize,
    pub instance_ids: Vec<InstanceId>,
    pub novel_classes: Vec<ClassId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub initial_classes: Vec<ClassId>,
    pub windows: Vec<Window>,
    /// Held-out instances contributed per known class per window (smallest class, rounded down).
    pub interval_size: usize,
}

impl StreamSchedule {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Splits `items` into `parts` contiguous chunks whose sizes differ by at most one.
fn even_chunks<T: Copy>(items: &[T], parts: usize) -> Vec<Vec<T>> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Arranges the test pool into windows where unknown classes arrive over time.
///
/// Each window carries every instance of its newly arriving classes. The
/// held-out instances of each initially known class are shuffled and dealt
/// into the windows in near-equal contiguous chunks, so every test instance
/// lands in exactly one window.
pub fn build_stream(split: &OscSplit, class_arrival: ClassArrival, seed: u64) -> Result<StreamSchedule> {
    if split.unknown_classes.is_empty() {
        return Err(Error::Precondition("stream needs at least one unknown class".into()));
    }
    let mut rng = seeded(seed);
    let mut unknown: Vec<ClassId> = split.unknown_classes.iter().copied().collect();
    unknown.shuffle(&mut rng);

    let groups: Vec<Vec<ClassId>> = match class_arrival {
        ClassArrival::Single => unknown.iter().map(|&c| vec![c]).collect(),
        ClassArrival::Multi => {
            let l = rng.random_range(1..=unknown.len());
            let mut cuts: Vec<usize> = if l > 1 {
                index::sample(&mut rng, unknown.len() - 1, l - 1)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect()
            } else {
                Vec::new()
            };
            cuts.sort_unstable();
            let mut groups = Vec::with_capacity(l);
            let mut start = 0;
            for cut in cuts.into_iter().chain(std::iter::once(unknown.len())) {
                let mut g = unknown[start..cut].to_vec();
                g.sort_unstable();
                groups.push(g);
                start = cut;
            }
            groups
        }
    };
    let n_windows = groups.len();

    let mut by_class: BTreeMap<ClassId, Vec<InstanceId>> = BTreeMap::new();
    for e in &split.test_pool {
        by_class.entry(e.class()).or_default().push(e.id);
    }

    let mut known_chunks: Vec<Vec<InstanceId>> = vec![Vec::new(); n_windows];
    let mut interval_size = usize::MAX;
    for class in &split.known_classes {
        let mut ids = by_class.get(class).cloned().unwrap_or_default();
        ids.shuffle(&mut rng);
        interval_size = interval_size.min(ids.len() / n_windows);
        for (w, chunk) in even_chunks(&ids, n_windows).into_iter().enumerate() {
            known_chunks[w].extend(chunk);
        }
    }
    if split.known_classes.is_empty() {
        interval_size = 0;
    }

    let windows = groups
        .into_iter()
        .zip(known_chunks)
        .enumerate()
        .map(|(w, (novel, known_ids))| {
            let mut ids = known_ids;
            for c in &novel {
                ids.extend(by_class.get(c).into_iter().flatten().copied());
            }
            ids.shuffle(&mut rng);
            Window {
                index: w + 1,
                instance_ids: ids,
                novel_classes: novel,
            }
        })
        .collect();

    Ok(StreamSchedule {
        initial_classes: split.known_classes.iter().copied().collect(),
        windows,
        interval_size,
    })
}
