//! k-means over embeddings and cluster-to-class matching for scoring.

use std::collections::{BTreeMap, BTreeSet};

use pathfinding::kuhn_munkres::kuhn_munkres;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::{seeded, ClassId, Error, InstanceId, Result};

/// Lloyd iterations from a k-means++ start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations_run: usize,
    /// Within-cluster sum of squares after the initial assignment and after every iteration.
    pub wcss_history: Vec<f64>,
}

impl KMeans {
    pub fn wcss(&self) -> f64 {
        *self.wcss_history.last().expect("at least one assignment")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Reassigns each point to its nearest centroid. A point only moves when
/// another centroid is strictly closer; the first pass breaks ties by index.
fn assign(points: &Matrix<f64>, centroids: &[Vec<f64>], labels: &mut [usize], first: bool) -> (f64, bool) {
    let mut total = 0.0;
    let mut changed = false;
    for (i, p) in points.iter_rows().enumerate() {
        let mut best = if first { 0 } else { labels[i] };
        let mut best_d = sq_dist(p, &centroids[best]);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        changed |= best != labels[i];
        labels[i] = best;
        total += best_d;
    }
    (total, changed)
}

pub fn kmeans(points: &Matrix<f64>, b: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeans> {
    let n = points.rows;
    if b == 0 {
        return Err(Error::Parameter("number of clusters must be at least 1".into()));
    }
    if n < b {
        return Err(Error::Infeasible(format!("{n} points cannot form {b} clusters")));
    }
    let mut rng = seeded(seed);

    // k-means++ seeding.
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < b {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(&mut rng),
            // Every remaining point coincides with a chosen one.
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        for (i, p) in points.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| points.row(i).to_vec()).collect();

    let mut labels = vec![0; n];
    let (w, _) = assign(points, &centroids, &mut labels, true);
    let mut history = vec![w];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; points.cols]; b];
        let mut counts = vec![0usize; b];
        for (p, &l) in points.iter_rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..b {
            // An empty cluster keeps its centroid.
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        let (w, changed) = assign(points, &centroids, &mut labels, false);
        history.push(w);
        if !changed || shift < tol {
            break;
        }
    }
    Ok(KMeans {
        labels,
        centroids,
        iterations_run: iterations,
        wcss_history: history,
    })
}

/// Cluster index of every clustered instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub assignments: BTreeMap<InstanceId, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations_run: usize,
}

impl ClusterAssignment {
    pub fn new(ids: &[InstanceId], km: &KMeans) -> Self {
        Self {
            assignments: ids.iter().copied().zip(km.labels.iter().copied()).collect(),
            centroids: km.centroids.clone(),
            iterations_run: km.iterations_run,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }
}

/// Optimal one-to-one cluster → class map; clusters left over when there are
/// fewer classes map to `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatch {
    pub mapping: BTreeMap<usize, Option<ClassId>>,
    /// Instances whose cluster maps to their true class.
    pub matched: u64,
}

/// Hungarian matching on the cluster × class contingency table.
pub fn match_clusters(assignment: &ClusterAssignment, truth: &BTreeMap<InstanceId, ClassId>) -> Result<ClusterMatch> {
    let mut classes = BTreeSet::new();
    for id in assignment.assignments.keys() {
        classes.insert(*truth.get(id).ok_or_else(|| Error::Input(format!("no ground truth for instance {id}")))?);
    }
    match_clusters_among(assignment, truth, &classes)
}

/// Like [`match_clusters`] but only `classes` are eligible targets;
/// instances of other classes never count as matches.
pub fn match_clusters_among(
    assignment: &ClusterAssignment,
    truth: &BTreeMap<InstanceId, ClassId>,
    classes: &BTreeSet<ClassId>,
) -> Result<ClusterMatch> {
    let b = assignment.n_clusters();
    let classes: Vec<ClassId> = classes.iter().copied().collect();
    let mut table = vec![vec![0i64; classes.len()]; b];
    for (id, &cluster) in &assignment.assignments {
        let class = truth.get(id).ok_or_else(|| Error::Input(format!("no ground truth for instance {id}")))?;
        if let Ok(j) = classes.binary_search(class) {
            table[cluster][j] += 1;
        }
    }
    let mut mapping: BTreeMap<usize, Option<ClassId>> = (0..b).map(|c| (c, None)).collect();
    if b == 0 || classes.is_empty() {
        return Ok(ClusterMatch { mapping, matched: 0 });
    }
    // kuhn_munkres needs rows ≤ columns.
    let matched = if b <= classes.len() {
        let weights = pathfinding::matrix::Matrix::from_rows(table).expect("rectangular");
        let (total, cols) = kuhn_munkres(&weights);
        for (cluster, j) in cols.into_iter().enumerate() {
            mapping.insert(cluster, Some(classes[j]));
        }
        total
    } else {
        let transposed: Vec<Vec<i64>> = (0..classes.len()).map(|j| table.iter().map(|r| r[j]).collect()).collect();
        let weights = pathfinding::matrix::Matrix::from_rows(transposed).expect("rectangular");
        let (total, cols) = kuhn_munkres(&weights);
        for (j, cluster) in cols.into_iter().enumerate() {
            mapping.insert(cluster, Some(classes[j]));
        }
        total
    };
    Ok(ClusterMatch {
        mapping,
        matched: matched as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Matrix<f64> {
        Matrix::new(rows.len(), 2, rows.iter().flatten().copied().collect())
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let p = pts(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]);
        let km = kmeans(&p, 1, 0, 50, 1e-9).unwrap();
        assert!(km.labels.iter().all(|&l| l == 0));
        assert!(sq_dist(&km.centroids[0], &[1.0, 1.0]) < 1e-20);
    }

    #[test]
    fn each_point_its_own_cluster() {
        let p = pts(&[[0.0, 0.0], [5.0, 1.0], [-3.0, 2.0]]);
        let km = kmeans(&p, 3, 4, 50, 1e-9).unwrap();
        assert_eq!(km.wcss(), 0.0);
        assert_eq!(km.labels.iter().collect::<BTreeSet<_>>().len(), 3);
        assert!(matches!(kmeans(&p, 4, 0, 10, 0.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn separated_blobs() {
        let p = pts(&[[0.0, 0.0], [0.1, 0.2], [0.2, 0.0], [10.0, 10.0], [10.1, 9.9], [9.8, 10.2]]);
        let km = kmeans(&p, 2, 1, 50, 1e-9).unwrap();
        assert_eq!(km.labels[0], km.labels[1]);
        assert_eq!(km.labels[0], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[4]);
        assert_eq!(km.labels[3], km.labels[5]);
        assert_ne!(km.labels[0], km.labels[3]);
    }

    fn assignment(pairs: &[(InstanceId, usize)], b: usize) -> ClusterAssignment {
        ClusterAssignment {
            assignments: pairs.iter().copied().collect(),
            centroids: vec![vec![]; b],
            iterations_run: 0,
        }
    }

    #[test]
    fn two_by_two_contingency() {
        // Table [[5, 1], [2, 4]].
        let mut pairs = Vec::new();
        let mut truth = BTreeMap::new();
        let mut id = 0;
        for (cluster, class, count) in [(0, 0, 5), (0, 1, 1), (1, 0, 2), (1, 1, 4)] {
            for _ in 0..count {
                pairs.push((id, cluster));
                truth.insert(id, class);
                id += 1;
            }
        }
        let m = match_clusters(&assignment(&pairs, 2), &truth).unwrap();
        assert_eq!(m.matched, 9);
        assert_eq!(m.mapping[&0], Some(0));
        assert_eq!(m.mapping[&1], Some(1));
    }

    #[test]
    fn extra_clusters_are_unmatched() {
        let truth: BTreeMap<InstanceId, ClassId> = [(0, 7), (1, 7), (2, 7)].into_iter().collect();
        let m = match_clusters(&assignment(&[(0, 0), (1, 1), (2, 1)], 2), &truth).unwrap();
        assert_eq!(m.mapping[&0], None);
        assert_eq!(m.mapping[&1], Some(7));
        assert_eq!(m.matched, 2);
    }

    #[test]
    fn permuted_diagonal() {
        let truth: BTreeMap<InstanceId, ClassId> = [(0, 5), (1, 6), (2, 7)].into_iter().collect();
        let m = match_clusters(&assignment(&[(0, 2), (1, 0), (2, 1)], 3), &truth).unwrap();
        assert_eq!(m.mapping[&2], Some(5));
        assert_eq!(m.mapping[&0], Some(6));
        assert_eq!(m.mapping[&1], Some(7));
    }
}
