//! Evaluation: confusion-based classification metrics, novelty F1, per-window
//! averages and forgetting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{ClassId, Error, InstanceId, Result};

/// Prediction label for instances that could not be mapped to any class.
pub const UNASSIGNED: ClassId = ClassId::MAX;

/// Rows are true labels, columns predicted labels, both in `label_order`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub label_order: Vec<ClassId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Tallies `(truth, prediction)` pairs over the union of labels seen.
    pub fn from_pairs(pairs: &[(ClassId, ClassId)]) -> Self {
        let labels: BTreeSet<ClassId> = pairs.iter().flat_map(|&(t, p)| [t, p]).collect();
        let label_order: Vec<ClassId> = labels.into_iter().collect();
        let mut counts = vec![vec![0; label_order.len()]; label_order.len()];
        for (t, p) in pairs {
            let i = label_order.binary_search(t).expect("label present");
            let j = label_order.binary_search(p).expect("label present");
            counts[i][j] += 1;
        }
        Self { label_order, counts }
    }

    /// Pairs every instance in `truth` with its prediction; a missing prediction counts as [`UNASSIGNED`].
    pub fn from_maps(truth: &BTreeMap<InstanceId, ClassId>, predicted: &BTreeMap<InstanceId, ClassId>) -> Self {
        let pairs: Vec<(ClassId, ClassId)> = truth
            .iter()
            .map(|(id, &t)| (t, predicted.get(id).copied().unwrap_or(UNASSIGNED)))
            .collect();
        Self::from_pairs(&pairs)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Macro average over classes with true instances.
    pub precision: f64,
    /// Macro average over classes with true instances.
    pub recall: f64,
    /// Support-weighted mean of per-class F1.
    pub weighted_f1: f64,
}

/// One-vs-rest metrics. Precision and recall are averaged over labels with at
/// least one true instance; a label seen only among predictions still costs
/// recall for the classes it absorbs.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("empty confusion matrix".into()));
    }
    let n = cm.label_order.len();
    let (mut p_sum, mut r_sum, mut f1_sum, mut classes) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..n {
        let support: u64 = cm.counts[i].iter().sum();
        if support == 0 {
            continue;
        }
        let tp = cm.counts[i][i];
        let predicted: u64 = (0..n).map(|r| cm.counts[r][i]).sum();
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = tp as f64 / support as f64;
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        p_sum += precision;
        r_sum += recall;
        f1_sum += support as f64 / total as f64 * f1;
        classes += 1;
    }
    Ok(ClassificationMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision: p_sum / classes as f64,
        recall: r_sum / classes as f64,
        weighted_f1: f1_sum,
    })
}

/// Unknown-vs-known tallies with unknown as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn tally(is_unknown: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (truth, predicted) in is_unknown {
            match (truth, predicted) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

/// F1 of the unknown class; `None` when there is nothing to detect and nothing was flagged.
pub fn f_out(c: &BinaryCounts) -> Option<f64> {
    let denom = 2 * c.tp + c.fp + c.fn_;
    (denom > 0).then(|| 2.0 * c.tp as f64 / denom as f64)
}

/// `(A* − mean(A)) / A*`.
pub fn forgetting(per_window_avg_acc: &[f64], a_star: f64) -> Result<f64> {
    if !(a_star > 0.0) {
        return Err(Error::Parameter(format!("A* must be positive, got {a_star}")));
    }
    if per_window_avg_acc.is_empty() {
        return Err(Error::Precondition("forgetting needs at least one window".into()));
    }
    let mean = per_window_avg_acc.iter().sum::<f64>() / per_window_avg_acc.len() as f64;
    Ok((a_star - mean) / a_star)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub weighted_f1: f64,
    pub f_out: Option<f64>,
    /// Accuracy of the current model on the frozen evaluation slice of each window so far.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub acc_per_classset: BTreeMap<usize, f64>,
}

impl WindowReport {
    pub fn new(window_index: usize, m: &ClassificationMetrics, f_out: Option<f64>) -> Self {
        Self {
            window_index,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            weighted_f1: m.weighted_f1,
            f_out,
            acc_per_classset: BTreeMap::new(),
        }
    }

    /// `A_k`: mean of the per-window accuracies of the current model.
    pub fn average_accuracy(&self) -> Option<f64> {
        if self.acc_per_classset.is_empty() {
            return None;
        }
        Some(self.acc_per_classset.values().sum::<f64>() / self.acc_per_classset.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub windows: Vec<WindowReport>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub weighted_f1: f64,
    /// Mean over windows where it is defined.
    pub f_out: Option<f64>,
}

pub fn average_over_windows(reports: &[WindowReport]) -> Result<RunReport> {
    if reports.is_empty() {
        return Err(Error::Precondition("no windows to average".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&WindowReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let f_outs: Vec<f64> = reports.iter().filter_map(|r| r.f_out).collect();
    Ok(RunReport {
        windows: reports.to_vec(),
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        weighted_f1: mean(|r| r.weighted_f1),
        f_out: (!f_outs.is_empty()).then(|| f_outs.iter().sum::<f64>() / f_outs.len() as f64),
    })
}

/// Columns: `window,accuracy,precision,recall,weighted_f1,f_out` (empty `f_out` when undefined).
pub fn write_windows_csv<W: Write>(mut w: W, reports: &[WindowReport]) -> std::io::Result<()> {
    writeln!(w, "window,accuracy,precision,recall,weighted_f1,f_out")?;
    for r in reports {
        let f = r.f_out.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            r.window_index, r.accuracy, r.precision, r.recall, r.weighted_f1, f
        )?;
    }
    Ok(())
}
