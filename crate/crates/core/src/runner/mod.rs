//! End-to-end experiments: open set classification, the incremental stream,
//! the max-softmax baseline and the K sweep, with every intermediate artifact
//! written under one output directory.

mod config;
mod plots;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ArchKind, DatasetKind, ExperimentConfig, Protocol, VariantChoice};
pub use plots::{emit_plots, pca_2d};

use crate::cluster::{kmeans, match_clusters_among, ClusterAssignment};
use crate::data::{build_stream, load_idx_dataset, make_osc_split, Example, OscSplit, StreamSchedule};
use crate::filter::{filter_pool, purity};
use crate::incremental::{compute_q_targets, incremental_update, label_oracle, q_targets_digest, update_memory, MemoryBuffer, UpdatePacket};
use crate::metrics::{average_over_windows, classification_metrics, f_out, forgetting, write_windows_csv, BinaryCounts, ConfusionMatrix, RunReport, WindowReport, UNASSIGNED};
use crate::nn::{compute_centers, pretrain_f, save_checkpoint, ClassCenters, Matrix, Model, Output, TrainLog};
use crate::ssl::{classify_pool, classify_pool_binary, train_g, write_epoch_csv, Labeled, Variant};
use crate::{seeded, sub_seed, ClassId, Error, InstanceId, Result, Warning};

/// Pipeline step an error is attributed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Data,
    Pretrain,
    Filter,
    TrainG,
    Classify,
    Cluster,
    Update,
    Metrics,
    Report,
}

impl Stage {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} ({:?}): {}", self.stage.index(), self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    /// `{"stage": .., "stage_index": .., "kind": .., "message": ..}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "stage": self.stage,
            "stage_index": self.stage.index(),
            "kind": self.error.kind(),
            "message": self.error.to_string(),
        })
        .to_string()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Fixed directory layout of one run.
#[derive(Clone, Debug)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["splits", "checkpoints", "filters", "reports", "plots"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root: root.to_owned() })
    }

    pub fn path(&self, sub: &str, file: &str) -> PathBuf {
        self.root.join(sub).join(file)
    }

    fn write(&self, sub: &str, file: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(sub, file);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, sub: &str, file: &str, value: &T) -> Result<PathBuf> {
        self.write(sub, file, serde_json::to_string_pretty(value)? + "\n")
    }
}

/// Summary written to `reports/report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// `osc`, `iosc` or `baseline`.
    pub protocol: String,
    pub seed: u64,
    pub k: Option<usize>,
    pub variant: Option<Variant>,
    pub summary: RunReport,
    /// Share of truly unknown instances among the pseudo-labeled super-class set, per window.
    pub filter_purity: Vec<f64>,
    /// `A_k` per window (incremental runs).
    pub average_accuracy: Vec<f64>,
    pub a_star: Option<f64>,
    pub forgetting: Option<f64>,
    pub warnings: Vec<Warning>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// K-sweep results written to `reports/sweep.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub f_out: Option<f64>,
    pub filter_purity: f64,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<Example>> {
    let mut data = match cfg.dataset {
        DatasetKind::Idx => {
            let images = cfg.images.as_deref().ok_or_else(|| Error::Config("images path missing".into()))?;
            let labels = cfg.labels.as_deref().ok_or_else(|| Error::Config("labels path missing".into()))?;
            load_idx_dataset(images, labels)?
        }
        DatasetKind::Synthetic => cfg.synthetic().generate(sub_seed(cfg.seed, 0xDA7A)),
    };
    if let Some(n) = cfg.subset {
        data.truncate(n);
    }
    Ok(data)
}

/// Split, pre-trained `f` and its class centers, shared by every pipeline.
pub struct Prepared {
    pub split: OscSplit,
    pub f: Model,
    pub centers: ClassCenters,
    pub f_log: TrainLog,
}

fn write_train_log(layout: &OutputLayout, file: &str, log: &TrainLog) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (i, l) in log.epoch_loss.iter().enumerate() {
        text.push_str(&format!("{i},{l:.6}\n"));
    }
    layout.write("reports", file, text)?;
    Ok(())
}

fn start(cfg: &ExperimentConfig, root: &Path) -> StageResult<OutputLayout> {
    cfg.validate().at(Stage::Config)?;
    let layout = OutputLayout::create(root).at(Stage::Config)?;
    let snapshot = cfg.to_toml().at(Stage::Config)?;
    fs::write(root.join("config.snapshot"), snapshot)
        .map_err(|e| Error::io(root.join("config.snapshot"), e))
        .at(Stage::Config)?;
    Ok(layout)
}

pub fn prepare(cfg: &ExperimentConfig, layout: &OutputLayout) -> StageResult<Prepared> {
    let data = load_dataset(cfg).at(Stage::Data)?;
    let split = make_osc_split(&data, cfg.known_fraction, cfg.n_unknown, cfg.known_holdout, sub_seed(cfg.seed, 0x5B)).at(Stage::Data)?;
    layout.write_json("splits", "split.json", &split.manifest()).at(Stage::Data)?;

    let (f, f_log) = pretrain_f(&split.train, &cfg.arch(), &cfg.f_train()).at(Stage::Pretrain)?;
    let centers = compute_centers(&f, &split.train).at(Stage::Pretrain)?;
    save_checkpoint(&layout.path("checkpoints", "f.ckpt"), &f, Some(&centers)).at(Stage::Pretrain)?;
    write_train_log(layout, "f_epochs.csv", &f_log).at(Stage::Pretrain)?;
    Ok(Prepared { split, f, centers, f_log })
}

/// Turns super-class predictions into class ids (directly for a single
/// unknown class, through k-means and Hungarian matching otherwise) and scores
/// the pool.
fn score_predictions(
    cfg: &ExperimentConfig,
    embed_model: &Model,
    pool: &[Example],
    predictions: &BTreeMap<InstanceId, Output>,
    unknown: &BTreeSet<ClassId>,
    window_index: usize,
    warnings: &mut Vec<Warning>,
) -> StageResult<(WindowReport, Option<ClusterAssignment>)> {
    let truth: BTreeMap<InstanceId, ClassId> = pool.iter().map(|e| (e.id, e.class())).collect();
    let novel: Vec<&Example> = pool.iter().filter(|e| predictions.get(&e.id) == Some(&Output::Novel)).collect();
    let mut novel_class: BTreeMap<InstanceId, ClassId> = BTreeMap::new();
    let mut clusters = None;
    if unknown.len() == 1 {
        let only = *unknown.iter().next().expect("one class");
        novel_class.extend(novel.iter().map(|e| (e.id, only)));
    } else if !novel.is_empty() {
        let b = unknown.len().max(1).min(novel.len());
        if b < unknown.len() {
            warnings.push(Warning::new(
                "too_few_novel_predictions",
                format!("{} super-class predictions for {} unknown classes", novel.len(), unknown.len()),
            ));
        }
        let emb = embed_model.embeddings(&novel).at(Stage::Cluster)?;
        let points = Matrix::new(emb.rows, emb.cols, emb.data.iter().map(|&v| f64::from(v)).collect());
        let km = kmeans(&points, b, sub_seed(cfg.seed, 0xC1 + window_index as u64), cfg.kmeans_max_iter, cfg.kmeans_tol).at(Stage::Cluster)?;
        let ids: Vec<InstanceId> = novel.iter().map(|e| e.id).collect();
        let assignment = ClusterAssignment::new(&ids, &km);
        let matching = match_clusters_among(&assignment, &truth, unknown).at(Stage::Cluster)?;
        for (id, cluster) in &assignment.assignments {
            novel_class.insert(*id, matching.mapping[cluster].unwrap_or(UNASSIGNED));
        }
        clusters = Some(assignment);
    }
    let predicted: BTreeMap<InstanceId, ClassId> = pool
        .iter()
        .map(|e| {
            let p = match predictions.get(&e.id) {
                Some(Output::Class(c)) => *c,
                Some(Output::Novel) => novel_class.get(&e.id).copied().unwrap_or(UNASSIGNED),
                _ => UNASSIGNED,
            };
            (e.id, p)
        })
        .collect();
    let cm = ConfusionMatrix::from_maps(&truth, &predicted);
    let m = classification_metrics(&cm).at(Stage::Metrics)?;
    let counts = BinaryCounts::tally(pool.iter().map(|e| (unknown.contains(&e.class()), predictions.get(&e.id) == Some(&Output::Novel))));
    Ok((WindowReport::new(window_index, &m, f_out(&counts)), clusters))
}

fn export_embeddings(layout: &OutputLayout, model: &Model, pool: &[Example], predictions: &BTreeMap<InstanceId, Output>) -> Result<()> {
    let mut text = String::new();
    let mut meta = String::from("id\tlabel\tpredicted\n");
    if !pool.is_empty() {
        let emb = model.embeddings(pool)?;
        for (e, row) in pool.iter().zip(emb.iter_rows()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.5}")).collect();
            text.push_str(&cells.join("\t"));
            text.push('\n');
            let pred = match predictions.get(&e.id) {
                Some(Output::Class(c)) => c.to_string(),
                Some(Output::Novel) => "novel".into(),
                _ => "?".into(),
            };
            meta.push_str(&format!("{}\t{}\t{}\n", e.id, e.class(), pred));
        }
    }
    layout.write("plots", "embeddings.tsv", text)?;
    layout.write("plots", "embeddings_meta.tsv", meta)?;
    Ok(())
}

fn finish(layout: &OutputLayout, report: &ExperimentReport) -> StageResult<()> {
    layout.write("reports", "report.json", report.to_json().at(Stage::Report)?).at(Stage::Report)?;
    let mut csv = Vec::new();
    write_windows_csv(&mut csv, &report.summary.windows)
        .map_err(|e| Error::io(layout.path("reports", "windows.csv"), e))
        .at(Stage::Report)?;
    layout.write("reports", "windows.csv", csv).at(Stage::Report)?;
    if let Err(e) = emit_plots(&layout.root) {
        log::warn!("plotting failed: {e}");
    }
    Ok(())
}

/// Filtering, `g` training, classification and scoring on top of a prepared `f`.
fn osc_with(cfg: &ExperimentConfig, layout: &OutputLayout, prep: &Prepared, k: usize) -> StageResult<ExperimentReport> {
    let split = &prep.split;
    let outcome = filter_pool(&prep.f, &prep.centers, &split.test_pool, &split.train, k, cfg.lambda, sub_seed(cfg.seed, 0xD1)).at(Stage::Filter)?;
    layout.write("filters", "filter.json", outcome.to_json(cfg.max_scores_in_json).at(Stage::Filter)?).at(Stage::Filter)?;
    let mut warnings = outcome.warnings.clone();
    let purity_value = purity(&outcome.d_out, &split.truth(), &split.unknown_classes);

    let train_by_id: BTreeMap<InstanceId, &Example> = split.train.iter().map(|e| (e.id, e)).collect();
    let pool_by_id: BTreeMap<InstanceId, &Example> = split.test_pool.iter().map(|e| (e.id, e)).collect();
    let mut labeled: Vec<Labeled<'_>> = Vec::new();
    for (class, ids) in &outcome.d_in {
        labeled.extend(ids.iter().map(|id| Labeled { example: train_by_id[id], target: Output::Class(*class) }));
    }
    labeled.extend(outcome.d_out.iter().map(|id| Labeled { example: pool_by_id[id], target: Output::Novel }));

    let ssl = cfg.ssl(split.unknown_classes.len(), 0);
    let trained = train_g(&prep.f, &labeled, &split.test_pool, &ssl).at(Stage::TrainG)?;
    warnings.extend(trained.warnings.iter().cloned());
    save_checkpoint(&layout.path("checkpoints", "g.ckpt"), &trained.model, None).at(Stage::TrainG)?;
    let mut csv = Vec::new();
    write_epoch_csv(&mut csv, &trained.log).map_err(|e| Error::io(layout.path("reports", "g_epochs.csv"), e)).at(Stage::TrainG)?;
    layout.write("reports", "g_epochs.csv", csv).at(Stage::TrainG)?;

    let predictions = match ssl.variant {
        Variant::Multiclass => classify_pool(&trained.model, &split.test_pool),
        Variant::BinarySuperclass => classify_pool_binary(&trained.model, &prep.f, &split.test_pool),
    }
    .at(Stage::Classify)?;

    let (window, clusters) = score_predictions(cfg, &trained.model, &split.test_pool, &predictions, &split.unknown_classes, 1, &mut warnings)?;
    if let Some(c) = &clusters {
        layout.write_json("reports", "clusters.json", c).at(Stage::Cluster)?;
    }
    export_embeddings(layout, &trained.model, &split.test_pool, &predictions).at(Stage::Report)?;
    Ok(ExperimentReport {
        protocol: "osc".into(),
        seed: cfg.seed,
        k: Some(k),
        variant: Some(ssl.variant),
        summary: average_over_windows(&[window]).at(Stage::Metrics)?,
        filter_purity: vec![purity_value],
        average_accuracy: Vec::new(),
        a_star: None,
        forgetting: None,
        warnings,
    })
}

/// Pre-train `f`, filter, train `g`, classify and score one pool.
pub fn run_osc(cfg: &ExperimentConfig) -> StageResult<ExperimentReport> {
    let layout = start(cfg, &cfg.output_dir)?;
    let prep = prepare(cfg, &layout)?;
    let report = osc_with(cfg, &layout, &prep, cfg.k)?;
    finish(&layout, &report)?;
    Ok(report)
}

/// `f` alone: instances whose top softmax probability is at most `threshold` are flagged unknown.
pub fn run_baseline_threshold(cfg: &ExperimentConfig) -> StageResult<ExperimentReport> {
    let layout = start(cfg, &cfg.output_dir)?;
    let prep = prepare(cfg, &layout)?;
    let pool = &prep.split.test_pool;
    let probs = prep.f.predict_proba(pool).at(Stage::Classify)?;
    let predictions: BTreeMap<InstanceId, Output> = pool
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let best = probs.argmax_row(i);
            let out = if f64::from(probs.row(i)[best]) <= cfg.threshold { Output::Novel } else { prep.f.outputs[best] };
            (e.id, out)
        })
        .collect();
    let mut warnings = Vec::new();
    let (window, _) = score_predictions(cfg, &prep.f, pool, &predictions, &prep.split.unknown_classes, 1, &mut warnings)?;
    export_embeddings(&layout, &prep.f, pool, &predictions).at(Stage::Report)?;
    let report = ExperimentReport {
        protocol: "baseline".into(),
        seed: cfg.seed,
        k: None,
        variant: None,
        summary: average_over_windows(&[window]).at(Stage::Metrics)?,
        filter_purity: Vec::new(),
        average_accuracy: Vec::new(),
        a_star: None,
        forgetting: None,
        warnings,
    };
    finish(&layout, &report)?;
    Ok(report)
}

/// One `f` shared by an open set run per K; each K writes into `k_<K>/`.
pub fn run_sweep_k(cfg: &ExperimentConfig) -> StageResult<SweepReport> {
    let layout = start(cfg, &cfg.output_dir)?;
    let prep = prepare(cfg, &layout)?;
    let mut points = Vec::new();
    for &k in &cfg.sweep_k {
        let sub = OutputLayout::create(&cfg.output_dir.join(format!("k_{k}"))).at(Stage::Config)?;
        let report = osc_with(cfg, &sub, &prep, k)?;
        finish(&sub, &report)?;
        points.push(SweepPoint {
            k,
            accuracy: report.summary.accuracy,
            weighted_f1: report.summary.weighted_f1,
            f_out: report.summary.f_out,
            filter_purity: report.filter_purity[0],
        });
    }
    let sweep = SweepReport { seed: cfg.seed, points };
    layout.write_json("reports", "sweep.json", &sweep).at(Stage::Report)?;
    if let Err(e) = emit_plots(&layout.root) {
        log::warn!("plotting failed: {e}");
    }
    Ok(sweep)
}

fn closed_set_accuracy(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let logits = model.logits(examples)?;
    let hits = examples
        .iter()
        .enumerate()
        .filter(|(i, e)| model.outputs[logits.argmax_row(*i)] == Output::Class(e.class()))
        .count();
    Ok(hits as f64 / examples.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct AStarCache {
    key: String,
    a_star: f64,
}

/// Accuracy of a model trained jointly on the training set and every
/// non-evaluation stream instance, measured on all evaluation slices. Cached
/// in `reports/a_star.json` under a hash of the settings it depends on.
fn oracle_accuracy(cfg: &ExperimentConfig, layout: &OutputLayout, prep: &Prepared, pools: &[Vec<Example>], slices: &[Vec<Example>]) -> Result<f64> {
    let key_src = serde_json::json!({
        "dataset": cfg.dataset, "images": cfg.images, "labels": cfg.labels, "subset": cfg.subset,
        "synthetic": [cfg.synthetic_classes, cfg.synthetic_per_class, cfg.synthetic_side],
        "noise": cfg.synthetic_noise, "split": [cfg.known_fraction, cfg.known_holdout],
        "n_unknown": cfg.n_unknown, "seed": cfg.seed, "arch": cfg.arch(), "f": cfg.f_train(),
        "eval_fraction": cfg.eval_fraction, "arrival": cfg.class_arrival,
    });
    let key = hex::encode(Sha256::digest(key_src.to_string().as_bytes()));
    let path = layout.path("reports", "a_star.json");
    if let Some(cached) = fs::read_to_string(&path).ok().and_then(|s| serde_json::from_str::<AStarCache>(&s).ok()) {
        if cached.key == key {
            return Ok(cached.a_star);
        }
    }
    let mut all = prep.split.train.clone();
    all.extend(pools.iter().flatten().cloned());
    let (joint, _) = pretrain_f(&all, &cfg.arch(), &cfg.f_train())?;
    let eval: Vec<Example> = slices.iter().flatten().cloned().collect();
    let a_star = closed_set_accuracy(&joint, &eval)?;
    layout.write_json("reports", "a_star.json", &AStarCache { key, a_star })?;
    Ok(a_star)
}

#[derive(Serialize)]
struct EvalSlices<'a> {
    windows: BTreeMap<usize, &'a [InstanceId]>,
}

/// Incremental open set classification over a stream of windows.
pub fn run_iosc(cfg: &ExperimentConfig) -> StageResult<ExperimentReport> {
    let layout = start(cfg, &cfg.output_dir)?;
    let prep = prepare(cfg, &layout)?;
    let split = &prep.split;
    let stream: StreamSchedule = build_stream(split, cfg.class_arrival, sub_seed(cfg.seed, 0x57)).at(Stage::Data)?;
    layout.write("splits", "stream.json", stream.to_json().at(Stage::Data)? + "\n").at(Stage::Data)?;

    // Freeze an evaluation slice of every window before anything is trained on it.
    let by_id: BTreeMap<InstanceId, &Example> = split.test_pool.iter().map(|e| (e.id, e)).collect();
    let mut rng = seeded(sub_seed(cfg.seed, 0xE7));
    let mut pools = Vec::new();
    let mut slices = Vec::new();
    let mut slice_ids = Vec::new();
    for w in &stream.windows {
        let mut ids = w.instance_ids.clone();
        ids.shuffle(&mut rng);
        let n_eval = (cfg.eval_fraction * ids.len() as f64).round() as usize;
        let (eval, rest) = ids.split_at(n_eval);
        let rest: BTreeSet<InstanceId> = rest.iter().copied().collect();
        let mut eval = eval.to_vec();
        eval.sort_unstable();
        slices.push(eval.iter().map(|id| by_id[id].clone()).collect::<Vec<_>>());
        pools.push(w.instance_ids.iter().filter(|id| rest.contains(id)).map(|id| by_id[id].clone()).collect::<Vec<_>>());
        slice_ids.push(eval);
    }
    let manifest = EvalSlices {
        windows: stream.windows.iter().zip(&slice_ids).map(|(w, s)| (w.index, s.as_slice())).collect(),
    };
    layout.write_json("splits", "eval_slices.json", &manifest).at(Stage::Data)?;

    let mut memory = MemoryBuffer::new(cfg.memory);
    let mut warnings = update_memory(&mut memory, &[], &split.train, sub_seed(cfg.seed, 0x3E)).at(Stage::Update)?;
    let mut f = prep.f.clone();
    let mut windows = Vec::new();
    let mut purities = Vec::new();
    let mut averages = Vec::new();
    let mut last_variant = None;

    for (w, pool) in stream.windows.iter().zip(&pools) {
        let t = w.index;
        let known: BTreeSet<ClassId> = f.classes().into_iter().collect();
        let unknown: BTreeSet<ClassId> = pool.iter().map(Example::class).filter(|c| !known.contains(c)).collect();

        // Detection with f^{t-1}; centers and in-class exemplars come from memory.
        let mem_examples = memory.to_vec();
        let mem_labels: Vec<ClassId> = mem_examples.iter().map(Example::class).collect();
        let emb = f.embeddings(&mem_examples).at(Stage::Filter)?;
        let centers = ClassCenters::from_embeddings(&f.classes(), &emb, &mem_labels, f.fingerprint()).at(Stage::Filter)?;
        let outcome = filter_pool(&f, &centers, pool, &mem_examples, cfg.k, cfg.lambda, sub_seed(cfg.seed, 0xD1 + t as u64)).at(Stage::Filter)?;
        layout.write("filters", &format!("window_{t}.json"), outcome.to_json(cfg.max_scores_in_json).at(Stage::Filter)?).at(Stage::Filter)?;
        warnings.extend(outcome.warnings.iter().cloned());
        let pool_truth: BTreeMap<InstanceId, ClassId> = pool.iter().map(|e| (e.id, e.class())).collect();
        purities.push(purity(&outcome.d_out, &pool_truth, &unknown));

        let mem_by_id: BTreeMap<InstanceId, &Example> = mem_examples.iter().map(|e| (e.id, e)).collect();
        let pool_by_id: BTreeMap<InstanceId, &Example> = pool.iter().map(|e| (e.id, e)).collect();
        let mut labeled: Vec<Labeled<'_>> = Vec::new();
        for (class, ids) in &outcome.d_in {
            labeled.extend(ids.iter().map(|id| Labeled { example: mem_by_id[id], target: Output::Class(*class) }));
        }
        labeled.extend(outcome.d_out.iter().map(|id| Labeled { example: pool_by_id[id], target: Output::Novel }));
        let ssl = cfg.ssl(w.novel_classes.len(), t as u64);
        last_variant = Some(ssl.variant);
        let trained = train_g(&f, &labeled, pool, &ssl).at(Stage::TrainG)?;
        warnings.extend(trained.warnings.iter().cloned());
        let predictions = match ssl.variant {
            Variant::Multiclass => classify_pool(&trained.model, pool),
            Variant::BinarySuperclass => classify_pool_binary(&trained.model, &f, pool),
        }
        .at(Stage::Classify)?;
        let (mut report, _) = score_predictions(cfg, &trained.model, pool, &predictions, &unknown, t, &mut warnings)?;

        // Reveal labels of flagged instances and update f.
        let newly = label_oracle(&predictions, split);
        let new_classes: Vec<ClassId> = newly
            .iter()
            .map(Example::class)
            .filter(|c| !known.contains(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if newly.is_empty() {
            warnings.push(Warning::new("nothing_flagged", format!("window {t}: no instance predicted as novel; model unchanged")));
        } else {
            let replay = if cfg.use_memory { memory.clone() } else { MemoryBuffer::new(cfg.memory) };
            let q_targets = compute_q_targets(&f, &replay).at(Stage::Update)?;
            let digest = q_targets_digest(&q_targets);
            let packet = UpdatePacket {
                newly_labeled: newly.clone(),
                new_classes: new_classes.clone(),
                window_index: t,
                q_targets,
            };
            f = incremental_update(&f, &replay, &packet, &cfg.update_train(t)).at(Stage::Update)?.model;
            if q_targets_digest(&packet.q_targets) != digest {
                return Err(Error::State("stored targets changed during the update".into())).at(Stage::Update);
            }
            let new_data: Vec<Example> = newly.into_iter().filter(|e| new_classes.contains(&e.class())).collect();
            warnings.extend(update_memory(&mut memory, &new_classes, &new_data, sub_seed(cfg.seed, 0x3E + t as u64)).at(Stage::Update)?);
        }
        save_checkpoint(&layout.path("checkpoints", &format!("f_{t}.ckpt")), &f, None).at(Stage::Update)?;
        layout.write_json("checkpoints", &format!("memory_{t}.json"), &memory.manifest()).at(Stage::Update)?;

        for (j, slice) in slices.iter().enumerate().take(t) {
            report.acc_per_classset.insert(j + 1, closed_set_accuracy(&f, slice).at(Stage::Metrics)?);
        }
        averages.push(report.average_accuracy().unwrap_or(0.0));
        windows.push(report);
    }

    let a_star = oracle_accuracy(cfg, &layout, &prep, &pools, &slices).at(Stage::Metrics)?;
    let forgetting_value = if a_star > 0.0 { Some(forgetting(&averages, a_star).at(Stage::Metrics)?) } else { None };
    let report = ExperimentReport {
        protocol: "iosc".into(),
        seed: cfg.seed,
        k: Some(cfg.k),
        variant: last_variant,
        summary: average_over_windows(&windows).at(Stage::Metrics)?,
        filter_purity: purities,
        average_accuracy: averages,
        a_star: Some(a_star),
        forgetting: forgetting_value,
        warnings,
    };
    finish(&layout, &report)?;
    Ok(report)
}

/// Dispatches on `cfg.protocol`.
pub fn run(cfg: &ExperimentConfig) -> StageResult<ExperimentReport> {
    match cfg.protocol {
        Protocol::Osc => run_osc(cfg),
        Protocol::Iosc => run_iosc(cfg),
    }
}
