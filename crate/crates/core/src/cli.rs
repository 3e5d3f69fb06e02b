//! Run configuration, command implementations and result persistence.
//!
//! Commands are plain functions over a resolved [`RunConfig`]; the binary
//! maps their errors onto exit codes (0 success, 1 usage error, 2 runtime
//! failure, 3 verification failure). Every run directory is
//! self-describing: the effective config, scenario metadata and checkpoint
//! manifest are enough to reproduce the run bit for bit.

use crate::error::{Error, Result};
use crate::metrics::{aggregate, auroc, AggregateReport, ExperimentResult, GroupAxis};
use crate::networks::{ArchitecturePreset, ModelBundle};
use crate::objectives::TargetScheme;
use crate::oracle;
use crate::scenario::{
    build_scenario, load_image_dataset, load_tabular_csv, make_cluster_ring, LabeledDataset,
    ScenarioSpec,
};
use crate::scoring::{self, Criterion};
use crate::trainer::{self, TrainConfig, TrainHistory};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable naming the directory dataset paths resolve
/// against when a config gives a relative path.
pub const DATA_ROOT_ENV: &str = "AABIGAN_DATA_ROOT";

pub const RESULT_FILE: &str = "result.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const LOCK_FILE: &str = ".lock";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where the samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetConfig {
    /// MNIST / F-MNIST / CIFAR-10 from their standard archives.
    Image { name: String, root: Option<PathBuf> },
    /// CSV with numeric features and a binary label column.
    Tabular {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    /// Ring of Gaussian clusters; cluster index is the class id.
    SyntheticRing {
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default = "default_per_cluster")]
        per_cluster: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_label_column() -> String {
    "label".into()
}
fn default_clusters() -> usize {
    12
}
fn default_per_cluster() -> usize {
    250
}
fn default_radius() -> f64 {
    4.0
}
fn default_sigma() -> f64 {
    0.15
}

/// Network sizing; unset fields fall back to the preset defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: Option<usize>,
    /// Image preset filter width (w, 2w, 4w).
    pub base_width: Option<usize>,
    /// Tabular hidden layer sizes; the last is the latent dimension.
    pub hidden_units: Option<Vec<usize>>,
    #[serde(default)]
    pub init_seed: u64,
}

/// Output handling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs/run"),
            plot: false,
        }
    }
}

/// The full, serializable run definition. The effective (defaults
/// resolved) config is written verbatim into the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config does not parse: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// A ready-to-run default: synthetic ring, 8 normal clusters, one
    /// collected anomaly cluster, three novel ones.
    pub fn example() -> Self {
        RunConfig {
            dataset: DatasetConfig::SyntheticRing {
                clusters: default_clusters(),
                per_cluster: default_per_cluster(),
                radius: default_radius(),
                sigma: default_sigma(),
                data_seed: 9,
            },
            scenario: ScenarioSpec {
                normal_classes: (0..8).collect(),
                collected_anomaly_classes: BTreeSet::from([8]),
                gamma_l: 0.05,
                gamma_p: 0.0,
                seed: 1,
                val_fraction: 0.2,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            output: OutputConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.scenario.gamma_l < 0.0 || self.scenario.gamma_p < 0.0 {
            return Err(Error::invalid(
                "scenario.gamma_l and scenario.gamma_p must be >= 0",
            ));
        }
        if !(self.scenario.val_fraction > 0.0 && self.scenario.val_fraction < 1.0) {
            return Err(Error::invalid("scenario.val_fraction must lie in (0, 1)"));
        }
        if self.train.scheme.a == self.train.scheme.b {
            return Err(Error::invalid(
                "train.scheme requires a != b (degenerate discriminator targets)",
            ));
        }
        Ok(())
    }
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Load the dataset named by the config, resolving relative paths against
/// the data root.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<LabeledDataset> {
    match cfg {
        DatasetConfig::Image { name, root } => {
            let root = root
                .clone()
                .unwrap_or_else(|| data_root().join(name.as_str()));
            load_image_dataset(name, &root)
        }
        DatasetConfig::Tabular { path, label_column } => {
            let path = if path.is_absolute() || path.exists() {
                path.clone()
            } else {
                data_root().join(path)
            };
            load_tabular_csv(&path, label_column)
        }
        DatasetConfig::SyntheticRing {
            clusters,
            per_cluster,
            radius,
            sigma,
            data_seed,
        } => Ok(make_cluster_ring(
            *clusters,
            *per_cluster,
            *radius,
            *sigma,
            *data_seed,
        )),
    }
}

fn preset_for(dataset: &LabeledDataset, model: &ModelConfig) -> ArchitecturePreset {
    match dataset.kind() {
        crate::scenario::DatasetKind::Image => ArchitecturePreset::ImageDcgan {
            latent_dim: model
                .latent_dim
                .unwrap_or(crate::networks::DEFAULT_IMAGE_LATENT),
            base_width: model
                .base_width
                .unwrap_or(crate::networks::DEFAULT_IMAGE_WIDTH),
        },
        crate::scenario::DatasetKind::Tabular => ArchitecturePreset::TabularMlp {
            input_dim: dataset.sample_shape()[0],
            hidden_units: model
                .hidden_units
                .clone()
                .unwrap_or_else(|| crate::networks::DEFAULT_TABULAR_HIDDEN.to_vec()),
        },
    }
}

// ---------------------------------------------------------------------------
// Run-directory plumbing
// ---------------------------------------------------------------------------

/// Exclusive ownership of a run directory for the duration of a command.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::invalid(format!(
                    "run directory {} is locked by another process (remove {} if stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_history_jsonl(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in &history.steps {
        let line = serde_json::json!({
            "type": "step", "step": s.step, "loss_dd": s.loss_dd, "loss_ge": s.loss_ge,
        });
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    for e in &history.epochs {
        let line = serde_json::json!({
            "type": "epoch", "epoch": e.epoch,
            "val_auroc_recon": e.val_auroc_recon, "val_auroc_latent": e.val_auroc_latent,
        });
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Train a model per the config; returns the run directory.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let dir = config.output.dir.clone();
    let _lock = RunLock::acquire(&dir)?;

    std::fs::write(dir.join(CONFIG_FILE), config.to_toml())
        .map_err(|e| Error::io(dir.join(CONFIG_FILE), e))?;

    let dataset = load_dataset(&config.dataset)?;
    let data = build_scenario(&dataset, &config.scenario)?;
    write_json(&dir.join(SCENARIO_FILE), &data.meta)?;

    let preset = preset_for(&dataset, &config.model);
    let model = ModelBundle::new(preset, config.model.init_seed)?;

    let mut train_cfg = config.train.clone();
    train_cfg.checkpoint_dir = Some(dir.clone());
    let (trained, history) = trainer::train(model, &data, &train_cfg)?;

    trainer::save_checkpoint_with_scheme(
        &trained,
        &history,
        &train_cfg.scheme,
        &dir.join("ckpt-final"),
    )?;
    write_history_jsonl(&dir.join(HISTORY_FILE), &history)?;
    Ok(dir)
}

/// Which labeled split to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Val,
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" => Ok(EvalSplit::Val),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::invalid(format!(
                "unknown split '{other}' (expected val or test)"
            ))),
        }
    }
}

/// Evaluate a finished run: select the criterion on validation, report
/// AUROC on the requested split, dump scores as CSV.
pub fn cmd_evaluate(run_dir: &Path, split: EvalSplit) -> Result<ExperimentResult> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let ckpt = run_dir.join("ckpt-final");
    if !ckpt.exists() {
        return Err(Error::invalid(format!(
            "no trained checkpoint at {}; run `train` first",
            ckpt.display()
        )));
    }
    let started = std::time::Instant::now();
    let (model, _history, manifest) = trainer::load_checkpoint(&ckpt)?;

    let dataset = load_dataset(&config.dataset)?;
    let data = build_scenario(&dataset, &config.scenario)?;

    let (criterion, _, _) = scoring::select_criterion(&model, &data.val.samples, &data.val.labels)?;
    let subset = match split {
        EvalSplit::Val => &data.val,
        EvalSplit::Test => &data.test,
    };
    let scores = scoring::score_with(&model, criterion, &subset.samples)?;
    let auc = auroc(&scores.scores, &subset.labels)?;

    let split_name = match split {
        EvalSplit::Val => "val",
        EvalSplit::Test => "test",
    };
    scoring::write_scores_csv(
        &run_dir.join(format!("scores-{split_name}.csv")),
        &scores,
        &subset.labels,
        Some(&subset.source_indices),
    )?;

    let result = ExperimentResult {
        dataset: dataset.name().to_string(),
        scenario: config.scenario.clone(),
        scheme: manifest.scheme,
        auroc: auc,
        criterion: criterion.as_str().to_string(),
        runtime_seconds: started.elapsed().as_secs_f64(),
        seed: config.train.seed,
    };
    write_json(&run_dir.join(RESULT_FILE), &result)?;
    Ok(result)
}

/// One sweep axis: a named list of values.
#[derive(Debug, Clone)]
pub enum SweepAxis {
    GammaL(Vec<f64>),
    GammaP(Vec<f64>),
    KL(Vec<usize>),
    C(Vec<f64>),
    Seed(Vec<u64>),
    /// All ordered (normal, collected-anomaly) class pairs.
    ClassPairs,
}

impl SweepAxis {
    /// Parse `name=v1,v2,...` (or the bare `class_pairs`).
    pub fn parse(text: &str) -> Result<Self> {
        if text == "class_pairs" {
            return Ok(SweepAxis::ClassPairs);
        }
        let (name, values) = text
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("axis '{text}' is not name=v1,v2,...")))?;
        let parse_f64 = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("axis value '{s}' is not a number")))
        };
        let values_f64 = || -> Result<Vec<f64>> { values.split(',').map(parse_f64).collect() };
        match name {
            "gamma_l" => Ok(SweepAxis::GammaL(values_f64()?)),
            "gamma_p" => Ok(SweepAxis::GammaP(values_f64()?)),
            "c" => Ok(SweepAxis::C(values_f64()?)),
            "k_l" => Ok(SweepAxis::KL(
                values
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad k_l value '{s}'")))
                    })
                    .collect::<Result<_>>()?,
            )),
            "seed" => Ok(SweepAxis::Seed(
                values
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad seed value '{s}'")))
                    })
                    .collect::<Result<_>>()?,
            )),
            other => Err(Error::invalid(format!(
                "unknown sweep axis '{other}' (gamma_l, gamma_p, k_l, c, seed, class_pairs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub cells: usize,
}

/// Cross-product sweep over the given axes. Each cell is an independent
/// run directory under the template's output dir; completed cells are
/// skipped on resume, failures are recorded and the sweep continues.
pub fn cmd_sweep(template: &RunConfig, axes: &[SweepAxis]) -> Result<SweepSummary> {
    template.validate()?;
    let dataset = load_dataset(&template.dataset)?;
    let base_dir = template.output.dir.clone();
    std::fs::create_dir_all(&base_dir).map_err(|e| Error::io(&base_dir, e))?;

    // Expand the cross product of cell configs.
    let mut cells: Vec<(String, RunConfig)> = vec![(String::new(), template.clone())];
    for axis in axes {
        let mut next = Vec::new();
        for (tag, cfg) in &cells {
            match axis {
                SweepAxis::GammaL(vals) => {
                    for v in vals {
                        let mut c = cfg.clone();
                        c.scenario.gamma_l = *v;
                        next.push((format!("{tag}gl{v}-"), c));
                    }
                }
                SweepAxis::GammaP(vals) => {
                    for v in vals {
                        let mut c = cfg.clone();
                        c.scenario.gamma_p = *v;
                        next.push((format!("{tag}gp{v}-"), c));
                    }
                }
                SweepAxis::C(vals) => {
                    for v in vals {
                        let mut c = cfg.clone();
                        c.train.scheme =
                            TargetScheme::new(cfg.train.scheme.a, cfg.train.scheme.b, *v)?;
                        next.push((format!("{tag}c{v}-"), c));
                    }
                }
                SweepAxis::Seed(vals) => {
                    for v in vals {
                        let mut c = cfg.clone();
                        c.scenario.seed = *v;
                        c.train.seed = *v;
                        next.push((format!("{tag}s{v}-"), c));
                    }
                }
                SweepAxis::KL(vals) => {
                    // k_l smallest anomaly-class ids, deterministic.
                    let classes = dataset.classes();
                    for v in vals {
                        let mut c = cfg.clone();
                        let anomalies: Vec<u32> = classes
                            .iter()
                            .copied()
                            .filter(|cl| !cfg.scenario.normal_classes.contains(cl))
                            .take(*v)
                            .collect();
                        if anomalies.len() < *v {
                            return Err(Error::invalid(format!(
                                "k_l = {v} exceeds the number of anomaly classes"
                            )));
                        }
                        c.scenario.collected_anomaly_classes = anomalies.into_iter().collect();
                        next.push((format!("{tag}kl{v}-"), c));
                    }
                }
                SweepAxis::ClassPairs => {
                    for spec in crate::scenario::enumerate_class_pairs(&dataset) {
                        let mut c = cfg.clone();
                        let normal = *spec.normal_classes.iter().next().unwrap();
                        let anomaly = *spec.collected_anomaly_classes.iter().next().unwrap();
                        c.scenario.normal_classes = spec.normal_classes;
                        c.scenario.collected_anomaly_classes = spec.collected_anomaly_classes;
                        next.push((format!("{tag}n{normal}a{anomaly}-"), c));
                    }
                }
            }
        }
        cells = next;
    }

    let mut summary = SweepSummary {
        completed: 0,
        skipped: 0,
        failed: 0,
        cells: cells.len(),
    };
    let mut results: Vec<ExperimentResult> = Vec::new();
    let mut failures: Vec<serde_json::Value> = Vec::new();

    for (tag, mut cfg) in cells {
        let cell_name = format!("cell-{}", tag.trim_end_matches('-'));
        let cell_dir = base_dir.join(&cell_name);
        cfg.output.dir = cell_dir.clone();

        let result_path = cell_dir.join(RESULT_FILE);
        if result_path.exists() {
            let text =
                std::fs::read_to_string(&result_path).map_err(|e| Error::io(&result_path, e))?;
            match serde_json::from_str::<ExperimentResult>(&text) {
                Ok(r) => {
                    results.push(r);
                    summary.skipped += 1;
                    continue;
                }
                Err(_) => { /* re-run the cell */ }
            }
        }

        let outcome = cmd_train(&cfg).and_then(|dir| cmd_evaluate(&dir, EvalSplit::Test));
        match outcome {
            Ok(r) => {
                results.push(r);
                summary.completed += 1;
            }
            Err(e) => {
                summary.failed += 1;
                failures.push(serde_json::json!({
                    "cell": cell_name,
                    "error": e.to_string(),
                }));
            }
        }
    }

    if !failures.is_empty() {
        write_json(&base_dir.join("failures.json"), &failures)?;
    }
    if !results.is_empty() {
        let groups = aggregate(
            &results,
            &[
                GroupAxis::Dataset,
                GroupAxis::GammaL,
                GroupAxis::GammaP,
                GroupAxis::KL,
                GroupAxis::C,
            ],
        )?;
        write_aggregates(&base_dir, &groups)?;
        write_json(&base_dir.join("results.json"), &results)?;
    }
    Ok(summary)
}

fn write_aggregates(dir: &Path, groups: &[AggregateReport]) -> Result<()> {
    write_json(&dir.join("aggregate.json"), &groups)?;
    let csv_path = dir.join("aggregate.csv");
    let mut f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(f, "dataset,gamma_l,gamma_p,k_l,c,mean_auroc,std_auroc,n")
        .map_err(|e| Error::io(&csv_path, e))?;
    for g in groups {
        let get = |k: &str| g.group.get(k).cloned().unwrap_or_default();
        writeln!(
            f,
            "{},{},{},{},{},{:.2},{:.2},{}",
            get("dataset"),
            get("gamma_l"),
            get("gamma_p"),
            get("k_l"),
            get("c"),
            g.mean_auroc,
            g.std_auroc,
            g.n_experiments
        )
        .map_err(|e| Error::io(&csv_path, e))?;
    }
    Ok(())
}

/// Run the theory suite; report per-check pass/fail.
pub fn cmd_verify(seed: u64, json_out: Option<&Path>) -> Result<oracle::VerificationReport> {
    let report = oracle::run_verification(seed);
    if let Some(path) = json_out {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Tabulate finished runs: aggregate CSV/Markdown, optionally the
/// score-distribution boxplot (normal / seen anomaly / novel anomaly
/// reconstruction errors) per run.
pub fn cmd_report(
    run_dirs: &[PathBuf],
    out_dir: &Path,
    plot: bool,
) -> Result<Vec<AggregateReport>> {
    if run_dirs.is_empty() {
        return Err(Error::invalid("report needs at least one run directory"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut results = Vec::new();
    for dir in run_dirs {
        let path = dir.join(RESULT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: ExperimentResult = serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!(
                "{} does not parse as a result: {e}",
                path.display()
            ))
        })?;
        results.push(r);
        if plot {
            plot_recon_boxplot(
                dir,
                &out_dir.join(format!(
                    "recon-boxplot-{}.svg",
                    dir.file_name().and_then(|s| s.to_str()).unwrap_or("run")
                )),
            )?;
        }
    }
    let groups = aggregate(
        &results,
        &[
            GroupAxis::Dataset,
            GroupAxis::GammaL,
            GroupAxis::GammaP,
            GroupAxis::KL,
            GroupAxis::C,
        ],
    )?;
    write_aggregates(out_dir, &groups)?;

    // Markdown mirror of the aggregate table.
    let md_path = out_dir.join("report.md");
    let mut f = std::fs::File::create(&md_path).map_err(|e| Error::io(&md_path, e))?;
    writeln!(
        f,
        "| dataset | gamma_l | gamma_p | k_l | c | mean AUROC | std | n |"
    )
    .map_err(|e| Error::io(&md_path, e))?;
    writeln!(f, "|---|---|---|---|---|---|---|---|").map_err(|e| Error::io(&md_path, e))?;
    for g in &groups {
        let get = |k: &str| g.group.get(k).cloned().unwrap_or_default();
        writeln!(
            f,
            "| {} | {} | {} | {} | {} | {:.1} | {:.1} | {} |",
            get("dataset"),
            get("gamma_l"),
            get("gamma_p"),
            get("k_l"),
            get("c"),
            g.mean_auroc,
            g.std_auroc,
            g.n_experiments
        )
        .map_err(|e| Error::io(&md_path, e))?;
    }
    Ok(groups)
}

/// Recompute reconstruction errors for a run's test split and draw a
/// three-group boxplot (normal, seen anomaly, novel anomaly).
fn plot_recon_boxplot(run_dir: &Path, out: &Path) -> Result<()> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let (model, _, _) = trainer::load_checkpoint(&run_dir.join("ckpt-final"))?;
    let dataset = load_dataset(&config.dataset)?;
    let data = build_scenario(&dataset, &config.scenario)?;
    let scores = scoring::score_with(&model, Criterion::ReconError, &data.test.samples)?;

    let mut groups: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..data.test.len() {
        let class = data.test.class_ids[i];
        let idx = if data.test.labels[i] == 0 {
            0
        } else if config.scenario.collected_anomaly_classes.contains(&class) {
            1
        } else {
            2
        };
        groups[idx].push(scores.scores[i]);
    }
    write_boxplot_svg(out, &["normal", "seen anomaly", "novel anomaly"], &groups)
}

/// Five-number summary boxplot as a small standalone SVG.
fn write_boxplot_svg(path: &Path, labels: &[&str], groups: &[Vec<f64>]) -> Result<()> {
    fn quantile(sorted: &[f64], q: f64) -> f64 {
        if sorted.is_empty() {
            return 0.0;
        }
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }

    let (width, height, margin) = (460.0, 320.0, 48.0);
    let mut all_max = f64::MIN;
    let mut all_min = f64::MAX;
    let summaries: Vec<[f64; 5]> = groups
        .iter()
        .map(|g| {
            let mut s = g.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let summary = [
                quantile(&s, 0.0),
                quantile(&s, 0.25),
                quantile(&s, 0.5),
                quantile(&s, 0.75),
                quantile(&s, 1.0),
            ];
            all_min = all_min.min(summary[0]);
            all_max = all_max.max(summary[4]);
            summary
        })
        .collect();
    if !all_min.is_finite() || !all_max.is_finite() || all_max <= all_min {
        all_min = 0.0;
        all_max = 1.0;
    }
    let y = |v: f64| -> f64 {
        let t = (v - all_min) / (all_max - all_min);
        height - margin - t * (height - 2.0 * margin)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let slot = (width - 2.0 * margin) / groups.len() as f64;
    for (i, (label, s)) in labels.iter().zip(&summaries).enumerate() {
        let cx = margin + slot * (i as f64 + 0.5);
        let half = slot * 0.22;
        let [lo, q1, med, q3, hi] = *s;
        svg.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>\n",
            y(lo),
            y(hi)
        ));
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#9ecae1\" stroke=\"black\"/>\n",
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(1.0)
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"2\"/>\n",
            cx - half,
            y(med),
            cx + half,
            y(med)
        ));
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            height - margin / 2.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"start\">{:.3}</text>\n",
        6.0,
        y(all_min),
        all_min
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"start\">{:.3}</text>\n",
        6.0,
        y(all_max) + 10.0,
        all_max
    ));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_defaults() {
        let cfg = RunConfig::example();
        let text = cfg.to_toml();
        let parsed = RunConfig::from_toml(&text).unwrap();
        assert_eq!(parsed.scenario, cfg.scenario);
        assert_eq!(parsed.train.epochs, cfg.train.epochs);

        // Minimal config relies on defaults.
        let minimal = r#"
            [dataset]
            kind = "synthetic-ring"

            [scenario]
            normal_classes = [0, 1]
            collected_anomaly_classes = [2]
            gamma_l = 0.05
            gamma_p = 0.0
            seed = 3
            val_fraction = 0.2
        "#;
        let parsed = RunConfig::from_toml(minimal).unwrap();
        assert_eq!(parsed.train.batch_size, 128);
        assert_eq!(parsed.train.lr_ge, 1e-4);
        assert_eq!(parsed.train.lr_dd, 2.5e-5);
    }

    #[test]
    fn bad_config_is_rejected() {
        let bad = r#"
            [dataset]
            kind = "synthetic-ring"

            [scenario]
            normal_classes = [0]
            collected_anomaly_classes = [2]
            gamma_l = -0.05
            gamma_p = 0.0
            seed = 3
            val_fraction = 0.2
        "#;
        let cfg = RunConfig::from_toml(bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_axis_parsing() {
        assert!(matches!(
            SweepAxis::parse("gamma_l=0.0,0.01,0.05").unwrap(),
            SweepAxis::GammaL(v) if v.len() == 3
        ));
        assert!(matches!(
            SweepAxis::parse("seed=1,2").unwrap(),
            SweepAxis::Seed(v) if v == vec![1, 2]
        ));
        assert!(matches!(
            SweepAxis::parse("class_pairs").unwrap(),
            SweepAxis::ClassPairs
        ));
        assert!(SweepAxis::parse("nope=1").is_err());
        assert!(SweepAxis::parse("gamma_l=x").is_err());
    }

    #[test]
    fn boxplot_svg_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("box.svg");
        write_boxplot_svg(
            &path,
            &["a", "b", "c"],
            &[
                vec![0.1, 0.2, 0.3, 0.4],
                vec![1.0, 2.0, 3.0],
                vec![5.0, 6.0],
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("novel") || text.contains("a"));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(RunLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(RunLock::acquire(dir.path()).is_ok());
    }
}
