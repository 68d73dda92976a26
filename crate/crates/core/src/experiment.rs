//! Experiment configuration and the comparison pipeline.
//!
//! One master seed drives everything. Component seeds come from
//! [`seeds::derive`]: folds use `[FOLDS]`, fold `f` trains its model with
//! `[MODEL_INIT, f]` / `[TRAIN, f]`, and its rankers get `derive(master, [f])`
//! as their base seed.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concrete::{fit_dropout_rates, masked_loss, FrConfig};
use crate::datasets::{
    generate_sim, kfold_split, load_csv, sim_feature_names, CsvSchema, FittedPreprocessor,
    FoldPlan, PreprocessSpec, RawTable, SimKind,
};
use crate::error::{Error, Result};
use crate::eval::{
    mean_sd, retrain_eval, spearman, spearman_vectors, write_curves_csv, zero_out_eval,
    EvalCurve, EvalMode, FoldData, RetrainSpec,
};
use crate::io::{write_atomic, write_json};
use crate::nn::{train, Architecture, MlpModel, Task, TrainConfig, TrainReport};
use crate::rankers::{run_ranker, RankerSettings};
use crate::ranking::{FeatureRanking, RankerKind};
use crate::seeds;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Baselines the report lists but never computes.
pub const EXTERNAL_BASELINES: [&str; 3] = ["random_forest", "lasso", "elastic_net"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Simulation {
        kind: SimKind,
        #[serde(default = "default_sim_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default)]
        categorical: Vec<String>,
        task: Task,
    },
}

fn default_sim_n() -> usize {
    10_000
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Simulation {
            kind: SimKind::NoInteraction,
            n: default_sim_n(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub k: usize,
    pub val_fraction: f64,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self {
            k: 5,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    pub methods: Vec<RankerKind>,
    pub top_k: Vec<usize>,
    pub n_list: Vec<usize>,
    pub eval_modes: Vec<EvalMode>,
    /// λ values tried by the rank command; each gets a masked validation loss.
    pub lambda_grid: Vec<f64>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            methods: RankerKind::ALL.to_vec(),
            top_k: vec![40, 20, 5],
            n_list: vec![1, 2, 5, 10, 20, 40],
            eval_modes: vec![EvalMode::ZeroOut],
            lambda_grid: vec![0.001, 0.01, 0.1, 1.0],
        }
    }
}

/// Everything needed to reproduce a run. Loaded from TOML; any field can be
/// overridden with `section.key=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
    pub data: DataSource,
    pub preprocess: PreprocessSpec,
    pub model: Architecture,
    pub train: TrainConfig,
    pub rankers: RankerSettings,
    pub folds: FoldSettings,
    pub compare: CompareSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            output_dir: None,
            data: DataSource::default(),
            preprocess: PreprocessSpec::default(),
            model: Architecture::default(),
            train: TrainConfig::default(),
            rankers: RankerSettings::default(),
            folds: FoldSettings::default(),
            compare: CompareSettings::default(),
        }
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `dotted.key` in a TOML tree, creating tables as needed.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}': '{part}' is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_toml_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies overrides.
    /// Relative CSV paths resolve against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let (Some(p), DataSource::Csv { path: data, .. }) = (path, &mut cfg.data) {
            if data.is_relative() {
                if let Some(dir) = p.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.train.validate()?;
        self.rankers.dropout_fr.validate()?;
        self.rankers.deep_fs.validate()?;
        if self.folds.k < 2 {
            return Err(Error::Config(format!("folds.k must be at least 2, got {}", self.folds.k)));
        }
        if self.compare.methods.is_empty() {
            return Err(Error::Config("compare.methods is empty".into()));
        }
        if self.compare.top_k.iter().any(|&k| k < 2) {
            return Err(Error::Config("every compare.top_k must be at least 2".into()));
        }
        if self.compare.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("lambda_grid values must be finite and >= 0".into()));
        }
        if let DataSource::Simulation { n, .. } = self.data {
            if n == 0 {
                return Err(Error::Config("data.n must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        match &self.data {
            DataSource::Simulation { .. } => Task::Regression,
            DataSource::Csv { task, .. } => *task,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Runs `f` on a rayon pool bounded by `jobs`.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Raw table, feature names and (for simulations) ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub table: RawTable,
    pub truth: Option<Vec<f64>>,
}

pub fn load_data(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Simulation { kind, n, seed } => {
            let sim = generate_sim(*kind, *n, *seed)?;
            Ok(LoadedData {
                table: RawTable::from_dataset(&sim.data, &sim_feature_names(), "y", Task::Regression),
                truth: Some(sim.ground_truth_ranks),
            })
        }
        DataSource::Csv {
            path,
            target,
            categorical,
            task,
        } => {
            let schema = CsvSchema {
                target: target.clone(),
                categorical: categorical.clone(),
                task: *task,
            };
            Ok(LoadedData {
                table: load_csv(path, &schema)?,
                truth: None,
            })
        }
    }
}

pub fn fold_plan(config: &ExperimentConfig, n: usize) -> Result<FoldPlan> {
    kfold_split(
        n,
        config.folds.k,
        config.folds.val_fraction,
        seeds::derive(config.seed, &[seeds::stream::FOLDS]),
    )
}

/// Preprocessing fitted on the fold's training rows and applied to all
/// three splits.
pub fn prepare_fold(
    table: &RawTable,
    plan: &FoldPlan,
    fold: usize,
    spec: &PreprocessSpec,
) -> Result<(FoldData, FittedPreprocessor)> {
    let f = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::Config(format!("fold {fold} out of range")))?;
    let pre = FittedPreprocessor::fit(table, &f.train, spec)?;
    Ok((
        FoldData {
            train: pre.transform(table, &f.train)?,
            val: pre.transform(table, &f.val)?,
            test: pre.transform(table, &f.test)?,
        },
        pre,
    ))
}

/// Trains the fold's full-feature model.
pub fn train_fold_model(
    config: &ExperimentConfig,
    data: &FoldData,
    fold: usize,
) -> Result<(MlpModel, TrainReport)> {
    let f = fold as u64;
    let model = MlpModel::with_architecture(
        config.task(),
        data.train.n_features(),
        &config.model,
        seeds::derive(config.seed, &[seeds::stream::MODEL_INIT, f]),
    )?;
    let tc = TrainConfig {
        seed: seeds::derive(config.seed, &[seeds::stream::TRAIN, f]),
        ..config.train.clone()
    };
    train(model, &data.train, &data.val, &tc)
}

pub fn fold_seed(config: &ExperimentConfig, fold: usize) -> u64 {
    seeds::derive(config.seed, &[fold as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKSummary {
    pub top_k: usize,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: RankerKind,
    pub spearman: Vec<TopKSummary>,
    /// Feature order per fold, best first.
    pub orders: Vec<Vec<usize>>,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTraining {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub feature_names: Vec<String>,
    pub ground_truth: Option<Vec<f64>>,
    pub fold_plan_seed: u64,
    pub training: Vec<FoldTraining>,
    pub methods: Vec<MethodSummary>,
    pub not_computed: Vec<String>,
    pub curves: Vec<EvalCurve>,
}

impl CompareReport {
    pub fn method(&self, kind: RankerKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == kind)
    }

    /// Mean Spearman of `kind` at `top_k` over folds.
    pub fn spearman_mean(&self, kind: RankerKind, top_k: usize) -> Option<f64> {
        self.method(kind)?
            .spearman
            .iter()
            .find(|s| s.top_k == top_k)
            .map(|s| s.mean)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let title = match self.config.pointer("/data/kind").and_then(|v| v.as_str()) {
            Some(kind) => format!("# Feature ranking comparison: {kind}\n\n"),
            None => "# Feature ranking comparison\n\n".to_string(),
        };
        s.push_str(&title);
        let top_ks: Vec<usize> = self
            .methods
            .first()
            .map(|m| m.spearman.iter().map(|t| t.top_k).collect())
            .unwrap_or_default();
        if top_ks.is_empty() {
            s.push_str("No ground truth; Spearman columns omitted.\n\n");
        } else {
            let k = self.training.len();
            s.push_str(&format!("Spearman correlation with ground truth, mean ± sd over {k} folds.\n\n"));
            s.push_str("| method |");
            for t in &top_ks {
                s.push_str(&format!(" Top {t} |"));
            }
            s.push_str("\n|---|");
            s.push_str(&"---|".repeat(top_ks.len()));
            s.push('\n');
            for m in &self.methods {
                s.push_str(&format!("| {} |", m.method));
                for t in &m.spearman {
                    s.push_str(&format!(" {:.3} ± {:.3} |", t.mean, t.sd));
                }
                s.push('\n');
            }
            for name in &self.not_computed {
                s.push_str(&format!("| {name} |"));
                s.push_str(&" not computed |".repeat(top_ks.len()));
                s.push('\n');
            }
            s.push('\n');
        }
        for c in &self.curves {
            s.push_str(&format!("## {} {} ({})\n\n| n_features | mean | sd |\n|---|---|---|\n", c.method, c.mode.name(), c.metric.name()));
            for p in &c.points {
                s.push_str(&format!("| {} | {:.4} | {:.4} |\n", p.n_features, p.mean, p.sd));
            }
            s.push('\n');
        }
        s
    }

    /// Writes report.json, report.md and curves.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("report.json"), self)?;
        write_atomic(&dir.join("report.md"), self.to_markdown().as_bytes())?;
        write_curves_csv(&dir.join("curves.csv"), &self.curves)
    }
}

struct FoldOutcome {
    training: FoldTraining,
    rankings: Vec<FeatureRanking>,
    zero_out: Vec<EvalCurve>,
    data: FoldData,
    feature_names: Vec<String>,
}

fn run_fold(config: &ExperimentConfig, table: &RawTable, plan: &FoldPlan, fold: usize) -> Result<FoldOutcome> {
    let (data, pre) = prepare_fold(table, plan, fold, &config.preprocess)?;
    let (model, report) = train_fold_model(config, &data, fold)?;
    let test_metric = crate::eval::evaluate_model(&model, &data.test)?;
    log::info!(
        "fold {fold}: trained {} epochs, best val loss {:.4}, test metric {:.4}",
        report.epochs_run,
        report.best_val_loss,
        test_metric
    );
    let seed = fold_seed(config, fold);
    let rankings = config
        .compare
        .methods
        .iter()
        .map(|&kind| {
            let r = run_ranker(kind, Some(&model), &data.train, config.task(), &config.rankers, seed)?;
            log::info!("fold {fold}: {kind} done");
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let zero_out = if config.compare.eval_modes.contains(&EvalMode::ZeroOut) {
        let n_list: Vec<usize> = config
            .compare
            .n_list
            .iter()
            .copied()
            .filter(|&n| n <= data.test.n_features())
            .collect();
        rankings
            .iter()
            .map(|r| zero_out_eval(&model, r, &data.test, &n_list, r.method.name()))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(FoldOutcome {
        training: FoldTraining {
            fold,
            best_epoch: report.best_epoch,
            best_val_loss: report.best_val_loss,
            epochs_run: report.epochs_run,
            test_metric,
        },
        rankings,
        zero_out,
        data,
        feature_names: pre.feature_names,
    })
}

/// Full comparison: per fold, train the model, run every configured ranker
/// on the training split, score rankings against ground truth (when known)
/// and build the configured performance curves.
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareReport> {
    config.validate()?;
    let loaded = load_data(&config.data)?;
    let plan = fold_plan(config, loaded.table.n_rows())?;
    config.with_pool(|| {
        let outcomes = (0..plan.k)
            .into_par_iter()
            .map(|f| run_fold(config, &loaded.table, &plan, f))
            .collect::<Result<Vec<_>>>()?;
        assemble_report(config, &loaded, &plan, outcomes)
    })?
}

fn assemble_report(
    config: &ExperimentConfig,
    loaded: &LoadedData,
    plan: &FoldPlan,
    outcomes: Vec<FoldOutcome>,
) -> Result<CompareReport> {
    let d = outcomes[0].data.train.n_features();
    let mut methods = Vec::new();
    let mut curves = Vec::new();
    for (m, &kind) in config.compare.methods.iter().enumerate() {
        let rankings: Vec<FeatureRanking> = outcomes.iter().map(|o| o.rankings[m].clone()).collect();
        let mut spearman_rows = Vec::new();
        if let Some(truth) = &loaded.truth {
            for &k in config.compare.top_k.iter().filter(|&&k| k <= d) {
                let per_fold = rankings
                    .iter()
                    .map(|r| Ok(spearman(r, truth, k)?.coefficient))
                    .collect::<Result<Vec<_>>>()?;
                let (mean, sd) = mean_sd(&per_fold);
                spearman_rows.push(TopKSummary {
                    top_k: k,
                    per_fold,
                    mean,
                    sd,
                });
            }
        }
        if config.compare.eval_modes.contains(&EvalMode::ZeroOut) {
            let per_fold: Vec<EvalCurve> = outcomes.iter().map(|o| o.zero_out[m].clone()).collect();
            curves.push(EvalCurve::merge_folds(&per_fold)?);
        }
        if config.compare.eval_modes.contains(&EvalMode::Retrain) {
            let folds: Vec<FoldData> = outcomes.iter().map(|o| o.data.clone()).collect();
            let n_list: Vec<usize> = config.compare.n_list.iter().copied().filter(|&n| n >= 1 && n <= d).collect();
            let spec = RetrainSpec {
                task: config.task(),
                architecture: &config.model,
                train_config: &config.train,
                seed: config.seed,
            };
            curves.push(retrain_eval(&rankings, &folds, &spec, &n_list, kind.name())?);
        }
        methods.push(MethodSummary {
            method: kind,
            spearman: spearman_rows,
            orders: rankings.iter().map(|r| r.order.clone()).collect(),
            scores: rankings.iter().map(|r| r.scores.clone()).collect(),
        });
    }
    Ok(CompareReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.to_json(),
        feature_names: outcomes[0].feature_names.clone(),
        ground_truth: loaded.truth.clone(),
        fold_plan_seed: plan.seed,
        training: outcomes.iter().map(|o| o.training.clone()).collect(),
        methods,
        not_computed: EXTERNAL_BASELINES.iter().map(|s| s.to_string()).collect(),
        curves,
    })
}

/// Train/validation data and a trained model from fold 0 of the plan; the
/// single-split setting used by the stability and λ studies and by the
/// train / rank / evaluate commands.
pub struct Holdout {
    pub data: FoldData,
    pub feature_names: Vec<String>,
    pub truth: Option<Vec<f64>>,
    pub preprocessor: FittedPreprocessor,
}

pub fn holdout(config: &ExperimentConfig) -> Result<Holdout> {
    config.validate()?;
    let loaded = load_data(&config.data)?;
    let plan = fold_plan(config, loaded.table.n_rows())?;
    let (data, pre) = prepare_fold(&loaded.table, &plan, 0, &config.preprocess)?;
    Ok(Holdout {
        feature_names: pre.feature_names.clone(),
        data,
        truth: loaded.truth,
        preprocessor: pre,
    })
}

/// What a stability seed changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityScope {
    /// One model trained from the configured seed; each seed refits only
    /// the dropout rates (noise draws and batch order).
    DropoutFit,
    /// Each seed retrains the model and refits the dropout rates.
    FullPipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub scope: StabilityScope,
    pub seeds: Vec<u64>,
    pub keep_probs: Vec<Vec<f64>>,
    /// `pairwise[i][j]` is the Spearman correlation between seeds i and j.
    pub pairwise: Vec<Vec<f64>>,
    pub min_pairwise: f64,
}

/// Keep probabilities learned under several seeds on the holdout split.
pub fn stability_study(
    config: &ExperimentConfig,
    master_seeds: &[u64],
    scope: StabilityScope,
) -> Result<StabilityReport> {
    let base = holdout(config)?;
    let shared = match scope {
        StabilityScope::DropoutFit => Some(train_fold_model(config, &base.data, 0)?.0),
        StabilityScope::FullPipeline => None,
    };
    let keep_probs = config.with_pool(|| {
        master_seeds
            .par_iter()
            .map(|&s| {
                let owned;
                let model = match &shared {
                    Some(m) => m,
                    None => {
                        let cfg = ExperimentConfig {
                            seed: s,
                            ..config.clone()
                        };
                        owned = train_fold_model(&cfg, &base.data, 0)?.0;
                        &owned
                    }
                };
                let fr = FrConfig {
                    seed: seeds::derive(s, &[seeds::stream::DROPOUT_FR]),
                    ..config.rankers.dropout_fr.clone()
                };
                Ok(fit_dropout_rates(model, &base.data.train, &fr)?
                    .keep_probs
                    .as_slice()
                    .to_vec())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let n = keep_probs.len();
    let mut pairwise = vec![vec![1.0; n]; n];
    let mut min_pairwise = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let r = spearman_vectors(&keep_probs[i], &keep_probs[j])?;
            pairwise[i][j] = r;
            pairwise[j][i] = r;
            min_pairwise = min_pairwise.min(r);
        }
    }
    Ok(StabilityReport {
        scope,
        seeds: master_seeds.to_vec(),
        keep_probs,
        pairwise,
        min_pairwise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub keep_probs: Vec<f64>,
    pub mean_keep_prob: f64,
    pub masked_val_loss: f64,
    pub saturated: bool,
}

/// Fits dropout rates for each λ against one trained model and reports
/// the masked validation loss used to pick λ. Seeds match the fold-0
/// dropout ranking, so the configured λ reproduces it.
pub fn lambda_sweep(
    config: &ExperimentConfig,
    model: &MlpModel,
    data: &FoldData,
    lambdas: &[f64],
) -> Result<Vec<LambdaPoint>> {
    config.with_pool(|| {
        lambdas
            .par_iter()
            .map(|&lambda| {
                let fr = FrConfig {
                    lambda,
                    seed: seeds::derive(fold_seed(config, 0), &[seeds::stream::DROPOUT_FR]),
                    ..config.rankers.dropout_fr.clone()
                };
                let fit = fit_dropout_rates(model, &data.train, &fr)?;
                let masked_val_loss = masked_loss(
                    model,
                    &data.val,
                    &fit.layer,
                    fr.temperature,
                    16,
                    seeds::derive(config.seed, &[seeds::stream::NOISE, u64::MAX]),
                )?;
                Ok(LambdaPoint {
                    lambda,
                    mean_keep_prob: fit.keep_probs.mean(),
                    keep_probs: fit.keep_probs.as_slice().to_vec(),
                    masked_val_loss,
                    saturated: fit.saturated,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Default tolerance for [`select_lambda`].
pub const LAMBDA_TOLERANCE: f64 = 0.1;

/// Largest λ whose masked validation loss is within `tolerance` (relative)
/// of the best loss on the grid.
pub fn select_lambda(points: &[LambdaPoint], tolerance: f64) -> Option<f64> {
    let best = points
        .iter()
        .map(|p| p.masked_val_loss)
        .fold(f64::INFINITY, f64::min);
    points
        .iter()
        .filter(|p| p.masked_val_loss <= best * (1.0 + tolerance))
        .map(|p| p.lambda)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
}
