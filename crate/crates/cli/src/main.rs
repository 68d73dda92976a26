//! Command-line front end: simulate → train → rank → evaluate → compare.
//!
//! Every command that needs data takes an experiment config (TOML, with
//! `--set section.key=value` overrides) and works on fold 0 of the
//! config's fold plan, so train, rank and evaluate see the same split.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dropout_fr::concrete::{rank_from_rates, KeepProbVector};
use dropout_fr::datasets::{generate_sim, sim_feature_names, write_csv, SimKind};
use dropout_fr::eval::{
    evaluate_model, parse_n_list, retrain_eval, write_curves_csv, zero_out_eval, EvalCurve,
    EvalMode, FoldData, RetrainSpec,
};
use dropout_fr::experiment::{
    fold_plan, fold_seed, holdout, lambda_sweep, load_data, prepare_fold, run_compare,
    select_lambda, train_fold_model, ExperimentConfig, LAMBDA_TOLERANCE,
};
use dropout_fr::io::write_json;
use dropout_fr::nn::MlpModel;
use dropout_fr::rankers::run_ranker;
use dropout_fr::ranking::{RankerKind, RankingFile};
use dropout_fr::seeds;
use dropout_fr::Error;
use serde_json::json;

const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "dropout-fr",
    version,
    about = "Feature ranking for feed-forward networks via learned input dropout rates"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.max_epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as `--set seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores (same as `--set jobs=N`).
    #[arg(long)]
    jobs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(j) = self.jobs {
            overrides.push(format!("jobs={j}"));
        }
        Ok(ExperimentConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output directory; falls back to the config's `output_dir`, then `.`.
    #[arg(long, env = "DROPOUT_FR_OUT")]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn dir(&self, config: Option<&ExperimentConfig>) -> Result<PathBuf, CliError> {
        let dir = self
            .out
            .clone()
            .or_else(|| config.and_then(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(dir)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and its ground-truth ranking.
    Simulate {
        /// no_interaction or interaction
        #[arg(long)]
        kind: SimKind,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train the full-feature model on the fold-0 training split.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Rank features with one method.
    Rank {
        /// dropout_fr, mean, shuffle, marginal, random or deep_fs
        #[arg(long)]
        method: RankerKind,
        /// Trained model (required by every method except marginal and random).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated λ values for dropout_fr; writes one ranking per λ
        /// and a masked validation loss report. `config` uses compare.lambda_grid.
        #[arg(long)]
        lambda_grid: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Zero-out or retrain performance curve for a ranking.
    Evaluate {
        /// zero_out or retrain
        #[arg(long)]
        mode: EvalMode,
        /// Ranking file written by `rank`.
        #[arg(long)]
        ranking: PathBuf,
        /// Trained model (zero_out only).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Feature counts, e.g. "1,2,5,10,20,40"; defaults to compare.n_list.
        #[arg(long)]
        n_list: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validated comparison of all configured rankers.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: usage: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate { kind, n, seed, out } => cmd_simulate(kind, n, seed, &out.dir(None)?),
        Command::Train { config, out } => {
            let cfg = config.load()?;
            cmd_train(&cfg, &out.dir(Some(&cfg))?)
        }
        Command::Rank {
            method,
            model,
            lambda_grid,
            config,
            out,
        } => {
            let cfg = config.load()?;
            cmd_rank(method, model.as_deref(), lambda_grid.as_deref(), &cfg, &out.dir(Some(&cfg))?)
        }
        Command::Evaluate {
            mode,
            ranking,
            model,
            n_list,
            config,
            out,
        } => {
            if mode == EvalMode::Retrain && config.config.is_none() {
                return Err(CliError::Usage(
                    "retrain evaluation needs a training config (--config)".into(),
                ));
            }
            let cfg = config.load()?;
            let dir = out.dir(Some(&cfg))?;
            cmd_evaluate(mode, &ranking, model.as_deref(), n_list.as_deref(), &cfg, &dir)
        }
        Command::Compare { config, out } => {
            let cfg = config.load()?;
            let dir = out.dir(Some(&cfg))?;
            let report = run_compare(&cfg)?;
            report.write(&dir)?;
            println!("{}", dir.join("report.json").display());
            println!("{}", dir.join("report.md").display());
            println!("{}", dir.join("curves.csv").display());
            Ok(())
        }
    }
}

fn cmd_simulate(kind: SimKind, n: usize, seed: u64, dir: &Path) -> CliResult {
    let sim = generate_sim(kind, n, seed)?;
    let data_path = dir.join(format!("{kind}.csv"));
    let truth_path = dir.join(format!("{kind}.truth.json"));
    write_csv(&data_path, &sim.data, &sim_feature_names(), "y")?;
    sim.ground_truth().save(&truth_path)?;
    println!("{}", data_path.display());
    println!("{}", truth_path.display());
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, dir: &Path) -> CliResult {
    let h = holdout(cfg)?;
    let (model, report) = cfg.with_pool(|| train_fold_model(cfg, &h.data, 0))??;
    let test_metric = evaluate_model(&model, &h.data.test)?;
    let model_path = dir.join("model.json");
    let report_path = dir.join("train_report.json");
    let tc = dropout_fr::nn::TrainConfig {
        seed: seeds::derive(cfg.seed, &[seeds::stream::TRAIN, 0]),
        ..cfg.train.clone()
    };
    model.save(&model_path, Some(&tc))?;
    write_json(
        &report_path,
        &json!({
            "format_version": ARTIFACT_FORMAT_VERSION,
            "config": cfg.to_json(),
            "seeds": {
                "model_init": seeds::derive(cfg.seed, &[seeds::stream::MODEL_INIT, 0]),
                "train": tc.seed,
            },
            "feature_names": h.feature_names,
            "test_metric": test_metric,
            "report": report,
        }),
    )?;
    println!("{}", model_path.display());
    println!("{}", report_path.display());
    Ok(())
}

fn load_model(path: Option<&Path>, method: &str) -> Result<MlpModel, CliError> {
    let path = path.ok_or_else(|| CliError::Usage(format!("{method} needs a trained model (--model)")))?;
    Ok(MlpModel::load(path)?.0)
}

fn parse_lambda_grid(raw: &str, cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    if raw == "config" {
        return Ok(cfg.compare.lambda_grid.clone());
    }
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|l| *l >= 0.0 && l.is_finite())
                .ok_or_else(|| CliError::Usage(format!("'{t}' in --lambda-grid is not a valid λ")))
        })
        .collect()
}

fn cmd_rank(
    method: RankerKind,
    model_path: Option<&Path>,
    lambda_grid: Option<&str>,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> CliResult {
    let h = holdout(cfg)?;
    let model = if method.needs_model() {
        Some(load_model(model_path, method.name())?)
    } else {
        None
    };
    let seed = fold_seed(cfg, 0);
    let echo = |extra: serde_json::Value| {
        json!({
            "experiment": cfg.to_json(),
            "seed": seed,
            "split": "fold 0 training rows",
            "extra": extra,
        })
    };

    if let Some(raw) = lambda_grid {
        if method != RankerKind::DropoutFr {
            return Err(CliError::Usage("--lambda-grid only applies to dropout_fr".into()));
        }
        let grid = parse_lambda_grid(raw, cfg)?;
        let model = model.as_ref().expect("dropout_fr needs a model");
        let points = lambda_sweep(cfg, model, &h.data, &grid)?;
        for p in &points {
            let ranking = rank_from_rates(&KeepProbVector::new(p.keep_probs.clone())?);
            let path = dir.join(format!("ranking_dropout_fr_lambda_{}.json", p.lambda));
            RankingFile::new(&ranking, h.feature_names.clone(), echo(json!({ "lambda": p.lambda })))
                .save(&path)?;
            println!("{}", path.display());
        }
        let report_path = dir.join("lambda_report.json");
        write_json(
            &report_path,
            &json!({
                "format_version": ARTIFACT_FORMAT_VERSION,
                "config": cfg.to_json(),
                "rule": "largest lambda whose masked validation loss is within tolerance of the best",
                "tolerance": LAMBDA_TOLERANCE,
                "selected": select_lambda(&points, LAMBDA_TOLERANCE),
                "points": points,
            }),
        )?;
        println!("{}", report_path.display());
        return Ok(());
    }

    let ranking = cfg.with_pool(|| {
        run_ranker(method, model.as_ref(), &h.data.train, cfg.task(), &cfg.rankers, seed)
    })??;
    let path = dir.join(format!("ranking_{method}.json"));
    RankingFile::new(&ranking, h.feature_names.clone(), echo(json!(null))).save(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_evaluate(
    mode: EvalMode,
    ranking_path: &Path,
    model_path: Option<&Path>,
    n_list: Option<&str>,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> CliResult {
    let file = RankingFile::load(ranking_path)?;
    let ranking = file.ranking()?;
    let d = ranking.len();
    let n_list = match n_list {
        Some(s) => parse_n_list(s)?,
        None => cfg.compare.n_list.iter().copied().filter(|&n| n <= d).collect(),
    };
    let method = ranking.method.name();
    let (curve, extra): (EvalCurve, serde_json::Value) = match mode {
        EvalMode::ZeroOut => {
            let model = load_model(model_path, "zero_out evaluation")?;
            let h = holdout(cfg)?;
            let full = evaluate_model(&model, &h.data.test)?;
            let curve = zero_out_eval(&model, &ranking, &h.data.test, &n_list, method)?;
            (curve, json!({ "full_test_metric": full, "split": "fold 0 test rows" }))
        }
        EvalMode::Retrain => {
            let loaded = load_data(&cfg.data)?;
            let plan = fold_plan(cfg, loaded.table.n_rows())?;
            let folds = (0..plan.k)
                .map(|f| Ok(prepare_fold(&loaded.table, &plan, f, &cfg.preprocess)?.0))
                .collect::<Result<Vec<FoldData>, Error>>()?;
            let spec = RetrainSpec {
                task: cfg.task(),
                architecture: &cfg.model,
                train_config: &cfg.train,
                seed: cfg.seed,
            };
            let curve = cfg.with_pool(|| retrain_eval(&[ranking.clone()], &folds, &spec, &n_list, method))??;
            (curve, json!({ "folds": plan.k }))
        }
    };
    let csv_path = dir.join(format!("curves_{}.csv", mode.name()));
    let summary_path = dir.join(format!("summary_{}.json", mode.name()));
    write_curves_csv(&csv_path, std::slice::from_ref(&curve))?;
    write_json(
        &summary_path,
        &json!({
            "format_version": ARTIFACT_FORMAT_VERSION,
            "config": cfg.to_json(),
            "ranking": ranking_path.display().to_string(),
            "ranking_config": file.config,
            "curve": curve,
            "details": extra,
        }),
    )?;
    println!("{}", csv_path.display());
    println!("{}", summary_path.display());
    Ok(())
}
