use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tvsurv::data::{build_grid, load_cohort, parse_sequence, save_cohort, sequence_key, Cohort, Format};
use tvsurv::dgp::{Dgp, DgpConfig};
use tvsurv::experiment::{
    run_ablation, run_experiment, run_feedback_sweep, summary_csv, write_reports, ExperimentConfig,
};
use tvsurv::metrics::evaluate;
use tvsurv::model::{ModelConfig, ModelParams};
use tvsurv::objective::{train, EpochReport};
use tvsurv::weights::{
    fit_propensity, stabilized_weights, trim_weights, weight_diagnostics, WeightEntry, WeightTable,
    WeightsMode,
};
use tvsurv::{Error, Result};

#[derive(Parser)]
#[command(name = "tvsurv", version, about = "Counterfactual survival curves under time-varying treatments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic cohort with ground-truth potential survival curves.
    Simulate(SimulateArgs),
    /// Fit propensity models and write stabilized weights.
    FitWeights(FitWeightsArgs),
    /// Train a model on a cohort and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a cohort that carries ground truth.
    Evaluate(EvaluateArgs),
    /// Run replicated experiments from a config file.
    Experiment(ExperimentArgs),
    /// Run all six ablation variants.
    Ablate(ExperimentArgs),
    /// Compare the full model and α = 0 across feedback strengths.
    SweepFeedback(SweepArgs),
    /// Write counterfactual survival curves for given treatment sequences.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    feedback: f64,
    #[arg(long, default_value_t = 1.0)]
    confounding: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    nonlinear: bool,
    #[arg(long, default_value_t = 0.3)]
    censor_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    m_truth: usize,
    /// `.csv` writes the long format plus an outcomes file; anything else JSONL.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitWeightsArgs {
    #[arg(long)]
    data: PathBuf,
    /// One logistic model over all steps instead of one per step.
    #[arg(long)]
    pooled: bool,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Lower and upper trimming quantiles.
    #[arg(long, default_value = "0.01,0.99")]
    trim: String,
    /// Weights CSV; diagnostics go next to it as `<stem>_diagnostics.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Weights CSV from `fit-weights`; fitted here from the config when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Config file; its `model`, `train`, `grid` and `weights` sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    weights_mode: Option<WeightsMode>,
    /// Output directory for `model.json` and `epochs.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Two comma-separated sequences; all-treat vs never-treat when absent.
    #[arg(long)]
    contrast: Option<String>,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `dgp.seed`, the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated feedback strengths; the config's `feedback_grid` when absent.
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Treatment sequence such as `110000000`; repeat for several.
    #[arg(long = "sequence", required = true)]
    sequences: Vec<String>,
    /// Restrict to one individual.
    #[arg(long)]
    id: Option<String>,
    /// Write the cohort-average curve instead of one curve per individual.
    #[arg(long)]
    mean: bool,
    /// Output directory; one `predict_<sequence>.csv` per sequence.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<WeightsMode, String> {
    match s {
        "stabilized" => Ok(WeightsMode::Stabilized),
        "unstabilized" => Ok(WeightsMode::Unstabilized),
        "unit" => Ok(WeightsMode::Unit),
        other => Err(format!("unknown weights mode {other:?} (stabilized, unstabilized, unit)")),
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: {v:?} is not a number")))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_cohort(path: &Path) -> Result<Cohort> {
    load_cohort(path, Format::from_path(path))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = DgpConfig {
        n: args.n,
        k: args.k,
        d: args.d,
        feedback: args.feedback,
        confounding: args.confounding,
        nonlinear: args.nonlinear,
        censor_rate: args.censor_rate,
        seed: args.seed,
        m_truth: args.m_truth,
    };
    let cohort = Dgp::new(config)?.simulate()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    save_cohort(&cohort, &args.out, Format::from_path(&args.out))?;
    let events = cohort.trajectories.iter().filter(|t| t.event).count();
    log::info!(
        "wrote {} individuals ({} events) to {}",
        cohort.len(),
        events,
        args.out.display()
    );
    Ok(())
}

fn weights_csv(table: &WeightTable) -> String {
    let mut out = String::from("id,w_raw,w_trimmed\n");
    for e in &table.entries {
        let _ = writeln!(out, "{},{},{}", e.id, e.raw, e.trimmed);
    }
    out
}

fn fit_weights(args: FitWeightsArgs) -> Result<()> {
    let trim = parse_list(&args.trim, "--trim")?;
    let [lo, hi] = trim[..] else {
        return Err(Error::Config("--trim takes two quantiles, e.g. 0.01,0.99".into()));
    };
    let cohort = read_cohort(&args.data)?;
    let model = fit_propensity(&cohort, args.pooled, args.l2)?;
    let table = trim_weights(&stabilized_weights(&cohort, &model)?, lo, hi)?;
    let diagnostics = weight_diagnostics(&table)?;
    write_file(&args.out, &weights_csv(&table))?;
    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("weights");
    let diag_path = args.out.with_file_name(format!("{stem}_diagnostics.json"));
    write_file(&diag_path, &serde_json::to_string_pretty(&diagnostics)?)?;
    log::info!(
        "stabilized weights: mean {:.4}, max {:.3}, ess {:.1}; {} positivity warnings",
        diagnostics.raw.mean,
        diagnostics.raw.max,
        diagnostics.trimmed.ess,
        diagnostics.positivity_warnings
    );
    Ok(())
}

/// Weights written by `fit-weights`, in cohort order. Unstabilized weights
/// are not part of that file.
fn read_weights(path: &Path, cohort: &Cohort) -> Result<WeightTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_id = std::collections::HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Schema {
                    path: path.display().to_string(),
                    row: row + 2,
                    field: name.into(),
                    reason: "missing or not a number".into(),
                })
        };
        let id = rec.get(0).unwrap_or_default().to_string();
        by_id.insert(id, (field(1, "w_raw")?, field(2, "w_trimmed")?));
    }
    let entries = cohort
        .trajectories
        .iter()
        .map(|t| {
            let (raw, trimmed) = by_id.get(&t.id).copied().ok_or_else(|| {
                Error::Data(format!("{}: no weight for individual {}", path.display(), t.id))
            })?;
            Ok(WeightEntry {
                id: t.id.clone(),
                raw,
                trimmed,
                unstabilized: f64::NAN,
                factors: Vec::new(),
                positivity_warning: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightTable {
        entries,
        lower_q: f64::NAN,
        upper_q: f64::NAN,
    })
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cohort = read_cohort(&args.data)?;
    let mut tc = config.train.clone();
    if let Some(a) = args.alpha {
        tc.alpha = a;
    }
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(s) = args.seed {
        tc.seed = s;
    }
    if let Some(m) = args.weights_mode {
        tc.weights_mode = m;
    }
    tc.validate()?;
    let grid = build_grid(&cohort, config.grid.m, config.grid.strategy)?;
    let weights = match &args.weights {
        Some(p) => {
            if tc.weights_mode == WeightsMode::Unstabilized {
                return Err(Error::Config(
                    "unstabilized weights are not in the weights file; omit --weights to fit them here".into(),
                ));
            }
            read_weights(p, &cohort)?
        }
        None => {
            let w = &config.weights;
            let model = fit_propensity(&cohort, w.pooled, w.l2)?;
            trim_weights(&stabilized_weights(&cohort, &model)?, w.trim_lower, w.trim_upper)?
        }
    };
    let model_config = ModelConfig {
        d: cohort.d,
        k: cohort.k,
        m: grid.m(),
        seed: args.seed.unwrap_or(config.model.seed),
        ..config.model.clone()
    };
    let init = ModelParams::init(&model_config)?;
    let mut log_lines = String::new();
    let outcome = train(&cohort, &grid, init, &tc, &weights, |r: &EpochReport| {
        log::info!(
            "epoch {}: total {:.5} surv {:.5} bal {:.5} mmd {:.5}",
            r.epoch,
            r.total,
            r.l_surv,
            r.l_bal,
            r.final_mmd()
        );
        if let Ok(line) = serde_json::to_string(r) {
            log_lines.push_str(&line);
            log_lines.push('\n');
        }
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    outcome.params.save(&args.out.join("model.json"), &grid)?;
    write_file(&args.out.join("epochs.jsonl"), &log_lines)?;
    Ok(())
}

fn contrast_of(spec: Option<&str>, k: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    match spec {
        None => Ok((vec![1; k + 1], vec![0; k + 1])),
        Some(s) => {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            let [a, b] = parts[..] else {
                return Err(Error::Config("--contrast takes two sequences, e.g. 111,000".into()));
            };
            Ok((parse_sequence(a)?, parse_sequence(b)?))
        }
    }
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let (params, grid) = ModelParams::load(&args.model)?;
    let cohort = read_cohort(&args.data)?;
    let (a, b) = contrast_of(args.contrast.as_deref(), cohort.k)?;
    let report = evaluate(&params, &grid, &cohort, (&a, &b))?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => println!("{text}"),
    }
    log::info!(
        "tv_pehe {:.4}  c_index {:.4}  ibs {:.4}  irmse {:.4}",
        report.tv_pehe,
        report.c_index,
        report.ibs,
        report.irmse
    );
    Ok(())
}

fn load_experiment(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.dgp.seed = s;
    }
    Ok(config)
}

fn finish(run: &tvsurv::experiment::ExperimentRun, out: &Path) -> Result<()> {
    write_reports(run, out)?;
    print!("{}", summary_csv(run));
    let failed: usize = run
        .outcomes
        .iter()
        .flat_map(|o| &o.variants)
        .filter(|v| v.status != "ok")
        .count();
    if failed > 0 {
        log::warn!("{failed} variant runs failed; see the replicate files");
    }
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    id: &'a str,
    tau: f64,
    survival: f64,
}

fn predict_cmd(args: PredictArgs) -> Result<()> {
    let (params, grid) = ModelParams::load(&args.model)?;
    let mut cohort = read_cohort(&args.data)?;
    if let Some(id) = &args.id {
        let idx: Vec<usize> = cohort
            .trajectories
            .iter()
            .position(|t| &t.id == id)
            .into_iter()
            .collect();
        if idx.is_empty() {
            return Err(Error::Data(format!("no individual {id:?} in {}", args.data.display())));
        }
        cohort = cohort.subset(&idx);
    }
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    for s in &args.sequences {
        let seq = parse_sequence(s)?;
        let curves = params.predict_cohort(&cohort, &seq)?;
        let path = args.out.join(format!("predict_{}.csv", sequence_key(&seq)));
        let mut w = csv::Writer::from_path(&path)?;
        if args.mean {
            let n = curves.len() as f64;
            for (j, &tau) in grid.boundaries().iter().enumerate() {
                let s = curves.iter().map(|c| c.with_origin()[j]).sum::<f64>() / n;
                w.serialize(CurveRow {
                    id: "mean",
                    tau,
                    survival: s,
                })?;
            }
        } else {
            for (c, tr) in curves.iter().zip(&cohort.trajectories) {
                for (&tau, s) in grid.boundaries().iter().zip(c.with_origin()) {
                    w.serialize(CurveRow {
                        id: &tr.id,
                        tau,
                        survival: s,
                    })?;
                }
            }
        }
        w.flush().map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitWeights(a) => fit_weights(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => {
            let config = load_experiment(&a.config, a.seed)?;
            finish(&run_experiment(&config)?, &a.out)
        }
        Command::Ablate(a) => {
            let config = load_experiment(&a.config, a.seed)?;
            finish(&run_ablation(&config)?, &a.out)
        }
        Command::SweepFeedback(a) => {
            let config = load_experiment(&a.config, a.seed)?;
            let betas = match &a.betas {
                Some(s) => parse_list(s, "--betas")?,
                None => config.feedback_grid.clone(),
            };
            finish(&run_feedback_sweep(&config, &betas)?, &a.out)
        }
        Command::Predict(a) => predict_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
