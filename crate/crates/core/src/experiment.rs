//! Replicated simulate → weights → train → evaluate pipeline, the ablation
//! variants and the feedback-strength sweep, with their report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{build_grid, parse_sequence, sequence_key, Cohort, GridStrategy, TimeGrid};
use crate::dgp::{Dgp, DgpConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{EncoderKind, Group, ModelConfig, ModelParams};
use crate::objective::{train, EpochReport, TrainConfig};
use crate::weights::{
    fit_propensity, stabilized_weights, trim_weights, weight_diagnostics, WeightDiagnostics,
    WeightTable, WeightsMode,
};

/// Evaluation cohorts are drawn with the replicate seed xor this salt.
const EVAL_SALT: u64 = 0x5eed_e7a1_0000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    pub strategy: GridStrategy,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m: 20,
            strategy: GridStrategy::Quantile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub pooled: bool,
    pub l2: f64,
    pub trim_lower: f64,
    pub trim_upper: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            pooled: true,
            l2: 0.0,
            trim_lower: 0.01,
            trim_upper: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// `α = 0`.
    NoBalancing,
    FlattenedHistory,
    /// Unit weights.
    NoIptw,
    UnstabilizedWeights,
    /// Encoder and φ trained on the factual likelihood, frozen, then the
    /// head trained on the full objective.
    FixedRepresentation,
}

impl Variant {
    pub const ABLATION: [Variant; 6] = [
        Variant::Full,
        Variant::NoBalancing,
        Variant::FlattenedHistory,
        Variant::NoIptw,
        Variant::UnstabilizedWeights,
        Variant::FixedRepresentation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoBalancing => "no_balancing",
            Variant::FlattenedHistory => "flattened_history",
            Variant::NoIptw => "no_iptw",
            Variant::UnstabilizedWeights => "unstabilized_weights",
            Variant::FixedRepresentation => "fixed_representation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpConfig,
    /// `d`, `k` and `m` are taken from the simulator and grid sections.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: GridConfig,
    pub weights: WeightsConfig,
    /// Target and reference sequences, e.g. `["111111111", "000000000"]`;
    /// empty means all-treat versus never-treat.
    pub contrast: Vec<String>,
    pub replications: usize,
    /// Size of each evaluation cohort; 0 means `dgp.n`.
    pub eval_n: usize,
    pub variants: Vec<Variant>,
    /// Feedback strengths for the sweep.
    pub feedback_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            grid: GridConfig::default(),
            weights: WeightsConfig::default(),
            contrast: Vec::new(),
            replications: 10,
            eval_n: 0,
            variants: vec![Variant::Full],
            feedback_grid: vec![0.1, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.train.validate()?;
        self.resolved_model(self.grid.m).validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.grid.m < 2 {
            return Err(Error::Config("grid.m must be at least 2".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must not be empty".into()));
        }
        self.contrast_sequences()?;
        Ok(())
    }

    fn resolved_model(&self, m: usize) -> ModelConfig {
        ModelConfig {
            d: self.dgp.d,
            k: self.dgp.k,
            m,
            ..self.model.clone()
        }
    }

    pub fn contrast_sequences(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let len = self.dgp.k + 1;
        match self.contrast.as_slice() {
            [] => Ok((vec![1; len], vec![0; len])),
            [a, b] => {
                let (a, b) = (parse_sequence(a)?, parse_sequence(b)?);
                if a.len() != len || b.len() != len {
                    return Err(Error::Config(format!("contrast sequences must have {len} entries")));
                }
                Ok((a, b))
            }
            _ => Err(Error::Config("contrast takes exactly two sequences".into())),
        }
    }

    /// Hex SHA-256 prefix of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable config");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Everything one replicate's variants share.
pub struct ReplicateData {
    pub index: usize,
    pub seed: u64,
    pub dgp: Dgp,
    pub train: Cohort,
    pub eval: Cohort,
    pub grid: TimeGrid,
    pub weights: WeightTable,
    pub diagnostics: WeightDiagnostics,
}

pub fn prepare_replicate(config: &ExperimentConfig, index: usize) -> Result<ReplicateData> {
    let seed = config.dgp.seed.wrapping_add(index as u64);
    let dgp = Dgp::new(config.dgp.clone())?;
    let train = dgp.simulate_seeded(seed)?;
    let eval_n = if config.eval_n == 0 { config.dgp.n } else { config.eval_n };
    let eval_dgp = Dgp::new(DgpConfig {
        n: eval_n,
        ..config.dgp.clone()
    })?;
    let mut eval = eval_dgp.simulate_seeded(seed ^ EVAL_SALT)?;
    let (a, b) = config.contrast_sequences()?;
    add_truth(&dgp, &mut eval, &[a, b])?;
    let grid = build_grid(&train, config.grid.m, config.grid.strategy)?;
    let model = fit_propensity(&train, config.weights.pooled, config.weights.l2)?;
    let raw = stabilized_weights(&train, &model)?;
    let weights = trim_weights(&raw, config.weights.trim_lower, config.weights.trim_upper)?;
    let diagnostics = weight_diagnostics(&weights)?;
    Ok(ReplicateData {
        index,
        seed,
        dgp,
        train,
        eval,
        grid,
        weights,
        diagnostics,
    })
}

/// Make sure the cohort carries truth curves for every listed sequence.
fn add_truth(dgp: &Dgp, cohort: &mut Cohort, sequences: &[Vec<u8>]) -> Result<()> {
    let truth = cohort.ground_truth.get_or_insert_with(Default::default);
    if truth.tau.is_empty() {
        truth.tau = dgp.truth_grid().taus().to_vec();
    }
    for seq in sequences {
        let key = sequence_key(seq);
        for tr in &cohort.trajectories {
            let slot = (tr.id.clone(), key.clone());
            if !truth.curves.contains_key(&slot) {
                let curve = dgp.true_survival(tr, seq, &truth.tau)?;
                truth.curves.insert(slot, curve);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub status: String,
    pub error: Option<String>,
    pub report: Option<EvalReport>,
    pub final_mmd: Option<f64>,
    #[serde(skip)]
    pub epochs: Vec<EpochReport>,
    #[serde(skip)]
    pub mean_curves: Option<MeanCurves>,
}

/// Cohort-average predicted and true survival under each contrast sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurves {
    pub tau: Vec<f64>,
    pub predicted: [Vec<f64>; 2],
    pub truth: [Vec<f64>; 2],
}

fn variant_configs(config: &ExperimentConfig, variant: Variant, seed: u64, m: usize) -> (ModelConfig, TrainConfig) {
    let mut model = config.resolved_model(m);
    model.seed = seed;
    let mut train = config.train.clone();
    train.seed = seed;
    match variant {
        Variant::Full | Variant::FixedRepresentation => {}
        Variant::NoBalancing => train.alpha = 0.0,
        Variant::FlattenedHistory => model.encoder = EncoderKind::Flattened,
        Variant::NoIptw => train.weights_mode = WeightsMode::Unit,
        Variant::UnstabilizedWeights => train.weights_mode = WeightsMode::Unstabilized,
    }
    (model, train)
}

/// Train and evaluate one variant on a prepared replicate.
pub fn run_variant(
    config: &ExperimentConfig,
    data: &ReplicateData,
    variant: Variant,
) -> Result<(EvalReport, Vec<EpochReport>, ModelParams)> {
    let (model_cfg, train_cfg) = variant_configs(config, variant, data.seed, data.grid.m());
    let init = ModelParams::init(&model_cfg)?;
    let (params, epochs) = if variant == Variant::FixedRepresentation {
        let pretrain = TrainConfig {
            alpha: 0.0,
            weights_mode: WeightsMode::Unit,
            ..train_cfg.clone()
        };
        let stage1 = train(&data.train, &data.grid, init, &pretrain, &data.weights, |_| {})?;
        let head_only = TrainConfig {
            frozen: vec![Group::Encoder, Group::Representation],
            baseline_init: false,
            ..train_cfg
        };
        let stage2 = train(&data.train, &data.grid, stage1.params, &head_only, &data.weights, |_| {})?;
        let mut epochs = stage1.reports;
        epochs.extend(stage2.reports);
        (stage2.params, epochs)
    } else {
        let out = train(&data.train, &data.grid, init, &train_cfg, &data.weights, |_| {})?;
        (out.params, out.reports)
    };
    let (a, b) = config.contrast_sequences()?;
    let report = evaluate(&params, &data.grid, &data.eval, (&a, &b))?;
    Ok((report, epochs, params))
}

fn mean_curves(params: &ModelParams, data: &ReplicateData, report: &EvalReport, seqs: [&[u8]; 2]) -> Result<MeanCurves> {
    let truth = data.eval.ground_truth.as_ref().expect("added in prepare");
    let tau = report.truth_grid.clone();
    let mut predicted: [Vec<f64>; 2] = Default::default();
    let mut true_mean: [Vec<f64>; 2] = Default::default();
    for (s, seq) in seqs.iter().enumerate() {
        let curves = params.predict_cohort(&data.eval, seq)?;
        let key = sequence_key(seq);
        let n = curves.len() as f64;
        let mut p = vec![0.0; tau.len()];
        let mut t = vec![0.0; tau.len()];
        for (curve, tr) in curves.iter().zip(&data.eval.trajectories) {
            let full = curve.with_origin();
            let tc = truth.curve(&tr.id, &key).expect("truth for contrast");
            for (j, &x) in tau.iter().enumerate() {
                p[j] += crate::survival::interpolate(data.grid.boundaries(), &full, x) / n;
                t[j] += if j == 0 { 1.0 } else { tc[j - 1] } / n;
            }
        }
        predicted[s] = p;
        true_mean[s] = t;
    }
    Ok(MeanCurves {
        tau,
        predicted,
        truth: true_mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub feedback: f64,
    pub error: Option<String>,
    pub diagnostics: Option<WeightDiagnostics>,
    pub weights: Option<WeightTable>,
    pub variants: Vec<VariantResult>,
}

fn run_replicate(config: &ExperimentConfig, index: usize) -> ReplicateOutcome {
    let seed = config.dgp.seed.wrapping_add(index as u64);
    let data = match prepare_replicate(config, index) {
        Ok(d) => d,
        Err(e) => {
            log::error!("replicate {index}: {e}");
            return ReplicateOutcome {
                index,
                seed,
                feedback: config.dgp.feedback,
                error: Some(e.to_string()),
                diagnostics: None,
                weights: None,
                variants: config
                    .variants
                    .iter()
                    .map(|&v| failed(v, &e))
                    .collect(),
            };
        }
    };
    let (a, b) = config.contrast_sequences().expect("validated");
    let variants = config
        .variants
        .par_iter()
        .map(|&v| match run_variant(config, &data, v) {
            Ok((report, epochs, params)) => {
                let curves = mean_curves(&params, &data, &report, [&a, &b]).ok();
                VariantResult {
                    variant: v,
                    status: "ok".into(),
                    error: None,
                    final_mmd: epochs.last().map(|r| r.final_mmd()),
                    report: Some(report),
                    epochs,
                    mean_curves: curves,
                }
            }
            Err(e) => {
                log::error!("replicate {index}, variant {}: {e}", v.name());
                failed(v, &e)
            }
        })
        .collect();
    ReplicateOutcome {
        index,
        seed,
        feedback: config.dgp.feedback,
        error: None,
        diagnostics: Some(data.diagnostics.clone()),
        weights: Some(data.weights),
        variants,
    }
}

fn failed(variant: Variant, e: &Error) -> VariantResult {
    VariantResult {
        variant,
        status: "failed".into(),
        error: Some(e.to_string()),
        report: None,
        final_mmd: None,
        epochs: Vec::new(),
        mean_curves: None,
    }
}

pub const METRICS: [&str; 5] = ["tv_pehe", "c_index", "ibs", "irmse", "final_mmd"];

fn metric_value(r: &VariantResult, metric: &str) -> Option<f64> {
    let rep = r.report.as_ref()?;
    match metric {
        "tv_pehe" => Some(rep.tv_pehe),
        "c_index" => Some(rep.c_index),
        "ibs" => Some(rep.ibs),
        "irmse" => Some(rep.irmse),
        "final_mmd" => r.final_mmd,
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub feedback: f64,
    pub variant: Variant,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over successful replicates.
    pub sd: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

pub fn summarize(outcomes: &[ReplicateOutcome], variants: &[Variant]) -> Vec<SummaryRow> {
    let mut feedbacks: Vec<f64> = outcomes.iter().map(|o| o.feedback).collect();
    feedbacks.dedup();
    let mut rows = Vec::new();
    for &fb in &feedbacks {
        for &v in variants {
            for metric in METRICS {
                let values: Vec<f64> = outcomes
                    .iter()
                    .filter(|o| o.feedback == fb)
                    .flat_map(|o| o.variants.iter().filter(|r| r.variant == v))
                    .filter_map(|r| metric_value(r, metric))
                    .collect();
                let total = outcomes
                    .iter()
                    .filter(|o| o.feedback == fb)
                    .count();
                let n = values.len();
                let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
                let sd = if n > 1 {
                    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                rows.push(SummaryRow {
                    feedback: fb,
                    variant: v,
                    metric: metric.to_string(),
                    mean,
                    sd,
                    n_ok: n,
                    n_failed: total - n,
                });
            }
        }
    }
    rows
}

/// Paired per-replicate values of one metric for two variants.
pub fn paired(outcomes: &[ReplicateOutcome], metric: &str, a: Variant, b: Variant) -> Vec<(f64, f64)> {
    outcomes
        .iter()
        .filter_map(|o| {
            let get = |v: Variant| o.variants.iter().find(|r| r.variant == v).and_then(|r| metric_value(r, metric));
            Some((get(a)?, get(b)?))
        })
        .collect()
}

pub struct ExperimentRun {
    pub config_hash: String,
    pub seed: u64,
    pub outcomes: Vec<ReplicateOutcome>,
    pub summary: Vec<SummaryRow>,
}

fn pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("TVSURV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Run every replicate of `config` (variants as configured).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let outcomes = pool()?.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|i| run_replicate(config, i))
            .collect::<Vec<_>>()
    });
    let summary = summarize(&outcomes, &config.variants);
    Ok(ExperimentRun {
        config_hash: config.hash(),
        seed: config.dgp.seed,
        outcomes,
        summary,
    })
}

/// All six ablation variants on identical cohorts and seeds.
pub fn run_ablation(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let config = ExperimentConfig {
        variants: Variant::ABLATION.to_vec(),
        ..config.clone()
    };
    run_experiment(&config)
}

/// The full model and the `α = 0` variant at each feedback strength.
pub fn run_feedback_sweep(config: &ExperimentConfig, betas: &[f64]) -> Result<ExperimentRun> {
    if betas.is_empty() {
        return Err(Error::Config("the feedback sweep needs at least one value".into()));
    }
    let mut outcomes = Vec::new();
    let mut summary = Vec::new();
    for &beta in betas {
        let sub = ExperimentConfig {
            dgp: DgpConfig {
                feedback: beta,
                ..config.dgp.clone()
            },
            variants: vec![Variant::Full, Variant::NoBalancing],
            ..config.clone()
        };
        let run = run_experiment(&sub)?;
        outcomes.extend(run.outcomes);
        summary.extend(run.summary);
    }
    let hashed = ExperimentConfig {
        feedback_grid: betas.to_vec(),
        ..config.clone()
    };
    Ok(ExperimentRun {
        config_hash: hashed.hash(),
        seed: config.dgp.seed,
        outcomes,
        summary,
    })
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "NA".into()
    }
}

/// `summary.csv` contents.
pub fn summary_csv(run: &ExperimentRun) -> String {
    let mut out = String::from("config_hash,seed,feedback,variant,metric,mean,sd,mean_pm_sd,n_ok,n_failed\n");
    for r in &run.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{} ± {},{},{}",
            run.config_hash,
            run.seed,
            r.feedback,
            r.variant.name(),
            r.metric,
            fmt_num(r.mean),
            fmt_num(r.sd),
            if r.mean.is_finite() { format!("{:.3}", r.mean) } else { "NA".into() },
            if r.sd.is_finite() { format!("{:.3}", r.sd) } else { "NA".into() },
            r.n_ok,
            r.n_failed
        );
    }
    out
}

#[derive(Serialize)]
struct ReplicateFile<'a> {
    config_hash: &'a str,
    master_seed: u64,
    replicate: usize,
    replicate_seed: u64,
    feedback: f64,
    error: &'a Option<String>,
    weight_diagnostics: &'a Option<WeightDiagnostics>,
    variants: &'a [VariantResult],
    /// The only non-reproducible field.
    created_at: String,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn unix_time() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{secs}")
}

/// Write the report files of a run under `dir`; replicate-level files of a
/// feedback sweep go to `feedback_<β>/` subdirectories.
pub fn write_reports(run: &ExperimentRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("summary.csv"), &summary_csv(run))?;
    let mut feedbacks: Vec<f64> = run.outcomes.iter().map(|o| o.feedback).collect();
    feedbacks.dedup();
    let nested = feedbacks.len() > 1;
    let mut groups: BTreeMap<usize, Vec<&ReplicateOutcome>> = BTreeMap::new();
    for (gi, fb) in feedbacks.iter().enumerate() {
        groups.insert(gi, run.outcomes.iter().filter(|o| o.feedback == *fb).collect());
    }
    for (gi, outcomes) in groups {
        let sub = if nested {
            dir.join(format!("feedback_{}", feedbacks[gi]))
        } else {
            dir.to_path_buf()
        };
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        write_replicate_files(run, &outcomes, &sub)?;
    }
    Ok(())
}

fn write_replicate_files(run: &ExperimentRun, outcomes: &[&ReplicateOutcome], dir: &Path) -> Result<()> {
    let mut weights_csv = String::from("config_hash,seed,replicate,id,w_raw,w_trimmed\n");
    let mut curves: BTreeMap<String, String> = BTreeMap::new();
    for o in outcomes {
        let file = ReplicateFile {
            config_hash: &run.config_hash,
            master_seed: run.seed,
            replicate: o.index,
            replicate_seed: o.seed,
            feedback: o.feedback,
            error: &o.error,
            weight_diagnostics: &o.diagnostics,
            variants: &o.variants,
            created_at: unix_time(),
        };
        write(
            &dir.join(format!("replicate_{}.json", o.index)),
            &serde_json::to_string_pretty(&file)?,
        )?;

        let mut lines = String::new();
        for v in &o.variants {
            for e in &v.epochs {
                let mut value = serde_json::to_value(e)?;
                if let serde_json::Value::Object(map) = &mut value {
                    map.insert("config_hash".into(), run.config_hash.clone().into());
                    map.insert("seed".into(), o.seed.into());
                    map.insert("variant".into(), v.variant.name().into());
                }
                lines.push_str(&serde_json::to_string(&value)?);
                lines.push('\n');
            }
        }
        write(&dir.join(format!("epochs_{}.jsonl", o.index)), &lines)?;

        if let Some(w) = &o.weights {
            for e in &w.entries {
                let _ = writeln!(
                    weights_csv,
                    "{},{},{},{},{},{}",
                    run.config_hash, o.seed, o.index, e.id, e.raw, e.trimmed
                );
            }
        }
        for v in &o.variants {
            let (Some(c), Some(rep)) = (&v.mean_curves, &v.report) else { continue };
            let keys = [&rep.contrast.0, &rep.contrast.1];
            for (s, key) in keys.iter().enumerate() {
                let text = curves.entry((*key).clone()).or_insert_with(|| {
                    "config_hash,seed,replicate,variant,tau,predicted,truth\n".to_string()
                });
                for j in 0..c.tau.len() {
                    let _ = writeln!(
                        text,
                        "{},{},{},{},{},{},{}",
                        run.config_hash,
                        o.seed,
                        o.index,
                        v.variant.name(),
                        c.tau[j],
                        c.predicted[s][j],
                        c.truth[s][j]
                    );
                }
            }
        }
    }
    write(&dir.join("weights.csv"), &weights_csv)?;
    for (key, text) in curves {
        write(&dir.join(format!("curves_{key}.csv")), &text)?;
    }
    Ok(())
}
