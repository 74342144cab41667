//! Training objective `L_surv + α·L_bal + β_reg·L_reg` and its minibatch
//! Adam loop.
//!
//! `L_surv` is the weighted discrete-time negative log-likelihood at the
//! factual sequence, `L_bal` a sum of RBF-kernel MMD² terms between groups of
//! representations, and `L_reg` the squared norm of every weight matrix.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tvsurv_autodiff::{Graph, Tensor, Var};

use crate::data::{Cohort, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Bound, Group, HazardOutput, ModelParams};
use crate::weights::{WeightTable, WeightsMode};

/// RBF bandwidth: a fixed value or the per-batch median pairwise distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSigma {
    Fixed(f64),
    Rule(SigmaRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaRule {
    Median,
}

impl KernelSigma {
    pub const MEDIAN: KernelSigma = KernelSigma::Rule(SigmaRule::Median);

    /// Bandwidth for a set of representation rows.
    pub fn resolve(&self, rows: &[&[f64]]) -> f64 {
        match *self {
            KernelSigma::Fixed(s) => s,
            KernelSigma::Rule(SigmaRule::Median) => median_distance(rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    /// Compare the `T(K) = 0` and `T(K) = 1` groups.
    #[default]
    FinalTreatment,
    /// Compare groups sharing `T̄(K−1)` and differing in `T(K)`.
    LastStepFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MmdEstimator {
    /// V-statistic, diagonal kernel terms included.
    #[default]
    Biased,
    /// U-statistic, diagonal terms dropped.
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta_reg: f64,
    pub kernel_sigma: KernelSigma,
    pub pair_strategy: PairStrategy,
    pub mmd_estimator: MmdEstimator,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub weights_mode: WeightsMode,
    /// Parameter groups held fixed.
    pub frozen: Vec<Group>,
    /// Size of the fixed subsample on which the per-epoch MMD is measured.
    pub diagnostic_n: usize,
    /// Start the hazard-head output bias at the pooled empirical hazards.
    pub baseline_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta_reg: 1e-4,
            kernel_sigma: KernelSigma::Fixed(1.0),
            pair_strategy: PairStrategy::FinalTreatment,
            mmd_estimator: MmdEstimator::Biased,
            epochs: 40,
            batch_size: 256,
            learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            weights_mode: WeightsMode::Stabilized,
            frozen: Vec::new(),
            diagnostic_n: 1024,
            baseline_init: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(self.alpha >= 0.0) || !(self.beta_reg >= 0.0) {
            return Err(Error::Config("train.alpha and train.beta_reg must be nonnegative".into()));
        }
        if let KernelSigma::Fixed(s) = self.kernel_sigma {
            if !(s > 0.0) {
                return Err(Error::Config("train.kernel_sigma must be positive or \"median\"".into()));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }
}

/// Median pairwise Euclidean distance between distinct rows, 1.0 when that
/// is zero or undefined.
pub fn median_distance(rows: &[&[f64]]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = *m;
    if d.len() % 2 == 0 {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        med = 0.5 * (med + lower);
    }
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

fn kernel_mean(g: &mut Graph, a: Var, b: Var, sigma: f64, drop_diagonal: bool) -> Result<Var> {
    let d2 = g.sq_dist(a, b)?;
    let scaled = g.scale(d2, -1.0 / (2.0 * sigma * sigma));
    let k = g.exp(scaled);
    let n = g.value(a).shape()[0] as f64;
    let m = g.value(b).shape()[0] as f64;
    let total = g.sum(k);
    Ok(if drop_diagonal {
        // k(x, x) = 1 on the diagonal
        let off = g.add_scalar(total, -n);
        g.scale(off, 1.0 / (n * (n - 1.0)))
    } else {
        g.scale(total, 1.0 / (n * m))
    })
}

/// MMD² between the rows of `a` and `b` with the RBF kernel
/// `exp(−‖x − y‖² / 2σ²)`.
pub fn mmd2(g: &mut Graph, a: Var, b: Var, sigma: f64, estimator: MmdEstimator) -> Result<Var> {
    let (na, nb) = (g.value(a).shape()[0], g.value(b).shape()[0]);
    if na == 0 || nb == 0 {
        return Err(Error::Data("MMD needs two nonempty sets".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    let unbiased = estimator == MmdEstimator::Unbiased;
    if unbiased && (na < 2 || nb < 2) {
        return Err(Error::Data("the unbiased MMD needs at least two points per set".into()));
    }
    let kaa = kernel_mean(g, a, a, sigma, unbiased)?;
    let kbb = kernel_mean(g, b, b, sigma, unbiased)?;
    let kab = kernel_mean(g, a, b, sigma, false)?;
    let within = g.add(kaa, kbb)?;
    let cross = g.scale(kab, -2.0);
    Ok(g.add(within, cross)?)
}

/// [`mmd2`] on plain point sets.
pub fn mmd2_sets(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64, estimator: MmdEstimator) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("MMD needs two nonempty sets".into()));
    }
    let mut g = Graph::new();
    let av = g.constant(Tensor::from_rows(a)?);
    let bv = g.constant(Tensor::from_rows(b)?);
    let v = mmd2(&mut g, av, bv, sigma, estimator)?;
    Ok(g.value(v).item())
}

/// Balancing group of a sequence; the last bit is `T(K)`, so a group's
/// comparison partner is its key with that bit flipped.
fn group_key(strategy: PairStrategy, treatments: &[u8]) -> u64 {
    let bits = treatments.iter().fold(0u64, |acc, &t| (acc << 1) | t as u64);
    match strategy {
        PairStrategy::FinalTreatment => bits & 1,
        PairStrategy::LastStepFlip => bits,
    }
}

/// Sum of MMD² over the strategy's compared group pairs. Pairs where either
/// side has fewer than two members are skipped and counted; the term is
/// `None` when every pair was.
pub fn balance_loss(
    g: &mut Graph,
    z: Var,
    batch: &[&Trajectory],
    strategy: PairStrategy,
    sigma: f64,
    estimator: MmdEstimator,
) -> Result<(Option<Var>, usize)> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, t) in batch.iter().enumerate() {
        groups.entry(group_key(strategy, &t.treatments)).or_default().push(i);
    }
    let mut total: Option<Var> = None;
    let mut skipped = 0;
    for (&key, members) in &groups {
        if key & 1 == 1 {
            // pairs are visited from their T(K) = 0 side
            if !groups.contains_key(&(key ^ 1)) {
                skipped += 1;
            }
            continue;
        }
        let other = match groups.get(&(key ^ 1)) {
            Some(o) if members.len() >= 2 && o.len() >= 2 => o,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let za = g.select_rows(z, members)?;
        let zb = g.select_rows(z, other)?;
        let term = mmd2(g, za, zb, sigma, estimator)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok((total, skipped))
}

/// Upper-triangular `[m, m]` summation matrix; `strict` excludes the diagonal.
fn cumsum_matrix(m: usize, strict: bool) -> Tensor {
    let mut data = vec![0.0; m * m];
    for l in 0..m {
        for j in 0..m {
            if l < j || (!strict && l == j) {
                data[l * m + j] = 1.0;
            }
        }
    }
    Tensor::matrix(m, m, data).expect("square")
}

/// `−(1/B) Σ_i w_i [δ_i log f̂(τ_{j_i}) + (1 − δ_i) log Ŝ(τ_{j_i})]`, with
/// `intervals` zero-based.
pub fn survival_nll(
    g: &mut Graph,
    out: &HazardOutput,
    intervals: &[usize],
    events: &[bool],
    weights: &[f64],
) -> Result<Var> {
    let (b, m) = g.value(out.hazards).dims2().ok_or_else(|| Error::Numerical("hazards are not a matrix".into()))?;
    if intervals.len() != b || events.len() != b || weights.len() != b {
        return Err(Error::Data("batch metadata does not match the hazards".into()));
    }
    let cum = g.constant(cumsum_matrix(m, false));
    let cum_strict = g.constant(cumsum_matrix(m, true));
    let log_surv = g.matmul(out.log_complement, cum)?;
    let log_surv_before = g.matmul(out.log_complement, cum_strict)?;
    let log_pmf = g.add(out.log_hazards, log_surv_before)?;
    let mut event_mask = vec![0.0; b * m];
    let mut censor_mask = vec![0.0; b * m];
    for i in 0..b {
        if intervals[i] >= m {
            return Err(Error::Grid(format!("interval {} outside a {m}-interval grid", intervals[i] + 1)));
        }
        let slot = i * m + intervals[i];
        if events[i] {
            event_mask[slot] = weights[i];
        } else {
            censor_mask[slot] = weights[i];
        }
    }
    let em = g.constant(Tensor::matrix(b, m, event_mask)?);
    let cm = g.constant(Tensor::matrix(b, m, censor_mask)?);
    let a = g.mul(log_pmf, em)?;
    let c = g.mul(log_surv, cm)?;
    let a = g.sum(a);
    let c = g.sum(c);
    let ll = g.add(a, c)?;
    Ok(g.scale(ll, -1.0 / b as f64))
}

/// Sum of squares over regularized parameters.
pub fn l2_penalty(g: &mut Graph, params: &ModelParams, bound: &Bound) -> Result<Var> {
    let mut total: Option<Var> = None;
    for p in params.params.iter().filter(|p| p.regularized) {
        let v = bound.var(&p.name);
        let sq = g.square(v);
        let s = g.sum(sq);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total.unwrap_or_else(|| g.constant(Tensor::scalar(0.0))))
}

/// Per-individual quantities the loss needs.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub trajectories: Vec<&'a Trajectory>,
    /// Zero-based interval of each observed time.
    pub intervals: Vec<usize>,
    pub events: Vec<bool>,
    pub weights: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn new(trajectories: Vec<&'a Trajectory>, grid: &TimeGrid, weights: Vec<f64>) -> Result<Self> {
        let intervals = trajectories
            .iter()
            .map(|t| grid.interval_index(t.observed_time).map(|j| j - 1))
            .collect::<Result<Vec<_>>>()?;
        let events = trajectories.iter().map(|t| t.event).collect();
        Ok(Self {
            trajectories,
            intervals,
            events,
            weights,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.trajectories.iter().map(|t| t.id.clone()).collect()
    }
}

pub struct LossNodes {
    pub surv: Var,
    pub bal: Option<Var>,
    pub reg: Var,
    pub total: Var,
    pub z: Var,
    pub skipped_pairs: usize,
}

/// Build the combined objective for one batch. `sigma` overrides the
/// configured bandwidth rule.
pub fn batch_loss(
    g: &mut Graph,
    params: &ModelParams,
    bound: &Bound,
    batch: &Batch,
    config: &TrainConfig,
    sigma: Option<f64>,
) -> Result<LossNodes> {
    let s = bound.encode(g, &batch.trajectories)?;
    let z = bound.represent(g, s)?;
    let seqs: Vec<&[u8]> = batch.trajectories.iter().map(|t| t.treatments.as_slice()).collect();
    let e = bound.sequence_embedding(g, &seqs)?;
    let out = bound.hazards(g, z, e)?;
    let surv = survival_nll(g, &out, &batch.intervals, &batch.events, &batch.weights)?;
    let mut total = surv;
    let mut bal = None;
    let mut skipped_pairs = 0;
    if config.alpha > 0.0 {
        let sigma = match sigma {
            Some(s) => s,
            None => {
                let zt = g.value(z);
                let rows: Vec<&[f64]> = (0..batch.trajectories.len()).map(|i| zt.row_slice(i)).collect();
                config.kernel_sigma.resolve(&rows)
            }
        };
        let (term, skipped) = balance_loss(g, z, &batch.trajectories, config.pair_strategy, sigma, config.mmd_estimator)?;
        skipped_pairs = skipped;
        if let Some(term) = term {
            let scaled = g.scale(term, config.alpha);
            total = g.add(total, scaled)?;
            bal = Some(term);
        }
    }
    let reg = l2_penalty(g, params, bound)?;
    if config.beta_reg > 0.0 {
        let scaled = g.scale(reg, config.beta_reg);
        total = g.add(total, scaled)?;
    }
    Ok(LossNodes {
        surv,
        bal,
        reg,
        total,
        z,
        skipped_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMmd {
    pub pair: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub l_surv: f64,
    /// Unscaled balancing term; zero when `α = 0`.
    pub l_bal: f64,
    pub l_reg: f64,
    pub total: f64,
    pub mean_weight: f64,
    pub max_weight: f64,
    /// Empirical MMD² between `T(K)` groups on a fixed subsample.
    pub mmd: Vec<PairMmd>,
    pub mmd_sigma: f64,
    pub skipped_pairs: usize,
}

impl EpochReport {
    pub fn final_mmd(&self) -> f64 {
        self.mmd.first().map(|p| p.value).unwrap_or(0.0)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &[Option<Tensor>], c: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.adam_beta1.powi(self.t);
        let bc2 = 1.0 - c.adam_beta2.powi(self.t);
        for (i, p) in params.params.iter_mut().enumerate() {
            let Some(grad) = &grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[j] = c.adam_beta1 * m[j] + (1.0 - c.adam_beta1) * gj;
                v[j] = c.adam_beta2 * v[j] + (1.0 - c.adam_beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= c.learning_rate * mh / (vh.sqrt() + c.adam_eps);
            }
        }
    }
}

/// Minibatches for one epoch. Under `final_treatment` each `T(K)` group is
/// shuffled and dealt round-robin so every batch holds its share of both;
/// under `last_step_flip` members sharing `T̄(K−1)` are kept adjacent so the
/// flipped pairs land in the same batch.
fn epoch_batches(
    cohort: &Cohort,
    strategy: PairStrategy,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n = cohort.len();
    let nb = n.div_ceil(batch_size);
    match strategy {
        PairStrategy::FinalTreatment => {
            let mut by_group: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, t) in cohort.trajectories.iter().enumerate() {
                by_group.entry(group_key(strategy, &t.treatments)).or_default().push(i);
            }
            let mut batches = vec![Vec::new(); nb];
            let mut slot = 0;
            for members in by_group.values_mut() {
                members.shuffle(rng);
                for &i in members.iter() {
                    batches[slot % nb].push(i);
                    slot += 1;
                }
            }
            for b in &mut batches {
                b.shuffle(rng);
            }
            batches
        }
        PairStrategy::LastStepFlip => {
            let mut by_prefix: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, t) in cohort.trajectories.iter().enumerate() {
                by_prefix.entry(group_key(strategy, &t.treatments) >> 1).or_default().push(i);
            }
            let mut prefixes: Vec<Vec<usize>> = by_prefix.into_values().collect();
            prefixes.shuffle(rng);
            let mut order = Vec::with_capacity(n);
            for mut members in prefixes {
                members.shuffle(rng);
                order.extend(members);
            }
            order.chunks(batch_size).map(|c| c.to_vec()).collect()
        }
    }
}

/// Normalized per-individual training weights (mean one) for a mode.
pub fn training_weights(table: &WeightTable, cohort: &Cohort, mode: WeightsMode) -> Result<Vec<f64>> {
    if table.len() != cohort.len()
        || table.entries.iter().zip(&cohort.trajectories).any(|(e, t)| e.id != t.id)
    {
        return Err(Error::Data("weight table is not aligned with the cohort ids".into()));
    }
    let w = table.weights_for(mode);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Numerical(format!("mean training weight is {mean}")));
    }
    Ok(w.into_iter().map(|v| v / mean).collect())
}

/// Logits of the pooled discrete hazards `events_j / at_risk_j` of a cohort
/// on a grid (with a half-event continuity correction).
pub fn baseline_logits(cohort: &Cohort, grid: &TimeGrid) -> Result<Vec<f64>> {
    let m = grid.m();
    let (mut events, mut at_risk) = (vec![0.0; m], vec![0.0; m]);
    for t in &cohort.trajectories {
        let j = grid.interval_index(t.observed_time)? - 1;
        if t.event {
            events[j] += 1.0;
        }
        for r in &mut at_risk[..=j] {
            *r += 1.0;
        }
    }
    Ok(events
        .iter()
        .zip(&at_risk)
        .map(|(&e, &r)| {
            let h = ((e + 0.5) / (r + 1.0_f64)).clamp(1e-4, 1.0 - 1e-4);
            (h / (1.0 - h)).ln()
        })
        .collect())
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub reports: Vec<EpochReport>,
}

/// Empirical MMD² between the `T(K)` groups of a subsample.
pub fn diagnostic_mmd(
    params: &ModelParams,
    sample: &[&Trajectory],
    sigma: KernelSigma,
) -> Result<(f64, f64)> {
    let z = params.represent_batch(sample)?;
    let rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let sigma = sigma.resolve(&rows);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (t, zi) in sample.iter().zip(&z) {
        if *t.treatments.last().expect("nonempty") == 1 {
            a.push(zi.clone());
        } else {
            b.push(zi.clone());
        }
    }
    if a.is_empty() || b.is_empty() {
        return Ok((0.0, sigma));
    }
    Ok((mmd2_sets(&a, &b, sigma, MmdEstimator::Biased)?, sigma))
}

/// Minibatch Adam on the combined objective. Deterministic given the seeds;
/// `on_epoch` sees each report as soon as it is complete.
pub fn train(
    cohort: &Cohort,
    grid: &TimeGrid,
    init: ModelParams,
    config: &TrainConfig,
    weights: &WeightTable,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    if grid.m() != init.config.m {
        return Err(Error::Grid(format!(
            "model has {} intervals, grid has {}",
            init.config.m,
            grid.m()
        )));
    }
    let w = training_weights(weights, cohort, config.weights_mode)?;
    let mean_weight = w.iter().sum::<f64>() / w.len() as f64;
    let max_weight = w.iter().copied().fold(0.0, f64::max);
    let all = Batch::new(cohort.trajectories.iter().collect(), grid, w.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut diag_idx: Vec<usize> = (0..cohort.len()).collect();
    diag_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0xd1a6_0000));
    diag_idx.truncate(config.diagnostic_n.max(2));
    diag_idx.sort_unstable();
    let diag: Vec<&Trajectory> = diag_idx.iter().map(|&i| &cohort.trajectories[i]).collect();

    let mut params = init;
    if config.baseline_init && !config.frozen.contains(&Group::Head) {
        let logits = baseline_logits(cohort, grid)?;
        if let Some(b) = params.get_mut("head.b2") {
            *b = Tensor::matrix(1, logits.len(), logits)?;
        }
    }
    let mut adam = Adam::new(&params);
    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = epoch_batches(cohort, config.pair_strategy, config.batch_size, &mut rng);
        let (mut s_surv, mut s_bal, mut s_reg, mut s_total) = (0.0, 0.0, 0.0, 0.0);
        let mut skipped = 0;
        let mut seen = 0usize;
        for idx in &batches {
            let batch = Batch {
                trajectories: idx.iter().map(|&i| all.trajectories[i]).collect(),
                intervals: idx.iter().map(|&i| all.intervals[i]).collect(),
                events: idx.iter().map(|&i| all.events[i]).collect(),
                weights: idx.iter().map(|&i| all.weights[i]).collect(),
            };
            let mut g = Graph::new();
            let bound = params.bind(&mut g, &config.frozen);
            let nodes = batch_loss(&mut g, &params, &bound, &batch, config, None)?;
            let total = g.value(nodes.total).item();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    ids: batch.ids(),
                });
            }
            g.backward(nodes.total)?;
            let grads: Vec<Option<Tensor>> = params
                .params
                .iter()
                .map(|p| {
                    if config.frozen.contains(&p.group) {
                        None
                    } else {
                        Some(g.grad(bound.var(&p.name)))
                    }
                })
                .collect();
            adam.step(&mut params, &grads, config);

            let size = idx.len() as f64;
            s_surv += size * g.value(nodes.surv).item();
            s_bal += size * nodes.bal.map(|b| g.value(b).item()).unwrap_or(0.0);
            s_reg += size * g.value(nodes.reg).item();
            s_total += size * total;
            skipped += nodes.skipped_pairs;
            seen += idx.len();
        }
        if skipped > 0 {
            log::warn!("epoch {epoch}: {skipped} group pairs skipped for having fewer than two members");
        }
        let (mmd, mmd_sigma) = diagnostic_mmd(&params, &diag, KernelSigma::MEDIAN)?;
        let n = seen as f64;
        let report = EpochReport {
            epoch,
            l_surv: s_surv / n,
            l_bal: s_bal / n,
            l_reg: s_reg / n,
            total: s_total / n,
            mean_weight,
            max_weight,
            mmd: vec![PairMmd {
                pair: "T(K)=1 vs T(K)=0".into(),
                value: mmd,
            }],
            mmd_sigma,
            skipped_pairs: skipped,
        };
        log::debug!(
            "epoch {epoch}: total {:.5} surv {:.5} bal {:.5} mmd {:.5}",
            report.total,
            report.l_surv,
            report.l_bal,
            mmd
        );
        on_epoch(&report);
        reports.push(report);
    }
    Ok(TrainOutcome { params, reports })
}
