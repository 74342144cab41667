//! Time-varying propensity models and stabilized sequential weights.
//!
//! The denominator model predicts `T(k)` from `(X(k), T(k-1))`; the numerator
//! model from `T(k-1)` alone. Both are logistic regressions, either pooled
//! over `k` with one-hot step indicators or fitted separately per step. The
//! stabilized weight of an individual is the product over steps of
//! `p_k(T(k) | ·) / e_k(T(k) | ·)` at the observed treatments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use tvsurv_autodiff::{Graph, Tensor};

use crate::data::{Cohort, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::KaplanMeier;

/// Probabilities are clamped into `(CLAMP, 1 − CLAMP)`.
pub const PROB_CLAMP: f64 = 1e-6;
const MAX_ITER: usize = 5000;
const GRAD_TOL: f64 = 1e-6;
const STEP_TOL: f64 = 1e-8;
const SEPARATION_BOUND: f64 = 30.0;

/// Fitted logistic regression; `coef[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let eta: f64 = self.coef.iter().zip(features).map(|(b, x)| b * x).sum();
        tvsurv_autodiff::sigmoid(eta)
    }
}

/// Design rows (each starting with the constant 1) and binary responses.
struct Design {
    rows: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

impl Design {
    fn new(p: usize) -> Self {
        Self {
            rows: Vec::new(),
            y: Vec::new(),
            p,
        }
    }

    fn push(&mut self, features: Vec<f64>, y: u8) {
        debug_assert_eq!(features.len(), self.p);
        self.rows.extend(features);
        self.y.push(y as f64);
    }

    fn n(&self) -> usize {
        self.y.len()
    }
}

/// Penalized maximum likelihood by Newton–Raphson. The gradient of the mean
/// log-likelihood comes from the autodiff graph; the Hessian is the analytic
/// logistic information `XᵀWX/N`.
fn fit_logistic(design: &Design, l2: f64, label: &str) -> Result<LogisticFit> {
    let (n, p) = (design.n(), design.p);
    if n == 0 {
        return Err(Error::Data(format!("{label}: no observations to fit")));
    }
    let x = Tensor::matrix(n, p, design.rows.clone())?;
    let y = Tensor::matrix(n, 1, design.y.clone())?;
    let one_minus_y = y.map(|v| 1.0 - v);
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let check_separation = |beta: &[f64]| -> Result<()> {
        if l2 == 0.0 && beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation(format!(
                "{label}: coefficients diverge (|coef| > {SEPARATION_BOUND}), the treatment is perfectly separated; refit with l2 > 0"
            )));
        }
        Ok(())
    };
    loop {
        iterations += 1;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let bv = g.param(Tensor::matrix(p, 1, beta.clone())?);
        let eta = g.matmul(xv, bv)?;
        let pos = g.sigmoid(eta);
        let neg_eta = g.scale(eta, -1.0);
        let neg = g.sigmoid(neg_eta);
        let lp = g.log(pos);
        let ln = g.log(neg);
        let yv = g.constant(y.clone());
        let ny = g.constant(one_minus_y.clone());
        let a = g.mul(lp, yv)?;
        let b = g.mul(ln, ny)?;
        let ll = g.add(a, b)?;
        let mut obj = g.mean(ll);
        if l2 > 0.0 {
            let mask = Tensor::matrix(p, 1, (0..p).map(|j| if j == 0 { 0.0 } else { 1.0 }).collect())?;
            let mask = g.constant(mask);
            let slopes = g.mul(bv, mask)?;
            let sq = g.square(slopes);
            let pen = g.sum(sq);
            let pen = g.scale(pen, -0.5 * l2);
            obj = g.add(obj, pen)?;
        }
        g.backward(obj)?;
        let grad = g.grad(bv).into_data();
        let probs = g.value(pos).data().to_vec();

        let mut info = DMatrix::<f64>::zeros(p, p);
        for (i, &pi) in probs.iter().enumerate() {
            let w = pi * (1.0 - pi) / n as f64;
            let row = &design.rows[i * p..(i + 1) * p];
            for a in 0..p {
                let wa = w * row[a];
                if wa == 0.0 {
                    continue;
                }
                for b in a..p {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            if a > 0 {
                info[(a, a)] += l2;
            }
        }
        let gvec = DVector::from_vec(grad.clone());
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&gvec),
            None => {
                let mut ridge = info.clone();
                for a in 0..p {
                    ridge[(a, a)] += 1e-10;
                }
                ridge.lu().solve(&gvec).ok_or_else(|| {
                    Error::Numerical(format!("{label}: singular information matrix"))
                })?
            }
        };
        let grad_max = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let step_max = step.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (b, s) in beta.iter_mut().zip(step.iter()) {
            *b += s;
        }
        check_separation(&beta)?;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::Numerical(format!("{label}: Newton step diverged")));
        }
        if grad_max < GRAD_TOL && step_max < STEP_TOL {
            let std_errors = match (info * n as f64).try_inverse() {
                Some(cov) => (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
                None => vec![f64::NAN; p],
            };
            return Ok(LogisticFit {
                coef: beta,
                std_errors,
                iterations,
            });
        }
        if iterations >= MAX_ITER {
            log::warn!("{label}: no convergence after {MAX_ITER} iterations (gradient {grad_max:e})");
            return Ok(LogisticFit {
                coef: beta,
                std_errors: vec![f64::NAN; p],
                iterations,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub pooled: bool,
    pub d: usize,
    pub k: usize,
    /// One model when pooled, otherwise one per step `0..=K`.
    pub denominator: Vec<LogisticFit>,
    pub numerator: Vec<LogisticFit>,
}

fn prev_treatment(tr: &Trajectory, step: usize) -> u8 {
    if step == 0 {
        0
    } else {
        tr.treatments[step - 1]
    }
}

impl PropensityModel {
    fn step_onehot(&self, step: usize, out: &mut Vec<f64>) {
        // step 0 is the reference level
        out.extend((1..=self.k).map(|j| if j == step { 1.0 } else { 0.0 }));
    }

    fn denominator_features(&self, tr: &Trajectory, step: usize) -> Vec<f64> {
        let mut f = vec![1.0];
        f.extend_from_slice(&tr.covariates[step]);
        if self.pooled {
            f.push(prev_treatment(tr, step) as f64);
            self.step_onehot(step, &mut f);
        } else if step > 0 {
            f.push(prev_treatment(tr, step) as f64);
        }
        f
    }

    fn numerator_features(&self, tr: &Trajectory, step: usize) -> Vec<f64> {
        let mut f = vec![1.0];
        if self.pooled {
            f.push(prev_treatment(tr, step) as f64);
            self.step_onehot(step, &mut f);
        } else if step > 0 {
            f.push(prev_treatment(tr, step) as f64);
        }
        f
    }

    fn model_at<'a>(&self, fits: &'a [LogisticFit], step: usize) -> &'a LogisticFit {
        if self.pooled {
            &fits[0]
        } else {
            &fits[step]
        }
    }

    /// `e_k(1 | X̄(k), T̄(k-1))`, unclamped.
    pub fn propensity(&self, tr: &Trajectory, step: usize) -> f64 {
        self.model_at(&self.denominator, step)
            .predict(&self.denominator_features(tr, step))
    }

    /// `p_k(1 | T̄(k-1))`, unclamped.
    pub fn marginal(&self, tr: &Trajectory, step: usize) -> f64 {
        self.model_at(&self.numerator, step)
            .predict(&self.numerator_features(tr, step))
    }

    fn check_cohort(&self, cohort: &Cohort) -> Result<()> {
        if cohort.d != self.d || cohort.k != self.k {
            return Err(Error::Data(format!(
                "propensity model was fitted for d={}, K={} but the cohort has d={}, K={}",
                self.d, self.k, cohort.d, cohort.k
            )));
        }
        Ok(())
    }
}

/// Maximum-likelihood logistic propensity and stabilization models.
pub fn fit_propensity(cohort: &Cohort, pooled: bool, l2: f64) -> Result<PropensityModel> {
    if cohort.is_empty() {
        return Err(Error::Data("cannot fit propensities on an empty cohort".into()));
    }
    if !(l2 >= 0.0) {
        return Err(Error::Config(format!("l2 must be >= 0, got {l2}")));
    }
    let shell = PropensityModel {
        pooled,
        d: cohort.d,
        k: cohort.k,
        denominator: Vec::new(),
        numerator: Vec::new(),
    };
    let groups: Vec<Vec<usize>> = if pooled {
        vec![(0..=cohort.k).collect()]
    } else {
        (0..=cohort.k).map(|s| vec![s]).collect()
    };
    let mut denominator = Vec::with_capacity(groups.len());
    let mut numerator = Vec::with_capacity(groups.len());
    for steps in &groups {
        let label = if pooled {
            "pooled".to_string()
        } else {
            format!("step {}", steps[0])
        };
        let probe = &cohort.trajectories[0];
        let mut den = Design::new(shell.denominator_features(probe, steps[0]).len());
        let mut num = Design::new(shell.numerator_features(probe, steps[0]).len());
        for tr in &cohort.trajectories {
            for &s in steps {
                den.push(shell.denominator_features(tr, s), tr.treatments[s]);
                num.push(shell.numerator_features(tr, s), tr.treatments[s]);
            }
        }
        denominator.push(fit_logistic(&den, l2, &format!("{label} propensity"))?);
        numerator.push(fit_logistic(&num, l2, &format!("{label} stabilizer"))?);
    }
    Ok(PropensityModel {
        denominator,
        numerator,
        ..shell
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub id: String,
    /// Stabilized weight `∏ p_k / e_k`.
    pub raw: f64,
    /// `raw` clipped to the configured quantile range.
    pub trimmed: f64,
    /// Unstabilized weight `∏ 1 / e_k`.
    pub unstabilized: f64,
    /// Per-step ratios `p_k / e_k`.
    pub factors: Vec<f64>,
    /// Some `e_k` fell outside `(1e-6, 1 − 1e-6)` and was clamped.
    pub positivity_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub entries: Vec<WeightEntry>,
    pub lower_q: f64,
    pub upper_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsMode {
    Stabilized,
    Unstabilized,
    Unit,
}

impl WeightTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.raw).collect()
    }

    pub fn trimmed(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.trimmed).collect()
    }

    /// Per-individual weights used by the survival loss for a given mode;
    /// stabilized and unstabilized weights are trimmed with the table's
    /// quantiles.
    pub fn weights_for(&self, mode: WeightsMode) -> Vec<f64> {
        match mode {
            WeightsMode::Stabilized => self.trimmed(),
            WeightsMode::Unstabilized => {
                let raw: Vec<f64> = self.entries.iter().map(|e| e.unstabilized).collect();
                clip_to_quantiles(&raw, self.lower_q, self.upper_q)
            }
            WeightsMode::Unit => vec![1.0; self.entries.len()],
        }
    }

    pub fn positivity_warnings(&self) -> usize {
        self.entries.iter().filter(|e| e.positivity_warning).count()
    }
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p <= PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if p >= 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (p, false)
    }
}

/// Product over the first `steps` time steps of `(p_k / e_k, 1 / e_k)` at the
/// observed treatments, with positivity flag.
fn weight_product(model: &PropensityModel, tr: &Trajectory, steps: usize) -> (Vec<f64>, f64, bool) {
    let mut factors = Vec::with_capacity(steps);
    let mut inv = 1.0;
    let mut warn = false;
    for s in 0..steps {
        let (e1, w) = clamp_prob(model.propensity(tr, s));
        let (p1, _) = clamp_prob(model.marginal(tr, s));
        warn |= w;
        let (e, p) = if tr.treatments[s] == 1 {
            (e1, p1)
        } else {
            (1.0 - e1, 1.0 - p1)
        };
        factors.push(p / e);
        inv /= e;
    }
    (factors, inv, warn)
}

pub fn stabilized_weights(cohort: &Cohort, model: &PropensityModel) -> Result<WeightTable> {
    model.check_cohort(cohort)?;
    let entries: Vec<WeightEntry> = cohort
        .trajectories
        .iter()
        .map(|tr| {
            let (factors, unstabilized, warn) = weight_product(model, tr, cohort.k + 1);
            let raw = factors.iter().product();
            WeightEntry {
                id: tr.id.clone(),
                raw,
                trimmed: raw,
                unstabilized,
                factors,
                positivity_warning: warn,
            }
        })
        .collect();
    let warned = entries.iter().filter(|e| e.positivity_warning).count();
    if warned > 0 {
        log::warn!("{warned} individuals have clamped propensities (near-violations of positivity)");
    }
    Ok(WeightTable {
        entries,
        lower_q: 0.0,
        upper_q: 1.0,
    })
}

/// Linear-interpolation sample quantile (the "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn clip_to_quantiles(values: &[f64], lower_q: f64, upper_q: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, lower_q);
    let hi = quantile_sorted(&sorted, upper_q);
    values.iter().map(|w| w.clamp(lo, hi)).collect()
}

/// Clip the raw weights to their `[lower_q, upper_q]` sample quantiles.
pub fn trim_weights(table: &WeightTable, lower_q: f64, upper_q: f64) -> Result<WeightTable> {
    if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q >= upper_q {
        return Err(Error::Config(format!(
            "trim quantiles must satisfy 0 <= lower < upper <= 1, got ({lower_q}, {upper_q})"
        )));
    }
    let trimmed = clip_to_quantiles(&table.raw(), lower_q, upper_q);
    let entries = table
        .entries
        .iter()
        .zip(trimmed)
        .map(|(e, t)| WeightEntry {
            trimmed: t,
            ..e.clone()
        })
        .collect();
    Ok(WeightTable {
        entries,
        lower_q,
        upper_q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub max: f64,
    /// `(Σw)² / Σw²`.
    pub ess: f64,
}

pub fn summarize_weights(w: &[f64]) -> WeightSummary {
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let variance = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    WeightSummary {
        n,
        mean,
        variance,
        max,
        ess: sum * sum / sum_sq,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    /// Summary of the trimmed stabilized weights.
    pub trimmed: WeightSummary,
    pub raw: WeightSummary,
    pub unstabilized: WeightSummary,
    pub positivity_warnings: usize,
}

pub fn weight_diagnostics(table: &WeightTable) -> Result<WeightDiagnostics> {
    if table.is_empty() {
        return Err(Error::Data("weight table is empty".into()));
    }
    let unstab: Vec<f64> = table.entries.iter().map(|e| e.unstabilized).collect();
    Ok(WeightDiagnostics {
        trimmed: summarize_weights(&table.trimmed()),
        raw: summarize_weights(&table.raw()),
        unstabilized: summarize_weights(&unstab),
        positivity_warnings: table.positivity_warnings(),
    })
}

/// Hájek IPTW estimate of `P(Y(ā) > τ)`.
///
/// Only the first `steps` treatment decisions can affect survival up to `τ`
/// (no anticipation), so individuals following `sequence` over those steps
/// are weighted by the stabilized product over the same steps. Censoring is
/// handled by dividing survivors by the censoring Kaplan–Meier at `τ`.
pub fn hajek_potential_survival(
    cohort: &Cohort,
    model: &PropensityModel,
    sequence: &[u8],
    tau: f64,
    steps: usize,
) -> Result<f64> {
    model.check_cohort(cohort)?;
    if steps == 0 || steps > cohort.k + 1 || sequence.len() != cohort.k + 1 {
        return Err(Error::Data(format!(
            "need 1..={} steps and a sequence of length {}",
            cohort.k + 1,
            cohort.k + 1
        )));
    }
    let censor_km = KaplanMeier::censoring(cohort);
    let g_tau = censor_km.survival_at(tau);
    if g_tau <= 0.0 {
        return Err(Error::Numerical(format!(
            "censoring survival is zero at τ = {tau}"
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for tr in &cohort.trajectories {
        if tr.treatments[..steps] != sequence[..steps] {
            continue;
        }
        let (factors, _, _) = weight_product(model, tr, steps);
        let w: f64 = factors.iter().product();
        den += w;
        if tr.observed_time > tau {
            num += w / g_tau;
        }
    }
    if den == 0.0 {
        return Err(Error::Data(format!(
            "nobody follows the target sequence over the first {steps} steps"
        )));
    }
    Ok(num / den)
}
