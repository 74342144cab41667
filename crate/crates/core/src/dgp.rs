//! Synthetic longitudinal cohorts with treatment-confounder feedback and exact
//! counterfactual survival.
//!
//! For `k = 0..=K`:
//!
//! ```text
//! X(0)   ~ N(0, I_d)
//! T(k)   ~ Bernoulli(sigmoid(γ·<u, X(k)> + 0.5·T(k-1) − offset)),   T(-1) = 0
//! X(k+1) = 0.7·X(k) + β_fb·T(k)·1 + ε(k),                            ε(k) ~ N(0, 0.3² I)
//! ```
//!
//! Step `k` owns the time slice `[k, k+1)` and carries the constant hazard
//! `h0·exp(<w_Y, g(X(k))> − 0.8·T(k))`, where `w_Y` shares half its direction
//! with `u` (cosine 0.5); the step-`K` hazard continues past
//! `K + 1`. `g` is the identity, or `x + 0.5 sin 2x + 0.3 x²` elementwise in
//! nonlinear mode. Censoring is an independent exponential clock.
//!
//! `offset`, `h0` and the censoring hazard are calibrated by bisection on a
//! fixed pilot sample, so they depend on the structural settings but not on
//! `seed` or `n`: replicates drawn with different seeds share one process.
//!
//! Ground truth is the unit-level counterfactual. Given an observed history,
//! the innovations `ε(k)` are recovered from the recursion, the covariate path
//! is replayed under the target sequence, and survival follows in closed form
//! from the piecewise-constant hazard.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sequence_key, Cohort, GroundTruth, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::survival::SurvivalCurve;
use tvsurv_autodiff::sigmoid;

const AR: f64 = 0.7;
const NOISE_SD: f64 = 0.3;
const PERSISTENCE: f64 = 0.5;
const DIRECT_EFFECT: f64 = -0.8;
const HAZARD_SCALE: f64 = 0.5;
/// Share of the feedback direction `1/√d` in the confounding direction `u`.
const FEEDBACK_ALIGNMENT: f64 = 0.3;
/// Cosine between the hazard and treatment directions.
const OUTCOME_ALIGNMENT: f64 = 0.5;
const TARGET_TREAT_RATE: f64 = 0.5;
/// Target share of individuals surviving past the end of step `K`.
const TARGET_SURVIVAL_AT_HORIZON: f64 = 0.3;
const PILOT_N: usize = 4000;
const PILOT_SEED: u64 = 0x7e57_5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    /// Last time index `K`.
    pub k: usize,
    pub d: usize,
    /// Treatment → next-covariate shift `β_fb`.
    pub feedback: f64,
    /// Covariate → treatment strength `γ`.
    pub confounding: f64,
    pub nonlinear: bool,
    pub censor_rate: f64,
    pub seed: u64,
    /// Intervals of the stored ground-truth curves.
    pub m_truth: usize,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            k: 8,
            d: 10,
            feedback: 0.5,
            confounding: 1.0,
            nonlinear: true,
            censor_rate: 0.3,
            seed: 0,
            m_truth: 20,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 1 || self.k < 1 || self.d < 1 {
            return bad(format!(
                "dgp needs n, k, d >= 1 (got n={}, k={}, d={})",
                self.n, self.k, self.d
            ));
        }
        if !(self.feedback >= 0.0 && self.feedback.is_finite()) {
            return bad(format!("dgp.feedback must be >= 0, got {}", self.feedback));
        }
        if !(self.confounding >= 0.0 && self.confounding.is_finite()) {
            return bad(format!("dgp.confounding must be >= 0, got {}", self.confounding));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return bad(format!("dgp.censor_rate must lie in [0, 1), got {}", self.censor_rate));
        }
        if self.m_truth < 2 {
            return bad(format!("dgp.m_truth must be >= 2, got {}", self.m_truth));
        }
        Ok(())
    }
}

/// Exogenous draws for one individual.
struct Noise {
    x0: Vec<f64>,
    /// `ε(0..K)`, already scaled by the noise standard deviation.
    eps: Vec<Vec<f64>>,
    u_treat: Vec<f64>,
    e_event: f64,
    e_censor: f64,
}

/// Calibrated data-generating process.
#[derive(Debug, Clone)]
pub struct Dgp {
    pub config: DgpConfig,
    /// Unit vector `u` driving treatment assignment.
    pub w_treat: Vec<f64>,
    /// Log-hazard coefficients `w_Y`, length 0.5 at cosine 0.5 to `u`.
    pub w_hazard: Vec<f64>,
    pub offset: f64,
    /// Baseline hazard `h0`.
    pub h0: f64,
    /// Rate of the exponential censoring clock (0 = no censoring).
    pub censor_hazard: f64,
}

fn direction(d: usize) -> Vec<f64> {
    let ones = 1.0 / (d as f64).sqrt();
    let pairs = d / 2 * 2;
    if pairs == 0 {
        return vec![1.0];
    }
    let alt_norm = 1.0 / (pairs as f64).sqrt();
    let orth = (1.0 - FEEDBACK_ALIGNMENT * FEEDBACK_ALIGNMENT).sqrt();
    let mut u: Vec<f64> = (0..d)
        .map(|j| {
            let alt = if j < pairs {
                if j % 2 == 0 {
                    alt_norm
                } else {
                    -alt_norm
                }
            } else {
                0.0
            };
            FEEDBACK_ALIGNMENT * ones + orth * alt
        })
        .collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    u
}

/// Unit vector with cosine `OUTCOME_ALIGNMENT` to `u`, built from a
/// `(+, +, −, −, …)` pattern orthogonalized against `u`.
fn hazard_direction(u: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..u.len()).map(|j| if (j / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let proj = dot(&v, u);
    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= proj * ui);
    let norm = dot(&v, &v).sqrt();
    if norm < 1e-9 {
        return u.to_vec();
    }
    let (c, s) = (OUTCOME_ALIGNMENT, (1.0 - OUTCOME_ALIGNMENT * OUTCOME_ALIGNMENT).sqrt());
    u.iter().zip(&v).map(|(ui, vi)| c * ui + s * vi / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Per-individual stream of a counter-based generator.
fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl Dgp {
    pub fn new(config: DgpConfig) -> Result<Self> {
        config.validate()?;
        let u = direction(config.d);
        let w_hazard = hazard_direction(&u).iter().map(|v| HAZARD_SCALE * v).collect();
        let mut dgp = Dgp {
            w_hazard,
            w_treat: u,
            offset: 0.0,
            h0: 1.0,
            censor_hazard: 0.0,
            config,
        };
        dgp.calibrate();
        Ok(dgp)
    }

    fn draw_noise(&self, seed: u64, index: usize) -> Noise {
        let (k, d) = (self.config.k, self.config.d);
        let mut rng = rng_for(seed, index);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        let x0 = (0..d).map(|_| normal(&mut rng)).collect();
        let mut eps = Vec::with_capacity(k);
        let mut u_treat = Vec::with_capacity(k + 1);
        for step in 0..=k {
            u_treat.push(rng.gen::<f64>());
            if step < k {
                eps.push((0..d).map(|_| NOISE_SD * normal(&mut rng)).collect());
            }
        }
        Noise {
            x0,
            eps,
            u_treat,
            e_event: rng.sample(Exp1),
            e_censor: rng.sample(Exp1),
        }
    }

    fn treat_logit(&self, x: &[f64], prev: u8) -> f64 {
        self.config.confounding * dot(&self.w_treat, x) + PERSISTENCE * prev as f64 - self.offset
    }

    /// True propensity `P(T(k) = 1 | X(k), T(k-1))`.
    pub fn propensity(&self, x: &[f64], prev: u8) -> f64 {
        sigmoid(self.treat_logit(x, prev))
    }

    fn factual_path(&self, noise: &Noise) -> (Vec<Vec<f64>>, Vec<u8>) {
        let k = self.config.k;
        let mut xs = Vec::with_capacity(k + 1);
        let mut ts = Vec::with_capacity(k + 1);
        let mut x = noise.x0.clone();
        let mut prev = 0u8;
        for step in 0..=k {
            let t = u8::from(noise.u_treat[step] < self.propensity(&x, prev));
            ts.push(t);
            xs.push(x.clone());
            if step < k {
                x = x
                    .iter()
                    .zip(&noise.eps[step])
                    .map(|(xi, e)| AR * xi + self.config.feedback * t as f64 + e)
                    .collect();
            }
            prev = t;
        }
        (xs, ts)
    }

    fn transform(&self, v: f64) -> f64 {
        if self.config.nonlinear {
            v + 0.5 * (2.0 * v).sin() + 0.3 * v * v
        } else {
            v
        }
    }

    fn log_hazard_shape(&self, x: &[f64], t: u8) -> f64 {
        let lin: f64 = self
            .w_hazard
            .iter()
            .zip(x)
            .map(|(w, v)| w * self.transform(*v))
            .sum();
        lin + DIRECT_EFFECT * t as f64
    }

    /// Hazard rate of each step `0..=K` along a covariate/treatment path.
    fn path_rates(&self, xs: &[Vec<f64>], ts: &[u8]) -> Vec<f64> {
        xs.iter()
            .zip(ts)
            .map(|(x, &t)| self.h0 * self.log_hazard_shape(x, t).exp())
            .collect()
    }

    /// Covariate path under `sequence`, replaying the innovations recovered
    /// from the observed history.
    pub fn counterfactual_covariates(&self, history: &Trajectory, sequence: &[u8]) -> Vec<Vec<f64>> {
        let beta = self.config.feedback;
        let mut out = Vec::with_capacity(sequence.len());
        let mut x = history.covariates[0].clone();
        out.push(x.clone());
        for step in 0..history.covariates.len() - 1 {
            let (cur, next) = (&history.covariates[step], &history.covariates[step + 1]);
            let t_obs = history.treatments[step] as f64;
            x = x
                .iter()
                .enumerate()
                .map(|(j, xj)| {
                    let eps = next[j] - AR * cur[j] - beta * t_obs;
                    AR * xj + beta * sequence[step] as f64 + eps
                })
                .collect();
            out.push(x.clone());
        }
        out
    }

    /// Step hazards of `history` under the hypothetical `sequence`.
    pub fn counterfactual_rates(&self, history: &Trajectory, sequence: &[u8]) -> Result<Vec<f64>> {
        if sequence.len() != history.treatments.len() || sequence.iter().any(|&a| a > 1) {
            return Err(Error::Data(format!(
                "treatment sequence must be {} binary values",
                history.treatments.len()
            )));
        }
        if history.covariates.iter().any(|x| x.len() != self.config.d) {
            return Err(Error::Data("history dimension does not match the process".into()));
        }
        let xs = self.counterfactual_covariates(history, sequence);
        Ok(self.path_rates(&xs, sequence))
    }

    /// Exact `S(τ)` at each requested time for the given step rates.
    pub fn survival_from_rates(rates: &[f64], taus: &[f64]) -> Vec<f64> {
        taus.iter().map(|&t| (-cumulative_hazard(rates, t)).exp()).collect()
    }

    pub fn true_survival(&self, history: &Trajectory, sequence: &[u8], taus: &[f64]) -> Result<Vec<f64>> {
        let rates = self.counterfactual_rates(history, sequence)?;
        Ok(Self::survival_from_rates(&rates, taus))
    }

    /// Time points of the stored ground truth: `m_truth` even steps on `[0, K+1]`.
    pub fn truth_grid(&self) -> TimeGrid {
        let horizon = (self.config.k + 1) as f64;
        let m = self.config.m_truth;
        TimeGrid::new((0..=m).map(|j| horizon * j as f64 / m as f64).collect())
            .expect("valid uniform grid")
    }

    pub fn all_treat(&self) -> Vec<u8> {
        vec![1; self.config.k + 1]
    }

    pub fn never_treat(&self) -> Vec<u8> {
        vec![0; self.config.k + 1]
    }

    fn calibrate(&mut self) {
        let noises: Vec<Noise> = (0..PILOT_N)
            .into_par_iter()
            .map(|i| self.draw_noise(PILOT_SEED, i))
            .collect();
        let k = self.config.k;

        let rate_at = |dgp: &Dgp, offset: f64| {
            let mut probe = dgp.clone();
            probe.offset = offset;
            let treated: usize = noises
                .par_iter()
                .map(|nz| probe.factual_path(nz).1.iter().map(|&t| t as usize).sum::<usize>())
                .sum();
            treated as f64 / (PILOT_N * (k + 1)) as f64
        };
        self.offset = bisect(-40.0, 40.0, false, TARGET_TREAT_RATE, |o| rate_at(self, o));

        let shapes: Vec<Vec<f64>> = noises
            .par_iter()
            .map(|nz| {
                let (xs, ts) = self.factual_path(nz);
                xs.iter()
                    .zip(&ts)
                    .map(|(x, &t)| self.log_hazard_shape(x, t).exp())
                    .collect()
            })
            .collect();
        let horizon = (k + 1) as f64;
        let log_h0 = bisect(-40.0, 20.0, false, TARGET_SURVIVAL_AT_HORIZON, |lh| {
            let h0 = lh.exp();
            shapes
                .iter()
                .map(|s| {
                    let rates: Vec<f64> = s.iter().map(|v| h0 * v).collect();
                    (-cumulative_hazard(&rates, horizon)).exp()
                })
                .sum::<f64>()
                / PILOT_N as f64
        });
        self.h0 = log_h0.exp();

        self.censor_hazard = if self.config.censor_rate == 0.0 {
            0.0
        } else {
            let rates: Vec<Vec<f64>> = shapes
                .iter()
                .map(|s| s.iter().map(|v| self.h0 * v).collect())
                .collect();
            bisect(-40.0, 20.0, true, self.config.censor_rate, |lc| {
                let c = lc.exp();
                rates.iter().map(|r| censored_share(r, c)).sum::<f64>() / PILOT_N as f64
            })
            .exp()
        };
    }

    fn individual(&self, seed: u64, index: usize) -> Trajectory {
        let noise = self.draw_noise(seed, index);
        let (covariates, treatments) = self.factual_path(&noise);
        let rates = self.path_rates(&covariates, &treatments);
        let event_time = invert_cumulative_hazard(&rates, noise.e_event);
        let censor_time = if self.censor_hazard > 0.0 {
            noise.e_censor / self.censor_hazard
        } else {
            f64::INFINITY
        };
        Trajectory {
            id: index.to_string(),
            covariates,
            treatments,
            observed_time: event_time.min(censor_time),
            event: event_time <= censor_time,
        }
    }

    /// Draw `n` individuals with the configured seed, attaching ground truth
    /// for the all-treat and never-treat sequences.
    pub fn simulate(&self) -> Result<Cohort> {
        self.simulate_seeded(self.config.seed)
    }

    pub fn simulate_seeded(&self, seed: u64) -> Result<Cohort> {
        let trajectories: Vec<Trajectory> = (0..self.config.n)
            .into_par_iter()
            .map(|i| self.individual(seed, i))
            .collect();
        let truth_grid = self.truth_grid();
        let taus = truth_grid.taus().to_vec();
        let contrasts = [self.all_treat(), self.never_treat()];
        let curves = trajectories
            .par_iter()
            .map(|tr| {
                contrasts
                    .iter()
                    .map(|seq| {
                        let s = self.true_survival(tr, seq, &taus)?;
                        Ok(((tr.id.clone(), sequence_key(seq)), s))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let mut cohort = Cohort::new(trajectories)?;
        cohort.ground_truth = Some(GroundTruth { tau: taus, curves });
        Ok(cohort)
    }
}

/// `H(t)` for piecewise-constant step rates; the last rate extends forever.
pub fn cumulative_hazard(rates: &[f64], t: f64) -> f64 {
    let last = rates.len() - 1;
    let mut h = 0.0;
    for (k, &r) in rates.iter().enumerate() {
        let start = k as f64;
        if t <= start {
            break;
        }
        let width = if k == last { t - start } else { (t - start).min(1.0) };
        h += r * width;
    }
    h
}

fn invert_cumulative_hazard(rates: &[f64], mut target: f64) -> f64 {
    let last = rates.len() - 1;
    for (k, &r) in rates.iter().enumerate() {
        if k == last {
            return if r > 0.0 { k as f64 + target / r } else { f64::INFINITY };
        }
        if target < r {
            return k as f64 + target / r;
        }
        target -= r;
    }
    unreachable!("rates are nonempty")
}

/// `P(C < Y)` for an exponential censoring clock with rate `c`.
fn censored_share(rates: &[f64], c: f64) -> f64 {
    let last = rates.len() - 1;
    let mut surv = 1.0;
    let mut total = 0.0;
    for (k, &r) in rates.iter().enumerate() {
        let a = k as f64;
        let lam = c + r;
        let lead = c * surv * (-c * a).exp() / lam;
        if k == last {
            total += lead;
        } else {
            total += lead * (1.0 - (-lam).exp());
            surv *= (-r).exp();
        }
    }
    total
}

pub fn simulate(config: &DgpConfig) -> Result<Cohort> {
    Dgp::new(config.clone())?.simulate()
}

/// Closed-form potential survival of `history` under `sequence` on `grid`.
pub fn true_survival(
    config: &DgpConfig,
    history: &Trajectory,
    sequence: &[u8],
    grid: &TimeGrid,
) -> Result<SurvivalCurve> {
    let dgp = Dgp::new(config.clone())?;
    let s = dgp.true_survival(history, sequence, grid.taus())?;
    Ok(SurvivalCurve::from_survival(s))
}
