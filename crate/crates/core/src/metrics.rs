//! Evaluation metrics against ground-truth curves and censored outcomes.
//!
//! Curves passed to the integral metrics are sampled at every grid boundary
//! including `τ_0`, so a grid with `m` intervals carries `m + 1` values per
//! individual.

use serde::{Deserialize, Serialize};

use crate::data::{sequence_key, Cohort, TimeGrid};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::survival::{interpolate, trapezoid};

/// Product-limit estimator stored as a right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    times: Vec<f64>,
    survival: Vec<f64>,
}

impl KaplanMeier {
    /// `events[i]` marks whether `times[i]` is an occurrence of the modelled
    /// event (as opposed to a censoring of it).
    pub fn fit(times: &[f64], events: &[bool]) -> Self {
        debug_assert_eq!(times.len(), events.len());
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut at_risk = times.len();
        let mut s = 1.0;
        let (mut out_t, mut out_s) = (Vec::new(), Vec::new());
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let mut d = 0;
            let mut leaving = 0;
            while i < order.len() && times[order[i]] == t {
                d += events[order[i]] as usize;
                leaving += 1;
                i += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / at_risk as f64;
                out_t.push(t);
                out_s.push(s);
            }
            at_risk -= leaving;
        }
        Self {
            times: out_t,
            survival: out_s,
        }
    }

    /// Kaplan–Meier of the censoring distribution (events and censorings
    /// swap roles).
    pub fn censoring(cohort: &Cohort) -> Self {
        let times: Vec<f64> = cohort.trajectories.iter().map(|t| t.observed_time).collect();
        let censored: Vec<bool> = cohort.trajectories.iter().map(|t| !t.event).collect();
        Self::fit(&times, &censored)
    }

    /// `Ĝ(t)`, including jumps at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let j = self.times.partition_point(|&u| u <= t);
        if j == 0 {
            1.0
        } else {
            self.survival[j - 1]
        }
    }

    /// `Ĝ(t−)`, excluding a jump at `t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let j = self.times.partition_point(|&u| u < t);
        if j == 0 {
            1.0
        } else {
            self.survival[j - 1]
        }
    }
}

fn check_aligned(pred: &[Vec<f64>], truth: &[Vec<f64>], boundaries: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Grid(format!(
            "{} predicted curves against {} true curves",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("no curves to compare".into()));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != boundaries.len() || t.len() != boundaries.len() {
            return Err(Error::Grid(format!(
                "curve {i} has {} predicted and {} true points, grid has {}",
                p.len(),
                t.len(),
                boundaries.len()
            )));
        }
    }
    Ok(())
}

fn mean_integrated_sq_error(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    boundaries: &[f64],
    weight_fn: Option<&dyn Fn(f64) -> f64>,
) -> f64 {
    let w: Vec<f64> = match weight_fn {
        Some(f) => boundaries.iter().map(|&t| f(t)).collect(),
        None => vec![1.0; boundaries.len()],
    };
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let sq: Vec<f64> = p
                .iter()
                .zip(t)
                .zip(&w)
                .map(|((a, b), wt)| wt * (a - b) * (a - b))
                .collect();
            trapezoid(boundaries, &sq)
        })
        .sum();
    total / pred.len() as f64
}

/// Mean over individuals of `∫ (Ĉ(τ) − C*(τ))² w(τ) dτ` by the trapezoid
/// rule on the grid boundaries; the square root of that when `root`.
pub fn tv_pehe(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    boundaries: &[f64],
    weight_fn: Option<&dyn Fn(f64) -> f64>,
    root: bool,
) -> Result<f64> {
    check_aligned(pred, truth, boundaries)?;
    let v = mean_integrated_sq_error(pred, truth, boundaries, weight_fn);
    Ok(if root { v.sqrt() } else { v })
}

/// Root mean integrated squared error between survival curves, normalized
/// by the horizon length.
pub fn irmse(pred: &[Vec<f64>], truth: &[Vec<f64>], boundaries: &[f64]) -> Result<f64> {
    check_aligned(pred, truth, boundaries)?;
    let span = boundaries[boundaries.len() - 1] - boundaries[0];
    Ok((mean_integrated_sq_error(pred, truth, boundaries, None) / span).sqrt())
}

/// Harrell's concordance: over pairs where `i` has an observed event
/// strictly before `j`'s time, the share with `risk_i > risk_j` (ties 0.5).
pub fn c_index(risk: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    if risk.len() != times.len() || times.len() != events.len() {
        return Err(Error::Data("risk, time and event lengths differ".into()));
    }
    let (mut concordant, mut comparable) = (0.0, 0u64);
    for i in 0..risk.len() {
        if !events[i] {
            continue;
        }
        for j in 0..risk.len() {
            if times[i] < times[j] {
                comparable += 1;
                if risk[i] > risk[j] {
                    concordant += 1.0;
                } else if risk[i] == risk[j] {
                    concordant += 0.5;
                }
            }
        }
    }
    if comparable == 0 {
        return Err(Error::Data("no comparable pairs for the C-index".into()));
    }
    Ok(concordant / comparable as f64)
}

/// IPCW Brier score at `tau` (Graf et al. construction). Individuals whose
/// required censoring weight is zero are dropped; the second value counts them.
pub fn brier(
    pred_at_tau: &[f64],
    times: &[f64],
    events: &[bool],
    tau: f64,
    censor_km: &KaplanMeier,
) -> (f64, usize) {
    let g_tau = censor_km.survival_at(tau);
    let (mut sum, mut used, mut dropped) = (0.0, 0usize, 0usize);
    for ((&s, &t), &e) in pred_at_tau.iter().zip(times).zip(events) {
        if t <= tau {
            if !e {
                // censored before τ: contributes zero but stays in the average
                used += 1;
                continue;
            }
            let g = censor_km.survival_before(t);
            if g <= 0.0 {
                dropped += 1;
                continue;
            }
            sum += s * s / g;
        } else {
            if g_tau <= 0.0 {
                dropped += 1;
                continue;
            }
            sum += (1.0 - s) * (1.0 - s) / g_tau;
        }
        used += 1;
    }
    if dropped > 0 {
        log::warn!("brier at τ = {tau}: {dropped} individuals dropped for zero censoring weight");
    }
    if used == 0 {
        return (0.0, dropped);
    }
    (sum / used as f64, dropped)
}

/// Brier scores at every boundary and their trapezoidal average over the
/// horizon. `pred[i][j]` is individual `i`'s predicted survival at
/// `boundaries[j]`.
pub fn integrated_brier(
    pred: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    boundaries: &[f64],
    censor_km: &KaplanMeier,
) -> Result<(Vec<f64>, f64)> {
    if pred.iter().any(|p| p.len() != boundaries.len()) {
        return Err(Error::Grid("predicted curves do not match the grid".into()));
    }
    let scores: Vec<f64> = (0..boundaries.len())
        .map(|j| {
            let at: Vec<f64> = pred.iter().map(|p| p[j]).collect();
            brier(&at, times, events, boundaries[j], censor_km).0
        })
        .collect();
    let span = boundaries[boundaries.len() - 1] - boundaries[0];
    let ibs = trapezoid(boundaries, &scores) / span;
    Ok((scores, ibs))
}

/// Metrics of one trained model on one evaluation cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Root form.
    pub tv_pehe: f64,
    pub c_index: f64,
    pub ibs: f64,
    pub irmse: f64,
    /// `(τ, Brier(τ))` at each boundary of the model grid.
    pub brier: Vec<(f64, f64)>,
    pub grid: Vec<f64>,
    pub truth_grid: Vec<f64>,
    pub contrast: (String, String),
    pub n: usize,
}

/// Evaluate a trained model on a cohort carrying ground truth for both
/// contrast sequences. Predicted curves are linearly interpolated from the
/// model grid onto the truth grid for the effect and curve errors; the
/// C-index and Brier scores use the model grid and factual predictions.
pub fn evaluate(
    params: &ModelParams,
    grid: &TimeGrid,
    cohort: &Cohort,
    contrast: (&[u8], &[u8]),
) -> Result<EvalReport> {
    let truth = cohort.ground_truth.as_ref().ok_or_else(|| {
        Error::Data("the cohort carries no ground truth; effect metrics need a simulated cohort".into())
    })?;
    let keys = (sequence_key(contrast.0), sequence_key(contrast.1));
    let truth_grid: Vec<f64> = std::iter::once(0.0).chain(truth.tau.iter().copied()).collect();
    let model_grid = grid.boundaries();

    let pred_a = params.predict_cohort(cohort, contrast.0)?;
    let pred_b = params.predict_cohort(cohort, contrast.1)?;
    let on_truth_grid = |s: &crate::survival::SurvivalCurve| -> Vec<f64> {
        let full = s.with_origin();
        truth_grid.iter().map(|&t| interpolate(model_grid, &full, t)).collect()
    };
    let n = cohort.len();
    let (mut eff_pred, mut eff_true) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut curves_pred, mut curves_true) = (Vec::with_capacity(2 * n), Vec::with_capacity(2 * n));
    for (i, tr) in cohort.trajectories.iter().enumerate() {
        let lookup = |key: &str| -> Result<Vec<f64>> {
            let c = truth.curve(&tr.id, key).ok_or_else(|| {
                Error::Data(format!("no ground truth for individual {} under {key}", tr.id))
            })?;
            Ok(std::iter::once(1.0).chain(c.iter().copied()).collect())
        };
        let (ta, tb) = (lookup(&keys.0)?, lookup(&keys.1)?);
        let (pa, pb) = (on_truth_grid(&pred_a[i]), on_truth_grid(&pred_b[i]));
        eff_pred.push(pa.iter().zip(&pb).map(|(x, y)| x - y).collect::<Vec<f64>>());
        eff_true.push(ta.iter().zip(&tb).map(|(x, y)| x - y).collect::<Vec<f64>>());
        curves_pred.push(pa);
        curves_pred.push(pb);
        curves_true.push(ta);
        curves_true.push(tb);
    }
    let pehe = tv_pehe(&eff_pred, &eff_true, &truth_grid, None, true)?;
    let curve_err = irmse(&curves_pred, &curves_true, &truth_grid)?;

    let factual = params.predict_factual(cohort)?;
    let mid = grid.m().div_ceil(2) - 1;
    let risk: Vec<f64> = factual.iter().map(|c| 1.0 - c.survival[mid]).collect();
    let times: Vec<f64> = cohort.trajectories.iter().map(|t| t.observed_time).collect();
    let events: Vec<bool> = cohort.trajectories.iter().map(|t| t.event).collect();
    let concordance = c_index(&risk, &times, &events)?;
    let km = KaplanMeier::censoring(cohort);
    let with_origin: Vec<Vec<f64>> = factual.iter().map(|c| c.with_origin()).collect();
    let (scores, ibs) = integrated_brier(&with_origin, &times, &events, model_grid, &km)?;

    Ok(EvalReport {
        tv_pehe: pehe,
        c_index: concordance,
        ibs,
        irmse: curve_err,
        brier: model_grid.iter().copied().zip(scores).collect(),
        grid: model_grid.to_vec(),
        truth_grid,
        contrast: keys,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn km_without_censoring_is_empirical() {
        let km = KaplanMeier::fit(&[1.0, 2.0, 2.0, 4.0], &[true; 4]);
        assert_eq!(km.survival_at(0.5), 1.0);
        assert_eq!(km.survival_at(1.0), 0.75);
        assert_eq!(km.survival_before(2.0), 0.75);
        assert_eq!(km.survival_at(3.0), 0.25);
        assert_eq!(km.survival_at(4.0), 0.0);
    }

    #[test]
    fn km_with_censoring() {
        // at risk 4: event at 1 -> 3/4; censored at 2; at risk 2: event at 3 -> 3/8
        let km = KaplanMeier::fit(&[1.0, 2.0, 3.0, 5.0], &[true, false, true, false]);
        assert_eq!(km.survival_at(2.5), 0.75);
        assert_eq!(km.survival_at(3.0), 0.375);
    }

    #[test]
    fn pehe_of_constant_error() {
        let b = [0.0, 1.0, 2.5, 4.0];
        let truth = vec![vec![0.0, 0.1, -0.2, 0.3]; 3];
        let pred: Vec<Vec<f64>> = truth
            .iter()
            .map(|c| c.iter().map(|v| v + 0.2).collect())
            .collect();
        let v = tv_pehe(&pred, &truth, &b, None, true).unwrap();
        assert!((v - (0.04f64 * 4.0).sqrt()).abs() < 1e-14);
        assert_eq!(tv_pehe(&truth, &truth, &b, None, true).unwrap(), 0.0);
        let r = irmse(&pred, &truth, &b).unwrap();
        assert!((r - 0.2).abs() < 1e-14);
    }

    #[test]
    fn pehe_rejects_misaligned_grid() {
        let err = tv_pehe(&[vec![0.0; 3]], &[vec![0.0; 4]], &[0.0, 1.0, 2.0, 3.0], None, true);
        assert!(matches!(err, Err(Error::Grid(_))));
    }

    #[test]
    fn c_index_perfect_and_tied() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        assert_eq!(c_index(&[4.0, 3.0, 2.0, 1.0], &times, &events).unwrap(), 1.0);
        assert_eq!(c_index(&[1.0; 4], &times, &events).unwrap(), 0.5);
        assert_eq!(c_index(&[1.0, 2.0, 3.0, 4.0], &times, &events).unwrap(), 0.0);
        assert!(c_index(&[1.0, 2.0], &[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn brier_constant_half_uncensored() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let km = KaplanMeier::fit(&times, &[false; 4]);
        let (b, dropped) = brier(&[0.5; 4], &times, &events, 2.5, &km);
        assert_eq!(b, 0.25);
        assert_eq!(dropped, 0);
        let (b, _) = brier(&[0.0, 0.0, 1.0, 1.0], &times, &events, 2.5, &km);
        assert_eq!(b, 0.0);
    }
}
