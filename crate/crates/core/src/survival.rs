//! Discrete survival curves and the small bits of quadrature shared by the
//! model, the simulator and the metrics.

use serde::{Deserialize, Serialize};

/// Per-interval conditional hazards and the survival probabilities they imply
/// at the right end of each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub hazards: Vec<f64>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// Survival from hazards via `S_j = ∏_{l≤j} (1 − λ_l)`.
    pub fn from_hazards(hazards: Vec<f64>) -> Self {
        let mut s = 1.0;
        let survival = hazards
            .iter()
            .map(|&h| {
                s *= 1.0 - h;
                s
            })
            .collect();
        Self { hazards, survival }
    }

    /// Hazards recovered from survival values (`λ_j = 1 − S_j / S_{j−1}`).
    pub fn from_survival(survival: Vec<f64>) -> Self {
        let mut prev = 1.0;
        let hazards = survival
            .iter()
            .map(|&s| {
                let h = if prev > 0.0 { 1.0 - s / prev } else { 1.0 };
                prev = s;
                h
            })
            .collect();
        Self { hazards, survival }
    }

    pub fn len(&self) -> usize {
        self.survival.len()
    }

    pub fn is_empty(&self) -> bool {
        self.survival.is_empty()
    }

    /// Event mass per interval: `f_j = λ_j · S_{j−1}`.
    pub fn pmf(&self) -> Vec<f64> {
        let mut prev = 1.0;
        self.hazards
            .iter()
            .zip(&self.survival)
            .map(|(&h, &s)| {
                let f = h * prev;
                prev = s;
                f
            })
            .collect()
    }

    /// Survival at every grid boundary, with `S(τ_0) = 1` prepended.
    pub fn with_origin(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.survival.iter().copied()).collect()
    }
}

/// Trapezoidal integral of samples `y` at abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Piecewise-linear interpolation of `(x, y)` at `t`, held constant outside
/// the sampled range.
pub fn interpolate(x: &[f64], y: &[f64], t: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if t <= x[0] {
        return y[0];
    }
    let last = x.len() - 1;
    if t >= x[last] {
        return y[last];
    }
    let j = x.partition_point(|&b| b <= t);
    let (x0, x1) = (x[j - 1], x[j]);
    let w = (t - x0) / (x1 - x0);
    y[j - 1] + w * (y[j] - y[j - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_survival() {
        let c = SurvivalCurve::from_hazards(vec![0.5; 4]);
        for (j, s) in c.survival.iter().enumerate() {
            assert_eq!(*s, 0.5f64.powi(j as i32 + 1));
        }
    }

    #[test]
    fn hazards_round_trip_through_survival() {
        let c = SurvivalCurve::from_hazards(vec![0.1, 0.3, 0.05, 0.7]);
        let back = SurvivalCurve::from_survival(c.survival.clone());
        for (a, b) in c.hazards.iter().zip(&back.hazards) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pmf_and_tail_sum_to_one() {
        let c = SurvivalCurve::from_hazards(vec![0.2, 0.4, 0.9, 0.01]);
        let total: f64 = c.pmf().iter().sum::<f64>() + c.survival[3];
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_and_trapezoid() {
        let x = [0.0, 1.0, 3.0];
        let y = [1.0, 0.5, 0.1];
        assert_eq!(interpolate(&x, &y, 2.0), 0.3);
        assert_eq!(interpolate(&x, &y, 5.0), 0.1);
        assert_eq!(interpolate(&x, &y, 1.0), 0.5);
        assert!((trapezoid(&x, &y) - (0.75 + 0.6)).abs() < 1e-15);
    }
}
