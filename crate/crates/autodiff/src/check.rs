use std::fmt::Display;

use crate::{AutodiffError, Graph, Result, Tensor, Var};

/// Denominator floor for the relative deviation, so coordinates whose true
/// gradient is ~0 are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub max_abs: f64,
    /// `(parameter index, flat coordinate)` of the largest relative deviation.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
    pub passed: bool,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

fn eval<F, E>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
    E: Display,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = f(&mut g, &vars).map_err(|e| AutodiffError::Closure(e.to_string()))?;
    let v = g.value(root);
    if !v.is_scalar() {
        return Err(AutodiffError::NonScalarRoot {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.item())
}

/// Compare reverse-mode gradients of `f` against central differences with
/// the given step, coordinate by coordinate.
pub fn grad_check<F, E>(f: F, params: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
    E: Display,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = f(&mut g, &vars).map_err(|e| AutodiffError::Closure(e.to_string()))?;
    let f0 = g.value(root).item();
    if !f0.is_finite() {
        return Err(AutodiffError::NonFinite { value: f0 });
    }
    g.backward(root)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut max_rel = 0.0_f64;
    let mut max_abs = 0.0_f64;
    let mut worst = None;
    let mut coordinates = 0;
    for (pi, p) in params.iter().enumerate() {
        let mut num = Tensor::zeros(p.shape());
        for c in 0..p.numel() {
            let orig = p.data()[c];
            probe[pi].data_mut()[c] = orig + step;
            let up = eval(&f, &probe)?;
            probe[pi].data_mut()[c] = orig - step;
            let down = eval(&f, &probe)?;
            probe[pi].data_mut()[c] = orig;
            for v in [up, down] {
                if !v.is_finite() {
                    return Err(AutodiffError::NonFinite { value: v });
                }
            }
            let n = (up - down) / (2.0 * step);
            num.data_mut()[c] = n;
            let a = analytic[pi].data()[c];
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((pi, c));
            }
            coordinates += 1;
        }
        numeric.push(num);
    }
    Ok(GradCheckReport {
        max_rel,
        max_abs,
        worst,
        coordinates,
        passed: max_rel <= tol,
        analytic,
        numeric,
    })
}
