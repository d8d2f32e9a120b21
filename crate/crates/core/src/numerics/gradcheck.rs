use serde::Serialize;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so components with near-zero gradients do not divide by ~0.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub index: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst component.
    pub worst_component: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares tape gradients of the scalar `f(params)` against central finite
/// differences with step `h`.
pub fn grad_check<F>(params: &[Tensor<f64>], f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<(f64, Tape<f64>, Var, Vec<Var>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(Error::shape("grad_check", "function must return a 1x1 tensor"));
        }
        let v = tape.value(out).item();
        Ok((v, tape, out, vars))
    };

    let (v0, tape, out, vars) = eval(params)?;
    if !v0.is_finite() {
        return Err(Error::Numeric(format!("grad_check: f(params) = {v0}")));
    }
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = Vec::with_capacity(params.len());
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, params[pi].shape());
        let mut worst = (0.0f64, 0usize);
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let plus = eval(&work)?.0;
            work[pi].data_mut()[k] = orig - h;
            let minus = eval(&work)?.0;
            work[pi].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("grad_check: param {pi} component {k} gives non-finite f")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[k];
            if !a.is_finite() {
                return Err(Error::Numeric(format!("grad_check: param {pi} component {k} has gradient {a}")));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            if rel > worst.0 {
                worst = (rel, k);
            }
        }
        report.push(ParamCheck { index: pi, max_rel_error: worst.0, worst_component: worst.1 });
    }
    let max_rel_error = report.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { params: report, max_rel_error, tol, passed: max_rel_error < tol })
}
