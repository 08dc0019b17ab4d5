//! Conjugate-gradient descent with Armijo backtracking.
//!
//! The same two primitives drive the analytic test problems and both
//! adjoint-based control solvers, which supply their own inner product
//! (time-weighted for control signals).

use log::{debug, warn};

use crate::error::{MocpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchParams {
    /// Sufficient-decrease constant `c` in `f(x + a d) <= f(x) + c a g.d`.
    pub armijo_c: f64,
    /// Backtracking factor applied to the trial step.
    pub shrink: f64,
    /// First trial step.
    pub a0: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Upper bound on backtracking trials per line search.
    pub max_backtracks: usize,
    /// Forced steepest-descent restart period; `None` restarts every `n`
    /// iterations, `n` the problem dimension.
    pub restart_every: Option<usize>,
    /// After each accepted Armijo step, try the minimizer of the quadratic
    /// through `f(x)`, the slope and the accepted trial; keep it if it also
    /// satisfies the Armijo condition and lowers `f`.
    pub quadratic_refine: bool,
    /// When set to `k`, each line search after the first starts at
    /// `min(a0, k * previous accepted step)` instead of `a0`.
    pub step_memory: Option<f64>,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            armijo_c: 1e-4,
            shrink: 0.5,
            a0: 1.0,
            grad_tol: 1e-8,
            max_iter: 1000,
            max_backtracks: 60,
            restart_every: None,
            quadratic_refine: false,
            step_memory: None,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.a0 > 0.0
            && self.grad_tol > 0.0
            && self.max_iter > 0
            && self.max_backtracks > 0
            && self.step_memory.is_none_or(|k| k > 0.0 && k.is_finite());
        if ok {
            Ok(())
        } else {
            Err(MocpError::InvalidParameter(format!("line search parameters {self:?}")))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fletcher-Reeves direction `-g_i + beta d_im1`,
/// `beta = (g_i.g_i) / (g_im1.g_im1)`.
///
/// A vanishing previous gradient restarts with steepest descent.
pub fn cg_direction(g_i: &[f64], g_im1: &[f64], d_im1: &[f64]) -> Vec<f64> {
    cg_direction_with(g_i, Some((g_im1, d_im1)), dot)
}

/// Same as [`cg_direction`] in an arbitrary inner product. `None` for the
/// previous iterate gives the steepest-descent start.
pub fn cg_direction_with(
    g_i: &[f64],
    previous: Option<(&[f64], &[f64])>,
    inner: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<f64> {
    let mut d: Vec<f64> = g_i.iter().map(|g| -g).collect();
    if let Some((g_im1, d_im1)) = previous {
        let denom = inner(g_im1, g_im1);
        if denom > 0.0 {
            let beta = inner(g_i, g_i) / denom;
            for (di, dp) in d.iter_mut().zip(d_im1) {
                *di += beta * dp;
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoStep {
    pub step: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Backtracking limit reached; `step` is the smallest trial.
    pub hit_limit: bool,
}

/// Largest `a` in `{a0 shrink^j}` with `f(x + a d) <= f(x) + c a (g.d)`.
pub fn armijo_backtrack<F>(
    mut f: F,
    x: &[f64],
    d: &[f64],
    g: &[f64],
    p: &LineSearchParams,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let fx = f(x)?;
    Ok(armijo_from(f, x, fx, d, dot(g, d), p)?.step)
}

/// Backtracking core: the caller supplies `f(x)` and the directional
/// derivative `slope = <g, d>` in whatever inner product it uses.
pub fn armijo_from<F>(
    mut f: F,
    x: &[f64],
    fx: f64,
    d: &[f64],
    slope: f64,
    p: &LineSearchParams,
) -> Result<ArmijoStep>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(slope < 0.0) {
        return Err(MocpError::LineSearch(format!(
            "not a descent direction (g.d = {slope:e})"
        )));
    }
    let mut a = p.a0;
    let mut trial = vec![0.0; x.len()];
    let mut last = f64::NAN;
    for j in 0..p.max_backtracks {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *t = xi + a * di;
        }
        // Non-finite trial values (overflow far along d) count as rejections.
        let ft = match f(&trial) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(MocpError::BlowUp { .. }) | Err(MocpError::NonFinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        last = ft;
        if ft <= fx + p.armijo_c * a * slope {
            return Ok(ArmijoStep {
                step: a,
                value: ft,
                evaluations: j + 1,
                hit_limit: false,
            });
        }
        if j + 1 < p.max_backtracks {
            a *= p.shrink;
        }
    }
    warn!("armijo backtracking hit its limit at step {a:e}");
    Ok(ArmijoStep {
        step: a,
        value: last,
        evaluations: p.max_backtracks,
        hit_limit: true,
    })
}

/// A differentiable scalar functional.
pub trait SmoothObjective {
    fn value(&mut self, x: &[f64]) -> Result<f64>;

    /// Gradient with respect to [`SmoothObjective::inner`].
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }
}

/// Closure pair adapter.
pub struct FnObjective<F, G> {
    pub f: F,
    pub grad: G,
}

impl<F, G> SmoothObjective for FnObjective<F, G>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        (self.grad)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeStatus {
    Converged,
    MaxIterations,
    /// Backtracking could not find an acceptable step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Outer iterations, one gradient evaluation each.
    pub iterations: usize,
    pub function_evaluations: usize,
    pub gradient_evaluations: usize,
    pub grad_norm: f64,
    pub status: MinimizeStatus,
    /// Objective value at every accepted iterate, starting with `x0`.
    pub history: Vec<f64>,
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MocpError::NonFinite(what.to_string()))
    }
}

/// Fletcher-Reeves CG with Armijo steps until `|grad| <= grad_tol`.
///
/// Restarts with steepest descent every `restart_every` iterations and
/// whenever the CG direction fails to descend.
pub fn minimize<O: SmoothObjective>(
    obj: &mut O,
    x0: &[f64],
    p: &LineSearchParams,
) -> Result<Minimum> {
    p.validate()?;
    let n = x0.len().max(1);
    let restart = p.restart_every.unwrap_or(n).max(1);
    let mut x = x0.to_vec();
    let mut fx = obj.value(&x)?;
    if !fx.is_finite() {
        return Err(MocpError::NonFinite("objective at start".into()));
    }
    let mut fevals = 1;
    let mut gevals = 0;
    let mut history = vec![fx];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut since_restart = 0;
    let mut iterations = 0;
    let mut grad_norm;
    let mut trial_a0 = p.a0;
    let status = loop {
        iterations += 1;
        let g = obj.gradient(&x)?;
        gevals += 1;
        check_finite("gradient", &g)?;
        grad_norm = obj.inner(&g, &g).sqrt();
        if grad_norm <= p.grad_tol {
            break MinimizeStatus::Converged;
        }
        if iterations > p.max_iter {
            iterations -= 1;
            break MinimizeStatus::MaxIterations;
        }
        let previous = if since_restart >= restart {
            since_restart = 0;
            None
        } else {
            prev.as_ref().map(|(gp, dp)| (gp.as_slice(), dp.as_slice()))
        };
        let mut d = cg_direction_with(&g, previous, |a, b| obj.inner(a, b));
        let mut slope = obj.inner(&g, &d);
        if !(slope < 0.0) {
            debug!("cg direction not descending, restarting");
            d = g.iter().map(|v| -v).collect();
            slope = -grad_norm * grad_norm;
            since_restart = 0;
        }
        let mut step = {
            let obj_ref = &mut *obj;
            let ls = LineSearchParams { a0: trial_a0, ..p.clone() };
            armijo_from(|t| obj_ref.value(t), &x, fx, &d, slope, &ls)?
        };
        if p.quadratic_refine && !step.hit_limit {
            let a = step.step;
            let curv = (step.value - fx - slope * a) / (a * a);
            let a_star = -slope / (2.0 * curv);
            if curv > 0.0 && a_star.is_finite() && a_star <= 1e3 * a && (a_star - a).abs() > 1e-3 * a {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + a_star * di).collect();
                fevals += 1;
                if let Ok(ft) = obj.value(&trial) {
                    if ft.is_finite() && ft < step.value && ft <= fx + p.armijo_c * a_star * slope {
                        step.step = a_star;
                        step.value = ft;
                    }
                }
            }
        }
        fevals += step.evaluations;
        if step.hit_limit {
            break MinimizeStatus::Stalled;
        }
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += step.step * di;
        }
        fx = step.value;
        if let Some(k) = p.step_memory {
            trial_a0 = p.a0.min(k * step.step);
        }
        history.push(fx);
        prev = Some((g, d));
        since_restart += 1;
    };
    check_finite("minimizer", &x)?;
    Ok(Minimum {
        x,
        value: fx,
        iterations,
        function_evaluations: fevals,
        gradient_evaluations: gevals,
        grad_norm,
        status,
        history,
    })
}

/// Central-difference gradient with step `h` per coordinate.
pub fn central_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe)?;
        probe[i] = orig - h;
        let fm = f(&probe)?;
        probe[i] = orig;
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Compares a supplied gradient with central differences at `x`.
pub fn gradient_check<F>(f: F, grad: &[f64], x: &[f64], h: f64) -> Result<GradientCheck>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let fd = central_difference_gradient(f, x, h)?;
    let abs = fd.iter().zip(grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(GradientCheck {
        abs_error: abs,
        rel_error: if norm > 0.0 { abs / norm } else { abs },
    })
}
