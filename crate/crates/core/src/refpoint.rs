//! Reference-point continuation along a two-objective Pareto front.
//!
//! Each front point is the minimizer of `|T - J(x)|^2` for a target `T`
//! placed outside the feasible set by linear extrapolation from the points
//! already found. Consecutive solves warm-start from a predictor step.

use std::io::Write;

use log::{info, warn};

use crate::error::{MocpError, Result};
use crate::linesearch::{central_difference_gradient, minimize, FnObjective, LineSearchParams};
use crate::mop::{nondominated_indices, MopProblem, ObjectiveVector};

/// Objective-space target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target(pub [f64; 2]);

impl Target {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite()) {
            return Err(MocpError::InvalidParameter(format!("non-finite target ({t1}, {t2})")));
        }
        Ok(Self([t1, t2]))
    }

    pub fn distance_sq(&self, j: &ObjectiveVector) -> f64 {
        (self.0[0] - j[0]).powi(2) + (self.0[1] - j[1]).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefPointParams {
    /// Step along the front.
    pub h_par: f64,
    /// Offset of the target away from the front.
    pub h_perp: f64,
    /// Predictor factor in decision space.
    pub h_p: f64,
    pub max_points: usize,
    /// Sweep both directions from the seed. A seed known to be an extremal
    /// point of the front (e.g. zero control) needs only one.
    pub two_sweeps: bool,
    /// Absolute tolerance of the extremal-point tests.
    pub extremal_tol: f64,
}

impl RefPointParams {
    /// `h_par = h_perp = 2%` of the largest seed objective magnitude,
    /// `h_p = 1`.
    pub fn from_seed(j0: &ObjectiveVector) -> Self {
        let scale = j0.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h = 0.02 * if scale > 0.0 { scale } else { 1.0 };
        Self { h_par: h, h_perp: h, h_p: 1.0, max_points: 500, two_sweeps: true, extremal_tol: 1e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_par > 0.0 && self.h_perp > 0.0 && self.h_p >= 0.0 && self.max_points > 0) {
            return Err(MocpError::InvalidParameter(format!(
                "reference point steps must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

fn unit(a: &[f64], b: &[f64], what: &str) -> Result<[f64; 2]> {
    let d = [a[0] - b[0], a[1] - b[1]];
    let n = d[0].hypot(d[1]);
    if !(n > 0.0) || !n.is_finite() {
        return Err(MocpError::Stalled(format!("zero-length {what}")));
    }
    Ok([d[0] / n, d[1] / n])
}

fn check_pair(j: &ObjectiveVector) -> Result<()> {
    if j.dim() != 2 {
        return Err(MocpError::DimensionMismatch { left: j.dim(), right: 2 });
    }
    Ok(())
}

/// `T_1 = J(x_0) - (h_par, 0)`.
pub fn first_target(j0: &ObjectiveVector, p: &RefPointParams) -> Result<Target> {
    p.validate()?;
    check_pair(j0)?;
    Target::new(j0[0] - p.h_par, j0[1])
}

/// `T_{i+1} = J_i + h_par unit(J_i - J_{i-1}) + h_perp unit(T_i - J_i)`.
pub fn next_target(
    j_i: &ObjectiveVector,
    j_im1: &ObjectiveVector,
    t_i: &Target,
    p: &RefPointParams,
) -> Result<Target> {
    check_pair(j_i)?;
    check_pair(j_im1)?;
    let along = unit(j_i.values(), j_im1.values(), "front step")?;
    let off = unit(&t_i.0, j_i.values(), "target offset")?;
    Target::new(
        j_i[0] + p.h_par * along[0] + p.h_perp * off[0],
        j_i[1] + p.h_par * along[1] + p.h_perp * off[1],
    )
}

/// Restart target for the second sweep:
/// `J_0 - h_par unit(J_1 - J_0) + h_perp unit(T_1 - J_1)`.
pub fn opposite_target(
    j0: &ObjectiveVector,
    j1: &ObjectiveVector,
    t1: &Target,
    p: &RefPointParams,
) -> Result<Target> {
    let along = unit(j1.values(), j0.values(), "first front step")?;
    let off = unit(&t1.0, j1.values(), "first target offset")?;
    Target::new(
        j0[0] - p.h_par * along[0] + p.h_perp * off[0],
        j0[1] - p.h_par * along[1] + p.h_perp * off[1],
    )
}

/// `x_i + h_p (x_i - x_{i-1})`.
pub fn predictor(x_i: &[f64], x_im1: &[f64], p: &RefPointParams) -> Result<Vec<f64>> {
    if x_i.len() != x_im1.len() {
        return Err(MocpError::DimensionMismatch { left: x_i.len(), right: x_im1.len() });
    }
    Ok(x_i.iter().zip(x_im1).map(|(a, b)| a + p.h_p * (a - b)).collect())
}

#[derive(Debug, Clone)]
pub struct ScalarSolution {
    pub x: Vec<f64>,
    pub j: ObjectiveVector,
    pub iterations: usize,
    pub function_evaluations: usize,
    pub adjoint_evaluations: usize,
}

/// Minimizes `|T - J(.)|^2` from a warm start.
pub trait ScalarSolver {
    fn solve(&mut self, target: &Target, warm_start: &[f64]) -> Result<ScalarSolution>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub index: usize,
    pub run: u8,
    pub x: Vec<f64>,
    pub j: ObjectiveVector,
    pub target: Target,
    pub iterations: usize,
    /// `|T - J|` at the solution.
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ParetoTrace {
    pub points: Vec<TracePoint>,
    /// Solutions that passed an extremal point or were dominated by another
    /// trace point.
    pub rejected: Vec<TracePoint>,
    pub diagnostics: Vec<String>,
    pub function_evaluations: usize,
    pub adjoint_evaluations: usize,
    pub scalar_solves: usize,
}

impl ParetoTrace {
    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.points.iter().map(|p| p.j.clone()).collect()
    }

    fn note(&mut self, msg: String) {
        warn!("{msg}");
        self.diagnostics.push(msg);
    }

    /// Moves dominated points to `rejected`.
    fn filter(&mut self) {
        if self.points.is_empty() {
            return;
        }
        let slices: Vec<&[f64]> = self.points.iter().map(|p| p.j.values()).collect();
        let keep = nondominated_indices(&slices);
        let mut kept = Vec::with_capacity(keep.len());
        for (i, p) in std::mem::take(&mut self.points).into_iter().enumerate() {
            if keep.binary_search(&i).is_ok() {
                kept.push(p);
            } else {
                self.rejected.push(p);
            }
        }
        self.points = kept;
    }
}

/// Runs the continuation from a Pareto-optimal seed `(x0, J(x0))`.
///
/// A sweep ends when the tracked objective (`J_1` in the first sweep, `J_2`
/// in the second) increases or when the target no longer lies in the
/// dominating orthant of its solution; in both cases the last solution is no
/// longer on the front and is not kept.
pub fn run_reference_point<S: ScalarSolver + ?Sized>(
    solver: &mut S,
    x0: &[f64],
    j0: &ObjectiveVector,
    p: &RefPointParams,
) -> Result<ParetoTrace> {
    p.validate()?;
    check_pair(j0)?;
    let mut trace = ParetoTrace::default();
    let t1 = first_target(j0, p)?;
    let mut first: Option<(ObjectiveVector, Target)> = None;
    let mut index = 0usize;
    let mut target = t1;
    let mut warm = x0.to_vec();
    let mut prev_x = x0.to_vec();
    let mut prev_j = j0.clone();
    let runs: &[u8] = if p.two_sweeps { &[1, 2] } else { &[1] };

    'runs: for &run in runs {
        let tracked = usize::from(run - 1);
        let mut failures = 0;
        loop {
            if trace.points.len() >= p.max_points {
                trace.note(format!("stopping after max_points = {}", p.max_points));
                break 'runs;
            }
            index += 1;
            trace.scalar_solves += 1;
            let sol = match solver.solve(&target, &warm) {
                Ok(s) => s,
                Err(e) => {
                    failures += 1;
                    trace.note(format!("run {run}, point {index}: scalar solve failed: {e}"));
                    if failures >= 2 {
                        trace.note(format!("run {run}: two consecutive failures, sweep aborted"));
                        break;
                    }
                    // Push the target further along the current direction.
                    let dir = unit(prev_j.values(), &target.0, "retry offset")
                        .map(|o| [-o[1], o[0]])
                        .unwrap_or([-1.0, 0.0]);
                    target = Target::new(target.0[0] + p.h_par * dir[0], target.0[1] + p.h_par * dir[1])?;
                    continue;
                }
            };
            failures = 0;
            trace.function_evaluations += sol.function_evaluations;
            trace.adjoint_evaluations += sol.adjoint_evaluations;
            let point = TracePoint {
                index,
                run,
                residual: target.distance_sq(&sol.j).sqrt(),
                x: sol.x,
                j: sol.j,
                target,
                iterations: sol.iterations,
            };
            let increased = point.j[tracked] > prev_j[tracked] + p.extremal_tol;
            let outside = (0..2).any(|k| target.0[k] > point.j[k] + p.extremal_tol);
            if increased || outside {
                info!("run {run}: extremal point passed at point {index}");
                trace.rejected.push(point);
                if run == 1 && p.two_sweeps {
                    let Some((j1, t1f)) = first.clone() else {
                        trace.note("run 1 produced no front point; second sweep skipped".into());
                        break 'runs;
                    };
                    target = opposite_target(j0, &j1, &t1f, p)?;
                    warm = x0.to_vec();
                    prev_x = x0.to_vec();
                    prev_j = j0.clone();
                }
                break;
            }
            if first.is_none() {
                first = Some((point.j.clone(), target));
            }
            let next = match next_target(&point.j, &prev_j, &target, p) {
                Ok(t) => t,
                Err(e) => {
                    trace.note(format!("run {run}, point {index}: {e}"));
                    trace.points.push(point);
                    break;
                }
            };
            warm = predictor(&point.x, &prev_x, p)?;
            prev_x = point.x.clone();
            prev_j = point.j.clone();
            target = next;
            trace.points.push(point);
        }
    }
    trace.filter();
    Ok(trace)
}

/// Evaluates the seed and runs [`run_reference_point`].
pub fn run_reference_point_on<P, S>(
    problem: &P,
    solver: &mut S,
    x0: &[f64],
    p: &RefPointParams,
) -> Result<ParetoTrace>
where
    P: MopProblem + ?Sized,
    S: ScalarSolver + ?Sized,
{
    let j0 = problem.evaluate(x0)?;
    run_reference_point(solver, x0, &j0, p)
}

/// Scalar solver for generic problems: CG on `|T - J(x)|^2` with central
/// difference gradients.
pub struct FdScalarSolver<'a, P: MopProblem + ?Sized> {
    pub problem: &'a P,
    pub params: LineSearchParams,
    pub fd_step: f64,
}

impl<'a, P: MopProblem + ?Sized> FdScalarSolver<'a, P> {
    pub fn new(problem: &'a P) -> Self {
        Self {
            problem,
            params: LineSearchParams {
                grad_tol: 1e-8,
                max_iter: 2000,
                quadratic_refine: true,
                ..Default::default()
            },
            fd_step: 1e-7,
        }
    }
}

impl<P: MopProblem + ?Sized> ScalarSolver for FdScalarSolver<'_, P> {
    fn solve(&mut self, target: &Target, warm_start: &[f64]) -> Result<ScalarSolution> {
        let problem = self.problem;
        let evals = std::cell::Cell::new(0usize);
        let t = *target;
        let f = |x: &[f64]| -> Result<f64> {
            evals.set(evals.get() + 1);
            Ok(t.distance_sq(&problem.evaluate(x)?))
        };
        let h = self.fd_step;
        let mut obj = FnObjective { f, grad: |x: &[f64]| central_difference_gradient(f, x, h) };
        let m = minimize(&mut obj, warm_start, &self.params)?;
        let j = problem.evaluate(&m.x)?;
        Ok(ScalarSolution {
            x: m.x,
            j,
            iterations: m.iterations,
            function_evaluations: evals.get() + 1,
            adjoint_evaluations: 0,
        })
    }
}

/// Weighted-sum seed `argmin s J_1 + (1 - s) J_2`, `s in [0, 1]`.
pub fn weighted_sum_seed<P: MopProblem + ?Sized>(
    problem: &P,
    s: f64,
    x_start: &[f64],
    params: &LineSearchParams,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&s) {
        return Err(MocpError::InvalidParameter(format!("weight {s} outside [0, 1]")));
    }
    let f = |x: &[f64]| -> Result<f64> {
        let j = problem.evaluate(x)?;
        Ok(s * j[0] + (1.0 - s) * j[1])
    };
    let mut obj = FnObjective { f, grad: |x: &[f64]| central_difference_gradient(f, x, 1e-7) };
    Ok(minimize(&mut obj, x_start, params)?.x)
}

/// Trace CSV: index, run, decision parameters, J, T, iterations, residual.
pub fn write_trace_csv<W: Write>(trace: &ParetoTrace, mut w: W) -> std::io::Result<()> {
    let m = trace.points.first().map(|p| p.x.len()).unwrap_or(0);
    let mut header = vec!["index".to_string(), "run".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    header.extend(["J1", "J2", "T1", "T2", "iterations", "residual"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for p in &trace.points {
        let mut row = vec![p.index.to_string(), p.run.to_string()];
        row.extend(p.x.iter().map(|v| format!("{v:e}")));
        row.extend([p.j[0], p.j[1], p.target.0[0], p.target.0[1]].map(|v| format!("{v:e}")));
        row.push(p.iterations.to_string());
        row.push(format!("{:e}", p.residual));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
