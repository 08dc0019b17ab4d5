//! Adjoint gradients of the scalarized cost `(T1 - J1)^2 + (T2 - J2)^2`.
//!
//! System 1 treats `g` as the control and differentiates through `g'`;
//! system 2 augments the state with `g`, controls its rate `v = g'` and fixes
//! `g(t0)` by shooting on `mu(t0) = 0`.

use std::cell::Cell;
use std::io::Write;

use log::{debug, info, warn};
use nalgebra::DMatrix;

use crate::error::{MocpError, Result};
use crate::linesearch::{minimize, LineSearchParams, MinimizeStatus, SmoothObjective};
use crate::mop::ObjectiveVector;
use crate::refpoint::Target;
use crate::rom::{check_state, finite_difference, integrate, objectives, rhs_into, rk4_step_into, Rk4Work, trapezoid, ControlSignal, RomCoefficients, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarizedCost {
    pub target: Target,
    /// Factor on the control energy in `J2`.
    pub l: usize,
    pub beta: f64,
    /// Fixed factors applied to `(J1, J2)` before comparing with the target.
    pub scale: [f64; 2],
}

/// Regularization weight on the control rate.
pub const DEFAULT_BETA: f64 = 1e-5;

impl ScalarizedCost {
    pub fn new(target: Target, l: usize, beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) || l == 0 {
            return Err(MocpError::InvalidParameter(format!("cost with l = {l}, beta = {beta}")));
        }
        Ok(Self { target, l, beta, scale: [1.0, 1.0] })
    }

    pub fn with_scale(mut self, scale: [f64; 2]) -> Result<Self> {
        if !scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(MocpError::InvalidParameter(format!("objective scales {scale:?}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// `(s1 J1 - T1)^2 + (s2 J2 - T2)^2`.
    pub fn value(&self, j: &ObjectiveVector) -> f64 {
        let [s1, s2] = self.scale;
        (s1 * j[0] - self.target.0[0]).powi(2) + (s2 * j[1] - self.target.0[1]).powi(2)
    }

    /// `d value / d J1 / 2`.
    fn r1(&self, j1: f64) -> f64 {
        self.scale[0] * (self.scale[0] * j1 - self.target.0[0])
    }

    /// `d value / d J2 / 2`.
    fn r2(&self, j2: f64) -> f64 {
        self.scale[1] * (self.scale[1] * j2 - self.target.0[1])
    }
}

/// Trapezoid weights of a uniform grid with `n` nodes.
pub fn time_weights(n: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n];
    if n > 0 {
        w[0] = dt / 2.0;
        w[n - 1] = dt / 2.0;
    }
    w
}

fn weighted_inner(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// `int sum a_i^2 dt` by trapezoid.
pub fn j1_of(traj: &Trajectory, dt: f64) -> f64 {
    let a2: Vec<f64> = traj.alpha.column_iter().map(|c| c.norm_squared()).collect();
    trapezoid(&a2, dt)
}

/// `l int g^2 dt + beta int v^2 dt` by trapezoid; the rate term only when `v` is given.
pub fn j2_of(gamma: &[f64], v: Option<&[f64]>, l: usize, beta: f64, dt: f64) -> f64 {
    let g2: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    let mut j2 = l as f64 * trapezoid(&g2, dt);
    if let Some(v) = v {
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        j2 += beta * trapezoid(&v2, dt);
    }
    j2
}

/// `4 s1 (s1 J1 - T1) a_j(t)`, one column per node.
pub fn frechet_dj_dalpha(traj: &Trajectory, cost: &ScalarizedCost, dt: f64) -> DMatrix<f64> {
    let k = 4.0 * cost.r1(j1_of(traj, dt));
    &traj.alpha * k
}

/// `4 l s2 (s2 J2 - T2) g(t)`; `J2` includes `beta int v^2` when `v` is given.
pub fn frechet_dj_dgamma(gamma: &[f64], v: Option<&[f64]>, cost: &ScalarizedCost, dt: f64) -> Vec<f64> {
    let k = 4.0 * cost.l as f64 * cost.r2(j2_of(gamma, v, cost.l, cost.beta, dt));
    gamma.iter().map(|g| k * g).collect()
}

/// `4 beta s2 (s2 J2 - T2) v(t)`.
pub fn frechet_dj_dv(gamma: &[f64], v: &[f64], cost: &ScalarizedCost, dt: f64) -> Vec<f64> {
    let k = 4.0 * cost.beta * cost.r2(j2_of(gamma, Some(v), cost.l, cost.beta, dt));
    v.iter().map(|x| k * x).collect()
}

/// How forward quantities are evaluated at RK4 half steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageInterpolation {
    Linear,
    /// Cubic Hermite using the forward right-hand side as node derivatives.
    Hermite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    /// `l x (steps + 1)`, zero at the final time.
    pub lambda: DMatrix<f64>,
    /// Adjoint right-hand side at the nodes.
    pub lambda_dot: DMatrix<f64>,
    pub mu: Option<Vec<f64>>,
    pub mu_dot: Option<Vec<f64>>,
}

struct ForwardData<'a> {
    c: &'a RomCoefficients,
    alpha: &'a DMatrix<f64>,
    alpha_dot: Option<DMatrix<f64>>,
    gamma: &'a [f64],
    gamma_dot: &'a [f64],
    dt: f64,
    /// `4 (J1 - T1)` and `4 l (J2 - T2)`.
    k1: f64,
    k2: f64,
}

impl ForwardData<'_> {
    fn node_into(&self, k: usize, a: &mut [f64]) -> f64 {
        a.copy_from_slice(self.alpha.column(k).as_slice());
        self.gamma[k]
    }

    fn mid_into(&self, k: usize, a: &mut [f64]) -> f64 {
        let (g0, g1) = (self.gamma[k], self.gamma[k + 1]);
        match &self.alpha_dot {
            None => {
                for (i, ai) in a.iter_mut().enumerate() {
                    *ai = 0.5 * (self.alpha[(i, k)] + self.alpha[(i, k + 1)]);
                }
                0.5 * (g0 + g1)
            }
            Some(ad) => {
                let h = self.dt / 8.0;
                for (i, ai) in a.iter_mut().enumerate() {
                    *ai = 0.5 * (self.alpha[(i, k)] + self.alpha[(i, k + 1)]) + h * (ad[(i, k)] - ad[(i, k + 1)]);
                }
                0.5 * (g0 + g1) + h * (self.gamma_dot[k] - self.gamma_dot[k + 1])
            }
        }
    }

    /// `(lambda', mu')` at a state point; `y = (lambda, mu?)`.
    fn adjoint_rhs_into(&self, y: &[f64], alpha: &[f64], gamma: f64, with_mu: bool, out: &mut [f64]) {
        let c = self.c;
        let l = c.l;
        let lam = &y[..l];
        for i in 0..l {
            // Column i of the state Jacobian against lambda.
            let mut lt = 0.0;
            for (j, lj) in lam.iter().enumerate() {
                let qj = &c.q[j];
                let mut dq = 0.0;
                for (k, ak) in alpha.iter().enumerate() {
                    dq += ak * (qj[(k, i)] + qj[(i, k)]);
                }
                lt += (c.b[(j, i)] + dq + c.f[(j, i)] * gamma) * lj;
            }
            out[i] = -self.k1 * alpha[i] - lt;
        }
        if with_mu {
            let mut dg = 0.0;
            for (i, li) in lam.iter().enumerate() {
                let mut fa = 0.0;
                for (k, ak) in alpha.iter().enumerate() {
                    fa += c.f[(i, k)] * ak;
                }
                dg += (c.e[i] + fa + 2.0 * c.g[i] * gamma) * li;
            }
            out[l] = -self.k2 * gamma - dg;
        }
    }
}

fn backward(f: &ForwardData<'_>, times: Vec<f64>, with_mu: bool) -> Result<AdjointTrajectory> {
    let l = f.c.l;
    let dim = l + usize::from(with_mu);
    let n = f.gamma.len();
    let mut ys = DMatrix::zeros(dim, n);
    let mut ydot = DMatrix::zeros(dim, n);
    let mut y = vec![0.0; dim];
    let mut rate = vec![0.0; dim];
    let mut stage_a = [vec![0.0; l], vec![0.0; l], vec![0.0; l]];
    let mut work = Rk4Work::new(dim);
    let g_last = f.node_into(n - 1, &mut stage_a[2]);
    f.adjoint_rhs_into(&y, &stage_a[2], g_last, with_mu, &mut rate);
    ydot.column_mut(n - 1).copy_from_slice(&rate);
    for k in (0..n - 1).rev() {
        let g = [
            f.node_into(k + 1, &mut stage_a[0]),
            f.mid_into(k, &mut stage_a[1]),
            f.node_into(k, &mut stage_a[2]),
        ];
        rk4_step_into(|yy, s, out| f.adjoint_rhs_into(yy, &stage_a[s], g[s], with_mu, out), &mut y, -f.dt, &mut work);
        check_state(&y, times[k])?;
        ys.column_mut(k).copy_from_slice(&y);
        f.adjoint_rhs_into(&y, &stage_a[2], g[2], with_mu, &mut rate);
        ydot.column_mut(k).copy_from_slice(&rate);
    }
    let lambda = ys.rows(0, l).into_owned();
    let lambda_dot = ydot.rows(0, l).into_owned();
    let (mu, mu_dot) = if with_mu {
        (Some(ys.row(l).iter().copied().collect()), Some(ydot.row(l).iter().copied().collect()))
    } else {
        (None, None)
    };
    Ok(AdjointTrajectory { times, lambda, lambda_dot, mu, mu_dot })
}

/// `lambda' = -dJ/da - (B + dC/da + F g)^T lambda`, `lambda(te) = 0`,
/// integrated backwards with linear stage interpolation.
pub fn backward_sys1(
    traj: &Trajectory,
    u: &ControlSignal,
    c: &RomCoefficients,
    cost: &ScalarizedCost,
) -> Result<AdjointTrajectory> {
    backward_sys1_with(traj, u, c, cost, StageInterpolation::Linear)
}

pub fn backward_sys1_with(
    traj: &Trajectory,
    u: &ControlSignal,
    c: &RomCoefficients,
    cost: &ScalarizedCost,
    interp: StageInterpolation,
) -> Result<AdjointTrajectory> {
    check_grid(traj, u.gamma.len(), c.l)?;
    let gd = u.gamma_dot();
    let alpha_dot = (interp == StageInterpolation::Hermite).then(|| node_rates(c, &traj.alpha, &u.gamma, &gd));
    let j2 = j2_of(&u.gamma, None, cost.l, cost.beta, u.dt);
    let f = ForwardData {
        c,
        alpha: &traj.alpha,
        alpha_dot,
        gamma: &u.gamma,
        gamma_dot: &gd,
        dt: u.dt,
        k1: 4.0 * cost.r1(j1_of(traj, u.dt)),
        k2: 4.0 * cost.l as f64 * cost.r2(j2),
    };
    backward(&f, traj.times.clone(), false)
}

fn check_grid(traj: &Trajectory, n: usize, l: usize) -> Result<()> {
    if traj.len() != n {
        return Err(MocpError::DimensionMismatch { left: traj.len(), right: n });
    }
    if traj.alpha.nrows() != l {
        return Err(MocpError::DimensionMismatch { left: traj.alpha.nrows(), right: l });
    }
    if n < 2 {
        return Err(MocpError::Empty("time grid"));
    }
    Ok(())
}

fn node_rates(c: &RomCoefficients, alpha: &DMatrix<f64>, gamma: &[f64], gdot: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(alpha.nrows(), alpha.ncols());
    let mut r = vec![0.0; alpha.nrows()];
    for k in 0..alpha.ncols() {
        rhs_into(alpha.column(k).as_slice(), gamma[k], gdot[k], c, &mut r);
        out.column_mut(k).copy_from_slice(&r);
    }
    out
}

/// `D_g J = dJ/dg + (E + F a + 2 G g)^T lambda - D^T lambda'` per node.
pub fn gradient_sys1(
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    u: &ControlSignal,
    c: &RomCoefficients,
    cost: &ScalarizedCost,
) -> Result<Vec<f64>> {
    check_grid(traj, u.gamma.len(), c.l)?;
    let djdg = frechet_dj_dgamma(&u.gamma, None, cost, u.dt);
    Ok((0..u.gamma.len())
        .map(|k| {
            let a: Vec<f64> = traj.alpha.column(k).iter().copied().collect();
            let dg = c.d_gamma(&a, u.gamma[k]);
            let lam = adj.lambda.column(k);
            let lamd = adj.lambda_dot.column(k);
            djdg[k] + (0..c.l).map(|i| dg[i] * lam[i] - c.d[i] * lamd[i]).sum::<f64>()
        })
        .collect())
}

/// `lambda(t0)^T D`, the boundary term system 1 leaves out.
pub fn boundary_term_sys1(adj: &AdjointTrajectory, c: &RomCoefficients) -> f64 {
    adj.lambda.column(0).iter().zip(&c.d).map(|(a, b)| a * b).sum()
}

/// Coupled RK4 of `a' = rhs(a, g, v)`, `g' = v` with `v` linear between
/// nodes. Returns the trajectory and the `g` series.
pub fn forward_sys2(
    c: &RomCoefficients,
    alpha0: &[f64],
    gamma0: f64,
    v: &[f64],
    t0: f64,
    dt: f64,
) -> Result<(Trajectory, Vec<f64>)> {
    if alpha0.len() != c.l {
        return Err(MocpError::DimensionMismatch { left: alpha0.len(), right: c.l });
    }
    if v.len() < 2 {
        return Err(MocpError::Empty("control rate"));
    }
    let n = v.len();
    let l = c.l;
    let mut alpha = DMatrix::zeros(l, n);
    let mut gamma = vec![0.0; n];
    let mut y: Vec<f64> = alpha0.iter().copied().chain(std::iter::once(gamma0)).collect();
    check_state(&y, t0)?;
    alpha.column_mut(0).copy_from_slice(alpha0);
    gamma[0] = gamma0;
    let mut work = Rk4Work::new(l + 1);
    for k in 0..n - 1 {
        let vs = [v[k], 0.5 * (v[k] + v[k + 1]), v[k + 1]];
        rk4_step_into(
            |yy, s, out| {
                rhs_into(&yy[..l], yy[l], vs[s], c, &mut out[..l]);
                out[l] = vs[s];
            },
            &mut y,
            dt,
            &mut work,
        );
        check_state(&y, t0 + (k + 1) as f64 * dt)?;
        alpha.column_mut(k + 1).copy_from_slice(&y[..l]);
        gamma[k + 1] = y[l];
    }
    let times = (0..n).map(|k| t0 + k as f64 * dt).collect();
    Ok((Trajectory { times, alpha }, gamma))
}

/// Backward RK4 of `(lambda, mu)` from zero at `te` with Hermite stage
/// interpolation of the forward state.
pub fn backward_sys2(
    traj: &Trajectory,
    gamma: &[f64],
    v: &[f64],
    c: &RomCoefficients,
    cost: &ScalarizedCost,
    dt: f64,
) -> Result<AdjointTrajectory> {
    check_grid(traj, gamma.len(), c.l)?;
    if v.len() != gamma.len() {
        return Err(MocpError::DimensionMismatch { left: v.len(), right: gamma.len() });
    }
    let alpha_dot = node_rates(c, &traj.alpha, gamma, v);
    let j2 = j2_of(gamma, Some(v), cost.l, cost.beta, dt);
    let f = ForwardData {
        c,
        alpha: &traj.alpha,
        alpha_dot: Some(alpha_dot),
        gamma,
        gamma_dot: v,
        dt,
        k1: 4.0 * cost.r1(j1_of(traj, dt)),
        k2: 4.0 * cost.l as f64 * cost.r2(j2),
    };
    backward(&f, traj.times.clone(), true)
}

/// `D_v J = dJ/dv + D^T lambda + mu` per node.
pub fn gradient_sys2(
    adj: &AdjointTrajectory,
    gamma: &[f64],
    v: &[f64],
    c: &RomCoefficients,
    cost: &ScalarizedCost,
    dt: f64,
) -> Result<Vec<f64>> {
    let mu = adj.mu.as_ref().ok_or_else(|| MocpError::InvalidParameter("system 2 adjoint needs mu".into()))?;
    let djdv = frechet_dj_dv(gamma, v, cost, dt);
    Ok((0..v.len())
        .map(|k| djdv[k] + adj.lambda.column(k).iter().zip(&c.d).map(|(a, b)| a * b).sum::<f64>() + mu[k])
        .collect())
}

/// `int D_v J phi_k dt` for the hat functions `phi_k` of the grid, by
/// Simpson's rule with Hermite midpoint values of the adjoint.
fn nodal_sys2(adj: &AdjointTrajectory, gamma: &[f64], v: &[f64], c: &RomCoefficients, cost: &ScalarizedCost, dt: f64) -> Result<Vec<f64>> {
    let g = gradient_sys2(adj, gamma, v, c, cost, dt)?;
    let n = g.len();
    let mu = adj.mu.as_ref().expect("checked above");
    let mu_dot = adj.mu_dot.as_ref().expect("set with mu");
    let kv = 4.0 * cost.beta * cost.r2(j2_of(gamma, Some(v), cost.l, cost.beta, dt));
    let h = dt / 8.0;
    let mut out = vec![0.0; n];
    for k in 0..n - 1 {
        let lam_mid: f64 = (0..c.l)
            .map(|i| {
                let m = 0.5 * (adj.lambda[(i, k)] + adj.lambda[(i, k + 1)])
                    + h * (adj.lambda_dot[(i, k)] - adj.lambda_dot[(i, k + 1)]);
                m * c.d[i]
            })
            .sum();
        let mu_mid = 0.5 * (mu[k] + mu[k + 1]) + h * (mu_dot[k] - mu_dot[k + 1]);
        let g_mid = lam_mid + mu_mid;
        out[k] += dt / 6.0 * (g[k] - kv * v[k] + 2.0 * g_mid);
        out[k + 1] += dt / 6.0 * (g[k + 1] - kv * v[k + 1] + 2.0 * g_mid);
    }
    // The rate penalty enters the discrete cost through trapezoid weights.
    for (k, w) in time_weights(n, dt).iter().enumerate() {
        out[k] += kv * v[k] * w;
    }
    Ok(out)
}

/// Scalar Newton iteration with forward-difference derivative step
/// `max(1e-6, 1e-6 |x|)`, halving the step while the residual grows.
/// Returns `(x, residual, iterations, evaluations)`.
pub fn newton_scalar<F>(mut f: F, x0: f64, tol: f64, max_iter: usize) -> Result<(f64, f64, usize, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x = x0;
    let mut r = f(x)?;
    let mut evals = 1;
    for it in 0..max_iter {
        if r.abs() <= tol {
            return Ok((x, r, it, evals));
        }
        let h = 1e-6f64.max(1e-6 * x.abs());
        let rp = f(x + h)?;
        evals += 1;
        let slope = (rp - r) / h;
        if !(slope != 0.0 && slope.is_finite()) {
            return Err(MocpError::Shooting { iterations: it + 1, residual: r.abs() });
        }
        let mut step = -r / slope;
        let mut accepted = false;
        for _ in 0..30 {
            let xn = x + step;
            let rn = match f(xn) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(MocpError::BlowUp { .. }) | Err(MocpError::NonFinite(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            evals += 1;
            if rn.abs() < r.abs() || rn.abs() <= tol {
                x = xn;
                r = rn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(MocpError::Shooting { iterations: it + 1, residual: r.abs() });
        }
    }
    if r.abs() <= tol {
        return Ok((x, r, max_iter, evals));
    }
    Err(MocpError::Shooting { iterations: max_iter, residual: r.abs() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub gamma0: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Forward and backward solves used.
    pub solves: usize,
}

/// `g(t0)` such that `mu(t0) = 0` for the given rate `v`.
pub fn shoot_gamma0(
    v: &[f64],
    c: &RomCoefficients,
    alpha0: &[f64],
    cost: &ScalarizedCost,
    t0: f64,
    dt: f64,
    guess: f64,
    tol: f64,
) -> Result<ShootResult> {
    let mu0 = |g0: f64| -> Result<f64> {
        let (traj, gamma) = forward_sys2(c, alpha0, g0, v, t0, dt)?;
        let adj = backward_sys2(&traj, &gamma, v, c, cost, dt)?;
        Ok(adj.mu.expect("system 2")[0])
    };
    let (gamma0, residual, iterations, solves) = newton_scalar(mu0, guess, tol, 50)?;
    debug!("shooting: g0 = {gamma0:e}, mu(t0) = {residual:e} after {iterations} Newton steps");
    Ok(ShootResult { gamma0, residual, iterations, solves })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimalitySystem {
    /// Control `g`, gradient through `g'` without the `t0` boundary term.
    Direct,
    /// Control `v = g'`, `g(t0)` by shooting.
    Augmented,
}

#[derive(Debug, Clone)]
pub struct ScalarMocpResult {
    pub control: ControlSignal,
    pub trajectory: Trajectory,
    pub objectives: ObjectiveVector,
    pub cost: f64,
    pub iterations: usize,
    pub status: MinimizeStatus,
    /// Scalarized cost after each accepted iteration.
    pub history: Vec<f64>,
    pub forward_solves: usize,
    pub backward_solves: usize,
    pub grad_norm: f64,
}

struct Sys1Objective<'a> {
    c: &'a RomCoefficients,
    alpha0: &'a [f64],
    cost: ScalarizedCost,
    t0: f64,
    te: f64,
    dt: f64,
    weights: Vec<f64>,
    forward: Cell<usize>,
    backward: Cell<usize>,
}

impl Sys1Objective<'_> {
    fn control(&self, x: &[f64]) -> Result<ControlSignal> {
        ControlSignal::new(self.t0, self.te, self.dt, x.to_vec(), None)
    }

    fn state(&self, x: &[f64]) -> Result<(ControlSignal, Trajectory)> {
        let u = self.control(x)?;
        self.forward.set(self.forward.get() + 1);
        let tr = integrate(self.c, self.alpha0, &u)?;
        Ok((u, tr))
    }

    fn j(&self, tr: &Trajectory, u: &ControlSignal) -> Result<ObjectiveVector> {
        objectives(tr, u, self.cost.l, 0.0)
    }
}

impl SmoothObjective for Sys1Objective<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        let (u, tr) = self.state(x)?;
        Ok(self.cost.value(&self.j(&tr, &u)?))
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let (u, tr) = self.state(x)?;
        self.backward.set(self.backward.get() + 1);
        let adj = backward_sys1(&tr, &u, self.c, &self.cost)?;
        gradient_sys1(&tr, &adj, &u, self.c, &self.cost)
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_inner(&self.weights, a, b)
    }
}

struct Sys2Objective<'a> {
    c: &'a RomCoefficients,
    alpha0: &'a [f64],
    cost: ScalarizedCost,
    t0: f64,
    dt: f64,
    weights: Vec<f64>,
    shoot_tol: f64,
    gamma0: f64,
    forward: usize,
    backward: usize,
    /// Rate and state of the last successful shot.
    last: Option<(Vec<f64>, Sys2State)>,
}

#[derive(Clone)]
struct Sys2State {
    gamma0: f64,
    traj: Trajectory,
    gamma: Vec<f64>,
}

impl Sys2Objective<'_> {
    fn shoot(&mut self, v: &[f64]) -> Result<Sys2State> {
        if let Some((lv, st)) = &self.last {
            if lv.as_slice() == v {
                return Ok(st.clone());
            }
        }
        let shot = shoot_gamma0(v, self.c, self.alpha0, &self.cost, self.t0, self.dt, self.gamma0, self.shoot_tol)?;
        self.forward += shot.solves + 1;
        self.backward += shot.solves;
        let (traj, gamma) = forward_sys2(self.c, self.alpha0, shot.gamma0, v, self.t0, self.dt)?;
        let st = Sys2State { gamma0: shot.gamma0, traj, gamma };
        self.last = Some((v.to_vec(), st.clone()));
        Ok(st)
    }

    fn j(&self, s: &Sys2State, v: &[f64]) -> Result<ObjectiveVector> {
        ObjectiveVector::pair(j1_of(&s.traj, self.dt), j2_of(&s.gamma, Some(v), self.cost.l, self.cost.beta, self.dt))
    }
}

impl SmoothObjective for Sys2Objective<'_> {
    fn value(&mut self, v: &[f64]) -> Result<f64> {
        // A trial rate whose shooting fails is rejected by the line search.
        let s = match self.shoot(v) {
            Ok(s) => s,
            Err(MocpError::Shooting { residual, .. }) => {
                return Err(MocpError::NonFinite(format!("shooting residual {residual:e}")))
            }
            Err(e) => return Err(e),
        };
        Ok(self.cost.value(&self.j(&s, v)?))
    }

    fn gradient(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let s = self.shoot(v)?;
        self.gamma0 = s.gamma0;
        self.backward += 1;
        let adj = backward_sys2(&s.traj, &s.gamma, v, self.c, &self.cost, self.dt)?;
        let nodal = nodal_sys2(&adj, &s.gamma, v, self.c, &self.cost, self.dt)?;
        Ok(nodal.iter().zip(&self.weights).map(|(g, w)| g / w).collect())
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_inner(&self.weights, a, b)
    }
}

/// Adjoint-based CG with Armijo backtracking on the scalarized cost.
/// System 2 uses the rate of `start` as initial control and `start.gamma[0]`
/// as initial shooting guess.
pub fn solve_scalar_mocp(
    c: &RomCoefficients,
    alpha0: &[f64],
    cost: &ScalarizedCost,
    start: &ControlSignal,
    system: OptimalitySystem,
    opt: &LineSearchParams,
) -> Result<ScalarMocpResult> {
    c.validate()?;
    let n = start.gamma.len();
    let weights = time_weights(n, start.dt);
    match system {
        OptimalitySystem::Direct => {
            let mut obj = Sys1Objective {
                c,
                alpha0,
                cost: *cost,
                t0: start.t0,
                te: start.te,
                dt: start.dt,
                weights,
                forward: Cell::new(0),
                backward: Cell::new(0),
            };
            let m = minimize(&mut obj, &start.gamma, opt)?;
            if m.status != MinimizeStatus::Converged {
                warn!("system 1 optimization ended with {:?} (|grad| = {:e})", m.status, m.grad_norm);
            }
            let (u, tr) = obj.state(&m.x)?;
            let j = obj.j(&tr, &u)?;
            Ok(ScalarMocpResult {
                cost: cost.value(&j),
                control: u,
                trajectory: tr,
                objectives: j,
                iterations: m.iterations,
                status: m.status,
                history: m.history,
                forward_solves: obj.forward.get(),
                backward_solves: obj.backward.get(),
                grad_norm: m.grad_norm,
            })
        }
        OptimalitySystem::Augmented => {
            if !(cost.beta > 0.0) {
                return Err(MocpError::InvalidParameter("system 2 needs beta > 0".into()));
            }
            let mut obj = Sys2Objective {
                c,
                alpha0,
                cost: *cost,
                t0: start.t0,
                dt: start.dt,
                weights,
                shoot_tol: 0.01 * opt.grad_tol,
                gamma0: start.gamma[0],
                forward: 0,
                backward: 0,
                last: None,
            };
            let v0 = start.gamma_dot();
            let m = minimize(&mut obj, &v0, opt)?;
            let s = obj.shoot(&m.x)?;
            let j = obj.j(&s, &m.x)?;
            info!(
                "system 2: {} iterations, {:?}, J = ({:.6e}, {:.6e}), g0 = {:.6e}",
                m.iterations, m.status, j[0], j[1], s.gamma0
            );
            let control = ControlSignal::new(start.t0, start.te, start.dt, s.gamma.clone(), Some(m.x.clone()))?;
            Ok(ScalarMocpResult {
                cost: cost.value(&j),
                control,
                trajectory: s.traj,
                objectives: j,
                iterations: m.iterations,
                status: m.status,
                history: m.history,
                forward_solves: obj.forward,
                backward_solves: obj.backward,
                grad_norm: m.grad_norm,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckRow {
    pub index: usize,
    pub time: f64,
    pub adjoint: f64,
    pub fd: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub system: OptimalitySystem,
    pub rows: Vec<GradientCheckRow>,
    /// `|adjoint - fd| / |fd|` over all nodes.
    pub relative_l2: f64,
    /// `lambda(t0)^T D` (system 1 only).
    pub boundary_term: Option<f64>,
}

/// Compares adjoint partial derivatives of the discrete cost with central
/// differences of step `h` on every control node. For system 2, `g(t0)` is
/// fixed at `gamma0`.
pub fn gradient_check(
    c: &RomCoefficients,
    alpha0: &[f64],
    cost: &ScalarizedCost,
    control: &ControlSignal,
    system: OptimalitySystem,
    gamma0: f64,
    h: f64,
) -> Result<GradientCheckReport> {
    let n = control.gamma.len();
    let dt = control.dt;
    let times = control.times();
    let (adjoint, fd, boundary_term) = match system {
        OptimalitySystem::Direct => {
            let u = ControlSignal::new(control.t0, control.te, dt, control.gamma.clone(), None)?;
            let tr = integrate(c, alpha0, &u)?;
            let adj = backward_sys1(&tr, &u, c, cost)?;
            let g = gradient_sys1(&tr, &adj, &u, c, cost)?;
            let w = time_weights(n, dt);
            let nodal: Vec<f64> = g.iter().zip(&w).map(|(g, w)| g * w).collect();
            let f = |x: &[f64]| -> Result<f64> {
                let u = ControlSignal::new(control.t0, control.te, dt, x.to_vec(), None)?;
                let tr = integrate(c, alpha0, &u)?;
                Ok(cost.value(&objectives(&tr, &u, cost.l, 0.0)?))
            };
            let fd = crate::linesearch::central_difference_gradient(f, &control.gamma, h)?;
            let bt = boundary_term_sys1(&adj, c);
            info!("system 1: lambda(t0)^T D = {bt:e}");
            (nodal, fd, Some(bt))
        }
        OptimalitySystem::Augmented => {
            let v = control.gamma_dot();
            let (tr, gamma) = forward_sys2(c, alpha0, gamma0, &v, control.t0, dt)?;
            let adj = backward_sys2(&tr, &gamma, &v, c, cost, dt)?;
            let nodal = nodal_sys2(&adj, &gamma, &v, c, cost, dt)?;
            let f = |x: &[f64]| -> Result<f64> {
                let (tr, gamma) = forward_sys2(c, alpha0, gamma0, x, control.t0, dt)?;
                let j = ObjectiveVector::pair(j1_of(&tr, dt), j2_of(&gamma, Some(x), cost.l, cost.beta, dt))?;
                Ok(cost.value(&j))
            };
            let fd = crate::linesearch::central_difference_gradient(f, &v, h)?;
            (nodal, fd, None)
        }
    };
    let scale = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = adjoint.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let relative_l2 = if scale > 0.0 { diff / scale } else { diff };
    let rows = (0..n)
        .map(|i| {
            let abs_error = (adjoint[i] - fd[i]).abs();
            GradientCheckRow {
                index: i,
                time: times[i],
                adjoint: adjoint[i],
                fd: fd[i],
                abs_error,
                rel_error: abs_error / fd[i].abs().max(f64::MIN_POSITIVE),
            }
        })
        .collect();
    Ok(GradientCheckReport { system, rows, relative_l2, boundary_term })
}

pub fn write_gradient_check_csv<W: Write>(report: &GradientCheckReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,time,adjoint,fd,abs_error,rel_error")?;
    for r in &report.rows {
        writeln!(w, "{},{:e},{:e},{:e},{:e},{:e}", r.index, r.time, r.adjoint, r.fd, r.abs_error, r.rel_error)?;
    }
    Ok(())
}

/// Central-difference rate of a sampled control, for a system 2 start.
pub fn rate_of(u: &ControlSignal) -> Vec<f64> {
    finite_difference(&u.gamma, u.dt)
}
