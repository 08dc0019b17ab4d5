//! Extended Galerkin reduced-order model
//! `a' = A + B a + C(a) + D g' + (E + F a) g + G g^2`, `C(a)_j = a^T Q_j a`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{MocpError, Result};
use crate::mop::ObjectiveVector;
use crate::pod::{MassWeighting, PodBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct RomCoefficients {
    pub l: usize,
    pub a: Vec<f64>,
    pub b: DMatrix<f64>,
    /// `q[j][(i, k)]`.
    pub q: Vec<DMatrix<f64>>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub f: DMatrix<f64>,
    pub g: Vec<f64>,
    pub re: f64,
}

impl RomCoefficients {
    pub fn zeros(l: usize, re: f64) -> Self {
        Self {
            l,
            a: vec![0.0; l],
            b: DMatrix::zeros(l, l),
            q: vec![DMatrix::zeros(l, l); l],
            d: vec![0.0; l],
            e: vec![0.0; l],
            f: DMatrix::zeros(l, l),
            g: vec![0.0; l],
            re,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.l;
        if l == 0 {
            return Err(MocpError::Empty("reduced model"));
        }
        let vecs = [&self.a, &self.d, &self.e, &self.g];
        for v in vecs {
            if v.len() != l {
                return Err(MocpError::DimensionMismatch { left: v.len(), right: l });
            }
        }
        for m in std::iter::once(&self.b).chain(std::iter::once(&self.f)).chain(&self.q) {
            if m.shape() != (l, l) {
                return Err(MocpError::DimensionMismatch { left: m.nrows(), right: l });
            }
        }
        if self.q.len() != l {
            return Err(MocpError::DimensionMismatch { left: self.q.len(), right: l });
        }
        if !(self.re > 0.0 && self.re.is_finite()) {
            return Err(MocpError::InvalidParameter(format!("Re = {}", self.re)));
        }
        let finite = vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.b.iter().chain(self.f.iter()).all(|x| x.is_finite())
            && self.q.iter().all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(MocpError::NonFinite("ROM coefficients".into()));
        }
        Ok(())
    }

    /// `C(a)`.
    pub fn quadratic(&self, alpha: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(alpha);
        self.q.iter().map(|qj| a.dot(&(qj * &a))).collect()
    }

    /// `dC/da`, row `j` = `a^T (Q_j + Q_j^T)`.
    pub fn jac_quadratic(&self, alpha: &[f64]) -> DMatrix<f64> {
        let a = DVector::from_column_slice(alpha);
        let mut jac = DMatrix::zeros(self.l, self.l);
        for (j, qj) in self.q.iter().enumerate() {
            let row = qj * &a + qj.transpose() * &a;
            jac.row_mut(j).copy_from(&row.transpose());
        }
        jac
    }

    /// `d rhs / d a = B + dC/da + F g`.
    pub fn jac_alpha(&self, alpha: &[f64], gamma: f64) -> DMatrix<f64> {
        &self.b + self.jac_quadratic(alpha) + &self.f * gamma
    }

    /// `d rhs / d g = E + F a + 2 G g`.
    pub fn d_gamma(&self, alpha: &[f64], gamma: f64) -> Vec<f64> {
        let fa = &self.f * DVector::from_column_slice(alpha);
        (0..self.l).map(|i| self.e[i] + fa[i] + 2.0 * self.g[i] * gamma).collect()
    }
}

/// `A + B a + C(a) + D g' + (E + F a) g + G g^2`.
pub fn rhs(alpha: &[f64], gamma: f64, gdot: f64, c: &RomCoefficients) -> Vec<f64> {
    let mut out = vec![0.0; c.l];
    rhs_into(alpha, gamma, gdot, c, &mut out);
    out
}

/// [`rhs`] into a caller buffer of length `l`.
pub fn rhs_into(alpha: &[f64], gamma: f64, gdot: f64, c: &RomCoefficients, out: &mut [f64]) {
    let l = c.l;
    for i in 0..l {
        let mut ba = 0.0;
        let mut fa = 0.0;
        for j in 0..l {
            ba += c.b[(i, j)] * alpha[j];
            fa += c.f[(i, j)] * alpha[j];
        }
        let qi = &c.q[i];
        let mut quad = 0.0;
        for j in 0..l {
            let mut row = 0.0;
            for k in 0..l {
                row += qi[(j, k)] * alpha[k];
            }
            quad += alpha[j] * row;
        }
        out[i] = c.a[i] + ba + quad + c.d[i] * gdot + (c.e[i] + fa) * gamma + c.g[i] * gamma * gamma;
    }
}

/// Control samples on a uniform grid over `[t0, te]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub t0: f64,
    pub te: f64,
    pub dt: f64,
    pub gamma: Vec<f64>,
    /// Rate `v = g'` at the nodes, if known.
    pub v: Option<Vec<f64>>,
}

pub fn grid_steps(t0: f64, te: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && te > t0 && dt.is_finite() && t0.is_finite() && te.is_finite()) {
        return Err(MocpError::InvalidParameter(format!("time grid [{t0}, {te}] step {dt}")));
    }
    let n = (te - t0) / dt;
    let r = n.round();
    if (n - r).abs() > 1e-9 * r.max(1.0) || r < 1.0 {
        return Err(MocpError::InvalidParameter(format!(
            "(te - t0) / dt = {n} is not an integer"
        )));
    }
    Ok(r as usize)
}

impl ControlSignal {
    pub fn new(t0: f64, te: f64, dt: f64, gamma: Vec<f64>, v: Option<Vec<f64>>) -> Result<Self> {
        let steps = grid_steps(t0, te, dt)?;
        if gamma.len() != steps + 1 {
            return Err(MocpError::DimensionMismatch { left: gamma.len(), right: steps + 1 });
        }
        if let Some(v) = &v {
            if v.len() != steps + 1 {
                return Err(MocpError::DimensionMismatch { left: v.len(), right: steps + 1 });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MocpError::NonFinite("control rate".into()));
            }
        }
        if gamma.iter().any(|x| !x.is_finite()) {
            return Err(MocpError::NonFinite("control".into()));
        }
        Ok(Self { t0, te, dt, gamma, v })
    }

    pub fn zero(t0: f64, te: f64, dt: f64) -> Result<Self> {
        let steps = grid_steps(t0, te, dt)?;
        Self::new(t0, te, dt, vec![0.0; steps + 1], Some(vec![0.0; steps + 1]))
    }

    /// Samples `g` and, if given, its derivative.
    pub fn from_fn(
        t0: f64,
        te: f64,
        dt: f64,
        g: impl Fn(f64) -> f64,
        dg: Option<&dyn Fn(f64) -> f64>,
    ) -> Result<Self> {
        let steps = grid_steps(t0, te, dt)?;
        let times: Vec<f64> = (0..=steps).map(|i| t0 + i as f64 * dt).collect();
        let gamma = times.iter().map(|&t| g(t)).collect();
        let v = dg.map(|d| times.iter().map(|&t| d(t)).collect());
        Self::new(t0, te, dt, gamma, v)
    }

    pub fn steps(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.t0 + i as f64 * self.dt).collect()
    }

    /// `g'` at the nodes: the stored rate, else central differences with
    /// second-order one-sided formulas at the ends.
    pub fn gamma_dot(&self) -> Vec<f64> {
        if let Some(v) = &self.v {
            return v.clone();
        }
        finite_difference(&self.gamma, self.dt)
    }

    /// `(g, g')` at the midpoint of step `i`.
    fn midpoint(&self, i: usize, gd: &[f64]) -> (f64, f64) {
        let (g0, g1) = (self.gamma[i], self.gamma[i + 1]);
        let (d0, d1) = (gd[i], gd[i + 1]);
        let g = if self.v.is_some() {
            // Cubic Hermite through values and rates.
            0.5 * (g0 + g1) + self.dt / 8.0 * (d0 - d1)
        } else {
            0.5 * (g0 + g1)
        };
        (g, 0.5 * (d0 + d1))
    }
}

/// Central differences, second-order one-sided at the ends.
pub fn finite_difference(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![(y[1] - y[0]) / dt; 2],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt)
                } else if i == n - 1 {
                    (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt)
                } else {
                    (y[i + 1] - y[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

/// Fourth-order central differences in the interior, falling back to
/// [`finite_difference`] within two nodes of either end.
pub fn central_difference4(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = finite_difference(y, dt);
    for i in 2..n.saturating_sub(2) {
        d[i] = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * dt);
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `l x (steps + 1)`.
    pub alpha: DMatrix<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        let l = self.alpha.nrows();
        &self.alpha.as_slice()[k * l..(k + 1) * l]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// State magnitude treated as divergence.
pub const BLOW_UP: f64 = 1e12;

pub(crate) fn check_state(x: &[f64], t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
        return Err(MocpError::BlowUp { time: t });
    }
    Ok(())
}

/// Scratch space for [`rk4_step_into`].
pub(crate) struct Rk4Work {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Work {
    pub(crate) fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }
}

/// In-place RK4 step; `f(x, stage, out)` with stage 0 at the start, 1 at
/// the midpoint and 2 at the end of the step.
pub(crate) fn rk4_step_into(mut f: impl FnMut(&[f64], usize, &mut [f64]), x: &mut [f64], dt: f64, w: &mut Rk4Work) {
    let [k1, k2, k3, k4] = &mut w.k;
    let tmp = &mut w.tmp;
    f(x, 0, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + dt / 2.0 * k1[i];
    }
    f(tmp, 1, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + dt / 2.0 * k2[i];
    }
    f(tmp, 1, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(tmp, 2, k4);
    for i in 0..x.len() {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Classical RK4 on the control grid.
pub fn integrate(c: &RomCoefficients, alpha0: &[f64], u: &ControlSignal) -> Result<Trajectory> {
    if alpha0.len() != c.l {
        return Err(MocpError::DimensionMismatch { left: alpha0.len(), right: c.l });
    }
    let gd = u.gamma_dot();
    let steps = u.steps();
    let mut alpha = DMatrix::zeros(c.l, steps + 1);
    alpha.column_mut(0).copy_from_slice(alpha0);
    let mut x = alpha0.to_vec();
    let mut work = Rk4Work::new(c.l);
    check_state(&x, u.t0)?;
    for i in 0..steps {
        let mid = u.midpoint(i, &gd);
        let at = |s: usize| match s {
            0 => (u.gamma[i], gd[i]),
            1 => mid,
            _ => (u.gamma[i + 1], gd[i + 1]),
        };
        rk4_step_into(
            |a, s, out| {
                let (g, d) = at(s);
                rhs_into(a, g, d, c, out)
            },
            &mut x,
            u.dt,
            &mut work,
        );
        check_state(&x, u.t0 + (i + 1) as f64 * u.dt)?;
        alpha.column_mut(i + 1).copy_from_slice(&x);
    }
    Ok(Trajectory { times: u.times(), alpha })
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(y: &[f64], dt: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dt * (y[1..n - 1].iter().sum::<f64>() + 0.5 * (y[0] + y[n - 1])),
    }
}

/// `J1 = int sum a_i^2`, `J2 = l int g^2 + beta int v^2`.
pub fn objectives(traj: &Trajectory, u: &ControlSignal, l: usize, beta: f64) -> Result<ObjectiveVector> {
    if traj.len() != u.gamma.len() {
        return Err(MocpError::DimensionMismatch { left: traj.len(), right: u.gamma.len() });
    }
    if !(beta >= 0.0) {
        return Err(MocpError::InvalidParameter(format!("beta = {beta}")));
    }
    let a2: Vec<f64> = traj.alpha.column_iter().map(|c| c.norm_squared()).collect();
    let g2: Vec<f64> = u.gamma.iter().map(|g| g * g).collect();
    let mut j2 = l as f64 * trapezoid(&g2, u.dt);
    if beta > 0.0 {
        let v2: Vec<f64> = u.gamma_dot().iter().map(|v| v * v).collect();
        j2 += beta * trapezoid(&v2, u.dt);
    }
    ObjectiveVector::pair(trapezoid(&a2, u.dt), j2)
}

/// Discrete forms on two-component fields of length `2N`.
pub trait DiscreteGeometry: Sync {
    fn n_dof(&self) -> usize;
    /// `(a, b)`.
    fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64>;
    /// `(grad a, grad b)`.
    fn grad_inner(&self, a: &[f64], b: &[f64]) -> Result<f64>;
    /// `((a . grad) b, c)`.
    fn convection(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64>;
    /// Weighting consistent with `inner`.
    fn mass(&self) -> MassWeighting;
}

/// Uniform periodic grid on `[0, lx) x [0, ly)`, node `(ix, iy)` at index
/// `iy * nx + ix`, central-difference gradients and weights `hx * hy`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl PeriodicGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 || !(lx > 0.0) || !(ly > 0.0) {
            return Err(MocpError::InvalidParameter(format!("grid {nx}x{ny} on {lx}x{ly}")));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn weight(&self) -> f64 {
        self.lx / self.nx as f64 * self.ly / self.ny as f64
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (ix, iy) = (k % self.nx, k / self.nx);
        (ix as f64 * self.lx / self.nx as f64, iy as f64 * self.ly / self.ny as f64)
    }

    /// Samples `f(x, y) -> (u, v)` on the nodes.
    pub fn field(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
        let n = self.nodes();
        let mut out = vec![0.0; 2 * n];
        for k in 0..n {
            let (x, y) = self.coords(k);
            let (u, v) = f(x, y);
            out[k] = u;
            out[n + k] = v;
        }
        out
    }

    /// Central-difference `(d/dx, d/dy)` of one nodal component.
    pub fn gradient(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let hx = self.lx / nx as f64;
        let hy = self.ly / ny as f64;
        let mut dx = vec![0.0; nx * ny];
        let mut dy = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let k = iy * nx + ix;
                let e = iy * nx + (ix + 1) % nx;
                let w = iy * nx + (ix + nx - 1) % nx;
                let n = ((iy + 1) % ny) * nx + ix;
                let s_ = ((iy + ny - 1) % ny) * nx + ix;
                dx[k] = (s[e] - s[w]) / (2.0 * hx);
                dy[k] = (s[n] - s[s_]) / (2.0 * hy);
            }
        }
        (dx, dy)
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != 2 * self.nodes() {
            return Err(MocpError::DimensionMismatch { left: f.len(), right: 2 * self.nodes() });
        }
        Ok(())
    }
}

impl DiscreteGeometry for PeriodicGrid {
    fn n_dof(&self) -> usize {
        2 * self.nodes()
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.weight() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
    }

    fn grad_inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let n = self.nodes();
        let mut sum = 0.0;
        for comp in 0..2 {
            let (ax, ay) = self.gradient(&a[comp * n..(comp + 1) * n]);
            let (bx, by) = self.gradient(&b[comp * n..(comp + 1) * n]);
            sum += (0..n).map(|k| ax[k] * bx[k] + ay[k] * by[k]).sum::<f64>();
        }
        Ok(self.weight() * sum)
    }

    fn convection(&self, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        self.check(c)?;
        let n = self.nodes();
        let mut sum = 0.0;
        for comp in 0..2 {
            let (bx, by) = self.gradient(&b[comp * n..(comp + 1) * n]);
            let cc = &c[comp * n..(comp + 1) * n];
            sum += (0..n).map(|k| (a[k] * bx[k] + a[n + k] * by[k]) * cc[k]).sum::<f64>();
        }
        Ok(self.weight() * sum)
    }

    fn mass(&self) -> MassWeighting {
        MassWeighting::Diagonal(vec![self.weight(); self.n_dof()])
    }
}

fn named<T>(term: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| MocpError::Geometry { term: term.to_string(), reason: e.to_string() })
}

/// Galerkin coefficients of the extended model. `u_c` is the control field
/// per unit control amplitude.
pub fn assemble(
    basis: &PodBasis,
    u_m: &[f64],
    u_c: &[f64],
    geom: &dyn DiscreteGeometry,
    re: f64,
) -> Result<RomCoefficients> {
    if !(re > 0.0 && re.is_finite()) {
        return Err(MocpError::InvalidParameter(format!("Re = {re}")));
    }
    let n = geom.n_dof();
    for len in [basis.n_dof(), u_m.len(), u_c.len()] {
        if len != n {
            return Err(MocpError::DimensionMismatch { left: len, right: n });
        }
    }
    let l = basis.l;
    let psi: Vec<&[f64]> = (0..l).map(|i| basis.mode(i)).collect();
    let nu = 1.0 / re;
    let conv = |term, a: &[f64], b: &[f64], c: &[f64]| named(term, geom.convection(a, b, c));
    let grad = |term, a: &[f64], b: &[f64]| named(term, geom.grad_inner(a, b));
    let mut c = RomCoefficients::zeros(l, re);
    for i in 0..l {
        c.a[i] = -conv("A", u_m, u_m, psi[i])? - nu * grad("A", u_m, psi[i])?;
        c.d[i] = -named("D", geom.inner(u_c, psi[i]))?;
        c.e[i] = -conv("E", u_m, u_c, psi[i])? - conv("E", u_c, u_m, psi[i])? - nu * grad("E", u_c, psi[i])?;
        c.g[i] = -conv("G", u_c, u_c, psi[i])?;
        for j in 0..l {
            c.b[(i, j)] = -conv("B", u_m, psi[j], psi[i])? - conv("B", psi[j], u_m, psi[i])?
                - nu * grad("B", psi[i], psi[j])?;
            c.f[(i, j)] = -conv("F", u_c, psi[j], psi[i])? - conv("F", psi[j], u_c, psi[i])?;
        }
    }
    for j in 0..l {
        for i in 0..l {
            for k in 0..l {
                c.q[j][(i, k)] = -conv("Q", psi[i], psi[k], psi[j])?;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub residual_before: f64,
    pub residual_after: f64,
    pub regularized: bool,
}

/// `sum_t |a_p'(t) - rhs(a_p(t), g(t))|^2` with `a_p'` by finite differences.
pub fn equation_residual(c: &RomCoefficients, alpha_proj: &Trajectory, u: &ControlSignal) -> Result<f64> {
    let (x, r) = calibration_data(c, alpha_proj, u)?;
    let fit = &x * c.b.transpose();
    Ok((r - fit).norm_squared())
}

/// Rows: time samples. Returns `(alpha, alpha' - rhs_without_B)`.
fn calibration_data(
    c: &RomCoefficients,
    alpha_proj: &Trajectory,
    u: &ControlSignal,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = alpha_proj.len();
    if alpha_proj.alpha.nrows() != c.l {
        return Err(MocpError::DimensionMismatch { left: alpha_proj.alpha.nrows(), right: c.l });
    }
    if m != u.gamma.len() {
        return Err(MocpError::DimensionMismatch { left: m, right: u.gamma.len() });
    }
    let gd = u.gamma_dot();
    let mut x = DMatrix::zeros(m, c.l);
    let mut r = DMatrix::zeros(m, c.l);
    let mut no_b = c.clone();
    no_b.b.fill(0.0);
    let derivs: Vec<Vec<f64>> = (0..c.l)
        .map(|j| central_difference4(&alpha_proj.alpha.row(j).iter().copied().collect::<Vec<_>>(), u.dt))
        .collect();
    for t in 0..m {
        let a = alpha_proj.state(t);
        let rest = rhs(a, u.gamma[t], gd[t], &no_b);
        for j in 0..c.l {
            x[(t, j)] = a[j];
            r[(t, j)] = derivs[j][t] - rest[j];
        }
    }
    Ok((x, r))
}

/// Refits `B` by equation-residual least squares on projected data.
pub fn calibrate(
    c: &RomCoefficients,
    alpha_proj: &Trajectory,
    u: &ControlSignal,
) -> Result<(RomCoefficients, CalibrationReport)> {
    c.validate()?;
    let (x, r) = calibration_data(c, alpha_proj, u)?;
    let before = (&r - &x * c.b.transpose()).norm_squared();
    let mut normal = x.transpose() * &x;
    let rhs_m = x.transpose() * &r;
    let eig = normal.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let regularized = !(min > 1e-12 * max) || max == 0.0;
    if regularized {
        warn!("calibration normal equations are rank deficient; adding ridge 1e-10");
        for i in 0..c.l {
            normal[(i, i)] += 1e-10;
        }
    }
    let solved = normal
        .cholesky()
        .map(|ch| ch.solve(&rhs_m))
        .or_else(|| {
            let n = x.transpose() * &x + DMatrix::identity(c.l, c.l) * 1e-10;
            n.cholesky().map(|ch| ch.solve(&rhs_m))
        })
        .ok_or_else(|| MocpError::Degenerate("calibration normal equations".into()))?;
    let mut out = c.clone();
    out.b = solved.transpose();
    let after = (&r - &x * out.b.transpose()).norm_squared();
    if !(after <= before) {
        out.b = c.b.clone();
        return Ok((out, CalibrationReport { residual_before: before, residual_after: before, regularized }));
    }
    out.validate()?;
    Ok((out, CalibrationReport { residual_before: before, residual_after: after, regularized }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn rhs_examples() {
        let c = RomCoefficients::zeros(2, 1.0);
        assert_eq!(rhs(&[1.0, 2.0], 3.0, 4.0, &c), vec![0.0, 0.0]);
        let mut q = c.clone();
        q.q[0] = DMatrix::identity(2, 2);
        assert_eq!(rhs(&[1.0, 2.0], 0.0, 0.0, &q), vec![5.0, 0.0]);
        let mut d = c.clone();
        d.d = vec![1.0, 0.0];
        assert_eq!(rhs(&[0.0, 0.0], 0.0, 3.0, &d), vec![3.0, 0.0]);
    }

    fn exp_decay(dt: f64) -> f64 {
        let mut c = RomCoefficients::zeros(2, 1.0);
        c.b = -DMatrix::identity(2, 2);
        let u = ControlSignal::zero(0.0, 2.0, dt).unwrap();
        let tr = integrate(&c, &[1.0, 1.0], &u).unwrap();
        tr.times
            .iter()
            .enumerate()
            .map(|(k, t)| (tr.alpha[(0, k)] - (-t).exp()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rk4_is_fourth_order() {
        let e1 = exp_decay(0.1);
        let e2 = exp_decay(0.05);
        let order = (e1 / e2).log2();
        assert!((3.8..=4.2).contains(&order), "order {order}");
        assert!(e1 < 1e-5);
    }

    #[test]
    fn integrate_trivial() {
        let c = RomCoefficients::zeros(2, 1.0);
        let u = ControlSignal::zero(0.0, 1.0, 0.1).unwrap();
        let tr = integrate(&c, &[0.5, -1.0], &u).unwrap();
        assert!(tr.alpha.column_iter().all(|col| col[0] == 0.5 && col[1] == -1.0));

        let mut d = RomCoefficients::zeros(1, 1.0);
        d.d = vec![1.0];
        let u = ControlSignal::from_fn(0.0, 3.0, 0.1, |t| t, Some(&|_| 1.0)).unwrap();
        let tr = integrate(&d, &[2.0], &u).unwrap();
        for (k, t) in tr.times.iter().enumerate() {
            assert_relative_eq!(tr.alpha[(0, k)], 2.0 + t, epsilon = 1e-12);
        }
    }

    #[test]
    fn blow_up_reports_time() {
        let mut c = RomCoefficients::zeros(1, 1.0);
        c.q[0] = DMatrix::from_element(1, 1, 1.0);
        let u = ControlSignal::zero(0.0, 10.0, 0.01).unwrap();
        match integrate(&c, &[1.0], &u) {
            Err(MocpError::BlowUp { time }) => assert!(time > 0.9 && time < 1.1, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_grid_checks() {
        assert!(ControlSignal::new(0.0, 1.0, 0.3, vec![0.0; 4], None).is_err());
        assert!(ControlSignal::new(0.0, 1.0, 0.25, vec![0.0; 4], None).is_err());
        assert!(ControlSignal::new(0.0, 1.0, 0.25, vec![0.0; 5], None).is_ok());
        let u = ControlSignal::from_fn(0.0, 1.0, 0.1, |t| t * t, None).unwrap();
        for (g, t) in u.gamma_dot().iter().zip(u.times()) {
            assert_relative_eq!(*g, 2.0 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn objectives_examples() {
        let u = ControlSignal::from_fn(0.0, 10.0, 0.05, |_| 0.7, None).unwrap();
        let c = RomCoefficients::zeros(3, 1.0);
        let tr = integrate(&c, &[0.0; 3], &u).unwrap();
        let j = objectives(&tr, &u, 3, 0.0).unwrap();
        assert_eq!(j[0], 0.0);
        assert_relative_eq!(j[1], 10.0 * 3.0 * 0.49, max_relative = 1e-12);

        let u = ControlSignal::zero(0.0, 2.0 * PI, 2.0 * PI / 1000.0).unwrap();
        let times = u.times();
        let alpha = DMatrix::from_fn(1, times.len(), |_, k| times[k].sin());
        let tr = Trajectory { times, alpha };
        assert_relative_eq!(objectives(&tr, &u, 1, 1e-5).unwrap()[0], PI, max_relative = 1e-9);
        let short = ControlSignal::zero(0.0, 1.0, 0.5).unwrap();
        assert!(objectives(&tr, &short, 1, 0.0).is_err());
    }

    fn random_coefficients(l: usize, seed: u64) -> RomCoefficients {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = || rng.gen_range(-0.5..0.5);
        let mut c = RomCoefficients::zeros(l, 100.0);
        for i in 0..l {
            c.a[i] = r();
            c.d[i] = r();
            c.e[i] = r();
            c.g[i] = 0.1 * r();
            for j in 0..l {
                c.b[(i, j)] = r() - if i == j { 1.0 } else { 0.0 };
                c.f[(i, j)] = 0.1 * r();
                for k in 0..l {
                    c.q[i][(j, k)] = 0.1 * r();
                }
            }
        }
        c
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = random_coefficients(3, 5);
        let a = [0.3, -0.7, 1.1];
        let g = 0.4;
        let jac = c.jac_alpha(&a, g);
        for k in 0..3 {
            let h = 1e-6;
            let mut ap = a;
            let mut am = a;
            ap[k] += h;
            am[k] -= h;
            let fp = rhs(&ap, g, 0.2, &c);
            let fm = rhs(&am, g, 0.2, &c);
            for j in 0..3 {
                let fd = (fp[j] - fm[j]) / (2.0 * h);
                assert!((fd - jac[(j, k)]).abs() <= 1e-6 * jac[(j, k)].abs().max(1.0));
            }
        }
        let dg = c.d_gamma(&a, g);
        let fp = rhs(&a, g + 1e-6, 0.2, &c);
        let fm = rhs(&a, g - 1e-6, 0.2, &c);
        for j in 0..3 {
            assert!(((fp[j] - fm[j]) / 2e-6 - dg[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn calibration_recovers_b() {
        let c = random_coefficients(2, 9);
        let u = ControlSignal::from_fn(0.0, 4.0, 1e-3, |t| (1.3 * t).sin(), Some(&|t| 1.3 * (1.3 * t).cos())).unwrap();
        let tr = integrate(&c, &[0.5, -0.2], &u).unwrap();
        let mut wrong = c.clone();
        wrong.b = DMatrix::zeros(2, 2);
        let (fit, rep) = calibrate(&wrong, &tr, &u).unwrap();
        assert!((&fit.b - &c.b).abs().max() < 1e-6, "{}", (&fit.b - &c.b).abs().max());
        assert!(rep.residual_after <= rep.residual_before);
        assert!(rep.residual_after < 1e-6);
        assert!(!rep.regularized);
    }

    #[test]
    fn calibration_degenerate_is_regularized() {
        let c = random_coefficients(2, 1);
        let u = ControlSignal::zero(0.0, 0.1, 0.1).unwrap();
        let tr = Trajectory { times: u.times(), alpha: DMatrix::from_column_slice(2, 2, &[1.0, 0.5, 1.1, 0.55]) };
        let (_, rep) = calibrate(&c, &tr, &u).unwrap();
        assert!(rep.regularized);
        assert!(rep.residual_after <= rep.residual_before);
    }

    fn naive_conv(g: &PeriodicGrid, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        // Direct nodal sum with independently written stencils.
        let n = g.nodes();
        let (hx, hy) = (g.lx / g.nx as f64, g.ly / g.ny as f64);
        let at = |f: &[f64], ix: isize, iy: isize| {
            let ix = ix.rem_euclid(g.nx as isize) as usize;
            let iy = iy.rem_euclid(g.ny as isize) as usize;
            f[iy * g.nx + ix]
        };
        let mut s = 0.0;
        for iy in 0..g.ny as isize {
            for ix in 0..g.nx as isize {
                let k = iy as usize * g.nx + ix as usize;
                for comp in 0..2 {
                    let bc = &b[comp * n..(comp + 1) * n];
                    let dbx = (at(bc, ix + 1, iy) - at(bc, ix - 1, iy)) / (2.0 * hx);
                    let dby = (at(bc, ix, iy + 1) - at(bc, ix, iy - 1)) / (2.0 * hy);
                    s += (a[k] * dbx + a[n + k] * dby) * c[comp * n + k] * hx * hy;
                }
            }
        }
        s
    }

    fn naive_grad(g: &PeriodicGrid, a: &[f64], b: &[f64]) -> f64 {
        let n = g.nodes();
        let (hx, hy) = (g.lx / g.nx as f64, g.ly / g.ny as f64);
        let at = |f: &[f64], ix: isize, iy: isize| {
            f[iy.rem_euclid(g.ny as isize) as usize * g.nx + ix.rem_euclid(g.nx as isize) as usize]
        };
        let mut s = 0.0;
        for comp in 0..2 {
            let (ac, bc) = (&a[comp * n..(comp + 1) * n], &b[comp * n..(comp + 1) * n]);
            for iy in 0..g.ny as isize {
                for ix in 0..g.nx as isize {
                    let ax = (at(ac, ix + 1, iy) - at(ac, ix - 1, iy)) / (2.0 * hx);
                    let ay = (at(ac, ix, iy + 1) - at(ac, ix, iy - 1)) / (2.0 * hy);
                    let bx = (at(bc, ix + 1, iy) - at(bc, ix - 1, iy)) / (2.0 * hx);
                    let by = (at(bc, ix, iy + 1) - at(bc, ix, iy - 1)) / (2.0 * hy);
                    s += (ax * bx + ay * by) * hx * hy;
                }
            }
        }
        s
    }

    #[test]
    fn assembly_matches_direct_quadrature() {
        use crate::pod::{pod_modes, SnapshotSet, Truncation};
        use rand::{Rng, SeedableRng};
        let g = PeriodicGrid::new(4, 4, 1.0, 2.0).unwrap();
        let n = g.nodes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let data = DMatrix::from_fn(2 * n, 6, |_, _| rng.gen_range(-1.0..1.0));
        let snaps = SnapshotSet::new(n, 0.1, data, vec![0.0; 6], 1.0, vec![0.0; 2 * n], None).unwrap();
        let basis = pod_modes(&snaps, &g.mass(), Truncation::Count(3)).unwrap();
        let um: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let uc: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let re = 50.0;
        let c = assemble(&basis, &um, &uc, &g, re).unwrap();
        let p = |i: usize| basis.mode(i);
        let w = g.weight();
        let tol = 1e-10;
        for i in 0..3 {
            let a = -naive_conv(&g, &um, &um, p(i)) - naive_grad(&g, &um, p(i)) / re;
            assert!((c.a[i] - a).abs() < tol);
            let d = -w * uc.iter().zip(p(i)).map(|(x, y)| x * y).sum::<f64>();
            assert!((c.d[i] - d).abs() < tol);
            let e = -naive_conv(&g, &um, &uc, p(i)) - naive_conv(&g, &uc, &um, p(i)) - naive_grad(&g, &uc, p(i)) / re;
            assert!((c.e[i] - e).abs() < tol);
            assert!((c.g[i] + naive_conv(&g, &uc, &uc, p(i))).abs() < tol);
            for j in 0..3 {
                let b = -naive_conv(&g, &um, p(j), p(i)) - naive_conv(&g, p(j), &um, p(i)) - naive_grad(&g, p(i), p(j)) / re;
                assert!((c.b[(i, j)] - b).abs() < tol);
                let f = -naive_conv(&g, &uc, p(j), p(i)) - naive_conv(&g, p(j), &uc, p(i));
                assert!((c.f[(i, j)] - f).abs() < tol);
                for k in 0..3 {
                    assert!((c.q[j][(i, k)] + naive_conv(&g, p(i), p(k), p(j))).abs() < tol);
                }
            }
        }
    }

    #[test]
    fn assembly_with_zero_fields() {
        use crate::pod::{pod_modes, SnapshotSet, Truncation};
        let g = PeriodicGrid::new(8, 8, 2.0 * PI, 2.0 * PI).unwrap();
        let n = g.nodes();
        let f1 = g.field(|_, y| (y.sin(), 0.0));
        let f2 = g.field(|x, _| (0.0, x.cos()));
        let data = DMatrix::from_fn(2 * n, 4, |i, j| [1.0, 0.0, -1.0, 0.5][j] * f1[i] + [0.0, 1.0, 0.3, -1.0][j] * f2[i]);
        let snaps = SnapshotSet::new(n, 0.1, data, vec![0.0; 4], 1.0, vec![0.0; 2 * n], None).unwrap();
        let basis = pod_modes(&snaps, &g.mass(), Truncation::Count(2)).unwrap();
        let zero = vec![0.0; 2 * n];
        let c = assemble(&basis, &zero, &zero, &g, 10.0).unwrap();
        for i in 0..2 {
            assert_eq!((c.a[i], c.d[i], c.e[i], c.g[i]), (0.0, 0.0, 0.0, 0.0));
            for j in 0..2 {
                assert_eq!(c.f[(i, j)], 0.0);
                let visc = -g.grad_inner(basis.mode(i), basis.mode(j)).unwrap() / 10.0;
                assert_relative_eq!(c.b[(i, j)], visc, epsilon = 1e-12);
            }
        }
        // Constant modes have no gradient.
        let ones = vec![1.0; 2 * n];
        assert_eq!(g.grad_inner(&ones, &ones).unwrap(), 0.0);
        assert!(assemble(&basis, &zero, &zero, &g, 0.0).is_err());
    }
}
