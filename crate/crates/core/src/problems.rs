//! Benchmark problems, control parameterizations and the synthetic flow
//! surrogate used in place of CFD snapshot data.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{forward_sys2, j1_of, j2_of, solve_scalar_mocp, OptimalitySystem, ScalarizedCost};
use crate::linesearch::LineSearchParams;
use crate::refpoint::{ParetoTrace, ScalarSolution, ScalarSolver, Target};
use crate::error::{MocpError, Result};
use crate::mop::{Bounds, MopProblem, ObjectiveVector};
use crate::pod::{decompose, pod_modes, project, project_columns, reconstruct, MassWeighting, PodBasis, SnapshotSet, Truncation};
use crate::rom::{assemble, calibrate, grid_steps, trapezoid, CalibrationReport, ControlSignal, DiscreteGeometry, PeriodicGrid, RomCoefficients, Trajectory};

/// `-4 sin(2 pi t / 120) cos(2 pi t / 3 - 18 sin(2 pi t / 60))`.
pub fn chirp(t: f64) -> f64 {
    -4.0 * (TAU * t / 120.0).sin() * (TAU * t / 3.0 - 18.0 * (TAU * t / 60.0).sin()).cos()
}

/// Natural cubic spline through equally spaced break points.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    t0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the breaks.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(t0: f64, te: f64, values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(MocpError::InvalidParameter(format!("spline needs at least 2 break points, got {n}")));
        }
        if !(te > t0) {
            return Err(MocpError::InvalidParameter(format!("spline interval [{t0}, {te}]")));
        }
        let h = (te - t0) / (n - 1) as f64;
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior: m[i-1] + 4 m[i] + m[i+1] = r_i.
            let k = n - 2;
            let r: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h))
                .collect();
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            c[0] = 1.0 / 4.0;
            d[0] = r[0] / 4.0;
            for i in 1..k {
                let den = 4.0 - c[i - 1];
                c[i] = 1.0 / den;
                d[i] = (r[i] - d[i - 1]) / den;
            }
            m[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = d[i] - c[i] * m[i + 2];
            }
        }
        Ok(Self { t0, h, y: values.to_vec(), m })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = ((t - self.t0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, t - (self.t0 + i as f64 * self.h))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (i, x) = self.locate(t);
        let h = self.h;
        let (a, b) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        a * (h - x).powi(3) / (6.0 * h) + b * x.powi(3) / (6.0 * h)
            + (y0 / h - a * h / 6.0) * (h - x)
            + (y1 / h - b * h / 6.0) * x
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (i, x) = self.locate(t);
        let h = self.h;
        let (a, b) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        -a * (h - x).powi(2) / (2.0 * h) + b * x * x / (2.0 * h) - (y0 / h - a * h / 6.0) + (y1 / h - b * h / 6.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlKind {
    /// `A sin(2 pi omega t + tau)`.
    Sinusoidal { amplitude: f64, omega: f64, tau: f64 },
    /// Natural cubic spline through equally spaced break values.
    Spline(Vec<f64>),
    /// One value per grid node.
    Nodal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedControl {
    pub kind: ControlKind,
    pub t0: f64,
    pub te: f64,
    pub dt: f64,
}

/// Expands a parameterization onto its grid. Sinusoids and splines carry
/// their exact rate.
pub fn expand(p: &ParameterizedControl) -> Result<ControlSignal> {
    match &p.kind {
        ControlKind::Sinusoidal { amplitude, omega, tau } => {
            let (a, w, tau) = (*amplitude, *omega, *tau);
            ControlSignal::from_fn(
                p.t0,
                p.te,
                p.dt,
                |t| a * (TAU * w * t + tau).sin(),
                Some(&|t| a * TAU * w * (TAU * w * t + tau).cos()),
            )
        }
        ControlKind::Spline(values) => {
            let s = NaturalSpline::new(p.t0, p.te, values)?;
            ControlSignal::from_fn(p.t0, p.te, p.dt, |t| s.eval(t), Some(&|t| s.derivative(t)))
        }
        ControlKind::Nodal(values) => ControlSignal::new(p.t0, p.te, p.dt, values.clone(), None),
    }
}

/// `J = (|x - a|^2, |x - b|^2)`; the Pareto set is the segment `[a, b]`.
#[derive(Debug, Clone)]
pub struct BiQuadratic {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub bounds: Bounds,
}

impl BiQuadratic {
    pub fn new(a: Vec<f64>, b: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if a.len() != b.len() || a.len() != bounds.dim() {
            return Err(MocpError::DimensionMismatch { left: a.len(), right: b.len() });
        }
        Ok(Self { a, b, bounds })
    }
}

impl MopProblem for BiQuadratic {
    fn decision_dim(&self) -> usize {
        self.a.len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        if x.len() != self.a.len() {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: self.a.len() });
        }
        let d = |c: &[f64]| x.iter().zip(c).map(|(x, c)| (x - c).powi(2)).sum::<f64>();
        ObjectiveVector::pair(d(&self.a), d(&self.b))
    }

    fn bounds(&self) -> Option<&Bounds> {
        Some(&self.bounds)
    }

    fn name(&self) -> &str {
        "biquadratic"
    }
}

/// `J = (x^2, (x - 1)^2)` on `[-2, 2]`; front `sqrt(J1) + sqrt(J2) = 1`.
#[derive(Debug, Clone)]
pub struct ConvexPair {
    pub bounds: Bounds,
}

impl Default for ConvexPair {
    fn default() -> Self {
        Self { bounds: Bounds::uniform(1, -2.0, 2.0).expect("valid bounds") }
    }
}

impl MopProblem for ConvexPair {
    fn decision_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        if x.len() != 1 {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: 1 });
        }
        ObjectiveVector::pair(x[0] * x[0], (x[0] - 1.0).powi(2))
    }

    fn bounds(&self) -> Option<&Bounds> {
        Some(&self.bounds)
    }

    fn name(&self) -> &str {
        "convex-pair"
    }
}

/// `J = (x, 1 - sqrt(x) - x sin(10 pi x))` on `[0, 1]`, a front made of
/// five disjoint pieces.
#[derive(Debug, Clone)]
pub struct Disconnected {
    pub bounds: Bounds,
}

impl Default for Disconnected {
    fn default() -> Self {
        Self { bounds: Bounds::uniform(1, 0.0, 1.0).expect("valid bounds") }
    }
}

impl MopProblem for Disconnected {
    fn decision_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        if x.len() != 1 {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: 1 });
        }
        let t = x[0].clamp(0.0, 1.0);
        ObjectiveVector::pair(t, 1.0 - t.sqrt() - t * (10.0 * PI * t).sin())
    }

    fn bounds(&self) -> Option<&Bounds> {
        Some(&self.bounds)
    }

    fn name(&self) -> &str {
        "disconnected"
    }
}

/// The analytic test problems.
pub fn analytic_mops() -> Vec<Box<dyn MopProblem>> {
    vec![
        Box::new(
            BiQuadratic::new(vec![0.0, 0.0], vec![1.0, 0.0], Bounds::uniform(2, -2.0, 2.0).expect("valid bounds"))
                .expect("consistent dimensions"),
        ),
        Box::new(ConvexPair::default()),
        Box::new(Disconnected::default()),
    ]
}

/// Looks a catalog problem up by name.
pub fn analytic_mop(name: &str) -> Option<Box<dyn MopProblem>> {
    analytic_mops().into_iter().find(|p| p.name() == name)
}

/// Parameters of the synthetic flow surrogate.
///
/// The flow is `U = U_0 + g U_c + a_1 phi_1 + a_2 phi_2` on a periodic grid,
/// with shear patterns `phi_1 ~ (sin y, 0)`, `phi_2 ~ (cos y, 0)` and a
/// forced Stuart-Landau oscillator for `a`:
/// `a' = (sigma - kappa |a|^2) a + omega J a + d g' + e g`, where `d`, `e`
/// are the Galerkin projections of the control field.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    /// Nodes per side.
    pub n: usize,
    pub re: f64,
    pub sigma: f64,
    /// Angular frequency of the limit cycle.
    pub omega: f64,
    /// Limit-cycle radius.
    pub r_star: f64,
    /// Uniform noise amplitude added to every field entry.
    pub noise: f64,
    /// Rotation rate the stored control field corresponds to.
    pub gamma_c: f64,
    /// Control field components along `phi_1`, `phi_2` (per unit control).
    pub control_coupling: [f64; 2],
    pub substeps: usize,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            n: 16,
            re: 1.0,
            sigma: 0.005,
            omega: TAU / 5.0,
            r_star: 1.0,
            noise: 1e-3,
            gamma_c: 2.0,
            control_coupling: [0.04, 0.0],
            substeps: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    pub params: SurrogateParams,
    pub grid: PeriodicGrid,
    /// M-normalized patterns.
    pub phi: [Vec<f64>; 2],
    pub base: Vec<f64>,
    /// Control field per unit control.
    pub u_c: Vec<f64>,
    pub d: [f64; 2],
    pub e: [f64; 2],
}

impl Surrogate {
    pub fn new(params: SurrogateParams) -> Result<Self> {
        if params.n < 8 {
            return Err(MocpError::InvalidParameter(format!("surrogate grid needs n >= 8, got {}", params.n)));
        }
        if params.gamma_c == 0.0 || !(params.re > 0.0) || params.substeps == 0 || !(params.r_star > 0.0) {
            return Err(MocpError::InvalidParameter(format!("surrogate parameters {params:?}")));
        }
        let grid = PeriodicGrid::new(params.n, params.n, TAU, TAU)?;
        let norm = |f: Vec<f64>| -> Result<Vec<f64>> {
            let s = grid.inner(&f, &f)?.sqrt();
            Ok(f.into_iter().map(|v| v / s).collect())
        };
        let phi = [norm(grid.field(|_, y| (y.sin(), 0.0)))?, norm(grid.field(|_, y| (y.cos(), 0.0)))?];
        let base = grid.field(|_, y| (1.0 + 0.5 * (2.0 * y).cos(), 0.0));
        let extra = grid.field(|_, y| (0.3 * (2.0 * y).sin(), 0.0));
        let [c1, c2] = params.control_coupling;
        let u_c: Vec<f64> = (0..extra.len()).map(|i| extra[i] + c1 * phi[0][i] + c2 * phi[1][i]).collect();
        let mut d = [0.0; 2];
        let mut e = [0.0; 2];
        for i in 0..2 {
            d[i] = -grid.inner(&u_c, &phi[i])?;
            e[i] = -grid.grad_inner(&u_c, &phi[i])? / params.re;
        }
        Ok(Self { params, grid, phi, base, u_c, d, e })
    }

    pub fn kappa(&self) -> f64 {
        self.params.sigma / (self.params.r_star * self.params.r_star)
    }

    pub fn dynamics(&self, a: [f64; 2], gamma: f64, gdot: f64) -> [f64; 2] {
        let p = &self.params;
        let grow = p.sigma - self.kappa() * (a[0] * a[0] + a[1] * a[1]);
        [
            grow * a[0] - p.omega * a[1] + self.d[0] * gdot + self.e[0] * gamma,
            grow * a[1] + p.omega * a[0] + self.d[1] * gdot + self.e[1] * gamma,
        ]
    }

    /// Point on the uncontrolled limit cycle.
    pub fn initial_amplitudes(&self) -> [f64; 2] {
        [self.params.r_star, 0.0]
    }

    /// RK4 with `substeps` per control step; the control is interpolated by
    /// cubic Hermite when its rate is known, linearly otherwise.
    pub fn simulate(&self, u: &ControlSignal, a0: [f64; 2]) -> Result<Vec<[f64; 2]>> {
        let gd = u.gamma_dot();
        let s = self.params.substeps;
        let h = u.dt / s as f64;
        let hermite = u.v.is_some();
        let at = |k: usize, theta: f64| -> (f64, f64) {
            let (g0, g1, d0, d1) = (u.gamma[k], u.gamma[k + 1], gd[k], gd[k + 1]);
            if hermite {
                let t2 = theta * theta;
                let t3 = t2 * theta;
                let g = (2.0 * t3 - 3.0 * t2 + 1.0) * g0 + (t3 - 2.0 * t2 + theta) * u.dt * d0
                    + (-2.0 * t3 + 3.0 * t2) * g1 + (t3 - t2) * u.dt * d1;
                let dg = ((6.0 * t2 - 6.0 * theta) * (g0 - g1)) / u.dt + (3.0 * t2 - 4.0 * theta + 1.0) * d0 + (3.0 * t2 - 2.0 * theta) * d1;
                (g, dg)
            } else {
                (g0 + theta * (g1 - g0), d0 + theta * (d1 - d0))
            }
        };
        let mut out = Vec::with_capacity(u.gamma.len());
        let mut a = a0;
        out.push(a);
        for k in 0..u.steps() {
            for j in 0..s {
                let th = j as f64 / s as f64;
                let f = |x: [f64; 2], th: f64| {
                    let (g, dg) = at(k, th);
                    self.dynamics(x, g, dg)
                };
                let dth = 1.0 / s as f64;
                let k1 = f(a, th);
                let k2 = f([a[0] + 0.5 * h * k1[0], a[1] + 0.5 * h * k1[1]], th + 0.5 * dth);
                let k3 = f([a[0] + 0.5 * h * k2[0], a[1] + 0.5 * h * k2[1]], th + 0.5 * dth);
                let k4 = f([a[0] + h * k3[0], a[1] + h * k3[1]], th + dth);
                for i in 0..2 {
                    a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(MocpError::BlowUp { time: u.t0 + (k + 1) as f64 * u.dt });
            }
            out.push(a);
        }
        Ok(out)
    }

    /// Full field for amplitudes `a` and control `gamma`, without noise.
    pub fn field(&self, a: [f64; 2], gamma: f64) -> Vec<f64> {
        (0..self.base.len())
            .map(|i| self.base[i] + gamma * self.u_c[i] + a[0] * self.phi[0][i] + a[1] * self.phi[1][i])
            .collect()
    }

    /// Snapshot set for the reference control, starting on the limit cycle.
    pub fn snapshots(&self, gamma_ref: &ControlSignal, seed: u64) -> Result<SnapshotSet> {
        let amps = self.simulate(gamma_ref, self.initial_amplitudes())?;
        let n2 = self.base.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = self.params.noise;
        let data = DMatrix::from_fn(n2, amps.len(), |_, _| 0.0);
        let mut data = data;
        for (j, a) in amps.iter().enumerate() {
            let f = self.field(*a, gamma_ref.gamma[j]);
            for i in 0..n2 {
                let eta = if noise > 0.0 { noise * rng.gen_range(-1.0..1.0) } else { 0.0 };
                data[(i, j)] = f[i] + eta;
            }
        }
        // The stored control field corresponds to rotation rate gamma_c.
        let u_c_file: Vec<f64> = self.u_c.iter().map(|v| v * self.params.gamma_c).collect();
        SnapshotSet::new(self.grid.nodes(), gamma_ref.dt, data, gamma_ref.gamma.clone(), self.params.gamma_c, u_c_file, None)
    }

    /// `int |U - U_m - g U_c|_M^2 dt` of the noise-free high-fidelity run.
    pub fn fluctuation_energy(&self, u: &ControlSignal, u_m: &[f64]) -> Result<f64> {
        let amps = self.simulate(u, self.initial_amplitudes())?;
        let e: Vec<f64> = amps
            .iter()
            .zip(&u.gamma)
            .map(|(a, g)| {
                let f = self.field(*a, *g);
                let r: Vec<f64> = (0..f.len()).map(|i| f[i] - u_m[i] - g * self.u_c[i]).collect();
                self.grid.inner(&r, &r).unwrap_or(f64::NAN)
            })
            .collect();
        Ok(trapezoid(&e, u.dt))
    }
}

/// `surrogate_snapshots` with the default surrogate shape on an `n x n` grid.
pub fn surrogate_snapshots(n: usize, gamma_ref: &ControlSignal, seed: u64, noise: f64) -> Result<SnapshotSet> {
    Surrogate::new(SurrogateParams { n, noise, ..Default::default() })?.snapshots(gamma_ref, seed)
}

/// The chirp reference control over `[t0, te]`.
pub fn chirp_signal(t0: f64, te: f64, dt: f64) -> Result<ControlSignal> {
    ControlSignal::from_fn(t0, te, dt, chirp, None)
}

/// POD basis and calibrated reduced model of a snapshot set.
#[derive(Debug, Clone)]
pub struct RomBuild {
    /// Decomposed snapshots (fluctuations, with the mean field set).
    pub snapshots: SnapshotSet,
    pub basis: PodBasis,
    pub mass: MassWeighting,
    pub uncalibrated: RomCoefficients,
    pub coefficients: RomCoefficients,
    pub calibration: CalibrationReport,
    /// Projected coefficients of the reference run.
    pub projected: Trajectory,
    /// Projection of the first snapshot.
    pub alpha0: Vec<f64>,
}

impl RomBuild {
    pub fn mean_field(&self) -> &[f64] {
        self.snapshots.u_m.as_deref().expect("decomposed set")
    }

    /// Reference control of the snapshot run, starting at `t = 0`.
    pub fn reference(&self) -> Result<ControlSignal> {
        reference_control(&self.snapshots)
    }
}

pub fn reference_control(s: &SnapshotSet) -> Result<ControlSignal> {
    ControlSignal::new(0.0, (s.m() - 1) as f64 * s.dt, s.dt, s.gamma_ref.clone(), None)
}

/// Decomposition and POD of raw snapshots.
pub fn pod_of(snapshots: &SnapshotSet, mass: &MassWeighting, truncation: Truncation) -> Result<(SnapshotSet, PodBasis)> {
    let fluct = decompose(snapshots)?;
    let basis = pod_modes(&fluct, mass, truncation)?;
    Ok((fluct, basis))
}

/// Assembly and calibration on a decomposed snapshot set and its basis.
pub fn build_rom(
    fluct: SnapshotSet,
    basis: PodBasis,
    mass: MassWeighting,
    geometry: &dyn DiscreteGeometry,
    re: f64,
) -> Result<RomBuild> {
    let u_m = fluct.u_m.clone().ok_or_else(|| MocpError::InvalidParameter("snapshots are not decomposed".into()))?;
    let reference = reference_control(&fluct)?;
    let u_c_unit: Vec<f64> = fluct.u_c.iter().map(|v| v / fluct.gamma_c).collect();
    let uncalibrated = assemble(&basis, &u_m, &u_c_unit, geometry, re)?;
    let alpha = project_columns(&fluct.data, &basis, &mass)?;
    let projected = Trajectory { times: reference.times(), alpha };
    let (coefficients, calibration) = calibrate(&uncalibrated, &projected, &reference)?;
    let alpha0 = projected.state(0).to_vec();
    Ok(RomBuild { snapshots: fluct, basis, mass, uncalibrated, coefficients, calibration, projected, alpha0 })
}

/// Reduced model built from surrogate data.
#[derive(Debug, Clone)]
pub struct SurrogateRom {
    pub surrogate: Surrogate,
    pub rom: RomBuild,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRomConfig {
    pub params: SurrogateParams,
    /// Reference window.
    pub ref_t0: f64,
    pub ref_te: f64,
    pub ref_dt: f64,
    pub truncation: Truncation,
    pub seed: u64,
}

impl Default for SurrogateRomConfig {
    fn default() -> Self {
        Self {
            params: SurrogateParams::default(),
            ref_t0: 0.0,
            ref_te: 60.0,
            ref_dt: 0.05,
            truncation: Truncation::Energy(0.99),
            seed: 0,
        }
    }
}

/// Snapshots, POD, assembly and calibration in one go.
pub fn build_surrogate_rom(cfg: &SurrogateRomConfig) -> Result<SurrogateRom> {
    let surrogate = Surrogate::new(cfg.params.clone())?;
    let reference = chirp_signal(cfg.ref_t0, cfg.ref_te, cfg.ref_dt)?;
    let snapshots = surrogate.snapshots(&reference, cfg.seed)?;
    let mass = surrogate.grid.mass();
    let (fluct, basis) = pod_of(&snapshots, &mass, cfg.truncation)?;
    let rom = build_rom(fluct, basis, mass, &surrogate.grid, surrogate.params.re)?;
    Ok(SurrogateRom { surrogate, rom })
}

/// High-fidelity energies of a control, see [`Surrogate::validation_energies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationEnergies {
    /// `int |u|^2_M` with `u = U - U_m - g U_c`.
    pub full: f64,
    /// `int |P u|^2`, `P` the projection onto the basis.
    pub projected: f64,
    /// `int |u - P u|^2_M`.
    pub truncation: f64,
}

impl Surrogate {
    pub fn validation_energies(
        &self,
        u: &ControlSignal,
        u_m: &[f64],
        basis: &PodBasis,
        mass: &MassWeighting,
    ) -> Result<ValidationEnergies> {
        let amps = self.simulate(u, self.initial_amplitudes())?;
        let n = amps.len();
        let (mut full, mut proj, mut trunc) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (a, g) in amps.iter().zip(&u.gamma) {
            let f = self.field(*a, *g);
            let r: Vec<f64> = (0..f.len()).map(|i| f[i] - u_m[i] - g * self.u_c[i]).collect();
            let c = project(&r, basis, mass)?;
            let back = reconstruct(&c, basis)?;
            let rest: Vec<f64> = r.iter().zip(&back).map(|(x, y)| x - y).collect();
            full.push(mass.inner(&r, &r)?);
            proj.push(c.iter().map(|x| x * x).sum());
            trunc.push(mass.inner(&rest, &rest)?);
        }
        Ok(ValidationEnergies {
            full: trapezoid(&full, u.dt),
            projected: trapezoid(&proj, u.dt),
            truncation: trapezoid(&trunc, u.dt),
        })
    }
}

/// Objective map of a control through the augmented-state model:
/// `g(t0)` and the rate are taken from the control itself.
#[derive(Debug, Clone)]
pub struct RomObjective {
    pub coefficients: RomCoefficients,
    pub alpha0: Vec<f64>,
    pub t0: f64,
    pub te: f64,
    pub dt: f64,
    /// Factor on the control energy.
    pub l: usize,
    pub beta: f64,
}

impl RomObjective {
    pub fn new(coefficients: RomCoefficients, alpha0: Vec<f64>, t0: f64, te: f64, dt: f64, beta: f64) -> Result<Self> {
        grid_steps(t0, te, dt)?;
        let l = coefficients.l;
        Ok(Self { coefficients, alpha0, t0, te, dt, l, beta })
    }

    pub fn evaluate_control(&self, u: &ControlSignal) -> Result<ObjectiveVector> {
        Ok(self.evaluate_with_state(u)?.0)
    }

    pub fn evaluate_with_state(&self, u: &ControlSignal) -> Result<(ObjectiveVector, Trajectory)> {
        let v = u.gamma_dot();
        let (traj, gamma) = forward_sys2(&self.coefficients, &self.alpha0, u.gamma[0], &v, u.t0, u.dt)?;
        let j = ObjectiveVector::pair(j1_of(&traj, u.dt), j2_of(&gamma, Some(&v), self.l, self.beta, u.dt))?;
        Ok((j, traj))
    }

    fn expand(&self, kind: ControlKind) -> Result<ControlSignal> {
        expand(&ParameterizedControl { kind, t0: self.t0, te: self.te, dt: self.dt })
    }
}

/// Decision `(A, omega, tau)` of a sinusoidal control.
#[derive(Debug, Clone)]
pub struct SinusoidMop {
    pub rom: RomObjective,
    pub bounds: Bounds,
}

impl SinusoidMop {
    pub fn new(rom: RomObjective, bounds: Bounds) -> Result<Self> {
        if bounds.dim() != 3 {
            return Err(MocpError::DimensionMismatch { left: bounds.dim(), right: 3 });
        }
        Ok(Self { rom, bounds })
    }

    /// `A in [0, 4]`, `omega in [0, 0.5]`, `tau in [0, 2 pi]`.
    pub fn default_bounds() -> Bounds {
        Bounds::new(vec![0.0, 0.0, 0.0], vec![4.0, 0.5, TAU]).expect("valid bounds")
    }

    pub fn control(&self, x: &[f64]) -> Result<ControlSignal> {
        if x.len() != 3 {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: 3 });
        }
        self.rom.expand(ControlKind::Sinusoidal { amplitude: x[0], omega: x[1], tau: x[2] })
    }
}

impl MopProblem for SinusoidMop {
    fn decision_dim(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        self.rom.evaluate_control(&self.control(x)?)
    }

    fn bounds(&self) -> Option<&Bounds> {
        Some(&self.bounds)
    }

    fn name(&self) -> &str {
        "sinusoid"
    }
}

/// Decision: spline values at `m` equally spaced break points.
#[derive(Debug, Clone)]
pub struct SplineMop {
    pub rom: RomObjective,
    pub bounds: Bounds,
}

impl SplineMop {
    pub fn new(rom: RomObjective, bounds: Bounds) -> Result<Self> {
        if bounds.dim() < 2 {
            return Err(MocpError::InvalidParameter("spline needs at least 2 break points".into()));
        }
        Ok(Self { rom, bounds })
    }

    pub fn control(&self, x: &[f64]) -> Result<ControlSignal> {
        if x.len() != self.bounds.dim() {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: self.bounds.dim() });
        }
        self.rom.expand(ControlKind::Spline(x.to_vec()))
    }
}

impl MopProblem for SplineMop {
    fn decision_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        self.rom.evaluate_control(&self.control(x)?)
    }

    fn bounds(&self) -> Option<&Bounds> {
        Some(&self.bounds)
    }

    fn name(&self) -> &str {
        "spline"
    }
}

/// Reference-point subproblems solved with the augmented-state adjoint
/// method. The decision vector is `[g(t0), v_0, ..., v_n]`.
///
/// Targets and returned objectives live in the scaled space
/// `(s1 J1, s2 J2)`; see [`RomScalarSolver::unscale`].
#[derive(Debug, Clone)]
pub struct RomScalarSolver {
    pub rom: RomObjective,
    pub params: LineSearchParams,
    pub scale: [f64; 2],
}

impl RomScalarSolver {
    pub fn new(rom: RomObjective) -> Self {
        Self {
            rom,
            params: LineSearchParams { grad_tol: 1e-3, max_iter: 60, step_memory: Some(4.0), ..Default::default() },
            scale: [1.0, 1.0],
        }
    }

    /// Objectives of a decision vector in the scaled space.
    pub fn scaled_objectives(&self, x: &[f64]) -> Result<ObjectiveVector> {
        let j = self.rom.evaluate_control(&self.control(x)?)?;
        ObjectiveVector::pair(self.scale[0] * j[0], self.scale[1] * j[1])
    }

    /// Maps a trace computed with this solver back to unscaled objectives.
    pub fn unscale(&self, trace: &mut ParetoTrace) {
        let [s1, s2] = self.scale;
        for p in trace.points.iter_mut().chain(trace.rejected.iter_mut()) {
            p.j = ObjectiveVector::pair(p.j[0] / s1, p.j[1] / s2).expect("finite objectives");
            p.target = Target([p.target.0[0] / s1, p.target.0[1] / s2]);
        }
    }

    /// Decision vector of the zero control.
    pub fn zero_decision(&self) -> Result<Vec<f64>> {
        Ok(vec![0.0; grid_steps(self.rom.t0, self.rom.te, self.rom.dt)? + 2])
    }

    /// Control for a decision vector; `g` is the running trapezoid integral
    /// of the rate.
    pub fn control(&self, x: &[f64]) -> Result<ControlSignal> {
        let n = grid_steps(self.rom.t0, self.rom.te, self.rom.dt)? + 1;
        if x.len() != n + 1 {
            return Err(MocpError::DimensionMismatch { left: x.len(), right: n + 1 });
        }
        let v = x[1..].to_vec();
        let mut g = Vec::with_capacity(n);
        g.push(x[0]);
        for k in 1..n {
            g.push(g[k - 1] + 0.5 * self.rom.dt * (v[k - 1] + v[k]));
        }
        ControlSignal::new(self.rom.t0, self.rom.te, self.rom.dt, g, Some(v))
    }

    pub fn decision(u: &ControlSignal) -> Vec<f64> {
        let mut x = vec![u.gamma[0]];
        x.extend(u.gamma_dot());
        x
    }
}

impl ScalarSolver for RomScalarSolver {
    fn solve(&mut self, target: &Target, warm_start: &[f64]) -> Result<ScalarSolution> {
        let start = self.control(warm_start)?;
        let cost = ScalarizedCost::new(*target, self.rom.l, self.rom.beta)?.with_scale(self.scale)?;
        let r = solve_scalar_mocp(
            &self.rom.coefficients,
            &self.rom.alpha0,
            &cost,
            &start,
            OptimalitySystem::Augmented,
            &self.params,
        )?;
        Ok(ScalarSolution {
            x: Self::decision(&r.control),
            j: ObjectiveVector::pair(self.scale[0] * r.objectives[0], self.scale[1] * r.objectives[1])?,
            iterations: r.iterations,
            function_evaluations: r.forward_solves,
            adjoint_evaluations: r.backward_solves,
        })
    }
}
