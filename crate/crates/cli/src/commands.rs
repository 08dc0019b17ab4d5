//! The five pipeline commands.

use std::f64::consts::TAU;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use mocp_core::io::{read_coefficients, read_mass, read_modes, read_snapshots, write_coefficients, write_mass, write_modes, write_snapshots, ModesFile};
use mocp_core::linesearch::LineSearchParams;
use mocp_core::mop::{nondominated_filter, Bounds, MopProblem, ObjectiveVector, ScaledProblem};
use mocp_core::pod::{decompose, MassWeighting, PodBasis, SnapshotSet};
use mocp_core::problems::{
    analytic_mop, build_rom, build_surrogate_rom, chirp_signal, pod_of, RomObjective, RomScalarSolver, SinusoidMop, SplineMop,
    Surrogate,
};
use mocp_core::refpoint::{run_reference_point, weighted_sum_seed, write_trace_csv, FdScalarSolver, ParetoTrace, RefPointParams};
use mocp_core::rom::{grid_steps, integrate, ControlSignal, DiscreteGeometry, PeriodicGrid, RomCoefficients};
use mocp_core::subdivision::{run_subdivision, write_boxes_csv, SubdivisionParams};

use crate::config::{ControlParam, RunConfig, SolverKind};
use crate::output::{create, num, read_csv, write_csv, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Pod,
    Rom,
    Solve,
    Validate,
}

fn open(path: &PathBuf) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

/// The surrogate data lives on a square periodic grid of side `2 pi`.
fn grid_for(nodes: usize) -> Result<PeriodicGrid, CliError> {
    let n = (nodes as f64).sqrt().round() as usize;
    if n * n != nodes {
        return Err(CliError::io(format!("{nodes} nodes do not form a square grid")));
    }
    Ok(PeriodicGrid::new(n, n, TAU, TAU)?)
}

fn mass_for(cfg: &RunConfig, nodes: usize) -> Result<MassWeighting, CliError> {
    match &cfg.mass {
        Some(p) => Ok(read_mass(open(p)?, 2 * nodes)?),
        None => Ok(grid_for(nodes)?.mass()),
    }
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub snapshots: PathBuf,
    pub mass: PathBuf,
    pub columns: usize,
    pub dof: usize,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "wrote {} snapshots of {} values to {}", self.columns, self.dof, self.snapshots.display())
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary, CliError> {
    let surrogate = Surrogate::new(cfg.surrogate_params())?;
    let reference = chirp_signal(cfg.ref_t0, cfg.ref_te, cfg.ref_dt)?;
    let snaps = surrogate.snapshots(&reference, cfg.seed)?;
    let path = cfg.snapshots_path();
    let mut w = create(&path, cfg, &[format!("chirp reference on [{}, {}], seed {}", cfg.ref_t0, cfg.ref_te, cfg.seed)])?;
    write_snapshots(&snaps, &mut w)?;
    w.flush()?;
    let mass_path = cfg.mass.clone().unwrap_or_else(|| cfg.out_path("mass.txt"));
    let mut w = create(&mass_path, cfg, &[])?;
    write_mass(&surrogate.grid.mass(), &mut w)?;
    w.flush()?;
    info!("generate: {} columns", snaps.m());
    Ok(GenerateSummary { snapshots: path, mass: mass_path, columns: snaps.m(), dof: snaps.n_dof() })
}

// --------------------------------------------------------------------- pod

#[derive(Debug, Clone)]
pub struct PodSummary {
    pub l: usize,
    pub eps: f64,
    pub eigenvalues: Vec<f64>,
    pub modes: PathBuf,
    pub spectrum: PathBuf,
}

impl fmt::Display for PodSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kept l = {} modes capturing {:.6} of the energy; modes in {}", self.l, self.eps, self.modes.display())
    }
}

fn read_snapshot_file(cfg: &RunConfig) -> Result<SnapshotSet, CliError> {
    Ok(read_snapshots(open(&cfg.snapshots_path())?)?)
}

pub fn cmd_pod(cfg: &RunConfig) -> Result<PodSummary, CliError> {
    let snaps = read_snapshot_file(cfg)?;
    let mass = mass_for(cfg, snaps.nodes)?;
    let (fluct, basis) = pod_of(&snaps, &mass, cfg.truncation)?;
    let modes = cfg.modes_path();
    let mut w = create(&modes, cfg, &[format!("l = {}, captured energy {}", basis.l, num(basis.eps))])?;
    write_modes(&ModesFile::new(&fluct, &basis)?, &mut w)?;
    w.flush()?;

    let total: f64 = basis.eigenvalues.iter().sum();
    let mut acc = 0.0;
    let rows: Vec<Vec<String>> = basis
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, s)| {
            acc += s;
            let eps = if i + 1 == basis.eigenvalues.len() { 1.0 } else { (acc / total).min(1.0) };
            vec![(i + 1).to_string(), num(*s), num(eps)]
        })
        .collect();
    let spectrum = cfg.out_path("spectrum.csv");
    write_csv(&spectrum, cfg, &[], &["index", "sigma", "eps"].map(String::from), &rows)?;
    Ok(PodSummary { l: basis.l, eps: basis.eps, eigenvalues: basis.eigenvalues.clone(), modes, spectrum })
}

// --------------------------------------------------------------------- rom

#[derive(Debug, Clone)]
pub struct RomSummary {
    pub l: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub regularized: bool,
    /// Relative L2 distance of the integrated reference run to the
    /// projected coefficients.
    pub error_uncalibrated: f64,
    pub error_calibrated: f64,
    pub coefficients: PathBuf,
}

impl fmt::Display for RomSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l = {} model in {}; reference-run error {:.4} uncalibrated, {:.4} calibrated",
            self.l,
            self.coefficients.display(),
            self.error_uncalibrated,
            self.error_calibrated
        )
    }
}

pub fn cmd_rom(cfg: &RunConfig) -> Result<RomSummary, CliError> {
    let snaps = read_snapshot_file(cfg)?;
    let modes = read_modes(open(&cfg.modes_path())?)?;
    if modes.nodes != snaps.nodes {
        return Err(CliError::io(format!("modes have {} nodes, snapshots {}", modes.nodes, snaps.nodes)));
    }
    let mass = mass_for(cfg, snaps.nodes)?;
    let grid = grid_for(snaps.nodes)?;
    let fluct = decompose(&snaps)?;
    let built = build_rom(fluct, modes.basis(), mass, &grid, cfg.re)?;
    let reference = built.reference()?;
    let p = &built.projected.alpha;
    let rel = |c: &RomCoefficients| -> Result<f64, CliError> {
        let tr = integrate(c, &built.alpha0, &reference)?;
        Ok((&tr.alpha - p).norm() / p.norm())
    };
    let summary = RomSummary {
        l: built.basis.l,
        residual_before: built.calibration.residual_before,
        residual_after: built.calibration.residual_after,
        regularized: built.calibration.regularized,
        error_uncalibrated: rel(&built.uncalibrated)?,
        error_calibrated: rel(&built.coefficients)?,
        coefficients: cfg.coefficients_path(),
    };
    let mut w = create(&summary.coefficients, cfg, &[])?;
    write_coefficients(&built.coefficients, cfg.beta, Some(&built.alpha0), &mut w)?;
    w.flush()?;
    write_csv(
        &cfg.out_path("calibration.csv"),
        cfg,
        &[],
        &["residual_before", "residual_after", "regularized", "error_uncalibrated", "error_calibrated"].map(String::from),
        &[vec![
            num(summary.residual_before),
            num(summary.residual_after),
            summary.regularized.to_string(),
            num(summary.error_uncalibrated),
            num(summary.error_calibrated),
        ]],
    )?;
    Ok(summary)
}

// ------------------------------------------------------------------- model

/// Everything the solve and validate commands need about the surrogate.
#[derive(Debug, Clone)]
pub struct Model {
    pub surrogate: Surrogate,
    pub rom: RomObjective,
    pub mean: Vec<f64>,
    pub basis: PodBasis,
    pub mass: MassWeighting,
}

/// Reads the `coefficients` and `modes` files when configured; builds the
/// missing pieces in memory from the surrogate otherwise.
pub fn load_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let surrogate = Surrogate::new(cfg.surrogate_params())?;
    let nodes = surrogate.grid.nodes();
    let from_file = match &cfg.coefficients {
        Some(p) => {
            let f = read_coefficients(open(p)?)?;
            if f.beta != cfg.beta {
                warn!("coefficient file has beta = {}, using the configured {}", f.beta, cfg.beta);
            }
            let a0 = f.alpha0.ok_or_else(|| CliError::io(format!("{} has no [alpha0] section", p.display())))?;
            Some((f.coefficients, a0))
        }
        None => None,
    };
    let modes = match &cfg.modes {
        Some(p) => {
            let m = read_modes(open(p)?)?;
            if m.nodes != nodes {
                return Err(CliError::config(format!("modes have {} nodes but grid_n gives {nodes}", m.nodes)));
            }
            Some((m.basis(), m.u_m))
        }
        None => None,
    };
    let (coeffs, alpha0, basis, mean, mass) = match (from_file, modes) {
        (Some((c, a0)), Some((b, um))) => (c, a0, b, um, mass_for(cfg, nodes)?),
        (c, m) => {
            info!("building the reduced model in memory");
            let built = build_surrogate_rom(&cfg.rom_config())?.rom;
            let mean = built.mean_field().to_vec();
            let (c, a0) = c.unwrap_or((built.coefficients, built.alpha0));
            let (b, um) = m.unwrap_or((built.basis, mean));
            (c, a0, b, um, built.mass)
        }
    };
    if coeffs.l != basis.l {
        return Err(CliError::config(format!("coefficients have l = {}, modes l = {}", coeffs.l, basis.l)));
    }
    let rom = RomObjective::new(coeffs, alpha0, cfg.t0, cfg.te, cfg.dt, cfg.beta)?;
    Ok(Model { surrogate, rom, mean, basis, mass })
}

/// The decision space of a solve.
enum Decision {
    Analytic(Box<dyn MopProblem>),
    Sinusoid(SinusoidMop),
    Spline(SplineMop),
    Nodal(RomScalarSolver),
}

impl Decision {
    fn new(cfg: &RunConfig, model: Option<&Model>) -> Result<Self, CliError> {
        if cfg.problem != "surrogate" {
            let p = analytic_mop(&cfg.problem).ok_or_else(|| CliError::config(format!("unknown problem {}", cfg.problem)))?;
            return Ok(Decision::Analytic(p));
        }
        let rom = model.expect("surrogate model").rom.clone();
        Ok(match cfg.control {
            ControlParam::Sinusoid => {
                let b = Bounds::new(vec![0.0; 3], vec![cfg.amplitude_max, cfg.omega_max, TAU])?;
                Decision::Sinusoid(SinusoidMop::new(rom, b)?)
            }
            ControlParam::Spline(m) => Decision::Spline(SplineMop::new(rom, Bounds::uniform(m, -cfg.spline_bound, cfg.spline_bound)?)?),
            ControlParam::Nodal => {
                let mut s = RomScalarSolver::new(rom);
                s.scale = cfg.scale;
                if let Some(t) = cfg.grad_tol {
                    s.params.grad_tol = t;
                }
                if let Some(m) = cfg.max_iter {
                    s.params.max_iter = m;
                }
                Decision::Nodal(s)
            }
        })
    }

    fn problem(&self) -> Option<&dyn MopProblem> {
        match self {
            Decision::Analytic(p) => Some(p.as_ref()),
            Decision::Sinusoid(p) => Some(p),
            Decision::Spline(p) => Some(p),
            Decision::Nodal(_) => None,
        }
    }

    fn columns(&self) -> Result<Vec<String>, CliError> {
        Ok(match self {
            Decision::Analytic(p) => (0..p.decision_dim()).map(|i| format!("x{i}")).collect(),
            Decision::Sinusoid(_) => ["A", "omega", "tau"].map(String::from).to_vec(),
            Decision::Spline(p) => (0..p.decision_dim()).map(|i| format!("s{i}")).collect(),
            Decision::Nodal(s) => {
                let n = grid_steps(s.rom.t0, s.rom.te, s.rom.dt)? + 1;
                std::iter::once("gamma0".to_string()).chain((0..n).map(|k| format!("v{k}"))).collect()
            }
        })
    }

    fn control(&self, x: &[f64]) -> Result<ControlSignal, CliError> {
        Ok(match self {
            Decision::Analytic(_) => return Err(CliError::config("analytic problems have no control signal")),
            Decision::Sinusoid(p) => p.control(x)?,
            Decision::Spline(p) => p.control(x)?,
            Decision::Nodal(s) => s.control(x)?,
        })
    }

    /// Unscaled objectives of a decision vector.
    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector, CliError> {
        Ok(match self {
            Decision::Nodal(s) => s.rom.evaluate_control(&s.control(x)?)?,
            other => other.problem().expect("finite problem").evaluate(x)?,
        })
    }

    /// Start of the reference point continuation: the zero control for the
    /// surrogate (the `J2` minimum), a weighted-sum minimizer otherwise.
    fn seed(&self, cfg: &RunConfig, params: &LineSearchParams) -> Result<Vec<f64>, CliError> {
        Ok(match self {
            Decision::Analytic(p) => {
                let center = match p.bounds() {
                    Some(b) => b.lower().iter().zip(b.upper()).map(|(l, u)| 0.5 * (l + u)).collect(),
                    None => vec![0.0; p.decision_dim()],
                };
                weighted_sum_seed(p.as_ref(), cfg.seed_weight, &center, params)?
            }
            Decision::Sinusoid(_) => vec![0.0; 3],
            Decision::Spline(p) => vec![0.0; p.decision_dim()],
            Decision::Nodal(s) => s.zero_decision()?,
        })
    }
}

// ------------------------------------------------------------------- solve

#[derive(Debug, Clone)]
pub struct FrontPoint {
    pub x: Vec<f64>,
    pub j: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub method: String,
    pub front: Vec<FrontPoint>,
    pub boxes: Option<usize>,
    pub function_evaluations: usize,
    pub adjoint_evaluations: usize,
    pub scalar_solves: usize,
    pub wall_time: f64,
    pub diagnostics: Vec<String>,
}

impl SolveSummary {
    /// Function plus adjoint evaluations.
    pub fn evaluations(&self) -> usize {
        self.function_evaluations + self.adjoint_evaluations
    }
}

impl fmt::Display for SolveSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} front points, {} function + {} adjoint evaluations in {:.2} s",
            self.method,
            self.front.len(),
            self.function_evaluations,
            self.adjoint_evaluations,
            self.wall_time
        )?;
        if let Some(b) = self.boxes {
            write!(f, ", {b} boxes")?;
        }
        Ok(())
    }
}

fn refpoint_params(cfg: &RunConfig, j0: &ObjectiveVector, default_two: bool) -> RefPointParams {
    let mut p = RefPointParams::from_seed(j0);
    if let Some(h) = cfg.h_par {
        p.h_par = h;
    }
    if let Some(h) = cfg.h_perp {
        p.h_perp = h;
    }
    p.h_p = cfg.h_p;
    p.max_points = cfg.max_points;
    p.two_sweeps = cfg.two_sweeps.unwrap_or(default_two);
    p.extremal_tol = match cfg.extremal_tol {
        Some(t) => t,
        None if cfg.problem == "surrogate" => 0.05 * p.h_par.min(p.h_perp),
        None => p.extremal_tol,
    };
    p
}

fn trace_rows(trace: &ParetoTrace) -> Vec<Vec<f64>> {
    trace.points.iter().map(|p| p.x.clone()).collect()
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveSummary, CliError> {
    let model = if cfg.problem == "surrogate" { Some(load_model(cfg)?) } else { None };
    let decision = Decision::new(cfg, model.as_ref())?;
    let start = Instant::now();
    let (method, xs, trace, boxes_out, fe, ae, solves) = match cfg.solver {
        SolverKind::Subdivision => {
            let problem = decision
                .problem()
                .ok_or_else(|| CliError::config("subdivision needs a finite parameterization (sinusoid or spline)"))?;
            let mut p = SubdivisionParams::for_dimension(problem.decision_dim(), cfg.q);
            if let Some(s) = cfg.samples_per_box {
                p.samples_per_box = s;
            }
            p.sampling = cfg.sampling;
            p.threads = cfg.threads;
            let r = run_subdivision(problem, &p).map_err(|e| CliError::solver(format!("subdivision failed: {e}")))?;
            if r.failed_boxes > 0 {
                warn!("{} boxes dropped after failed evaluations", r.failed_boxes);
            }
            let xs: Vec<Vec<f64>> = r.collection.front().into_iter().map(|s| s.x).collect();
            ("subdivision", xs, None, Some(r.collection), r.evaluations, 0, 0)
        }
        SolverKind::RefPoint => {
            let mut trace = match &decision {
                Decision::Nodal(s) => {
                    let mut s = s.clone();
                    let x0 = decision.seed(cfg, &s.params)?;
                    let j0 = s.scaled_objectives(&x0)?;
                    let p = refpoint_params(cfg, &j0, false);
                    let mut t = run_reference_point(&mut s, &x0, &j0, &p)?;
                    s.unscale(&mut t);
                    t
                }
                other => {
                    let problem = other.problem().expect("finite problem");
                    let scaled = ScaledProblem::new(problem, cfg.scale.to_vec())?;
                    let mut s = FdScalarSolver::new(&scaled);
                    if let Some(t) = cfg.grad_tol {
                        s.params.grad_tol = t;
                    }
                    if let Some(m) = cfg.max_iter {
                        s.params.max_iter = m;
                    }
                    let x0 = other.seed(cfg, &s.params)?;
                    let j0 = scaled.evaluate(&x0)?;
                    let p = refpoint_params(cfg, &j0, cfg.problem != "surrogate");
                    let mut t = run_reference_point(&mut s, &x0, &j0, &p)?;
                    t.function_evaluations += 1;
                    t
                }
            };
            if let Decision::Nodal(_) = decision {
                trace.function_evaluations += 1;
            }
            let xs = trace_rows(&trace);
            let (fe, ae, n) = (trace.function_evaluations, trace.adjoint_evaluations, trace.scalar_solves);
            ("refpoint", xs, Some(trace), None, fe, ae, n)
        }
    };
    let wall_time = start.elapsed().as_secs_f64();

    // Front objectives are re-evaluated from the stored decision vectors so
    // that downstream consumers recompute exactly the same numbers.
    let mut front = Vec::with_capacity(xs.len());
    for x in xs {
        let j = decision.evaluate(&x)?;
        front.push(FrontPoint { j: [j[0], j[1]], x });
    }
    let diagnostics = trace.as_ref().map(|t| t.diagnostics.clone()).unwrap_or_default();
    let summary = SolveSummary {
        method: method.into(),
        boxes: boxes_out.as_ref().map(|c| c.len()),
        front,
        function_evaluations: fe,
        adjoint_evaluations: ae,
        scalar_solves: solves,
        wall_time,
        diagnostics,
    };

    let partial = summary.front.is_empty().then(|| "partial: no front points".to_string());
    let notes: Vec<String> = partial.iter().cloned().collect();
    let front_rows: Vec<Vec<String>> =
        summary.front.iter().enumerate().map(|(i, p)| vec![i.to_string(), num(p.j[0]), num(p.j[1])]).collect();
    write_csv(&cfg.front_path(), cfg, &notes, &["index", "J1", "J2"].map(String::from), &front_rows)?;
    let mut header = vec!["index".to_string()];
    header.extend(decision.columns()?);
    let set_rows: Vec<Vec<String>> = summary
        .front
        .iter()
        .enumerate()
        .map(|(i, p)| std::iter::once(i.to_string()).chain(p.x.iter().map(|v| num(*v))).collect())
        .collect();
    write_csv(&cfg.set_path(), cfg, &notes, &header, &set_rows)?;
    if let Some(c) = &boxes_out {
        let mut w = create(&cfg.out_path("boxes.csv"), cfg, &notes)?;
        write_boxes_csv(c, &mut w)?;
        w.flush()?;
    }
    if let Some(t) = &trace {
        let mut w = create(&cfg.out_path("trace.csv"), cfg, &notes)?;
        write_trace_csv(t, &mut w)?;
        w.flush()?;
    }
    let mut counter_notes = notes.clone();
    counter_notes.extend(summary.diagnostics.iter().map(|d| format!("note: {d}")));
    write_csv(
        &cfg.out_path("counters.csv"),
        cfg,
        &counter_notes,
        &["method", "points", "boxes", "function_evaluations", "adjoint_evaluations", "scalar_solves", "wall_time_s"]
            .map(String::from),
        &[vec![
            summary.method.clone(),
            summary.front.len().to_string(),
            summary.boxes.map(|b| b.to_string()).unwrap_or_default(),
            summary.function_evaluations.to_string(),
            summary.adjoint_evaluations.to_string(),
            summary.scalar_solves.to_string(),
            format!("{:.3}", summary.wall_time),
        ]],
    )?;
    if let Some(p) = partial {
        return Err(CliError::solver(format!("{method} produced no front points ({p}); outputs written")));
    }
    Ok(summary)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub index: usize,
    pub j1_rom: f64,
    pub j1_highfi: f64,
    pub j2: f64,
    pub rel_error: f64,
    pub j1_projected: f64,
    pub truncation: f64,
}

#[derive(Debug, Clone)]
pub struct ValidateSummary {
    pub rows: Vec<ValidationRow>,
    /// Points dominated after revalidation, with the indices dominating them.
    pub demoted: Vec<(usize, Vec<usize>)>,
}

impl fmt::Display for ValidateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let worst = self.rows.iter().map(|r| r.rel_error.abs()).fold(0.0, f64::max);
        write!(
            f,
            "revalidated {} points, max relative J1 error {:.4}, {} demoted",
            self.rows.len(),
            worst,
            self.demoted.len()
        )
    }
}

fn decision_vectors(set: &Table, columns: &[String]) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let missing: Vec<&str> = columns.iter().filter(|c| set.column(c).is_none()).map(String::as_str).collect();
    if !missing.is_empty() || set.column("index").is_none() {
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(CliError::missing_controls(format!(
            "control set lacks {} column(s): {}{}",
            missing.len().max(1),
            if missing.is_empty() { "index".to_string() } else { shown.join(", ") },
            if missing.len() > 5 { ", ..." } else { "" }
        )));
    }
    let idx = set.floats("index")?.expect("checked");
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| set.floats(c).map(|v| v.expect("checked"))).collect::<Result<_, _>>()?;
    Ok((0..set.rows.len()).map(|r| (idx[r] as usize, cols.iter().map(|c| c[r]).collect())).collect())
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateSummary, CliError> {
    if cfg.problem != "surrogate" {
        return Err(CliError::config("validate needs problem = surrogate"));
    }
    let front = read_csv(&cfg.front_path())?;
    let set = read_csv(&cfg.set_path())?;
    let model = load_model(cfg)?;
    let decision = Decision::new(cfg, Some(&model))?;
    let xs = decision_vectors(&set, &decision.columns()?)?;
    let (Some(fi), Some(f1)) = (front.floats("index")?, front.floats("J1")?) else {
        return Err(CliError::io("front file needs index and J1 columns"));
    };

    let mut rows = Vec::with_capacity(fi.len());
    for (k, i) in fi.iter().enumerate() {
        let i = *i as usize;
        let x = &xs
            .iter()
            .find(|(j, _)| *j == i)
            .ok_or_else(|| CliError::missing_controls(format!("no control row for front point {i}")))?
            .1;
        let u = decision.control(x)?;
        let j = model.rom.evaluate_control(&u)?;
        let e = model.surrogate.validation_energies(&u, &model.mean, &model.basis, &model.mass)?;
        let j1_rom = f1[k];
        rows.push(ValidationRow {
            index: i,
            j1_rom,
            j1_highfi: e.full,
            j2: j[1],
            rel_error: (j1_rom - e.full) / e.full,
            j1_projected: e.projected,
            truncation: e.truncation,
        });
    }

    let revalidated: Vec<ObjectiveVector> =
        rows.iter().map(|r| ObjectiveVector::pair(r.j1_highfi, r.j2)).collect::<Result<_, _>>()?;
    let keep = nondominated_filter(&revalidated)?;
    let mut demoted = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if keep.contains(&k) {
            continue;
        }
        let by: Vec<usize> = (0..rows.len())
            .filter(|&o| revalidated[o].dominates(&revalidated[k]).unwrap_or(false))
            .map(|o| rows[o].index)
            .collect();
        demoted.push((r.index, by));
    }

    write_csv(
        &cfg.out_path("validation.csv"),
        cfg,
        &[],
        &["index", "J1_rom", "J1_highfi", "J2", "rel_error", "J1_projected", "truncation"].map(String::from),
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    num(r.j1_rom),
                    num(r.j1_highfi),
                    num(r.j2),
                    num(r.rel_error),
                    num(r.j1_projected),
                    num(r.truncation),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    write_csv(
        &cfg.out_path("demotions.csv"),
        cfg,
        &[format!("{} of {} points dominated after revalidation", demoted.len(), rows.len())],
        &["index", "dominated_by"].map(String::from),
        &demoted
            .iter()
            .map(|(i, by)| vec![i.to_string(), by.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")])
            .collect::<Vec<_>>(),
    )?;
    Ok(ValidateSummary { rows, demoted })
}
