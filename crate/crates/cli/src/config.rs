//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mocp_core::pod::Truncation;
use mocp_core::problems::{SurrogateParams, SurrogateRomConfig};
use mocp_core::subdivision::Sampling;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    RefPoint,
    Subdivision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlParam {
    Sinusoid,
    /// Natural spline with this many break points.
    Spline(usize),
    /// One value per grid node (reference point method with adjoints).
    Nodal,
}

/// Every accepted key. Anything else is rejected.
pub const KEYS: &[&str] = &[
    "problem",
    "control",
    "spline_points",
    "solver",
    "t0",
    "te",
    "dt",
    "beta",
    "seed",
    "threads",
    "scale_j1",
    "scale_j2",
    "h_par",
    "h_perp",
    "h_p",
    "max_points",
    "two_sweeps",
    "extremal_tol",
    "seed_weight",
    "grad_tol",
    "max_iter",
    "q",
    "samples_per_box",
    "sampling",
    "amplitude_max",
    "omega_max",
    "spline_bound",
    "grid_n",
    "noise",
    "re",
    "ref_t0",
    "ref_te",
    "ref_dt",
    "eps_target",
    "modes_l",
    "out",
    "snapshots",
    "mass",
    "modes",
    "coefficients",
    "front",
    "set",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `surrogate` or the name of an analytic problem.
    pub problem: String,
    pub control: ControlParam,
    pub solver: SolverKind,
    pub t0: f64,
    pub te: f64,
    pub dt: f64,
    pub beta: f64,
    pub seed: u64,
    pub threads: usize,
    pub scale: [f64; 2],

    pub h_par: Option<f64>,
    pub h_perp: Option<f64>,
    pub h_p: f64,
    pub max_points: usize,
    pub two_sweeps: Option<bool>,
    /// Slack of the extremal-point tests; defaults to `1e-9` on analytic
    /// problems and to 5% of the smaller step on the surrogate, where the
    /// scalar solves are inexact.
    pub extremal_tol: Option<f64>,
    /// Weight `s` of the weighted-sum seed for analytic problems.
    pub seed_weight: f64,
    pub grad_tol: Option<f64>,
    pub max_iter: Option<usize>,

    /// Halvings per decision dimension.
    pub q: usize,
    pub samples_per_box: Option<usize>,
    pub sampling: Sampling,
    pub amplitude_max: f64,
    pub omega_max: f64,
    pub spline_bound: f64,

    pub grid_n: usize,
    pub noise: f64,
    pub re: f64,
    pub ref_t0: f64,
    pub ref_te: f64,
    pub ref_dt: f64,
    pub truncation: Truncation,

    pub out: PathBuf,
    pub snapshots: Option<PathBuf>,
    pub mass: Option<PathBuf>,
    pub modes: Option<PathBuf>,
    pub coefficients: Option<PathBuf>,
    pub front: Option<PathBuf>,
    pub set: Option<PathBuf>,

    /// Hex SHA-256 of the effective configuration.
    pub hash: String,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::config(msg)
}

/// Splits the text into key-value pairs; rejects unknown and repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value, found '{line}'", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(bad(format!("line {}: unknown key '{k}'", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("line {}: key '{k}' given twice", no + 1)));
        }
    }
    Ok(map)
}

struct Values {
    map: BTreeMap<String, String>,
}

impl Values {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| bad(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths are resolved against its
    /// directory, except `--out`, which is taken as given.
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base, ov)
    }

    pub fn from_text(text: &str, base: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let mut map = parse_pairs(text)?;
        if let Some(s) = ov.seed {
            map.insert("seed".into(), s.to_string());
        }
        if let Some(t) = ov.threads {
            map.insert("threads".into(), t.to_string());
        }
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let out = match &ov.out {
            Some(o) => o.clone(),
            None => map.get("out").map(|p| resolve(p)).unwrap_or_else(|| base.to_path_buf()),
        };
        let path_of = |k: &str| map.get(k).map(|p| resolve(p));
        let (snapshots, mass, modes, coefficients, front, set) =
            (path_of("snapshots"), path_of("mass"), path_of("modes"), path_of("coefficients"), path_of("front"), path_of("set"));

        let hash = {
            let mut h = Sha256::new();
            for (k, v) in &map {
                if k != "out" {
                    h.update(format!("{k}={v}\n"));
                }
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>()
        };

        let v = Values { map };
        let problem = v.str("problem").unwrap_or("surrogate").to_string();
        if problem != "surrogate" && mocp_core::problems::analytic_mop(&problem).is_none() {
            return Err(bad(format!("unknown problem '{problem}'")));
        }
        let spline_points: usize = v.or("spline_points", 10)?;
        let control = match v.str("control").unwrap_or("sinusoid") {
            "sinusoid" => ControlParam::Sinusoid,
            "spline" => {
                if spline_points < 2 {
                    return Err(bad("spline_points must be at least 2"));
                }
                ControlParam::Spline(spline_points)
            }
            "nodal" => ControlParam::Nodal,
            other => return Err(bad(format!("unknown control '{other}'"))),
        };
        let solver = match v.str("solver").unwrap_or("refpoint") {
            "refpoint" => SolverKind::RefPoint,
            "subdivision" => SolverKind::Subdivision,
            other => return Err(bad(format!("unknown solver '{other}'"))),
        };
        if problem == "surrogate" && control == ControlParam::Nodal && solver == SolverKind::Subdivision {
            return Err(bad("subdivision needs a finite parameterization (sinusoid or spline)"));
        }
        let sampling = match v.str("sampling").unwrap_or("grid") {
            "grid" => Sampling::Grid,
            "random" => Sampling::UniformRandom { seed: v.or("seed", 0)? },
            other => return Err(bad(format!("unknown sampling '{other}'"))),
        };
        let truncation = match (v.get::<f64>("eps_target")?, v.get::<usize>("modes_l")?) {
            (Some(_), Some(_)) => return Err(bad("give either eps_target or modes_l, not both")),
            (_, Some(l)) => Truncation::Count(l),
            (e, None) => Truncation::Energy(e.unwrap_or(0.99)),
        };
        let threads: usize = v.or("threads", 1)?;
        if threads == 0 {
            return Err(bad("threads must be at least 1"));
        }
        let cfg = RunConfig {
            problem,
            control,
            solver,
            t0: v.or("t0", 0.0)?,
            te: v.or("te", 10.0)?,
            dt: v.or("dt", 0.05)?,
            beta: v.or("beta", 1e-5)?,
            seed: v.or("seed", 0)?,
            threads,
            scale: [v.or("scale_j1", 1.0)?, v.or("scale_j2", 1.0)?],
            h_par: v.get("h_par")?,
            h_perp: v.get("h_perp")?,
            h_p: v.or("h_p", 1.0)?,
            max_points: v.or("max_points", 200)?,
            two_sweeps: v.get("two_sweeps")?,
            extremal_tol: v.get("extremal_tol")?,
            seed_weight: v.or("seed_weight", 0.5)?,
            grad_tol: v.get("grad_tol")?,
            max_iter: v.get("max_iter")?,
            q: v.or("q", 5)?,
            samples_per_box: v.get("samples_per_box")?,
            sampling,
            amplitude_max: v.or("amplitude_max", 4.0)?,
            omega_max: v.or("omega_max", 0.5)?,
            spline_bound: v.or("spline_bound", 4.0)?,
            grid_n: v.or("grid_n", SurrogateParams::default().n)?,
            noise: v.or("noise", SurrogateParams::default().noise)?,
            re: v.or("re", SurrogateParams::default().re)?,
            ref_t0: v.or("ref_t0", 0.0)?,
            ref_te: v.or("ref_te", 60.0)?,
            ref_dt: v.or("ref_dt", 0.05)?,
            truncation,
            out,
            snapshots,
            mass,
            modes,
            coefficients,
            front,
            set,
            hash,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let finite = [self.t0, self.te, self.dt, self.beta, self.scale[0], self.scale[1], self.h_p, self.noise, self.re];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite numeric value"));
        }
        if !(self.te > self.t0 && self.dt > 0.0) {
            return Err(bad(format!("time window [{}, {}] with dt = {} is empty", self.t0, self.te, self.dt)));
        }
        if !(self.scale[0] > 0.0 && self.scale[1] > 0.0) {
            return Err(bad("objective scales must be positive"));
        }
        if self.beta < 0.0 {
            return Err(bad("beta must be nonnegative"));
        }
        if self.q == 0 {
            return Err(bad("q must be at least 1"));
        }
        Ok(())
    }

    pub fn surrogate_params(&self) -> SurrogateParams {
        SurrogateParams { n: self.grid_n, noise: self.noise, re: self.re, ..SurrogateParams::default() }
    }

    pub fn rom_config(&self) -> SurrogateRomConfig {
        SurrogateRomConfig {
            params: self.surrogate_params(),
            ref_t0: self.ref_t0,
            ref_te: self.ref_te,
            ref_dt: self.ref_dt,
            truncation: self.truncation,
            seed: self.seed,
        }
    }

    /// `# mocp <version> config=<hash>`
    pub fn provenance(&self) -> String {
        format!("# mocp {} config={}", env!("CARGO_PKG_VERSION"), &self.hash[..16])
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn snapshots_path(&self) -> PathBuf {
        self.snapshots.clone().unwrap_or_else(|| self.out_path("snapshots.txt"))
    }

    pub fn modes_path(&self) -> PathBuf {
        self.modes.clone().unwrap_or_else(|| self.out_path("modes.txt"))
    }

    pub fn coefficients_path(&self) -> PathBuf {
        self.coefficients.clone().unwrap_or_else(|| self.out_path("coefficients.txt"))
    }

    pub fn front_path(&self) -> PathBuf {
        self.front.clone().unwrap_or_else(|| self.out_path("pareto_front.csv"))
    }

    pub fn set_path(&self) -> PathBuf {
        self.set.clone().unwrap_or_else(|| self.out_path("pareto_set.csv"))
    }
}
