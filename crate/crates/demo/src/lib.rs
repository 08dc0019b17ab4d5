//! WebAssembly entry points for the static demo page. Every function
//! returns a JSON string; errors come back as `{"error": "..."}`.

use mocp_core::mop::{Bounds, MopProblem};
use mocp_core::pod::{decompose, pod_modes, Truncation};
use mocp_core::problems::{chirp_signal, BiQuadratic, ConvexPair, Disconnected, Surrogate, SurrogateParams};
use mocp_core::refpoint::{run_reference_point_on, weighted_sum_seed, FdScalarSolver, RefPointParams};
use mocp_core::rom::DiscreteGeometry;
use mocp_core::subdivision::{run_subdivision, SubdivisionParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct BoxesView {
    /// `[x_lo, y_lo, x_hi, y_hi]` per box.
    pub boxes: Vec<[f64; 4]>,
    pub front: Vec<[f64; 2]>,
    pub evaluations: usize,
}

#[derive(Serialize)]
pub struct TraceView {
    pub points: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 2]>,
    pub rejected: usize,
    pub function_evaluations: usize,
}

#[derive(Serialize)]
pub struct SpectrumView {
    pub sigma: Vec<f64>,
    pub eps: Vec<f64>,
    pub l: usize,
}

fn json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

/// Subdivision covering of the Pareto set of the bi-quadratic problem with
/// minima `a`, `b` on `[-2, 2]^2`.
pub fn boxes(q: usize, a: [f64; 2], b: [f64; 2], samples: usize) -> Result<BoxesView, String> {
    if !(1..=9).contains(&q) {
        return Err("depth must be between 1 and 9".into());
    }
    let bounds = Bounds::uniform(2, -2.0, 2.0).map_err(|e| e.to_string())?;
    let p = BiQuadratic::new(a.to_vec(), b.to_vec(), bounds).map_err(|e| e.to_string())?;
    let mut params = SubdivisionParams::for_dimension(2, q);
    params.samples_per_box = samples.clamp(1, 100);
    let r = run_subdivision(&p, &params).map_err(|e| e.to_string())?;
    let boxes = r
        .collection
        .boxes
        .iter()
        .map(|bx| {
            let (lo, hi) = (bx.lower(), bx.upper());
            [lo[0], lo[1], hi[0], hi[1]]
        })
        .collect();
    let front = r.collection.front().iter().map(|s| [s.f.values()[0], s.f.values()[1]]).collect();
    Ok(BoxesView { boxes, front, evaluations: r.evaluations })
}

/// Reference point continuation on `convex-pair` or `disconnected`.
pub fn trace(problem: &str, h: f64) -> Result<TraceView, String> {
    if !(h > 0.0 && h <= 1.0) {
        return Err("step must lie in (0, 1]".into());
    }
    let run = |p: &dyn MopProblem| -> Result<TraceView, String> {
        let mut solver = FdScalarSolver::new(p);
        let b = p.bounds().ok_or("problem has no box bounds")?;
        let center: Vec<f64> = b.lower().iter().zip(b.upper()).map(|(l, u)| 0.5 * (l + u)).collect();
        let x0 = weighted_sum_seed(p, 0.5, &center, &solver.params).map_err(|e| e.to_string())?;
        let j0 = p.evaluate(&x0).map_err(|e| e.to_string())?;
        let mut params = RefPointParams::from_seed(&j0);
        params.h_par = h;
        params.h_perp = h;
        params.max_points = 400;
        let t = run_reference_point_on(p, &mut solver, &x0, &params).map_err(|e| e.to_string())?;
        Ok(TraceView {
            points: t.points.iter().map(|q| [q.j[0], q.j[1]]).collect(),
            targets: t.points.iter().map(|q| q.target.0).collect(),
            rejected: t.rejected.len(),
            function_evaluations: t.function_evaluations,
        })
    };
    match problem {
        "convex-pair" => run(&ConvexPair::default()),
        "disconnected" => run(&Disconnected::default()),
        other => Err(format!("unknown problem {other}")),
    }
}

/// POD spectrum of synthetic wake snapshots on an `n x n` grid.
pub fn spectrum(n: usize, noise: f64, seed: u64) -> Result<SpectrumView, String> {
    if !(4..=24).contains(&n) {
        return Err("grid size must be between 4 and 24".into());
    }
    let params = SurrogateParams { n, noise, ..Default::default() };
    let s = Surrogate::new(params).map_err(|e| e.to_string())?;
    let reference = chirp_signal(0.0, 30.0, 0.05).map_err(|e| e.to_string())?;
    let snaps = s.snapshots(&reference, seed).map_err(|e| e.to_string())?;
    let fluct = decompose(&snaps).map_err(|e| e.to_string())?;
    let basis = pod_modes(&fluct, &s.grid.mass(), Truncation::Energy(0.99)).map_err(|e| e.to_string())?;
    let total: f64 = basis.eigenvalues.iter().sum();
    let mut acc = 0.0;
    let eps = basis
        .eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    let keep = basis.eigenvalues.len().min(12);
    let mut eps: Vec<f64> = eps;
    eps.truncate(keep);
    Ok(SpectrumView { sigma: basis.eigenvalues[..keep].to_vec(), eps, l: basis.l })
}

#[wasm_bindgen]
pub fn subdivision_boxes(q: usize, ax: f64, ay: f64, bx: f64, by: f64, samples: usize) -> String {
    json(boxes(q, [ax, ay], [bx, by], samples))
}

#[wasm_bindgen]
pub fn refpoint_trace(problem: &str, h: f64) -> String {
    json(trace(problem, h))
}

#[wasm_bindgen]
pub fn pod_spectrum(n: usize, noise: f64, seed: u32) -> String {
    json(spectrum(n, noise, seed as u64))
}
