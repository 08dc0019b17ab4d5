//! Derivative-free subdivision: a nested sequence of box coverings of the
//! Pareto set, refined by cyclic bisection and pruned by sample dominance.

use std::io::Write;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MocpError, Result};
use crate::mop::{nondominated_indices, MopProblem, ObjectiveVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub f: ObjectiveVector,
}

/// Axis-aligned box `center ± radius` with its evaluated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
    pub samples: Vec<Sample>,
    /// Samples of this box that are nondominated in the whole collection;
    /// filled in by [`select`].
    pub nondominated: usize,
}

impl SampleBox {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() || center.is_empty() {
            return Err(MocpError::InvalidParameter("box center/radius mismatch".into()));
        }
        if radius.iter().any(|r| !(*r > 0.0)) {
            return Err(MocpError::InvalidParameter("box radii must be positive".into()));
        }
        Ok(Self { center, radius, samples: Vec::new(), nondominated: 0 })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.center.iter().zip(&self.radius))
            .all(|(v, (c, r))| (v - c).abs() <= *r)
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.radius).map(|(c, r)| c - r).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.radius).map(|(c, r)| c + r).collect()
    }

    /// Euclidean diameter `2 |radius|`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxCollection {
    pub boxes: Vec<SampleBox>,
    pub generation: usize,
    /// Zero-based dimension bisected by the next [`subdivide`].
    pub split_dim: usize,
}

impl BoxCollection {
    pub fn initial(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let center = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let radius = lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect();
        Ok(Self { boxes: vec![SampleBox::new(center, radius)?], generation: 0, split_dim: 0 })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.boxes.iter().map(SampleBox::diameter).fold(0.0, f64::max)
    }

    /// Every sample in the collection, in box order.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.boxes.iter().flat_map(|b| b.samples.iter())
    }

    /// Nondominated samples of the whole collection.
    pub fn front(&self) -> Vec<Sample> {
        let all: Vec<&Sample> = self.samples().collect();
        if all.is_empty() {
            return Vec::new();
        }
        let slices: Vec<&[f64]> = all.iter().map(|s| s.f.values()).collect();
        nondominated_indices(&slices).into_iter().map(|i| all[i].clone()).collect()
    }

    pub fn covers(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Cell-centre lattice, topped up with a Halton sequence when `S` is not
    /// a perfect `m`-th power.
    Grid,
    UniformRandom { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdivisionParams {
    pub n_sub: usize,
    pub samples_per_box: usize,
    pub sampling: Sampling,
    /// Worker threads for box sampling; 1 runs inline.
    pub threads: usize,
}

impl SubdivisionParams {
    /// `q` halvings per dimension (`N_sub = m q`) with `S = min(4^m, 64)`
    /// grid samples per box.
    pub fn for_dimension(m: usize, q: usize) -> Self {
        Self {
            n_sub: m * q,
            samples_per_box: default_samples_per_box(m),
            sampling: Sampling::Grid,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sub == 0 || self.samples_per_box == 0 {
            return Err(MocpError::InvalidParameter(
                "subdivision needs n_sub >= 1 and samples_per_box >= 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn default_samples_per_box(m: usize) -> usize {
    4usize.checked_pow(m as u32).unwrap_or(usize::MAX).min(64)
}

/// Bisects every box along `split_dim`; parent samples move to the child
/// that contains them.
pub fn subdivide(coll: BoxCollection) -> BoxCollection {
    let dim = coll.split_dim;
    let mut boxes = Vec::with_capacity(2 * coll.boxes.len());
    for parent in coll.boxes {
        let m = parent.dim();
        let mut radius = parent.radius.clone();
        radius[dim] *= 0.5;
        let mut lower_c = parent.center.clone();
        let mut upper_c = parent.center.clone();
        lower_c[dim] -= radius[dim];
        upper_c[dim] += radius[dim];
        let mut lo = SampleBox { center: lower_c, radius: radius.clone(), samples: Vec::new(), nondominated: 0 };
        let mut hi = SampleBox { center: upper_c, radius, samples: Vec::new(), nondominated: 0 };
        for s in parent.samples {
            if s.x[dim] <= parent.center[dim] {
                lo.samples.push(s);
            } else {
                hi.samples.push(s);
            }
        }
        debug_assert!(m == lo.dim());
        boxes.push(lo);
        boxes.push(hi);
    }
    let m = boxes.first().map(SampleBox::dim).unwrap_or(1);
    BoxCollection { boxes, generation: coll.generation + 1, split_dim: (dim + 1) % m }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn box_seed(seed: u64, b: &SampleBox) -> u64 {
    let mut h = splitmix(seed);
    for v in b.center.iter().chain(&b.radius) {
        h = splitmix(h ^ v.to_bits());
    }
    h
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Unit-cube points in `[-1, 1]^m` for one box.
pub(crate) fn reference_points(m: usize, s: usize, sampling: Sampling, seed: u64) -> Vec<Vec<f64>> {
    match sampling {
        Sampling::UniformRandom { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..s).map(|_| (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
        }
        Sampling::Grid => {
            let mut n = 1usize;
            while (n + 1).checked_pow(m as u32).is_some_and(|p| p <= s) {
                n += 1;
            }
            let lattice = n.pow(m as u32);
            let mut pts = Vec::with_capacity(s);
            for idx in 0..lattice {
                let mut rem = idx;
                let p: Vec<f64> = (0..m)
                    .map(|_| {
                        let k = rem % n;
                        rem /= n;
                        -1.0 + (2 * k + 1) as f64 / n as f64
                    })
                    .collect();
                pts.push(p);
            }
            for i in 0..(s - lattice) {
                let p = (0..m)
                    .map(|d| {
                        let base = u64::from(PRIMES[d % PRIMES.len()]);
                        2.0 * radical_inverse(i as u64 + 1, base) - 1.0
                    })
                    .collect();
                pts.push(p);
            }
            pts
        }
    }
}

/// Adds `S` evaluated samples to `b`. A failed evaluation is returned as an
/// error so the caller can drop the box.
pub fn sample_box<P: MopProblem + ?Sized>(
    mut b: SampleBox,
    p: &SubdivisionParams,
    problem: &P,
) -> Result<SampleBox> {
    let seed = match p.sampling {
        Sampling::UniformRandom { seed } => box_seed(seed, &b),
        Sampling::Grid => 0,
    };
    for unit in reference_points(b.dim(), p.samples_per_box, p.sampling, seed) {
        let x: Vec<f64> = unit
            .iter()
            .zip(b.center.iter().zip(&b.radius))
            .map(|(u, (c, r))| (c + u * r).clamp(c - r, c + r))
            .collect();
        let f = problem.evaluate(&x)?;
        b.samples.push(Sample { x, f });
    }
    Ok(b)
}

/// Removes every box whose samples are all dominated by samples of other
/// boxes.
///
/// Dominance on a finite set is a strict partial order, so a dominated sample
/// is always dominated by some globally nondominated one. A box therefore
/// survives exactly when it holds a globally nondominated sample.
pub fn select(mut coll: BoxCollection) -> Result<BoxCollection> {
    if let Some(i) = coll.boxes.iter().position(|b| b.samples.is_empty()) {
        return Err(MocpError::InvalidParameter(format!("box {i} carries no samples")));
    }
    if coll.boxes.is_empty() {
        return Ok(coll);
    }
    let mut owner = Vec::new();
    let mut slices: Vec<&[f64]> = Vec::new();
    for (bi, b) in coll.boxes.iter().enumerate() {
        for s in &b.samples {
            owner.push(bi);
            slices.push(s.f.values());
        }
    }
    let mut counts = vec![0usize; coll.boxes.len()];
    for i in nondominated_indices(&slices) {
        counts[owner[i]] += 1;
    }
    for (b, c) in coll.boxes.iter_mut().zip(&counts) {
        b.nondominated = *c;
    }
    coll.boxes.retain(|b| b.nondominated > 0);
    Ok(coll)
}

#[derive(Debug, Clone)]
pub struct SubdivisionResult {
    pub collection: BoxCollection,
    /// Objective evaluations: boxes sampled times `S`.
    pub evaluations: usize,
    pub boxes_sampled: usize,
    /// Boxes dropped because an evaluation failed.
    pub failed_boxes: usize,
    /// Box count after each selection step.
    pub history: Vec<usize>,
}

fn sample_all<P: MopProblem + ?Sized>(
    boxes: Vec<SampleBox>,
    p: &SubdivisionParams,
    problem: &P,
) -> Vec<Result<SampleBox>> {
    #[cfg(feature = "parallel")]
    if p.threads > 1 {
        use rayon::prelude::*;
        let run = || boxes.into_par_iter().map(|b| sample_box(b, p, problem)).collect();
        return match rayon::ThreadPoolBuilder::new().num_threads(p.threads).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        };
    }
    boxes.into_iter().map(|b| sample_box(b, p, problem)).collect()
}

/// Runs `n_sub` rounds of subdivision, sampling and selection from the box
/// spanned by the problem bounds.
pub fn run_subdivision<P: MopProblem + ?Sized>(
    problem: &P,
    p: &SubdivisionParams,
) -> Result<SubdivisionResult> {
    p.validate()?;
    let bounds = problem.bounds().ok_or_else(|| {
        MocpError::InvalidParameter("subdivision needs finite box constraints".into())
    })?;
    if bounds.dim() != problem.decision_dim() {
        return Err(MocpError::DimensionMismatch { left: bounds.dim(), right: problem.decision_dim() });
    }
    let mut coll = BoxCollection::initial(bounds.lower(), bounds.upper())?;
    let mut evaluations = 0;
    let mut boxes_sampled = 0;
    let mut failed_boxes = 0;
    let mut history = Vec::with_capacity(p.n_sub);
    for step in 1..=p.n_sub {
        let mut next = subdivide(coll);
        let boxes = std::mem::take(&mut next.boxes);
        boxes_sampled += boxes.len();
        evaluations += boxes.len() * p.samples_per_box;
        for r in sample_all(boxes, p, problem) {
            match r {
                Ok(b) => next.boxes.push(b),
                Err(e) => {
                    warn!("step {step}: dropping box after failed evaluation: {e}");
                    failed_boxes += 1;
                }
            }
        }
        if next.boxes.is_empty() {
            return Err(MocpError::Evaluation(format!(
                "every box failed to evaluate at subdivision step {step}"
            )));
        }
        coll = select(next)?;
        debug!("subdivision step {step}: {} boxes", coll.len());
        history.push(coll.len());
    }
    Ok(SubdivisionResult { collection: coll, evaluations, boxes_sampled, failed_boxes, history })
}

/// One CSV row per box: centre, radii, nondominated-sample count.
pub fn write_boxes_csv<W: Write>(coll: &BoxCollection, mut w: W) -> std::io::Result<()> {
    let m = coll.boxes.first().map(SampleBox::dim).unwrap_or(0);
    let mut header: Vec<String> = (0..m).map(|i| format!("c{i}")).collect();
    header.extend((0..m).map(|i| format!("r{i}")));
    header.push("nondominated".into());
    writeln!(w, "{}", header.join(","))?;
    for b in &coll.boxes {
        let row: Vec<String> = b
            .center
            .iter()
            .chain(&b.radius)
            .map(|v| format!("{v:e}"))
            .chain(std::iter::once(b.nondominated.to_string()))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
