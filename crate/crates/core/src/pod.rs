//! Snapshot decomposition and mass-weighted proper orthogonal decomposition.
//!
//! Fields are stored as `2N` vectors: the first `N` entries hold the first
//! velocity component on the nodes, the next `N` the second.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MocpError, Result};

/// Relative threshold below which eigenvalues count as zero.
pub const DROP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// Node count `N`; fields have `2N` entries.
    pub nodes: usize,
    pub dt: f64,
    /// `2N x m`, one column per snapshot, time ordered.
    pub data: DMatrix<f64>,
    /// Reference control sampled at the snapshot times.
    pub gamma_ref: Vec<f64>,
    /// Rotation rate the control field was computed with.
    pub gamma_c: f64,
    pub u_c: Vec<f64>,
    pub u_m: Option<Vec<f64>>,
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MocpError::NonFinite(what.to_string()))
    }
}

impl SnapshotSet {
    pub fn new(
        nodes: usize,
        dt: f64,
        data: DMatrix<f64>,
        gamma_ref: Vec<f64>,
        gamma_c: f64,
        u_c: Vec<f64>,
        u_m: Option<Vec<f64>>,
    ) -> Result<Self> {
        if nodes == 0 {
            return Err(MocpError::Empty("snapshot nodes"));
        }
        if data.nrows() != 2 * nodes {
            return Err(MocpError::DimensionMismatch { left: data.nrows(), right: 2 * nodes });
        }
        if data.ncols() < 2 {
            return Err(MocpError::InvalidParameter(format!(
                "need at least 2 snapshots, got {}",
                data.ncols()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MocpError::InvalidParameter(format!("snapshot spacing {dt}")));
        }
        if gamma_ref.len() != data.ncols() {
            return Err(MocpError::DimensionMismatch { left: gamma_ref.len(), right: data.ncols() });
        }
        if u_c.len() != 2 * nodes {
            return Err(MocpError::DimensionMismatch { left: u_c.len(), right: 2 * nodes });
        }
        if let Some(m) = &u_m {
            if m.len() != 2 * nodes {
                return Err(MocpError::DimensionMismatch { left: m.len(), right: 2 * nodes });
            }
            check_finite("mean field", m)?;
        }
        check_finite("snapshot data", data.as_slice())?;
        check_finite("reference control", &gamma_ref)?;
        check_finite("control field", &u_c)?;
        if !gamma_c.is_finite() {
            return Err(MocpError::NonFinite("gamma_c".into()));
        }
        Ok(Self { nodes, dt, data, gamma_ref, gamma_c, u_c, u_m })
    }

    pub fn n_dof(&self) -> usize {
        2 * self.nodes
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn times(&self, t0: f64) -> Vec<f64> {
        (0..self.m()).map(|j| t0 + j as f64 * self.dt).collect()
    }
}

/// Symmetric positive semidefinite weighting of the `2N` field space.
#[derive(Debug, Clone, PartialEq)]
pub enum MassWeighting {
    Diagonal(Vec<f64>),
    /// Summed triplets, stored as compressed rows.
    Sparse { n: usize, rows: Vec<Vec<(usize, f64)>> },
}

impl MassWeighting {
    pub fn identity(n: usize) -> Self {
        Self::Diagonal(vec![1.0; n])
    }

    pub fn diagonal(w: Vec<f64>) -> Result<Self> {
        if let Some(v) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(MocpError::InvalidParameter(format!("negative or non-finite mass weight {v}")));
        }
        Ok(Self::Diagonal(w))
    }

    /// Builds from 0-based `(i, j, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(MocpError::InvalidParameter(format!("triplet ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(MocpError::NonFinite(format!("mass entry ({i}, {j})")));
            }
            rows[i].push((j, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        let get = |rows: &Vec<Vec<(usize, f64)>>, i: usize, j: usize| {
            rows[i].binary_search_by_key(&j, |e| e.0).map(|k| rows[i][k].1).unwrap_or(0.0)
        };
        for i in 0..n {
            for &(j, v) in &rows[i] {
                let w = get(&rows, j, i);
                if (v - w).abs() > 1e-12 * v.abs().max(w.abs()).max(1.0) {
                    return Err(MocpError::InvalidParameter(format!("mass matrix not symmetric at ({i}, {j})")));
                }
            }
            if get(&rows, i, i) < 0.0 {
                return Err(MocpError::InvalidParameter(format!("negative mass diagonal at {i}")));
            }
        }
        Ok(Self::Sparse { n, rows })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(w) => w.len(),
            Self::Sparse { n, .. } => *n,
        }
    }

    pub fn apply(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.dim() {
            return Err(MocpError::DimensionMismatch { left: a.len(), right: self.dim() });
        }
        Ok(match self {
            Self::Diagonal(w) => a.iter().zip(w).map(|(x, w)| x * w).collect(),
            Self::Sparse { rows, .. } => {
                rows.iter().map(|r| r.iter().map(|&(j, v)| v * a[j]).sum()).collect()
            }
        })
    }

    /// `a^T M b`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if b.len() != self.dim() {
            return Err(MocpError::DimensionMismatch { left: b.len(), right: self.dim() });
        }
        Ok(self.apply(a)?.iter().zip(b).map(|(x, y)| x * y).sum())
    }

    /// Triplet listing (diagonal weights become `(i, i, w)`).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match self {
            Self::Diagonal(w) => w.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
            Self::Sparse { rows, .. } => rows
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
                .collect(),
        }
    }

    fn apply_matrix(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(s.nrows(), s.ncols());
        for (j, col) in s.column_iter().enumerate() {
            let mc = self.apply(col.as_slice())?;
            out.column_mut(j).copy_from_slice(&mc);
        }
        Ok(out)
    }
}

/// Replaces raw snapshots by fluctuations
/// `u = U - (gamma_ref / gamma_c) U_c - U_m`, with `U_m` the time average of
/// the control-corrected field. The returned set carries `U_m`.
pub fn decompose(raw: &SnapshotSet) -> Result<SnapshotSet> {
    if raw.gamma_c == 0.0 {
        return Err(MocpError::InvalidParameter("gamma_c must be nonzero".into()));
    }
    let mut tilde = raw.data.clone();
    let uc = DVector::from_column_slice(&raw.u_c);
    for (j, mut col) in tilde.column_iter_mut().enumerate() {
        col.axpy(-raw.gamma_ref[j] / raw.gamma_c, &uc, 1.0);
    }
    let mean = tilde.column_mean();
    for mut col in tilde.column_iter_mut() {
        col -= &mean;
    }
    Ok(SnapshotSet {
        data: tilde,
        u_m: Some(mean.as_slice().to_vec()),
        ..raw.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep exactly `l` modes.
    Count(usize),
    /// Smallest `l` whose captured-energy ratio reaches the target.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `2N x l`, M-orthonormal columns.
    pub modes: DMatrix<f64>,
    /// All `m` eigenvalues, descending, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// Retained eigenvectors of the correlation problem (`m x l`).
    pub eigenvectors: DMatrix<f64>,
    pub l: usize,
    /// Captured-energy ratio of the retained modes.
    pub eps: f64,
}

impl PodBasis {
    pub fn mode(&self, i: usize) -> &[f64] {
        let n = self.modes.nrows();
        &self.modes.as_slice()[i * n..(i + 1) * n]
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }
}

/// Captured-energy ratio `sum_{i<=l} sigma_i / sum_i sigma_i`.
pub fn truncation_error(sigma: &[f64], l: usize) -> Result<f64> {
    if l == 0 || l > sigma.len() {
        return Err(MocpError::InvalidParameter(format!("l = {l} outside 1..={}", sigma.len())));
    }
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) {
        return Err(MocpError::Degenerate("zero total energy".into()));
    }
    Ok((sigma[..l].iter().sum::<f64>() / total).clamp(0.0, 1.0))
}

/// Solves `S^T M S v = sigma v` and forms `psi_i = S v_i / sqrt(sigma_i)`.
pub fn pod_modes(snaps: &SnapshotSet, mass: &MassWeighting, criterion: Truncation) -> Result<PodBasis> {
    let s = &snaps.data;
    if mass.dim() != s.nrows() {
        return Err(MocpError::DimensionMismatch { left: mass.dim(), right: s.nrows() });
    }
    let ms = mass.apply_matrix(s)?;
    let mut k = s.transpose() * &ms;
    k = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // Stable sort keeps index order among equal eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let s1 = sigma[0];
    let rank = sigma.iter().take_while(|&&v| v > DROP_TOLERANCE * s1 && v > 0.0).count();
    if rank == 0 {
        return Err(MocpError::Degenerate("all POD eigenvalues below drop tolerance".into()));
    }
    let l = match criterion {
        Truncation::Count(l) => {
            if l == 0 || l > rank {
                return Err(MocpError::InvalidParameter(format!(
                    "requested {l} modes, data supports 1..={rank}"
                )));
            }
            l
        }
        Truncation::Energy(target) => {
            if !(target > 0.0 && target <= 1.0) {
                return Err(MocpError::InvalidParameter(format!("energy target {target} outside (0, 1]")));
            }
            let mut l = rank;
            for cand in 1..=rank {
                if truncation_error(&sigma, cand)? >= target - 1e-15 {
                    l = cand;
                    break;
                }
            }
            l
        }
    };
    let mut vecs = DMatrix::zeros(s.ncols(), l);
    let mut modes = DMatrix::zeros(s.nrows(), l);
    for (c, &i) in order.iter().take(l).enumerate() {
        let v = eig.eigenvectors.column(i);
        vecs.column_mut(c).copy_from(&v);
        let psi = s * v / sigma[c].sqrt();
        modes.column_mut(c).copy_from(&psi);
    }
    // Two Gram-Schmidt passes in the M inner product remove round-off drift
    // for weakly energetic modes.
    for _ in 0..2 {
        for c in 0..l {
            for p in 0..c {
                let proj = mass.inner(modes.column(p).as_slice(), modes.column(c).as_slice())?;
                let prev = modes.column(p).into_owned();
                modes.column_mut(c).axpy(-proj, &prev, 1.0);
            }
            let norm = mass.inner(modes.column(c).as_slice(), modes.column(c).as_slice())?.sqrt();
            if !(norm > 0.0) {
                return Err(MocpError::Degenerate(format!("mode {} has zero M-norm", c + 1)));
            }
            modes.column_mut(c).unscale_mut(norm);
        }
    }
    for c in 0..l {
        let col = modes.column(c);
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            modes.column_mut(c).neg_mut();
            vecs.column_mut(c).neg_mut();
        }
    }
    let eps = truncation_error(&sigma, l)?;
    debug!("pod: rank {rank}, kept {l} modes, captured energy {eps:.6}");
    if rank < sigma.len() {
        debug!("pod: {} eigenvalues below drop tolerance", sigma.len() - rank);
    }
    Ok(PodBasis { modes, eigenvalues: sigma, eigenvectors: vecs, l, eps })
}

/// `alpha_j = psi_j^T M u`.
pub fn project(field: &[f64], basis: &PodBasis, mass: &MassWeighting) -> Result<Vec<f64>> {
    if field.len() != basis.n_dof() {
        return Err(MocpError::DimensionMismatch { left: field.len(), right: basis.n_dof() });
    }
    let mu = mass.apply(field)?;
    Ok((0..basis.l)
        .map(|j| basis.mode(j).iter().zip(&mu).map(|(a, b)| a * b).sum())
        .collect())
}

/// Projects every column; returns `l x m`.
pub fn project_columns(data: &DMatrix<f64>, basis: &PodBasis, mass: &MassWeighting) -> Result<DMatrix<f64>> {
    if data.nrows() != basis.n_dof() {
        return Err(MocpError::DimensionMismatch { left: data.nrows(), right: basis.n_dof() });
    }
    let md = mass.apply_matrix(data)?;
    Ok(basis.modes.transpose() * md)
}

/// `sum_j alpha_j psi_j`.
pub fn reconstruct(alpha: &[f64], basis: &PodBasis) -> Result<Vec<f64>> {
    if alpha.len() != basis.l {
        return Err(MocpError::DimensionMismatch { left: alpha.len(), right: basis.l });
    }
    let a = DVector::from_column_slice(alpha);
    Ok((&basis.modes * a).as_slice().to_vec())
}

/// Warns when the retained basis captures less than `threshold` energy.
pub fn check_energy(basis: &PodBasis, threshold: f64) {
    if basis.eps < threshold {
        warn!("POD basis captures only {:.4} of the snapshot energy", basis.eps);
    }
}
