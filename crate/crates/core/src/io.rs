//! Text formats for snapshots, mass matrices, POD modes and reduced-model
//! coefficients. Lines starting with `#` are comments.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{MocpError, Result};
use crate::pod::{MassWeighting, PodBasis, SnapshotSet};
use crate::rom::RomCoefficients;

fn perr(msg: impl Into<String>) -> MocpError {
    MocpError::Parse(msg.into())
}

fn content_lines<R: BufRead>(r: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.to_string());
    }
    Ok(out)
}

fn floats(line: &str, expect: Option<usize>, what: &str) -> Result<Vec<f64>> {
    let v = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| perr(format!("{what}: bad number '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if let Some(n) = expect {
        if v.len() != n {
            return Err(perr(format!("{what}: expected {n} values, found {}", v.len())));
        }
    }
    Ok(v)
}

fn write_row<W: Write>(w: &mut W, v: impl IntoIterator<Item = f64>) -> Result<()> {
    let s: Vec<String> = v.into_iter().map(|x| format!("{x:e}")).collect();
    writeln!(w, "{}", s.join(" "))?;
    Ok(())
}

struct Header<'a> {
    lines: &'a [String],
    pos: usize,
}

impl Header<'_> {
    fn value(&mut self, key: &str) -> Result<&str> {
        let line = self.lines.get(self.pos).ok_or_else(|| perr(format!("missing header '{key}='")))?;
        let v = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| perr(format!("expected '{key}=', found '{line}'")))?;
        self.pos += 1;
        Ok(v.trim())
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.value(key)?;
        v.parse().map_err(|_| perr(format!("{key}: bad integer '{v}'")))
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let v = self.value(key)?;
        v.parse().map_err(|_| perr(format!("{key}: bad number '{v}'")))
    }

    fn next(&mut self, what: &str) -> Result<&str> {
        let line = self.lines.get(self.pos).ok_or_else(|| perr(format!("unexpected end of file before {what}")))?;
        self.pos += 1;
        Ok(line)
    }
}

/// Writes a snapshot set. A missing mean field is written as `U_m=none`.
pub fn write_snapshots<W: Write>(s: &SnapshotSet, mut w: W) -> Result<()> {
    writeln!(w, "nodes={}", s.nodes)?;
    writeln!(w, "snapshots={}", s.m())?;
    writeln!(w, "dt={:e}", s.dt)?;
    writeln!(w, "gamma_c={:e}", s.gamma_c)?;
    write_row(&mut w, s.u_c.iter().copied())?;
    match &s.u_m {
        Some(u) => write_row(&mut w, u.iter().copied())?,
        None => writeln!(w, "none")?,
    }
    write_row(&mut w, s.gamma_ref.iter().copied())?;
    for c in s.data.column_iter() {
        write_row(&mut w, c.iter().copied())?;
    }
    Ok(())
}

pub fn read_snapshots<R: BufRead>(r: R) -> Result<SnapshotSet> {
    let lines = content_lines(r)?;
    let mut h = Header { lines: &lines, pos: 0 };
    let nodes = h.usize("nodes")?;
    let m = h.usize("snapshots")?;
    let dt = h.f64("dt")?;
    let gamma_c = h.f64("gamma_c")?;
    let n2 = 2 * nodes;
    let u_c = floats(h.next("U_c")?, Some(n2), "U_c")?;
    let um_line = h.next("U_m")?;
    let u_m = if um_line == "none" { None } else { Some(floats(um_line, Some(n2), "U_m")?) };
    let gamma_ref = floats(h.next("gamma_ref")?, Some(m), "gamma_ref")?;
    let mut data = DMatrix::zeros(n2, m);
    for j in 0..m {
        let col = floats(h.next(&format!("snapshot {j}"))?, Some(n2), &format!("snapshot {j}"))?;
        data.column_mut(j).copy_from_slice(&col);
    }
    if h.pos != lines.len() {
        return Err(perr(format!("{} trailing lines after the last snapshot", lines.len() - h.pos)));
    }
    SnapshotSet::new(nodes, dt, data, gamma_ref, gamma_c, u_c, u_m)
}

/// `i j value` per line, 0-based.
pub fn write_mass<W: Write>(m: &MassWeighting, mut w: W) -> Result<()> {
    for (i, j, v) in m.triplets() {
        writeln!(w, "{i} {j} {v:e}")?;
    }
    Ok(())
}

/// Reads triplets for an `n x n` weighting.
pub fn read_mass<R: BufRead>(r: R, n: usize) -> Result<MassWeighting> {
    let mut t = Vec::new();
    for (k, line) in content_lines(r)?.iter().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(perr(format!("mass line {}: expected 'i j value'", k + 1)));
        }
        let i = parts[0].parse().map_err(|_| perr(format!("mass line {}: bad row index", k + 1)))?;
        let j = parts[1].parse().map_err(|_| perr(format!("mass line {}: bad column index", k + 1)))?;
        let v = parts[2].parse().map_err(|_| perr(format!("mass line {}: bad value", k + 1)))?;
        t.push((i, j, v));
    }
    if t.is_empty() {
        return Err(MocpError::Empty("mass file"));
    }
    MassWeighting::from_triplets(n, &t)
}

/// POD modes together with the fields needed to assemble a model from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModesFile {
    pub nodes: usize,
    pub dt: f64,
    pub gamma_c: f64,
    pub u_c: Vec<f64>,
    pub u_m: Vec<f64>,
    /// Full spectrum, descending.
    pub eigenvalues: Vec<f64>,
    /// `2N x l`.
    pub modes: DMatrix<f64>,
}

impl ModesFile {
    pub fn new(s: &SnapshotSet, basis: &PodBasis) -> Result<Self> {
        let u_m = s.u_m.clone().ok_or_else(|| MocpError::InvalidParameter("snapshot set has no mean field".into()))?;
        Ok(Self {
            nodes: s.nodes,
            dt: s.dt,
            gamma_c: s.gamma_c,
            u_c: s.u_c.clone(),
            u_m,
            eigenvalues: basis.eigenvalues.clone(),
            modes: basis.modes.clone(),
        })
    }

    /// The stored basis; the correlation eigenvectors are not kept.
    pub fn basis(&self) -> PodBasis {
        let l = self.modes.ncols();
        let total: f64 = self.eigenvalues.iter().sum();
        let kept: f64 = self.eigenvalues.iter().take(l).sum();
        PodBasis {
            modes: self.modes.clone(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: DMatrix::zeros(0, l),
            l,
            eps: if total > 0.0 { kept / total } else { 1.0 },
        }
    }
}

pub fn write_modes<W: Write>(f: &ModesFile, mut w: W) -> Result<()> {
    writeln!(w, "nodes={}", f.nodes)?;
    writeln!(w, "modes={}", f.modes.ncols())?;
    writeln!(w, "dt={:e}", f.dt)?;
    writeln!(w, "gamma_c={:e}", f.gamma_c)?;
    write_row(&mut w, f.u_c.iter().copied())?;
    write_row(&mut w, f.u_m.iter().copied())?;
    write_row(&mut w, f.eigenvalues.iter().copied())?;
    for c in f.modes.column_iter() {
        write_row(&mut w, c.iter().copied())?;
    }
    Ok(())
}

pub fn read_modes<R: BufRead>(r: R) -> Result<ModesFile> {
    let lines = content_lines(r)?;
    let mut h = Header { lines: &lines, pos: 0 };
    let nodes = h.usize("nodes")?;
    let l = h.usize("modes")?;
    let dt = h.f64("dt")?;
    let gamma_c = h.f64("gamma_c")?;
    let n2 = 2 * nodes;
    let u_c = floats(h.next("U_c")?, Some(n2), "U_c")?;
    let u_m = floats(h.next("U_m")?, Some(n2), "U_m")?;
    let eigenvalues = floats(h.next("eigenvalues")?, None, "eigenvalues")?;
    if l == 0 || eigenvalues.len() < l {
        return Err(perr(format!("{l} modes with {} eigenvalues", eigenvalues.len())));
    }
    let mut modes = DMatrix::zeros(n2, l);
    for j in 0..l {
        let col = floats(h.next(&format!("mode {j}"))?, Some(n2), &format!("mode {j}"))?;
        modes.column_mut(j).copy_from_slice(&col);
    }
    if h.pos != lines.len() {
        return Err(perr("trailing lines after the last mode"));
    }
    Ok(ModesFile { nodes, dt, gamma_c, u_c, u_m, eigenvalues, modes })
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for r in m.row_iter() {
        write_row(w, r.iter().copied())?;
    }
    Ok(())
}

/// Sections `[A] [B] [Q] [D] [E] [F] [G] [meta]`, row-major; `[Q]` holds
/// `Q_1 .. Q_l` one after another. An optional `[alpha0]` section carries
/// the initial reduced state.
pub fn write_coefficients<W: Write>(c: &RomCoefficients, beta: f64, alpha0: Option<&[f64]>, mut w: W) -> Result<()> {
    writeln!(w, "[A]")?;
    write_row(&mut w, c.a.iter().copied())?;
    writeln!(w, "[B]")?;
    write_matrix(&mut w, &c.b)?;
    writeln!(w, "[Q]")?;
    for q in &c.q {
        write_matrix(&mut w, q)?;
    }
    writeln!(w, "[D]")?;
    write_row(&mut w, c.d.iter().copied())?;
    writeln!(w, "[E]")?;
    write_row(&mut w, c.e.iter().copied())?;
    writeln!(w, "[F]")?;
    write_matrix(&mut w, &c.f)?;
    writeln!(w, "[G]")?;
    write_row(&mut w, c.g.iter().copied())?;
    writeln!(w, "[meta]")?;
    writeln!(w, "l={}", c.l)?;
    writeln!(w, "re={:e}", c.re)?;
    writeln!(w, "beta={:e}", beta)?;
    if let Some(a) = alpha0 {
        if a.len() != c.l {
            return Err(MocpError::DimensionMismatch { left: a.len(), right: c.l });
        }
        writeln!(w, "[alpha0]")?;
        write_row(&mut w, a.iter().copied())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CoefficientsFile {
    pub coefficients: RomCoefficients,
    pub beta: f64,
    pub alpha0: Option<Vec<f64>>,
}

pub fn read_coefficients<R: BufRead>(r: R) -> Result<CoefficientsFile> {
    let lines = content_lines(r)?;
    let mut sections: std::collections::BTreeMap<String, Vec<&str>> = Default::default();
    let mut current: Option<String> = None;
    for line in &lines {
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].to_string();
            if sections.contains_key(&name) {
                return Err(perr(format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Vec::new());
            current = Some(name);
        } else {
            let name = current.as_ref().ok_or_else(|| perr("data before the first section"))?;
            sections.get_mut(name).expect("section exists").push(line);
        }
    }
    let get = |name: &str| sections.get(name).ok_or_else(|| perr(format!("missing section [{name}]")));
    let mut meta = std::collections::BTreeMap::new();
    for line in get("meta")? {
        let (k, v) = line.split_once('=').ok_or_else(|| perr(format!("meta line '{line}'")))?;
        meta.insert(k.trim(), v.trim());
    }
    let meta_f = |k: &str| -> Result<f64> {
        meta.get(k).ok_or_else(|| perr(format!("missing meta key '{k}'")))?.parse().map_err(|_| perr(format!("meta '{k}'")))
    };
    let l: usize = meta.get("l").ok_or_else(|| perr("missing meta key 'l'"))?.parse().map_err(|_| perr("meta 'l'"))?;
    if l == 0 {
        return Err(perr("l = 0"));
    }
    let vector = |name: &str| -> Result<Vec<f64>> {
        let s = get(name)?;
        if s.len() != 1 {
            return Err(perr(format!("[{name}] needs one line")));
        }
        floats(s[0], Some(l), name)
    };
    let matrix = |rows: &[&str], name: &str| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(l, l);
        for (i, row) in rows.iter().enumerate() {
            let v = floats(row, Some(l), name)?;
            for (j, x) in v.into_iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
    };
    let square = |name: &str| -> Result<DMatrix<f64>> {
        let s = get(name)?;
        if s.len() != l {
            return Err(perr(format!("[{name}] needs {l} rows, found {}", s.len())));
        }
        matrix(s, name)
    };
    let qs = get("Q")?;
    if qs.len() != l * l {
        return Err(perr(format!("[Q] needs {} rows, found {}", l * l, qs.len())));
    }
    let q = (0..l).map(|j| matrix(&qs[j * l..(j + 1) * l], "Q")).collect::<Result<Vec<_>>>()?;
    let c = RomCoefficients {
        l,
        a: vector("A")?,
        b: square("B")?,
        q,
        d: vector("D")?,
        e: vector("E")?,
        f: square("F")?,
        g: vector("G")?,
        re: meta_f("re")?,
    };
    c.validate()?;
    let alpha0 = if sections.contains_key("alpha0") { Some(vector("alpha0")?) } else { None };
    Ok(CoefficientsFile { coefficients: c, beta: meta_f("beta")?, alpha0 })
}
