//! Dominance relations, objective vectors and the abstract multiobjective
//! problem shared by both solvers.
//!
//! Comparisons are exact. Callers that want a tolerance should round their
//! objective values before handing them in.

use std::cmp::Ordering;

use crate::error::{MocpError, Result};

/// A point in objective space `R^k`, `k >= 2`, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(MocpError::InvalidObjective(format!(
                "need at least two objectives, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(MocpError::InvalidObjective(format!("non-finite entry {v}")));
        }
        Ok(Self(values))
    }

    pub fn pair(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Componentwise `self <=_p other`.
    pub fn leq_p(&self, other: &Self) -> Result<bool> {
        leq_p(self, other)
    }

    pub fn dominates(&self, other: &Self) -> Result<bool> {
        dominates(self, other)
    }
}

impl std::ops::Index<usize> for ObjectiveVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dims(v: &ObjectiveVector, w: &ObjectiveVector) -> Result<()> {
    if v.dim() != w.dim() {
        return Err(MocpError::DimensionMismatch {
            left: v.dim(),
            right: w.dim(),
        });
    }
    Ok(())
}

/// `v_i <= w_i` for every component.
pub fn leq_p(v: &ObjectiveVector, w: &ObjectiveVector) -> Result<bool> {
    check_dims(v, w)?;
    Ok(v.0.iter().zip(&w.0).all(|(a, b)| a <= b))
}

/// `v <=_p w` and `v != w`. Identical points never dominate each other.
pub fn dominates(v: &ObjectiveVector, w: &ObjectiveVector) -> Result<bool> {
    check_dims(v, w)?;
    Ok(dominates_slice(&v.0, &w.0))
}

#[inline]
pub(crate) fn dominates_slice(v: &[f64], w: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in v.iter().zip(w) {
        if a > b {
            return false;
        }
        if a < b {
            strict = true;
        }
    }
    strict
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Indices of the points not dominated by any other listed point, in
/// ascending order.
///
/// Works on a lexicographic ordering: a dominator always sorts strictly
/// before the point it dominates, so each point only has to be compared with
/// the nondominated points already found. Two objectives use a running
/// minimum sweep instead.
pub fn nondominated_filter(points: &[ObjectiveVector]) -> Result<Vec<usize>> {
    let first = points.first().ok_or(MocpError::Empty("point list"))?;
    let k = first.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != k) {
        return Err(MocpError::DimensionMismatch {
            left: k,
            right: p.dim(),
        });
    }
    let slices: Vec<&[f64]> = points.iter().map(|p| p.values()).collect();
    Ok(nondominated_indices(&slices))
}

/// Slice-level filter used internally by the solvers (no validation).
pub(crate) fn nondominated_indices(points: &[&[f64]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a], points[b]));

    let mut keep = Vec::new();
    if points.first().map(|p| p.len()) == Some(2) {
        // Runs of identical points share a verdict; the running minimum only
        // covers strictly earlier, distinct points.
        let mut best_second = f64::INFINITY;
        let mut i = 0;
        while i < order.len() {
            let head = points[order[i]];
            let mut j = i + 1;
            while j < order.len() && points[order[j]] == head {
                j += 1;
            }
            if best_second > head[1] {
                keep.extend_from_slice(&order[i..j]);
            }
            best_second = best_second.min(head[1]);
            i = j;
        }
    } else {
        let mut archive: Vec<usize> = Vec::new();
        for &idx in &order {
            let p = points[idx];
            if !archive.iter().any(|&a| dominates_slice(points[a], p)) {
                archive.push(idx);
            }
        }
        keep = archive;
    }
    keep.sort_unstable();
    keep
}

/// Per-dimension interval `[lower, upper]` with `lower < upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(MocpError::InvalidParameter(
                "bounds need matching, nonempty lower/upper arrays".into(),
            ));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(MocpError::InvalidParameter(format!(
                    "bound {i}: need finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// A finite-dimensional multiobjective problem `gamma in R^m -> J(gamma) in R^k`.
///
/// `evaluate` must be deterministic; both solvers call it from several
/// threads.
pub trait MopProblem: Sync {
    fn decision_dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector>;

    fn bounds(&self) -> Option<&Bounds> {
        None
    }

    fn name(&self) -> &str {
        "problem"
    }
}

impl<P: MopProblem + ?Sized> MopProblem for &P {
    fn decision_dim(&self) -> usize {
        (**self).decision_dim()
    }
    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        (**self).evaluate(x)
    }
    fn bounds(&self) -> Option<&Bounds> {
        (**self).bounds()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Multiplies each objective of an inner problem by a fixed positive factor.
pub struct ScaledProblem<P> {
    inner: P,
    scales: Vec<f64>,
}

impl<P: MopProblem> ScaledProblem<P> {
    pub fn new(inner: P, scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(MocpError::InvalidParameter(
                "objective scale factors must be positive".into(),
            ));
        }
        Ok(Self { inner, scales })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: MopProblem> MopProblem for ScaledProblem<P> {
    fn decision_dim(&self) -> usize {
        self.inner.decision_dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        let j = self.inner.evaluate(x)?;
        if j.dim() != self.scales.len() {
            return Err(MocpError::DimensionMismatch {
                left: j.dim(),
                right: self.scales.len(),
            });
        }
        ObjectiveVector::new(j.values().iter().zip(&self.scales).map(|(v, s)| v * s).collect())
    }

    fn bounds(&self) -> Option<&Bounds> {
        self.inner.bounds()
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ov(v: &[f64]) -> ObjectiveVector {
        ObjectiveVector::new(v.to_vec()).unwrap()
    }

    fn brute_force(points: &[ObjectiveVector]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                !(0..points.len()).any(|j| {
                    j != i
                        && points[j].values().iter().zip(points[i].values()).all(|(a, b)| a <= b)
                        && points[j] != points[i]
                })
            })
            .collect()
    }

    #[test]
    fn leq_p_examples() {
        assert!(leq_p(&ov(&[1.0, 2.0]), &ov(&[2.0, 3.0])).unwrap());
        assert!(leq_p(&ov(&[1.0, 2.0]), &ov(&[1.0, 2.0])).unwrap());
        assert!(!leq_p(&ov(&[1.0, 3.0]), &ov(&[2.0, 2.0])).unwrap());
    }

    #[test]
    fn dominates_examples() {
        assert!(dominates(&ov(&[1.0, 2.0]), &ov(&[2.0, 3.0])).unwrap());
        assert!(!dominates(&ov(&[1.0, 2.0]), &ov(&[1.0, 2.0])).unwrap());
        assert!(!dominates(&ov(&[0.0, 5.0]), &ov(&[5.0, 0.0])).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = dominates(&ov(&[1.0, 2.0]), &ov(&[1.0, 2.0, 3.0])).unwrap_err();
        assert_eq!(err, MocpError::DimensionMismatch { left: 2, right: 3 });
        assert!(leq_p(&ov(&[1.0, 2.0, 0.0]), &ov(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn objective_vector_invariants() {
        assert!(ObjectiveVector::new(vec![1.0]).is_err());
        assert!(ObjectiveVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ObjectiveVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn filter_examples() {
        let pts = [ov(&[0.0, 2.0]), ov(&[1.0, 1.0]), ov(&[2.0, 0.0]), ov(&[2.0, 2.0])];
        assert_eq!(nondominated_filter(&pts).unwrap(), vec![0, 1, 2]);
        assert_eq!(nondominated_filter(&[ov(&[1.0, 1.0])]).unwrap(), vec![0]);
        assert_eq!(nondominated_filter(&[]).unwrap_err(), MocpError::Empty("point list"));
    }

    #[test]
    fn filter_keeps_ties() {
        let pts = [ov(&[1.0, 1.0]), ov(&[1.0, 1.0]), ov(&[1.0, 2.0]), ov(&[0.5, 3.0])];
        assert_eq!(nondominated_filter(&pts).unwrap(), vec![0, 1, 3]);
        let pts3 = [ov(&[1.0, 1.0, 1.0]), ov(&[1.0, 1.0, 1.0]), ov(&[1.0, 1.0, 2.0])];
        assert_eq!(nondominated_filter(&pts3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn filter_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [2usize, 3] {
            for _ in 0..20 {
                let pts: Vec<_> = (0..100)
                    .map(|_| ov(&(0..k).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
                    .collect();
                assert_eq!(nondominated_filter(&pts).unwrap(), brute_force(&pts));
            }
        }
    }

    fn arb_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..4).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec((0i32..6).prop_map(f64::from), k), 1..40)
        })
    }

    proptest! {
        #[test]
        fn filter_agrees_with_brute_force(raw in arb_points()) {
            let pts: Vec<_> = raw.iter().map(|v| ov(v)).collect();
            prop_assert_eq!(nondominated_filter(&pts).unwrap(), brute_force(&pts));
        }

        #[test]
        fn filter_is_permutation_invariant(raw in arb_points(), seed in 0u64..1000) {
            let pts: Vec<_> = raw.iter().map(|v| ov(v)).collect();
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let shuffled: Vec<_> = perm.iter().map(|&i| pts[i].clone()).collect();
            let mut mapped: Vec<usize> = nondominated_filter(&shuffled).unwrap().into_iter().map(|i| perm[i]).collect();
            mapped.sort_unstable();
            prop_assert_eq!(mapped, nondominated_filter(&pts).unwrap());
        }

        #[test]
        fn monotone_transform_preserves_front(raw in arb_points()) {
            let pts: Vec<_> = raw.iter().map(|v| ov(v)).collect();
            let warped: Vec<_> = raw.iter().map(|v| {
                let mut w = v.clone();
                w[0] = (w[0] * 0.7).exp() + 3.0 * w[0];
                ov(&w)
            }).collect();
            prop_assert_eq!(nondominated_filter(&warped).unwrap(), nondominated_filter(&pts).unwrap());
        }

        #[test]
        fn dominance_order_properties(a in prop::collection::vec(-3.0f64..3.0, 2),
                                      b in prop::collection::vec(-3.0f64..3.0, 2),
                                      c in prop::collection::vec(-3.0f64..3.0, 2)) {
            let (a, b, c) = (ov(&a), ov(&b), ov(&c));
            prop_assert!(!dominates(&a, &a).unwrap());
            prop_assert!(leq_p(&a, &a).unwrap());
            if dominates(&a, &b).unwrap() && dominates(&b, &c).unwrap() {
                prop_assert!(dominates(&a, &c).unwrap());
            }
            if leq_p(&a, &b).unwrap() && leq_p(&b, &c).unwrap() {
                prop_assert!(leq_p(&a, &c).unwrap());
            }
            if leq_p(&a, &b).unwrap() && leq_p(&b, &a).unwrap() {
                prop_assert_eq!(&a, &b);
            }
        }
    }
}
