//! Elementary unitary reflections and their compositions.
//!
//! The basic operator swaps two unit vectors `a` and `b` while fixing
//! everything orthogonal to both:
//!
//! ```text
//! U(a, b) v = v - <a - b, v> / (1 - <a, b>) * (a - b)
//! ```
//!
//! A [`RotationPlan`] chains `d` of these so that one orthonormal `d`-set is
//! carried onto another. Each factor is a symmetric involution, so the same
//! pair list run backwards is the inverse map.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on the norm of a [`UnitVector`].
pub const UNIT_TOL: f64 = 1e-10;
/// Gram deviation above which an input set is rejected.
pub const ORTHO_REJECT_TOL: f64 = 1e-8;
/// Gram deviation above which an accepted set is re-orthonormalized.
pub const ORTHO_CLEAN_TOL: f64 = 1e-12;
/// `1 - <a, b>` below this is treated as `a == b`.
pub const DEGENERATE_TOL: f64 = 1e-12;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A vector of Euclidean norm one.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("unit vector"));
        }
        let nrm = norm(&coords);
        if (nrm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit { norm: nrm });
        }
        Ok(Self(coords))
    }

    /// Scales `coords` to unit length. Fails on the zero vector.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        let nrm = norm(&coords);
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::RankDeficient { index: 0 });
        }
        coords.iter_mut().for_each(|x| *x /= nrm);
        Ok(Self(coords))
    }

    // Callers guarantee unit norm up to rounding.
    fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An ordered list of `k <= n` mutually orthogonal unit vectors in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSet {
    dim: usize,
    vectors: Vec<UnitVector>,
}

impl OrthonormalSet {
    /// Validates `vectors`. Sets whose Gram matrix deviates from the identity by
    /// more than [`ORTHO_REJECT_TOL`] are rejected; small deviations above
    /// [`ORTHO_CLEAN_TOL`] are removed by re-orthonormalizing.
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = check_common_len(&vectors)?;
        let dev = gram_deviation(&vectors);
        if !(dev <= ORTHO_REJECT_TOL) {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        if dev > ORTHO_CLEAN_TOL {
            return gram_schmidt(&vectors);
        }
        Ok(Self {
            dim,
            vectors: vectors.into_iter().map(UnitVector::from_raw).collect(),
        })
    }

    /// Length `n` of each vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vectors `k`.
    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[UnitVector] {
        &self.vectors
    }

    pub fn get(&self, k: usize) -> &[f64] {
        self.vectors[k].as_slice()
    }

    /// Largest absolute entry of `G - I` where `G` is the Gram matrix.
    pub fn gram_deviation(&self) -> f64 {
        let raw: Vec<&[f64]> = self.vectors.iter().map(|v| v.as_slice()).collect();
        gram_deviation(&raw)
    }

    /// Reorders every vector's entries so that entry `i` of the result is
    /// entry `order[i]` of the input.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: order.len(),
            });
        }
        let vectors = self
            .vectors
            .iter()
            .map(|v| UnitVector::from_raw(order.iter().map(|&i| v.0[i]).collect()))
            .collect();
        Ok(Self { dim: self.dim, vectors })
    }
}

fn check_common_len<V: AsRef<[f64]>>(vectors: &[V]) -> Result<usize> {
    let dim = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector set"));
        }
    }
    if vectors.len() > dim && dim > 0 {
        return Err(Error::RankDeficient { index: dim });
    }
    Ok(dim)
}

fn gram_deviation<V: AsRef<[f64]>>(vectors: &[V]) -> f64 {
    let mut dev: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let g = dot(a.as_ref(), b.as_ref());
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g - target).abs());
        }
    }
    dev
}

/// Applies `U(a, b)` to `v`.
pub fn reflect(a: &UnitVector, b: &UnitVector, v: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if v.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: v.len(),
        });
    }
    let mut out = v.to_vec();
    reflect_in_place(a.as_slice(), b.as_slice(), &mut out);
    Ok(out)
}

/// Unchecked in-place reflection.
///
/// `1 - <a, b>` is evaluated as `|a - b|^2 / 2`, which is the same quantity for
/// unit vectors but does not cancel when `a` and `b` are close.
pub(crate) fn reflect_in_place(a: &[f64], b: &[f64], v: &mut [f64]) {
    let mut half_sq = 0.0;
    let mut proj = 0.0;
    for ((ai, bi), vi) in a.iter().zip(b).zip(v.iter()) {
        let d = ai - bi;
        half_sq += d * d;
        proj += d * vi;
    }
    half_sq *= 0.5;
    if half_sq < DEGENERATE_TOL {
        return;
    }
    let coef = proj / half_sq;
    for ((ai, bi), vi) in a.iter().zip(b).zip(v.iter_mut()) {
        *vi -= coef * (ai - bi);
    }
}

/// Order in which a plan's reflections are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Pairs `1..=d` in order; carries target vector `k` onto source vector `k`.
    Forward,
    /// Pairs `d..=1`; carries source vector `k` onto target vector `k`.
    Inverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        }
    }
}

/// Product of `d` reflections `U(mu_d, r~_d) ... U(mu_1, r~_1)` where
/// `r~_1 = r_1` and `r~_k` is the image of `r_k` under the first `k - 1`
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationPlan {
    pairs: Vec<(UnitVector, UnitVector)>,
    direction: Direction,
}

impl RotationPlan {
    /// `(mu_k, r~_k)` in application order of the forward direction.
    pub fn pairs(&self) -> &[(UnitVector, UnitVector)] {
        &self.pairs
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// The cached intermediate targets `r~_k`.
    pub fn rotated_targets(&self) -> impl Iterator<Item = &UnitVector> {
        self.pairs.iter().map(|(_, r)| r)
    }

    pub fn dim(&self) -> usize {
        self.pairs.first().map(|(a, _)| a.len()).unwrap_or(0)
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self {
            pairs: self.pairs.clone(),
            direction,
        }
    }

    /// The same operator with the opposite direction.
    pub fn inverse(&self) -> Self {
        self.with_direction(self.direction.flipped())
    }

    pub(crate) fn apply_in_place(&self, v: &mut [f64]) {
        match self.direction {
            Direction::Forward => {
                for (a, b) in &self.pairs {
                    reflect_in_place(a.as_slice(), b.as_slice(), v);
                }
            }
            Direction::Inverse => {
                for (a, b) in self.pairs.iter().rev() {
                    reflect_in_place(a.as_slice(), b.as_slice(), v);
                }
            }
        }
    }

    /// Dense `n x n` matrix of the plan in its current direction.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            self.apply_in_place(&mut col);
            for (i, x) in col.iter().enumerate() {
                m[(i, j)] = *x;
            }
        }
        m
    }
}

/// Builds the plan carrying `target` onto `source` (forward) and `source` onto
/// `target` (inverse). The returned plan has forward direction.
pub fn build_plan(source: &OrthonormalSet, target: &OrthonormalSet) -> Result<RotationPlan> {
    if source.count() != target.count() {
        return Err(Error::DimensionMismatch {
            expected: source.count(),
            found: target.count(),
        });
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    for set in [source, target] {
        let dev = set.gram_deviation();
        if !(dev <= ORTHO_REJECT_TOL) {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
    }

    let mut plan = RotationPlan {
        pairs: Vec::with_capacity(source.count()),
        direction: Direction::Forward,
    };
    for (mu, r) in source.vectors().iter().zip(target.vectors()) {
        let mut r_tilde = r.as_slice().to_vec();
        plan.apply_in_place(&mut r_tilde);
        plan.pairs.push((mu.clone(), UnitVector::from_raw(r_tilde)));
    }
    Ok(plan)
}

/// Applies `plan` to `v` in the plan's direction.
pub fn apply_plan(plan: &RotationPlan, v: &[f64]) -> Result<Vec<f64>> {
    if !plan.pairs.is_empty() && v.len() != plan.dim() {
        return Err(Error::DimensionMismatch {
            expected: plan.dim(),
            found: v.len(),
        });
    }
    let mut out = v.to_vec();
    plan.apply_in_place(&mut out);
    Ok(out)
}

/// Ordered modified Gram-Schmidt with one re-orthogonalization pass.
///
/// The first output vector is the first input scaled to unit norm. A vector
/// whose remainder after projection is below `1e-10` times its own norm is
/// reported as [`Error::RankDeficient`] with its index.
pub fn gram_schmidt<V: AsRef<[f64]>>(vectors: &[V]) -> Result<OrthonormalSet> {
    let dim = check_common_len(vectors)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        let input_norm = norm(v);
        if !(input_norm > 0.0) {
            return Err(Error::RankDeficient { index });
        }
        let mut w = v.to_vec();
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let pivot = norm(&w);
        if pivot < 1e-10 * input_norm {
            return Err(Error::RankDeficient { index });
        }
        w.iter_mut().for_each(|x| *x /= pivot);
        out.push(w);
    }
    Ok(OrthonormalSet {
        dim,
        vectors: out.into_iter().map(UnitVector::from_raw).collect(),
    })
}

/// Symmetric inverse square root of a symmetric positive definite matrix, via
/// its eigendecomposition.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let asymmetry = (m - m.transpose()).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if asymmetry > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::Singular {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let n = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok((&n + n.transpose()) * 0.5)
}
