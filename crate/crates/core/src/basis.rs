//! Reference orthonormal systems on `[0,1]^p` and their cumulative integrals.
//!
//! In one dimension the system is the orthonormal shifted Legendre family
//! `sqrt(2j+1) P_j(2t - 1)`. In `p` dimensions it is the tensor product of the
//! one-dimensional family, enumerated by total degree and then in
//! lexicographically descending order of the multi-degree, so the first
//! element is always the constant `1`.

use crate::error::{Error, Result};
use crate::rotations::{gram_schmidt, OrthonormalSet};

/// Largest supported index per coordinate (degree `MAX_INDEX - 1`).
pub const MAX_INDEX: usize = 12;

/// Legendre polynomials `P_0..=P_max` at `u` by the three-term recurrence.
fn legendre_table(max: usize, u: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(max + 1);
    p.push(1.0);
    if max >= 1 {
        p.push(u);
    }
    for j in 1..max {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * u * p[j] - jf * p[j - 1]) / (jf + 1.0);
        p.push(next);
    }
    p
}

fn shifted(degree: usize, t: f64) -> f64 {
    let p = legendre_table(degree, 2.0 * t - 1.0);
    ((2 * degree + 1) as f64).sqrt() * p[degree]
}

/// `int_0^t sqrt(2j+1) P_j(2s - 1) ds`, using
/// `int P_j = (P_{j+1} - P_{j-1}) / (2j + 1)` and `P_{j+1}(-1) = P_{j-1}(-1)`.
fn shifted_integral(degree: usize, t: f64) -> f64 {
    if degree == 0 {
        return t;
    }
    let p = legendre_table(degree + 1, 2.0 * t - 1.0);
    let c = (2 * degree + 1) as f64;
    c.sqrt() * (p[degree + 1] - p[degree - 1]) / (2.0 * c)
}

fn check_unit_interval(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("point {t} outside [0, 1]")));
    }
    Ok(())
}

/// Orthonormal shifted Legendre polynomial of degree `k - 1` on `[0, 1]`.
pub fn legendre_shifted(k: usize, t: f64) -> Result<f64> {
    if !(1..=MAX_INDEX).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "polynomial index {k} outside 1..={MAX_INDEX}"
        )));
    }
    check_unit_interval(t)?;
    Ok(shifted(k - 1, t))
}

/// Antiderivative of [`legendre_shifted`] vanishing at 0.
pub fn legendre_shifted_integral(k: usize, t: f64) -> Result<f64> {
    if !(1..=MAX_INDEX).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "polynomial index {k} outside 1..={MAX_INDEX}"
        )));
    }
    check_unit_interval(t)?;
    Ok(shifted_integral(k - 1, t))
}

/// `d` tensor-product shifted Legendre functions on `[0,1]^p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceBasis {
    p: usize,
    degrees: Vec<Vec<usize>>,
}

impl ReferenceBasis {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.degrees.len()
    }

    /// Per-coordinate polynomial degrees of element `k` (0-based).
    pub fn degrees(&self, k: usize) -> &[usize] {
        &self.degrees[k]
    }

    /// Human-readable description, e.g. `legendre[p=2](0,0 1,0 0,1 2,0)`.
    pub fn describe(&self) -> String {
        let terms: Vec<String> = self
            .degrees
            .iter()
            .map(|m| m.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        format!("legendre[p={}]({})", self.p, terms.join(" "))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x.len(),
            });
        }
        x.iter().try_for_each(|&t| check_unit_interval(t))
    }

    /// `r_k(x)` for 0-based `k`.
    pub fn eval(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(k, x))
    }

    /// `Q_k(x) = int_{z <= x} r_k(z) dz` for 0-based `k`.
    pub fn cumulative(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.cumulative_unchecked(k, x))
    }

    pub(crate) fn eval_unchecked(&self, k: usize, x: &[f64]) -> f64 {
        self.degrees[k].iter().zip(x).map(|(&j, &t)| shifted(j, t)).product()
    }

    pub(crate) fn cumulative_unchecked(&self, k: usize, x: &[f64]) -> f64 {
        self.degrees[k]
            .iter()
            .zip(x)
            .map(|(&j, &t)| shifted_integral(j, t))
            .product()
    }
}

/// Appends every multi-degree of length `p` with entries `< MAX_INDEX` summing
/// to `total`, in lexicographically descending order.
fn push_compositions(p: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, limit: usize) {
    if out.len() >= limit {
        return;
    }
    if prefix.len() == p - 1 {
        if total < MAX_INDEX {
            let mut m = prefix.clone();
            m.push(total);
            out.push(m);
        }
        return;
    }
    for first in (0..=total.min(MAX_INDEX - 1)).rev() {
        prefix.push(first);
        push_compositions(p, total - first, prefix, out, limit);
        prefix.pop();
        if out.len() >= limit {
            return;
        }
    }
}

/// First `d` elements of the tensor-product system on `[0,1]^p`.
pub fn make_basis(p: usize, d: usize) -> Result<ReferenceBasis> {
    if p == 0 || d == 0 {
        return Err(Error::InvalidParameter("basis needs p >= 1 and d >= 1".into()));
    }
    let cap = (0..p)
        .try_fold(1usize, |acc, _| acc.checked_mul(MAX_INDEX))
        .unwrap_or(usize::MAX);
    if d > cap {
        return Err(Error::SizeGuard {
            what: "basis size",
            value: d,
            limit: cap,
        });
    }
    let mut degrees = Vec::with_capacity(d);
    let mut total = 0;
    while degrees.len() < d {
        push_compositions(p, total, &mut Vec::with_capacity(p), &mut degrees, d);
        total += 1;
    }
    Ok(ReferenceBasis { p, degrees })
}

/// The grid `1/n, 2/n, ..., 1` as `n` one-dimensional points.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// Evaluates the basis at `points` (`n x p`, row-major), scales by `1/sqrt(n)`
/// and orthonormalizes exactly. The first (constant) direction is preserved.
/// Too few or coincident points surface as [`Error::RankDeficient`].
pub fn sample_on_points(basis: &ReferenceBasis, points: &[f64]) -> Result<OrthonormalSet> {
    let p = basis.p();
    if !points.len().is_multiple_of(p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: points.len() % p,
        });
    }
    let n = points.len() / p;
    for x in points.chunks_exact(p) {
        basis.check_point(x)?;
    }
    let scale = 1.0 / (n as f64).sqrt();
    let vectors: Vec<Vec<f64>> = (0..basis.d())
        .map(|k| {
            points
                .chunks_exact(p)
                .map(|x| basis.eval_unchecked(k, x) * scale)
                .collect()
        })
        .collect();
    gram_schmidt(&vectors)
}
