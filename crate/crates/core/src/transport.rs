//! Optimal assignment of covariate points onto a uniform anchor set in
//! `[0,1]^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How anchor points are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    /// i.i.d. uniform points from a seeded generator.
    Random { seed: u64 },
    /// The Halton sequence in prime bases 2, 3, 5, ...
    Halton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    points: Vec<f64>,
    p: usize,
    pub mode: AnchorMode,
}

impl AnchorSet {
    pub fn n(&self) -> usize {
        self.points.len() / self.p
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.p..(j + 1) * self.p]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&q| q * q <= c)
            .all(|&q| !c.is_multiple_of(q))
        {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// Van der Corput radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    out
}

pub fn generate_anchors(n: usize, p: usize, mode: AnchorMode) -> Result<AnchorSet> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("anchors need n >= 1 and p >= 1".into()));
    }
    let points = match mode {
        AnchorMode::Halton => {
            let bases = first_primes(p);
            (1..=n as u64)
                .flat_map(|i| bases.iter().map(move |&b| radical_inverse(i, b)))
                .collect()
        }
        AnchorMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n * p).map(|_| rng.random::<f64>()).collect()
        }
    };
    Ok(AnchorSet { points, p, mode })
}

/// A bijection `i -> sigma[i]` from covariate points onto anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub sigma: Vec<usize>,
    /// `sum_i |X_i - xi_sigma(i)|`, rounded once from the exact sum of the
    /// terms (for `p = 1` the differences themselves are kept exact), so
    /// assignments with equal real cost report identical values.
    pub cost: f64,
}

impl Assignment {
    /// Row `i` is the anchor matched to covariate point `i`.
    pub fn transported_points(&self, anchors: &AnchorSet) -> Vec<f64> {
        self.sigma
            .iter()
            .flat_map(|&j| anchors.point(j).iter().copied())
            .collect()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-pair distances `|X_i - xi_sigma(i)|`.
pub fn pair_costs(x: &[f64], anchors: &AnchorSet, sigma: &[usize]) -> Vec<f64> {
    let p = anchors.p();
    sigma
        .iter()
        .enumerate()
        .map(|(i, &j)| distance(&x[i * p..(i + 1) * p], anchors.point(j)))
        .collect()
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Correctly rounded sum (Shewchuk's partials, as in Python's `fsum`).
fn exact_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in terms {
        let mut k = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let (hi, lo) = two_sum(x, y);
            if lo != 0.0 {
                partials[k] = lo;
                k += 1;
            }
            x = hi;
        }
        partials.truncate(k);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let (s, e) = two_sum(hi, y);
        hi = s;
        lo = e;
        if lo != 0.0 {
            break;
        }
    }
    // Round half to even across the remaining partials.
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

fn total_cost(x: &[f64], anchors: &AnchorSet, sigma: &[usize]) -> f64 {
    let p = anchors.p();
    if p == 1 {
        exact_sum(sigma.iter().enumerate().flat_map(|(i, &j)| {
            let (s, e) = two_sum(x[i], -anchors.points[j]);
            if s < 0.0 {
                [-s, -e]
            } else {
                [s, e]
            }
        }))
    } else {
        exact_sum(pair_costs(x, anchors, sigma))
    }
}

fn check_inputs(x: &[f64], anchors: &AnchorSet) -> Result<usize> {
    let p = anchors.p();
    if x.len() != anchors.points.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.points.len(),
            found: x.len(),
        });
    }
    if x.iter().chain(anchors.points()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    Ok(x.len() / p)
}

/// Exact minimum-cost assignment under unsquared Euclidean cost, by
/// successive shortest augmenting paths with dual potentials (O(n^3)).
pub fn solve_assignment(x: &[f64], anchors: &AnchorSet) -> Result<Assignment> {
    let n = check_inputs(x, anchors)?;
    let p = anchors.p();
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| distance(&x[i * p..(i + 1) * p], anchors.point(j)))
        .collect();

    // 1-based rows/columns; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = row[j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        sigma[row_of[j] - 1] = j - 1;
    }
    let cost = total_cost(x, anchors, &sigma);
    Ok(Assignment { sigma, cost })
}

/// Largest `n` accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Advances `perm` to the next permutation in lexicographic order.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Exhaustive search over all `n!` bijections; among equal costs the
/// lexicographically smallest `sigma` wins.
pub fn brute_force_assignment(x: &[f64], anchors: &AnchorSet) -> Result<Assignment> {
    let n = check_inputs(x, anchors)?;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard {
            what: "n",
            value: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = Assignment {
        cost: total_cost(x, anchors, &perm),
        sigma: perm.clone(),
    };
    while next_permutation(&mut perm) {
        let c = total_cost(x, anchors, &perm);
        if c < best.cost {
            best = Assignment {
                sigma: perm.clone(),
                cost: c,
            };
        }
    }
    Ok(best)
}

fn dominated(a: &[f64], x: &[f64]) -> bool {
    a.iter().zip(x).all(|(ai, xi)| ai <= xi)
}

/// `(1/n) #{i : T(X_i) <= x}` componentwise. Because `T` is a bijection onto
/// the anchors this equals [`anchor_ecdf`] exactly.
pub fn transported_ecdf(assignment: &Assignment, anchors: &AnchorSet, x: &[f64]) -> f64 {
    let n = assignment.sigma.len();
    let hits = assignment
        .sigma
        .iter()
        .filter(|&&j| dominated(anchors.point(j), x))
        .count();
    hits as f64 / n as f64
}

pub fn anchor_ecdf(anchors: &AnchorSet, x: &[f64]) -> f64 {
    let n = anchors.n();
    (0..n).filter(|&j| dominated(anchors.point(j), x)).count() as f64 / n as f64
}

/// Per-coordinate affine map of the rows of `x` (`n x p`) onto `[0,1]^p` by
/// sample minimum and maximum. Constant columns map to `0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRescale {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl UnitRescale {
    pub fn fit(x: &[f64], p: usize) -> Self {
        let mut mins = vec![f64::INFINITY; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        for row in x.chunks_exact(p) {
            for k in 0..p {
                mins[k] = mins[k].min(row[k]);
                maxs[k] = maxs[k].max(row[k]);
            }
        }
        Self { mins, maxs }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.mins.len();
        x.chunks_exact(p)
            .flat_map(|row| {
                row.iter().enumerate().map(|(k, &v)| {
                    let span = self.maxs[k] - self.mins[k];
                    if span > 0.0 {
                        ((v - self.mins[k]) / span).clamp(0.0, 1.0)
                    } else {
                        0.5
                    }
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors_from(points: Vec<f64>, p: usize) -> AnchorSet {
        AnchorSet {
            points,
            p,
            mode: AnchorMode::Halton,
        }
    }

    #[test]
    fn exact_sum_rounds_once() {
        assert_eq!(exact_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(Vec::<f64>::new()), 0.0);
        let v = [1e308, 1e-308, -1e308, 3.5];
        assert_eq!(exact_sum(v), 3.5);
    }

    #[test]
    fn nested_intervals_tie_exactly() {
        // |a - d| + |b - c| equals |a - c| + |b - d| for a < b < c < d.
        let anchors = AnchorSet {
            points: vec![0.7, 0.9],
            p: 1,
            mode: AnchorMode::Halton,
        };
        let x = [0.1, 0.3];
        assert_eq!(total_cost(&x, &anchors, &[0, 1]), total_cost(&x, &anchors, &[1, 0]));
    }

    #[test]
    fn halton_one_dimension() {
        let a = generate_anchors(4, 1, AnchorMode::Halton).unwrap();
        assert_eq!(a.points(), &[0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn halton_two_dimensions_uses_bases_two_and_three() {
        let a = generate_anchors(3, 2, AnchorMode::Halton).unwrap();
        let expect = [[0.5, 1.0 / 3.0], [0.25, 2.0 / 3.0], [0.75, 1.0 / 9.0]];
        for (j, e) in expect.iter().enumerate() {
            assert!((a.point(j)[0] - e[0]).abs() < 1e-15);
            assert!((a.point(j)[1] - e[1]).abs() < 1e-15);
        }
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn random_anchors_are_reproducible() {
        let a = generate_anchors(50, 3, AnchorMode::Random { seed: 7 }).unwrap();
        let b = generate_anchors(50, 3, AnchorMode::Random { seed: 7 }).unwrap();
        let c = generate_anchors(50, 3, AnchorMode::Random { seed: 8 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points(), c.points());
        assert!(a.points().iter().all(|v| (0.0..1.0).contains(v)));
        assert!(generate_anchors(0, 1, AnchorMode::Halton).is_err());
    }

    #[test]
    fn identical_points_match_identically() {
        let a = generate_anchors(9, 2, AnchorMode::Halton).unwrap();
        let asg = solve_assignment(a.points(), &a).unwrap();
        assert_eq!(asg.sigma, (0..9).collect::<Vec<_>>());
        assert_eq!(asg.cost, 0.0);
    }

    #[test]
    fn two_point_example() {
        let anchors = anchors_from(vec![0.8, 0.2], 1);
        let x = [0.1, 0.9];
        let asg = solve_assignment(&x, &anchors).unwrap();
        assert_eq!(asg.sigma, vec![1, 0]);
        assert!((asg.cost - 0.2).abs() < 1e-15);
        assert_eq!(brute_force_assignment(&x, &anchors).unwrap(), asg);
    }

    #[test]
    fn brute_force_basics() {
        let anchors = anchors_from(vec![0.3], 1);
        let asg = brute_force_assignment(&[0.6], &anchors).unwrap();
        assert_eq!(asg.sigma, vec![0]);
        let big = generate_anchors(9, 1, AnchorMode::Halton).unwrap();
        assert!(matches!(
            brute_force_assignment(big.points(), &big),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = generate_anchors(3, 1, AnchorMode::Halton).unwrap();
        assert!(solve_assignment(&[0.1, 0.2], &a).is_err());
        assert!(solve_assignment(&[0.1, f64::NAN, 0.3], &a).is_err());
    }

    #[test]
    fn ecdf_identities() {
        let a = generate_anchors(40, 2, AnchorMode::Random { seed: 1 }).unwrap();
        let x = generate_anchors(40, 2, AnchorMode::Random { seed: 2 }).unwrap();
        let asg = solve_assignment(x.points(), &a).unwrap();
        assert_eq!(transported_ecdf(&asg, &a, &[1.0, 1.0]), 1.0);
        let min0 = (0..40).map(|j| a.point(j)[0]).fold(f64::INFINITY, f64::min);
        assert_eq!(transported_ecdf(&asg, &a, &[min0 * 0.5, 1.0]), 0.0);
        let probe = generate_anchors(100, 2, AnchorMode::Random { seed: 3 }).unwrap();
        for k in 0..100 {
            let q = probe.point(k);
            assert_eq!(transported_ecdf(&asg, &a, q), anchor_ecdf(&a, q));
        }
    }

    #[test]
    fn rescale_maps_into_unit_cube() {
        let x = [2.0, -1.0, 4.0, 3.0, 3.0, 1.0];
        let r = UnitRescale::fit(&x, 2);
        let y = r.apply(&x);
        assert_eq!(y, vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5]);
        let c = UnitRescale::fit(&[1.0, 1.0], 1);
        assert_eq!(c.apply(&[1.0, 1.0]), vec![0.5, 0.5]);
    }
}
