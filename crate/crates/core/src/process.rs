//! Regression empirical processes `x -> (1/sqrt n) sum_i res_i I(s_i <= x)`
//! and the statistics computed from them.

use crate::basis::ReferenceBasis;
use crate::error::{Error, Result};

/// Resolution of the regular grid added to the scan points when `p >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Points per axis; the grid is `{1/m, ..., 1}^p`.
    pub resolution: usize,
}

impl GridSpec {
    pub const MAX_POINTS: usize = 4_000_000;

    /// 64 per axis for `p = 2`, fewer in higher dimensions.
    pub fn default_for(p: usize) -> Self {
        let resolution = match p {
            0 | 1 => 0,
            2 => 64,
            3 => 16,
            4 => 8,
            _ => 4,
        };
        Self { resolution }
    }
}

/// A right-continuous multivariate step function stored with its evaluation
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess {
    p: usize,
    scan_points: Vec<f64>,
    contributions: Vec<f64>,
    eval_points: Vec<f64>,
    eval_values: Vec<f64>,
    grid: GridSpec,
}

fn dominated(a: &[f64], x: &[f64]) -> bool {
    a.iter().zip(x).all(|(ai, xi)| ai <= xi)
}

impl StepProcess {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn scan_points(&self) -> &[f64] {
        &self.scan_points
    }

    /// Jump sizes `res_i / sqrt(n)`.
    pub fn contributions(&self) -> &[f64] {
        &self.contributions
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn eval_values(&self) -> &[f64] {
        &self.eval_values
    }

    pub fn len(&self) -> usize {
        self.eval_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eval_values.is_empty()
    }

    /// Sum of contributions whose scan point is componentwise `<= x`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.scan_points
            .chunks_exact(self.p)
            .zip(&self.contributions)
            .filter(|(s, _)| dominated(s, x))
            .map(|(_, c)| c)
            .sum()
    }

    /// A process given directly by evaluation points and values.
    pub fn from_evaluations(p: usize, eval_points: Vec<f64>, eval_values: Vec<f64>) -> Result<Self> {
        if p == 0 || eval_points.len() != eval_values.len() * p {
            return Err(Error::DimensionMismatch {
                expected: eval_values.len() * p,
                found: eval_points.len(),
            });
        }
        Ok(Self {
            p,
            scan_points: Vec::new(),
            contributions: Vec::new(),
            eval_points,
            eval_values,
            grid: GridSpec { resolution: 0 },
        })
    }
}

/// Smallest `j` in `0..=m` with `t <= j / m`.
fn grid_bin(t: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut j = ((t * mf).ceil().max(0.0) as usize).min(m);
    while j > 0 && t <= (j - 1) as f64 / mf {
        j -= 1;
    }
    while j < m && t > j as f64 / mf {
        j += 1;
    }
    j
}

/// Builds the process with jumps `residuals[i] / sqrt(n)` at `scan_points`
/// (`n x p`, row-major).
///
/// For `p = 1` it is evaluated at every distinct jump point. For `p >= 2` it
/// is evaluated at every scan point and on the grid of `grid`, which
/// approximates the supremum over `x`.
pub fn build_process(residuals: &[f64], scan_points: &[f64], p: usize, grid: GridSpec) -> Result<StepProcess> {
    let n = residuals.len();
    if p == 0 || scan_points.len() != n * p {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            found: scan_points.len(),
        });
    }
    if scan_points.iter().chain(residuals).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("process input"));
    }
    let scale = 1.0 / (n.max(1) as f64).sqrt();
    let contributions: Vec<f64> = residuals.iter().map(|r| r * scale).collect();

    let (eval_points, eval_values) = if p == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scan_points[a].total_cmp(&scan_points[b]).then(a.cmp(&b)));
        let mut pts: Vec<f64> = Vec::with_capacity(n);
        let mut vals: Vec<f64> = Vec::with_capacity(n);
        let mut acc = 0.0;
        for (k, &i) in order.iter().enumerate() {
            acc += contributions[i];
            let last_of_tie = order.get(k + 1).is_none_or(|&next| scan_points[next] != scan_points[i]);
            if last_of_tie {
                pts.push(scan_points[i]);
                vals.push(acc);
            }
        }
        (pts, vals)
    } else {
        evaluate_multivariate(&contributions, scan_points, p, grid)?
    };

    Ok(StepProcess {
        p,
        scan_points: scan_points.to_vec(),
        contributions,
        eval_points,
        eval_values,
        grid: if p == 1 { GridSpec { resolution: 0 } } else { grid },
    })
}

fn evaluate_multivariate(
    contributions: &[f64],
    scan_points: &[f64],
    p: usize,
    grid: GridSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = contributions.len();
    let m = grid.resolution;
    let cells = (0..p)
        .try_fold(1usize, |acc, _| acc.checked_mul(m + 1))
        .filter(|&c| c <= GridSpec::MAX_POINTS)
        .ok_or(Error::SizeGuard {
            what: "grid points",
            value: usize::MAX,
            limit: GridSpec::MAX_POINTS,
        })?;

    let mut pts = Vec::with_capacity((n + m.pow(p as u32)) * p);
    let mut vals = Vec::with_capacity(n + m.pow(p as u32));

    for s in scan_points.chunks_exact(p) {
        let v: f64 = scan_points
            .chunks_exact(p)
            .zip(contributions)
            .filter(|(t, _)| dominated(t, s))
            .map(|(_, c)| c)
            .sum();
        pts.extend_from_slice(s);
        vals.push(v);
    }

    if m > 0 {
        // Bin each point to the first grid index that dominates it, then take
        // cumulative sums along every axis.
        let stride: Vec<usize> = (0..p).map(|k| (m + 1).pow(k as u32)).collect();
        let mut acc = vec![0.0; cells];
        for (s, c) in scan_points.chunks_exact(p).zip(contributions) {
            let idx: usize = s.iter().zip(&stride).map(|(&t, st)| grid_bin(t, m) * st).sum();
            acc[idx] += c;
        }
        for (axis, &st) in stride.iter().enumerate() {
            for idx in 0..cells {
                if (idx / st) % (m + 1) > 0 {
                    acc[idx] += acc[idx - st];
                }
            }
            let _ = axis;
        }
        let mut multi = vec![1usize; p];
        loop {
            let idx: usize = multi.iter().zip(&stride).map(|(j, st)| j * st).sum();
            pts.extend(multi.iter().map(|&j| j as f64 / m as f64));
            vals.push(acc[idx]);
            let mut k = 0;
            while k < p {
                multi[k] += 1;
                if multi[k] <= m {
                    break;
                }
                multi[k] = 1;
                k += 1;
            }
            if k == p {
                break;
            }
        }
    }
    Ok((pts, vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticKind {
    /// `max_x |w(x)|`.
    KsAbs,
    /// `max_x w(x)`; the process is 0 below every scan point, so this is >= 0.
    KsPlus,
    /// Mean of `w^2` over the evaluation points; a
    /// discrete stand-in for the Cramer-von Mises integral.
    Cvm,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 3] = [StatisticKind::KsAbs, StatisticKind::KsPlus, StatisticKind::Cvm];

    pub fn id(self) -> &'static str {
        match self {
            StatisticKind::KsAbs => "ks_abs",
            StatisticKind::KsPlus => "ks_plus",
            StatisticKind::Cvm => "cvm",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == id)
            .ok_or_else(|| Error::UnknownId {
                kind: "statistic",
                id: id.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticResult {
    pub name: StatisticKind,
    pub value: f64,
    /// Evaluation point where the maximum is attained (all zeros when the
    /// maximum is the zero level below every scan point).
    pub argmax: Vec<f64>,
}

/// `ks_abs`, `ks_plus` and `cvm`, in that order.
pub fn ks_statistics(proc: &StepProcess) -> Vec<StatisticResult> {
    let p = proc.p;
    let point = |k: usize| proc.eval_points[k * p..(k + 1) * p].to_vec();
    let origin = vec![0.0; p];

    let mut abs_best = (0.0, None);
    let mut plus_best = (0.0, None);
    let mut sum_sq = 0.0;
    for (k, &v) in proc.eval_values.iter().enumerate() {
        if v.abs() > abs_best.0 {
            abs_best = (v.abs(), Some(k));
        }
        if v > plus_best.0 {
            plus_best = (v, Some(k));
        }
        sum_sq += v * v;
    }
    let cvm = if proc.eval_values.is_empty() {
        0.0
    } else {
        sum_sq / proc.eval_values.len() as f64
    };
    let at = |best: Option<usize>| best.map(point).unwrap_or_else(|| origin.clone());
    vec![
        StatisticResult {
            name: StatisticKind::KsAbs,
            value: abs_best.0,
            argmax: at(abs_best.1),
        },
        StatisticResult {
            name: StatisticKind::KsPlus,
            value: plus_best.0,
            argmax: at(plus_best.1),
        },
        StatisticResult {
            name: StatisticKind::Cvm,
            value: cvm,
            argmax: origin.clone(),
        },
    ]
}

/// Value of a single statistic.
pub fn statistic(proc: &StepProcess, kind: StatisticKind) -> f64 {
    ks_statistics(proc)
        .into_iter()
        .find(|s| s.name == kind)
        .map(|s| s.value)
        .unwrap_or(0.0)
}

/// Kolmogorov distribution `P(sup |B(t)| <= x)` for a Brownian bridge `B`.
///
/// Uses `1 - 2 sum (-1)^(k-1) exp(-2 k^2 x^2)` for `x >= 1` and the Jacobi
/// theta form `sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))` below, where the
/// alternating series converges slowly.
pub fn kolmogorov_cdf(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("Kolmogorov cdf at {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let value = if x >= 1.0 {
        let mut sum = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        1.0 - 2.0 * sum
    } else {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=100 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-16 * sum.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (2.0 * std::f64::consts::PI).sqrt() / x * sum
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `G(min(x, y)) - sum_k Q_k(x) Q_k(y)` with `G` uniform on `[0,1]^p`: the
/// covariance of Brownian motion projected orthogonally to the basis.
pub fn limit_covariance(x: &[f64], y: &[f64], basis: &ReferenceBasis) -> Result<f64> {
    let qx: Vec<f64> = (0..basis.d()).map(|k| basis.cumulative(k, x)).collect::<Result<_>>()?;
    let qy: Vec<f64> = (0..basis.d()).map(|k| basis.cumulative(k, y)).collect::<Result<_>>()?;
    let g: f64 = x.iter().zip(y).map(|(a, b)| a.min(*b)).product();
    Ok(g - qx.iter().zip(&qy).map(|(a, b)| a * b).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, unit_grid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_residuals_give_zero_process() {
        let p = build_process(&[0.0; 5], &unit_grid(5), 1, GridSpec::default_for(1)).unwrap();
        assert!(p.eval_values().iter().all(|&v| v == 0.0));
        assert!(ks_statistics(&p).iter().all(|s| s.value == 0.0));
    }

    #[test]
    fn single_jump() {
        let c = -0.7;
        let p = build_process(&[c], &[0.5], 1, GridSpec::default_for(1)).unwrap();
        assert_eq!(p.value_at(&[0.49]), 0.0);
        assert_eq!(p.value_at(&[0.5]), c);
        assert_eq!(p.value_at(&[0.9]), c);
        let s = ks_statistics(&p);
        assert_eq!(s[0].value, c.abs());
        assert_eq!(s[1].value, 0.0);
        let p = build_process(&[0.3], &[0.5], 1, GridSpec::default_for(1)).unwrap();
        assert_eq!(ks_statistics(&p)[1].value, 0.3);
    }

    #[test]
    fn hand_values() {
        let p = StepProcess::from_evaluations(1, vec![0.2, 0.5, 0.8], vec![0.1, -0.3, 0.2]).unwrap();
        let s = ks_statistics(&p);
        assert!((s[0].value - 0.3).abs() < 1e-15);
        assert_eq!(s[0].argmax, vec![0.5]);
        assert!((s[1].value - 0.2).abs() < 1e-15);
        assert!((s[2].value - (0.01 + 0.09 + 0.04) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn time_transformed_partial_sums() {
        let res = [0.4, -1.0, 0.3, 0.9, -0.2, 0.1];
        let n = res.len();
        let p = build_process(&res, &unit_grid(n), 1, GridSpec::default_for(1)).unwrap();
        let mut acc = 0.0;
        for (i, r) in res.iter().enumerate() {
            acc += r;
            assert!((p.eval_values()[i] - acc / (n as f64).sqrt()).abs() < 1e-15);
            assert_eq!(p.eval_points()[i], (i + 1) as f64 / n as f64);
        }
    }

    #[test]
    fn ties_are_merged() {
        let p = build_process(&[1.0, 2.0, 3.0], &[0.5, 0.2, 0.5], 1, GridSpec::default_for(1)).unwrap();
        assert_eq!(p.eval_points(), &[0.2, 0.5]);
        let s3 = 3f64.sqrt();
        assert!((p.eval_values()[1] - 6.0 / s3).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(build_process(&[1.0, 2.0], &[0.5], 1, GridSpec::default_for(1)).is_err());
    }

    #[test]
    fn multivariate_grid_matches_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in 2..=3 {
            let n = 60;
            let pts: Vec<f64> = (0..n * p)
                .map(|k| if k % 7 == 0 { 0.25 } else { rng.random::<f64>() })
                .collect();
            let res: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grid = GridSpec { resolution: 8 };
            let proc = build_process(&res, &pts, p, grid).unwrap();
            assert_eq!(proc.len(), n + 8usize.pow(p as u32));
            for (x, v) in proc.eval_points().chunks_exact(p).zip(proc.eval_values()) {
                assert!((proc.value_at(x) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kolmogorov_values() {
        assert_eq!(kolmogorov_cdf(0.0).unwrap(), 0.0);
        assert!((kolmogorov_cdf(5.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((kolmogorov_cdf(0.82757).unwrap() - 0.5).abs() < 1e-4);
        // Classical critical values.
        assert!((kolmogorov_cdf(1.3581).unwrap() - 0.95).abs() < 1e-4);
        assert!((kolmogorov_cdf(1.6276).unwrap() - 0.99).abs() < 1e-4);
        assert!(kolmogorov_cdf(-0.1).is_err());
    }

    #[test]
    fn kolmogorov_branches_agree_and_monotone() {
        // Both series are exact; compare them where both converge fast.
        for &x in &[0.6, 0.8, 1.0, 1.2] {
            let alt: f64 = 1.0
                - 2.0
                    * (1..200)
                        .map(|k| {
                            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                            s * (-2.0 * (k * k) as f64 * x * x).exp()
                        })
                        .sum::<f64>();
            assert!((kolmogorov_cdf(x).unwrap() - alt).abs() < 1e-12);
        }
        let mut prev = 0.0;
        for i in 0..1000 {
            let v = kolmogorov_cdf(i as f64 * 0.004).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn limit_covariance_forms() {
        let b1 = make_basis(1, 1).unwrap();
        let b2 = make_basis(1, 2).unwrap();
        for &s in &[0.1f64, 0.35, 0.7] {
            for &t in &[0.2, 0.5, 0.9] {
                let bb = s.min(t) - s * t;
                assert!((limit_covariance(&[s], &[t], &b1).unwrap() - bb).abs() < 1e-15);
                let two = bb - 3.0 * s * (1.0 - s) * t * (1.0 - t);
                assert!((limit_covariance(&[s], &[t], &b2).unwrap() - two).abs() < 1e-14);
            }
        }
        let b = make_basis(2, 4).unwrap();
        assert!(limit_covariance(&[1.0, 1.0], &[1.0, 1.0], &b).unwrap().abs() < 1e-14);
        assert!(limit_covariance(&[1.2, 1.0], &[1.0, 1.0], &b).is_err());
    }

    proptest! {
        #[test]
        fn statistic_ordering(res in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let n = res.len();
            let proc = build_process(&res, &unit_grid(n), 1, GridSpec::default_for(1)).unwrap();
            let s = ks_statistics(&proc);
            let last = *proc.eval_values().last().unwrap();
            prop_assert!(s[0].value >= s[1].value);
            prop_assert!(s[1].value >= last.max(0.0));
            prop_assert!(s[2].value >= 0.0);
        }
    }
}
