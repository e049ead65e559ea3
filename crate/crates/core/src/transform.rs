//! Distribution-free residuals: raw residuals rotated so that the score
//! directions `mu_k` are carried onto the reference directions `r_k`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rotations::{apply_plan, build_plan, Direction, OrthonormalSet, RotationPlan};

/// Largest `n` for which [`transform_matrix`] materializes the dense map.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedResiduals {
    /// Rotated residuals, in scan order.
    pub e_hat: Vec<f64>,
    /// The rotation, in the direction that maps `mu_k` to `r_k`.
    pub plan: RotationPlan,
    pub mu_set: OrthonormalSet,
    pub r_set: OrthonormalSet,
    /// `scan_order[i]` is the original index of scan position `i`.
    pub scan_order: Vec<usize>,
    /// False when the underlying fit did not converge.
    pub reliable: bool,
}

impl TransformedResiduals {
    /// Undoes the rotation, returning the raw residuals in scan order.
    pub fn recover(&self) -> Vec<f64> {
        let mut out = self.e_hat.clone();
        self.plan.inverse().apply_in_place(&mut out);
        out
    }

    pub fn with_scan_order(mut self, scan_order: Vec<usize>) -> Result<Self> {
        if scan_order.len() != self.e_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.e_hat.len(),
                found: scan_order.len(),
            });
        }
        self.scan_order = scan_order;
        Ok(self)
    }

    pub fn mark_unreliable(mut self) -> Self {
        self.reliable = false;
        self
    }

    /// Divides the rotated residuals by `sqrt(sum eps_hat^2 / (n - d))`.
    pub fn studentized(mut self) -> Self {
        let n = self.e_hat.len();
        let d = self.mu_set.count();
        if n > d {
            // The rotation is norm preserving, so the raw residual scale is
            // available from e_hat directly.
            let ss: f64 = self.e_hat.iter().map(|e| e * e).sum();
            let sd = (ss / (n - d) as f64).sqrt();
            if sd > 0.0 {
                self.e_hat.iter_mut().for_each(|e| *e /= sd);
            }
        }
        self
    }
}

/// Rotates `eps_hat` (in scan order) by the plan carrying `mu_set` onto
/// `r_set`. For `d = 1` this is
/// `e = eps - <eps, r> / (1 - <mu, r>) (r - mu)` whenever `eps` is orthogonal
/// to `mu`.
pub fn transform_residuals(
    eps_hat: &[f64],
    mu_set: &OrthonormalSet,
    r_set: &OrthonormalSet,
) -> Result<TransformedResiduals> {
    let plan = build_plan(mu_set, r_set)?.with_direction(Direction::Inverse);
    let e_hat = apply_plan(&plan, eps_hat)?;
    Ok(TransformedResiduals {
        e_hat,
        plan,
        mu_set: mu_set.clone(),
        r_set: r_set.clone(),
        scan_order: (0..eps_hat.len()).collect(),
        reliable: true,
    })
}

/// The dense map `A = K (I - sum mu_k mu_k^T)` taking errors to rotated
/// residuals for a model linear in its parameters.
pub fn transform_matrix(mu_set: &OrthonormalSet, r_set: &OrthonormalSet) -> Result<DMatrix<f64>> {
    let n = mu_set.dim();
    if n > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            what: "n",
            value: n,
            limit: DENSE_LIMIT,
        });
    }
    let plan = build_plan(mu_set, r_set)?.with_direction(Direction::Inverse);
    let mut a = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        for mu in mu_set.vectors() {
            let mu = mu.as_slice();
            let c = mu[j];
            col.iter_mut().zip(mu).for_each(|(x, m)| *x -= c * m);
        }
        plan.apply_in_place(&mut col);
        a.set_column(j, &nalgebra::DVector::from_column_slice(&col));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, sample_on_points, unit_grid};
    use crate::model::{fit_linear, scan_order, score_basis, CenteredLinear, Sample, SimpleLinear};
    use crate::rotations::{dot, gram_schmidt, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn projector_complement(set: &OrthonormalSet) -> DMatrix<f64> {
        let n = set.dim();
        let mut m = DMatrix::identity(n, n);
        for v in set.vectors() {
            let c = DMatrix::from_column_slice(n, 1, v.as_slice());
            m -= &c * c.transpose();
        }
        m
    }

    fn simple_linear_sets(seed: u64, n: usize) -> (Sample, OrthonormalSet, OrthonormalSet, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let s = Sample::new(x, 1, y).unwrap();
        let fit = fit_linear(&SimpleLinear, &s).unwrap();
        let order = scan_order(&s);
        let mu = score_basis(&SimpleLinear, &fit, &s, &order).unwrap();
        let r = sample_on_points(&make_basis(1, 1).unwrap(), &unit_grid(n)).unwrap();
        (s, mu, r, order)
    }

    #[test]
    fn one_dimensional_closed_form() {
        let (s, mu, r, order) = simple_linear_sets(1, 40);
        let fit = fit_linear(&SimpleLinear, &s).unwrap();
        let eps: Vec<f64> = order.iter().map(|&i| fit.residuals[i]).collect();
        let t = transform_residuals(&eps, &mu, &r).unwrap();
        let z = mu.get(0);
        let rv = r.get(0);
        let coef = dot(&eps, rv) / (1.0 - dot(z, rv));
        for i in 0..eps.len() {
            let expect = eps[i] - coef * (rv[i] - z[i]);
            assert!((t.e_hat[i] - expect).abs() < 1e-12);
        }
        // The rotated residuals are orthogonal to r and keep their norm.
        assert!(dot(&t.e_hat, rv).abs() < 1e-8 * norm(&t.e_hat));
        assert!((norm(&t.e_hat) - norm(&eps)).abs() < 1e-10);
    }

    #[test]
    fn identical_sets_leave_residuals_unchanged() {
        let (_, mu, _, _) = simple_linear_sets(2, 25);
        let eps: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let t = transform_residuals(&eps, &mu, &mu).unwrap();
        assert_eq!(t.e_hat, eps);
    }

    #[test]
    fn complement_is_fixed_and_rotation_recoverable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let raw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..3)
                .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let mu = gram_schmidt(&raw(&mut rng)).unwrap();
        let r = gram_schmidt(&raw(&mut rng)).unwrap();
        let t0 = transform_residuals(&vec![0.0; n], &mu, &r).unwrap();
        let mut span: Vec<Vec<f64>> = mu.vectors().iter().map(|v| v.as_slice().to_vec()).collect();
        span.extend(t0.plan.rotated_targets().map(|v| v.as_slice().to_vec()));
        let q = gram_schmidt(&span).unwrap();
        let mut eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t = transform_residuals(&eps, &mu, &r).unwrap();
        assert!(t.recover().iter().zip(&eps).all(|(a, b)| (a - b).abs() < 1e-9));
        for v in q.vectors() {
            let c = dot(v.as_slice(), &eps);
            eps.iter_mut().zip(v.as_slice()).for_each(|(e, vi)| *e -= c * vi);
        }
        let t = transform_residuals(&eps, &mu, &r).unwrap();
        assert!(t.e_hat.iter().zip(&eps).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn covariance_identity_simple_linear() {
        let (_, mu, r, _) = simple_linear_sets(4, 60);
        let a = transform_matrix(&mu, &r).unwrap();
        let target = projector_complement(&r);
        assert!((&a * a.transpose() - target).amax() < 1e-10);
    }

    #[test]
    fn covariance_identity_centered_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50;
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let s = Sample::new(x, 1, vec![0.0; n]).unwrap();
        let m = CenteredLinear::for_sample(&s);
        let fit = fit_linear(&m, &s).unwrap();
        let order = scan_order(&s);
        let mu = score_basis(&m, &fit, &s, &order).unwrap();
        let r = sample_on_points(&make_basis(1, 2).unwrap(), &unit_grid(n)).unwrap();
        let t = transform_residuals(&vec![0.0; n], &mu, &r).unwrap();
        // First pair is the constant direction on both sides: identity reflection.
        let first = &t.plan.pairs()[0];
        assert!(first
            .0
            .as_slice()
            .iter()
            .zip(first.1.as_slice())
            .all(|(a, b)| (a - b).abs() < 1e-14));
        let a = transform_matrix(&mu, &r).unwrap();
        assert!((&a * a.transpose() - projector_complement(&r)).amax() < 1e-10);
    }

    #[test]
    fn transform_matrix_size_guard() {
        let big = OrthonormalSet::new(vec![{
            let mut v = vec![0.0; DENSE_LIMIT + 1];
            v[0] = 1.0;
            v
        }])
        .unwrap();
        assert!(matches!(transform_matrix(&big, &big), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn studentized_has_unit_scale() {
        let (s, mu, r, order) = simple_linear_sets(6, 80);
        let fit = fit_linear(&SimpleLinear, &s).unwrap();
        let eps: Vec<f64> = order.iter().map(|&i| fit.residuals[i] * 4.0).collect();
        let t = transform_residuals(&eps, &mu, &r).unwrap().studentized();
        let ss: f64 = t.e_hat.iter().map(|e| e * e).sum();
        assert!((ss / 79.0 - 1.0).abs() < 1e-12);
    }
}
