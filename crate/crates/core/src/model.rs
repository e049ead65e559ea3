//! Regression models, least-squares fitting and the orthonormal score basis.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rotations::{gram_schmidt, inv_sqrt_spd, OrthonormalSet};

/// Covariates (`n x p`, row-major) and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    p: usize,
    y: Vec<f64>,
}

impl Sample {
    /// `x` holds `y.len()` rows of `p` covariates each, row-major.
    pub fn new(x: Vec<f64>, p: usize, y: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("covariate dimension must be >= 1".into()));
        }
        if x.len() != y.len() * p {
            return Err(Error::DimensionMismatch {
                expected: y.len() * p,
                found: x.len(),
            });
        }
        if y.len() < p + 1 {
            return Err(Error::InvalidParameter(format!(
                "need at least p + 1 = {} observations, got {}",
                p + 1,
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample"));
        }
        Ok(Self { x, p, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), p, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same covariates, new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.p, y)
    }

    fn column_mean(&self, j: usize) -> f64 {
        self.rows().map(|r| r[j]).sum::<f64>() / self.n() as f64
    }
}

/// Order in which observations are scanned by the regression process.
///
/// For `p = 1` this is ascending covariate order with ties broken by original
/// index; for `p >= 2` it is the identity.
pub fn scan_order(sample: &Sample) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sample.n()).collect();
    if sample.p() == 1 {
        order.sort_by(|&a, &b| sample.x(a)[0].total_cmp(&sample.x(b)[0]).then(a.cmp(&b)));
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SimpleLinear,
    CenteredLinear,
    BasisLinear,
    Bilinear2d,
    Custom,
}

impl ModelKind {
    pub fn is_linear(self) -> bool {
        !matches!(self, ModelKind::Custom)
    }
}

/// Mean function `m(theta, x)` with its exact parameter gradient.
///
/// Implementations must be free of interior mutability so that one model can
/// be evaluated from several threads at once.
pub trait RegressionModel: Send + Sync {
    /// Parameter dimension `d`.
    fn dim(&self) -> usize;
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64;
    /// Writes the `d` partial derivatives of `mean` at `(theta, x)` into `out`.
    fn grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    fn kind(&self) -> ModelKind;
}

/// `m(x) = theta * x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleLinear;

impl RegressionModel for SimpleLinear {
    fn dim(&self) -> usize {
        1
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta[0] * x[0]
    }
    fn grad(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }
    fn kind(&self) -> ModelKind {
        ModelKind::SimpleLinear
    }
}

/// `m(x) = theta_0 + theta_1 (x - mean(x))`, centred at the sample mean.
#[derive(Debug, Clone, Copy)]
pub struct CenteredLinear {
    pub x_bar: f64,
}

impl CenteredLinear {
    pub fn for_sample(sample: &Sample) -> Self {
        Self {
            x_bar: sample.column_mean(0),
        }
    }
}

impl RegressionModel for CenteredLinear {
    fn dim(&self) -> usize {
        2
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta[0] + theta[1] * (x[0] - self.x_bar)
    }
    fn grad(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x[0] - self.x_bar;
    }
    fn kind(&self) -> ModelKind {
        ModelKind::CenteredLinear
    }
}

pub type BasisFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `m(x) = sum_k theta_k f_k(x)` for fixed functions `f_k`.
#[derive(Clone)]
pub struct BasisLinear {
    funcs: Vec<BasisFn>,
}

impl BasisLinear {
    pub fn new(funcs: Vec<BasisFn>) -> Self {
        Self { funcs }
    }

    /// `1, x, ..., x^degree` on the first covariate.
    pub fn polynomial(degree: usize) -> Self {
        let funcs = (0..=degree)
            .map(|k| Arc::new(move |x: &[f64]| x[0].powi(k as i32)) as BasisFn)
            .collect();
        Self { funcs }
    }
}

impl fmt::Debug for BasisLinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisLinear").field("terms", &self.funcs.len()).finish()
    }
}

impl RegressionModel for BasisLinear {
    fn dim(&self) -> usize {
        self.funcs.len()
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.funcs.iter().zip(theta).map(|(f, t)| t * f(x)).sum()
    }
    fn grad(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.funcs) {
            *o = f(x);
        }
    }
    fn kind(&self) -> ModelKind {
        ModelKind::BasisLinear
    }
}

/// `theta_0 + theta_10 (x1 - mean x1) + theta_01 (x2 - mean x2)
///  + theta_11 (x1 x2 - mean(x1 x2))`, centred at sample means.
#[derive(Debug, Clone, Copy)]
pub struct Bilinear2d {
    pub x1_bar: f64,
    pub x2_bar: f64,
    pub x1x2_bar: f64,
}

impl Bilinear2d {
    pub fn for_sample(sample: &Sample) -> Result<Self> {
        if sample.p() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: sample.p(),
            });
        }
        let n = sample.n() as f64;
        Ok(Self {
            x1_bar: sample.column_mean(0),
            x2_bar: sample.column_mean(1),
            x1x2_bar: sample.rows().map(|r| r[0] * r[1]).sum::<f64>() / n,
        })
    }
}

impl RegressionModel for Bilinear2d {
    fn dim(&self) -> usize {
        4
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta[0]
            + theta[1] * (x[0] - self.x1_bar)
            + theta[2] * (x[1] - self.x2_bar)
            + theta[3] * (x[0] * x[1] - self.x1x2_bar)
    }
    fn grad(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x[0] - self.x1_bar;
        out[2] = x[1] - self.x2_bar;
        out[3] = x[0] * x[1] - self.x1x2_bar;
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Bilinear2d
    }
}

/// `m(x) = theta_0 exp(theta_1 x)`, a model nonlinear in its parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialGrowth;

impl RegressionModel for ExponentialGrowth {
    fn dim(&self) -> usize {
        2
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta[0] * (theta[1] * x[0]).exp()
    }
    fn grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let e = (theta[1] * x[0]).exp();
        out[0] = e;
        out[1] = theta[0] * x[0] * e;
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Custom
    }
}

pub type MeanFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A user-supplied model given by closures.
#[derive(Clone)]
pub struct CustomModel {
    dim: usize,
    mean: MeanFn,
    grad: GradFn,
}

impl CustomModel {
    pub fn new(dim: usize, mean: MeanFn, grad: GradFn) -> Self {
        Self { dim, mean, grad }
    }
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel").field("dim", &self.dim).finish()
    }
}

impl RegressionModel for CustomModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn mean(&self, theta: &[f64], x: &[f64]) -> f64 {
        (self.mean)(theta, x)
    }
    fn grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        (self.grad)(theta, x, out)
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Custom
    }
}

/// Named built-in model families. Models that centre at sample means are
/// instantiated per sample with [`ModelSpec::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    SimpleLinear,
    CenteredLinear,
    Polynomial(usize),
    Bilinear2d,
    ExponentialGrowth,
}

impl ModelSpec {
    pub fn parse(id: &str) -> Result<Self> {
        let spec = match id {
            "simple_linear" => ModelSpec::SimpleLinear,
            "centered_linear" => ModelSpec::CenteredLinear,
            "bilinear2d" => ModelSpec::Bilinear2d,
            "exp_growth" => ModelSpec::ExponentialGrowth,
            _ => match id.strip_prefix("polynomial") {
                Some(deg) => {
                    ModelSpec::Polynomial(deg.trim_start_matches(':').parse().map_err(|_| Error::UnknownId {
                        kind: "model",
                        id: id.into(),
                    })?)
                }
                None => {
                    return Err(Error::UnknownId {
                        kind: "model",
                        id: id.into(),
                    })
                }
            },
        };
        Ok(spec)
    }

    pub fn id(&self) -> String {
        match self {
            ModelSpec::SimpleLinear => "simple_linear".into(),
            ModelSpec::CenteredLinear => "centered_linear".into(),
            ModelSpec::Polynomial(k) => format!("polynomial:{k}"),
            ModelSpec::Bilinear2d => "bilinear2d".into(),
            ModelSpec::ExponentialGrowth => "exp_growth".into(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::SimpleLinear => 1,
            ModelSpec::CenteredLinear | ModelSpec::ExponentialGrowth => 2,
            ModelSpec::Polynomial(k) => k + 1,
            ModelSpec::Bilinear2d => 4,
        }
    }

    /// Covariate dimension the family is defined for.
    pub fn covariate_dim(&self) -> usize {
        match self {
            ModelSpec::Bilinear2d => 2,
            _ => 1,
        }
    }

    pub fn build(&self, sample: &Sample) -> Result<Arc<dyn RegressionModel>> {
        if sample.p() != self.covariate_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_dim(),
                found: sample.p(),
            });
        }
        Ok(match self {
            ModelSpec::SimpleLinear => Arc::new(SimpleLinear),
            ModelSpec::CenteredLinear => Arc::new(CenteredLinear::for_sample(sample)),
            ModelSpec::Polynomial(k) => Arc::new(BasisLinear::polynomial(*k)),
            ModelSpec::Bilinear2d => Arc::new(Bilinear2d::for_sample(sample)?),
            ModelSpec::ExponentialGrowth => Arc::new(ExponentialGrowth),
        })
    }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// `Y - m(theta_hat, X)` in original observation order.
    pub residuals: Vec<f64>,
    /// `R_n = (1/n) sum grad grad^T` at `theta_hat`.
    pub info_matrix: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn jacobian(model: &dyn RegressionModel, theta: &[f64], sample: &Sample) -> DMatrix<f64> {
    let d = model.dim();
    let mut g = DMatrix::zeros(sample.n(), d);
    let mut buf = vec![0.0; d];
    for (i, x) in sample.rows().enumerate() {
        model.grad(theta, x, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            g[(i, k)] = *v;
        }
    }
    g
}

fn residuals_at(model: &dyn RegressionModel, theta: &[f64], sample: &Sample) -> Vec<f64> {
    sample
        .rows()
        .zip(sample.y())
        .map(|(x, y)| y - model.mean(theta, x))
        .collect()
}

fn sse(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Least-squares solution of `J delta ~ rhs` by Householder QR.
fn qr_least_squares(j: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let d = j.ncols();
    let qr = j.clone().qr();
    let r = qr.r();
    let col_scale = (0..d).map(|k| j.column(k).norm()).fold(0.0f64, f64::max);
    for k in 0..d {
        if !(r[(k, k)].abs() > 1e-10 * col_scale) {
            return Err(Error::Singular {
                ratio: r[(k, k)].abs() / col_scale.max(f64::MIN_POSITIVE),
            });
        }
    }
    let qty = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qty).ok_or(Error::Singular { ratio: 0.0 })
}

fn check_sizes(model: &dyn RegressionModel, sample: &Sample) -> Result<()> {
    if sample.n() < model.dim() + 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least d + 1 = {} observations, got {}",
            model.dim() + 1,
            sample.n()
        )));
    }
    Ok(())
}

fn finish(
    model: &dyn RegressionModel,
    sample: &Sample,
    theta: Vec<f64>,
    converged: bool,
    iterations: usize,
) -> FitResult {
    let residuals = residuals_at(model, &theta, sample);
    let g = jacobian(model, &theta, sample);
    let info_matrix = g.transpose() * &g / sample.n() as f64;
    FitResult {
        theta_hat: theta,
        residuals,
        info_matrix,
        converged,
        iterations,
    }
}

/// Closed-form least squares for models linear in the parameters.
pub fn fit_linear(model: &dyn RegressionModel, sample: &Sample) -> Result<FitResult> {
    if !model.kind().is_linear() {
        return Err(Error::InvalidParameter(
            "fit_linear requires a model linear in its parameters".into(),
        ));
    }
    check_sizes(model, sample)?;
    let zero = vec![0.0; model.dim()];
    let g = jacobian(model, &zero, sample);
    let y = DVector::from_column_slice(sample.y());
    let theta = qr_least_squares(&g, &y)?;
    Ok(finish(model, sample, theta.as_slice().to_vec(), true, 1))
}

/// Stopping rules for [`fit_gauss_newton`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iter: usize,
    pub step_tol: f64,
    pub grad_tol: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            step_tol: 1e-10,
            grad_tol: 1e-8,
        }
    }
}

const MAX_HALVINGS: usize = 60;

/// Damped Gauss-Newton with step halving on the residual sum of squares.
///
/// Non-convergence is reported through [`FitResult::converged`]; a singular
/// Jacobian at an iterate is an error.
pub fn fit_gauss_newton(
    model: &dyn RegressionModel,
    sample: &Sample,
    theta0: &[f64],
    opts: GaussNewtonOptions,
) -> Result<FitResult> {
    if theta0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: theta0.len(),
        });
    }
    if theta0.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("initial parameter"));
    }
    check_sizes(model, sample)?;

    let mut theta = theta0.to_vec();
    let mut res = residuals_at(model, &theta, sample);
    let mut cur_sse = sse(&res);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let j = jacobian(model, &theta, sample);
        let r = DVector::from_vec(res.clone());
        if (j.transpose() * &r).norm() < opts.grad_tol {
            converged = true;
            break;
        }
        let delta = qr_least_squares(&j, &r)?;
        iterations += 1;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + step * d).collect();
            let trial_res = residuals_at(model, &trial, sample);
            let trial_sse = sse(&trial_res);
            if trial_sse.is_finite() && trial_sse <= cur_sse {
                accepted = Some((trial, trial_res, trial_sse));
                break;
            }
            step *= 0.5;
        }
        let theta_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        match accepted {
            Some((trial, trial_res, trial_sse)) => {
                theta = trial;
                res = trial_res;
                cur_sse = trial_sse;
                if step * delta.norm() < opts.step_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No decrease along the Gauss-Newton direction: the iterate sits at
                // a numerical minimum iff the proposed step is negligible.
                converged = delta.norm() <= 1e-6 * (1.0 + theta_norm);
                break;
            }
        }
    }
    Ok(finish(model, sample, theta, converged, iterations))
}

/// Fits with the closed form when the model is linear, Gauss-Newton otherwise.
pub fn fit(model: &dyn RegressionModel, sample: &Sample, theta0: &[f64]) -> Result<FitResult> {
    if model.kind().is_linear() {
        fit_linear(model, sample)
    } else {
        fit_gauss_newton(model, sample, theta0, GaussNewtonOptions::default())
    }
}

/// The vectors `mu_k,i = (R_n^{-1/2} grad(theta_hat, X_i))_k / sqrt(n)`, with
/// entries arranged in `scan_order` and made exactly orthonormal.
pub fn score_basis(
    model: &dyn RegressionModel,
    fit: &FitResult,
    sample: &Sample,
    scan_order: &[usize],
) -> Result<OrthonormalSet> {
    let n = sample.n();
    let d = model.dim();
    if scan_order.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: scan_order.len(),
        });
    }
    let root = inv_sqrt_spd(&fit.info_matrix)?;
    let g = jacobian(model, &fit.theta_hat, sample);
    let scaled = &g * root / (n as f64).sqrt();
    let vectors: Vec<Vec<f64>> = (0..d)
        .map(|k| scan_order.iter().map(|&i| scaled[(i, k)]).collect())
        .collect();
    gram_schmidt(&vectors)
}
