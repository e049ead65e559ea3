//! Sample in, transformed and raw regression processes out.
//!
//! For `p = 1` observations are scanned in covariate order and the process
//! runs on the rank times `i/n`. For `p >= 2` covariates are rescaled to the
//! unit cube, matched to anchors by optimal assignment, and the reference
//! functions are sampled at the matched anchors.

use crate::basis::{make_basis, sample_on_points, unit_grid, ReferenceBasis};
use crate::error::{Error, Result};
use crate::model::{fit, scan_order, score_basis, FitResult, RegressionModel, Sample};
use crate::process::{build_process, ks_statistics, GridSpec, StatisticResult, StepProcess};
use crate::transform::{transform_residuals, TransformedResiduals};
use crate::transport::{solve_assignment, AnchorSet, Assignment, UnitRescale};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Grid added to the evaluation set when `p >= 2`.
    pub grid: GridSpec,
    /// Divide the rotated residuals by the residual standard deviation.
    pub studentize: bool,
}

impl PipelineOptions {
    pub fn for_dim(p: usize) -> Self {
        Self {
            grid: GridSpec::default_for(p),
            studentize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fit: FitResult,
    pub basis: ReferenceBasis,
    pub transformed: TransformedResiduals,
    /// Process of the rotated residuals (on rank times, or transported points).
    pub process_e: StepProcess,
    /// Process of the raw residuals (on rank times, or rescaled covariates).
    pub process_raw: StepProcess,
    pub stats_e: Vec<StatisticResult>,
    pub stats_raw: Vec<StatisticResult>,
    /// Present when `p >= 2`.
    pub rescale: Option<UnitRescale>,
    pub assignment: Option<Assignment>,
}

/// Runs fit, rotation, optional transport and process construction.
///
/// `anchors` is required when `p >= 2` and must hold `n` points. The reference
/// basis has as many elements as the model has parameters.
pub fn run_pipeline(
    sample: &Sample,
    model: &dyn RegressionModel,
    theta0: &[f64],
    anchors: Option<&AnchorSet>,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let n = sample.n();
    let p = sample.p();
    let d = model.dim();
    let fitted = fit(model, sample, theta0)?;
    let basis = make_basis(p, d)?;

    let (order, scan_e, scan_raw, rescale, assignment) = if p == 1 {
        let times = unit_grid(n);
        (scan_order(sample), times.clone(), times, None, None)
    } else {
        let anchors = anchors.ok_or_else(|| Error::InvalidParameter("anchors are required when p >= 2".into()))?;
        if anchors.n() != n || anchors.p() != p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: anchors.points().len(),
            });
        }
        let rescale = UnitRescale::fit(sample.covariates(), p);
        let unit = rescale.apply(sample.covariates());
        let assignment = solve_assignment(&unit, anchors)?;
        let moved = assignment.transported_points(anchors);
        ((0..n).collect(), moved, unit, Some(rescale), Some(assignment))
    };

    let mu = score_basis(model, &fitted, sample, &order)?;
    let r = sample_on_points(&basis, &scan_e)?;
    let eps: Vec<f64> = order.iter().map(|&i| fitted.residuals[i]).collect();
    let mut transformed = transform_residuals(&eps, &mu, &r)?.with_scan_order(order)?;
    if opts.studentize {
        transformed = transformed.studentized();
    }
    if !fitted.converged {
        transformed = transformed.mark_unreliable();
    }

    let process_e = build_process(&transformed.e_hat, &scan_e, p, opts.grid)?;
    let process_raw = build_process(&eps, &scan_raw, p, opts.grid)?;
    let stats_e = ks_statistics(&process_e);
    let stats_raw = ks_statistics(&process_raw);
    Ok(PipelineOutput {
        fit: fitted,
        basis,
        transformed,
        process_e,
        process_raw,
        stats_e,
        stats_raw,
        rescale,
        assignment,
    })
}
