//! Monte Carlo experiments: covariate designs, null and power simulations,
//! and empirical distribution functions of the statistics.
//!
//! Every replication draws from its own generator, seeded by
//! [`derive_seed`] from the master seed, a purpose label and the replication
//! index, and results are gathered by index. Output is therefore identical for
//! any number of worker threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Sample};
use crate::pipeline::{run_pipeline, PipelineOptions, PipelineOutput};
use crate::process::{GridSpec, StatisticKind};
use crate::transport::{generate_anchors, AnchorMode, AnchorSet};

/// Rejection levels reported by [`simulate_power`].
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Largest tolerated share of failed fits.
pub const MAX_FAILURE_RATE: f64 = 0.01;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for `(master, label, index)`: the label is hashed with 64-bit
/// FNV-1a and the three words are folded through SplitMix64.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(splitmix64(master) ^ h) ^ index)
}

/// Covariate distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// `U[0,2]`.
    Uniform02,
    /// Normal with mean 1 and variance 2.
    Normal12,
    /// `X1 ~ U[0,1]`, `X2 | X1 ~ Beta(8(1-X1), 8 X1)`.
    BetaDepA,
    /// `X1 ~ U[0,1]`, `X2 | X1 ~ Beta(8 X1, 8(1-X1))`.
    BetaDepB,
    /// `X1 ~ Beta(0.35, 0.35)`, `X2 ~ Beta(0.2, 0.2)` independent.
    BetaIndep,
    /// The same covariates (`n x p`, row-major) in every replication.
    Fixed { x: Arc<Vec<f64>>, p: usize },
}

impl Design {
    pub const BUILT_IN: [&'static str; 5] = ["uniform_0_2", "normal_1_2", "beta_dep_a", "beta_dep_b", "beta_indep"];

    pub fn parse(id: &str) -> Result<Self> {
        Ok(match id {
            "uniform_0_2" => Design::Uniform02,
            "normal_1_2" => Design::Normal12,
            "beta_dep_a" => Design::BetaDepA,
            "beta_dep_b" => Design::BetaDepB,
            "beta_indep" => Design::BetaIndep,
            _ => {
                return Err(Error::UnknownId {
                    kind: "design",
                    id: id.into(),
                })
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Design::Uniform02 => "uniform_0_2",
            Design::Normal12 => "normal_1_2",
            Design::BetaDepA => "beta_dep_a",
            Design::BetaDepB => "beta_dep_b",
            Design::BetaIndep => "beta_indep",
            Design::Fixed { .. } => "fixed",
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Design::Uniform02 | Design::Normal12 => 1,
            Design::BetaDepA | Design::BetaDepB | Design::BetaIndep => 2,
            Design::Fixed { p, .. } => *p,
        }
    }

    /// Draws `n` covariate points (row-major).
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let beta =
            |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::InvalidParameter(format!("beta({a}, {b}): {e}")));
        let open_unit = |rng: &mut R| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return u;
            }
        };
        let mut out = Vec::with_capacity(n * self.p());
        match self {
            Design::Uniform02 => out.extend((0..n).map(|_| rng.random_range(0.0..=2.0))),
            Design::Normal12 => {
                let law = Normal::new(1.0, 2f64.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                out.extend((0..n).map(|_| law.sample(rng)));
            }
            Design::BetaDepA | Design::BetaDepB => {
                for _ in 0..n {
                    let x1 = open_unit(rng);
                    let (a, b) = if *self == Design::BetaDepA {
                        (8.0 * (1.0 - x1), 8.0 * x1)
                    } else {
                        (8.0 * x1, 8.0 * (1.0 - x1))
                    };
                    out.push(x1);
                    out.push(beta(a, b)?.sample(rng));
                }
            }
            Design::BetaIndep => {
                let b1 = beta(0.35, 0.35)?;
                let b2 = beta(0.2, 0.2)?;
                for _ in 0..n {
                    out.push(b1.sample(rng));
                    out.push(b2.sample(rng));
                }
            }
            Design::Fixed { x, p } => {
                if x.len() != n * p {
                    return Err(Error::DimensionMismatch {
                        expected: n * p,
                        found: x.len(),
                    });
                }
                out.extend_from_slice(x);
            }
        }
        Ok(out)
    }
}

/// `n` draws from design `id`, which must have covariate dimension `p`.
pub fn covariate_design(id: &str, n: usize, p: usize, seed: u64) -> Result<Vec<f64>> {
    let design = Design::parse(id)?;
    if design.p() != p {
        return Err(Error::DimensionMismatch {
            expected: design.p(),
            found: p,
        });
    }
    design.draw(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Law of the regression errors; both have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorLaw {
    Normal,
    /// `U(-sqrt 3, sqrt 3)`.
    Uniform,
}

impl ErrorLaw {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "normal" => Ok(ErrorLaw::Normal),
            "uniform" => Ok(ErrorLaw::Uniform),
            _ => Err(Error::UnknownId {
                kind: "error law",
                id: id.into(),
            }),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ErrorLaw::Normal => "normal",
            ErrorLaw::Uniform => "uniform",
        }
    }

    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal => rng.sample(StandardNormal),
            ErrorLaw::Uniform => {
                let h = 3f64.sqrt();
                rng.random_range(-h..h)
            }
        }
    }
}

/// Departure directions `psi`, functions of the last covariate coordinate
/// (`x2` when `p = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Psi {
    X2Squared,
    X2Cubed,
    SinHalfPiX2,
}

impl Psi {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "x2_squared" => Ok(Psi::X2Squared),
            "x2_cubed" => Ok(Psi::X2Cubed),
            "sin_half_pi_x2" => Ok(Psi::SinHalfPiX2),
            _ => Err(Error::UnknownId {
                kind: "psi",
                id: id.into(),
            }),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Psi::X2Squared => "x2_squared",
            Psi::X2Cubed => "x2_cubed",
            Psi::SinHalfPiX2 => "sin_half_pi_x2",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        let t = x[x.len() - 1];
        match self {
            Psi::X2Squared => t * t,
            Psi::X2Cubed => t * t * t,
            Psi::SinHalfPiX2 => (std::f64::consts::FRAC_PI_2 * t).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alternative {
    pub psi: Psi,
    pub amplitude: f64,
    /// Multiply the amplitude by `1/sqrt(n)`.
    pub local_scaling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorKind {
    Halton,
    Random,
}

impl AnchorKind {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "halton" => Ok(AnchorKind::Halton),
            "random" => Ok(AnchorKind::Random),
            _ => Err(Error::UnknownId {
                kind: "anchor mode",
                id: id.into(),
            }),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            AnchorKind::Halton => "halton",
            AnchorKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub design: Design,
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub statistic: StatisticKind,
    pub alternative: Option<Alternative>,
    pub anchors: AnchorKind,
    /// Draw new random anchors in every replication instead of once.
    pub resample_anchors: bool,
    /// Size of the reference basis; must equal the model dimension.
    pub basis_d: Option<usize>,
    /// True parameter; all ones when absent.
    pub theta: Option<Vec<f64>>,
    pub errors: ErrorLaw,
    /// Standard deviation the unit-variance error law is scaled to.
    pub error_sd: f64,
    /// Grid resolution per axis for `p >= 2`.
    pub grid: Option<usize>,
    pub studentize: bool,
}

impl ExperimentConfig {
    /// Defaults for everything except the listed fields.
    pub fn new(design: Design, model: ModelSpec, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            design,
            model,
            n,
            reps,
            seed,
            statistic: StatisticKind::KsAbs,
            alternative: None,
            anchors: AnchorKind::Halton,
            resample_anchors: false,
            basis_d: None,
            theta: None,
            errors: ErrorLaw::Normal,
            error_sd: 1.0,
            grid: None,
            studentize: false,
        }
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.theta.clone().unwrap_or_else(|| vec![1.0; self.model.dim()])
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid
            .map(|resolution| GridSpec { resolution })
            .unwrap_or_else(|| GridSpec::default_for(self.p()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.dim();
        if self.n < 10 {
            return Err(Error::InvalidParameter(format!("n = {} is below 10", self.n)));
        }
        if self.n <= d {
            return Err(Error::InvalidParameter(format!("n = {} must exceed d = {d}", self.n)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.design.p() != self.model.covariate_dim() {
            return Err(Error::InvalidParameter(format!(
                "design {} has p = {} but model {} needs p = {}",
                self.design.id(),
                self.design.p(),
                self.model.id(),
                self.model.covariate_dim()
            )));
        }
        if let Design::Fixed { x, p } = &self.design {
            if x.len() != self.n * p {
                return Err(Error::DimensionMismatch {
                    expected: self.n * p,
                    found: x.len(),
                });
            }
        }
        if let Some(bd) = self.basis_d {
            if bd != d {
                return Err(Error::InvalidParameter(format!(
                    "basis_d = {bd} must equal the model dimension {d}"
                )));
            }
        }
        if let Some(t) = &self.theta {
            if t.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("theta"));
            }
        }
        if !(self.error_sd.is_finite() && self.error_sd > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "error_sd = {} must be positive and finite",
                self.error_sd
            )));
        }
        if let Some(a) = &self.alternative {
            if !a.amplitude.is_finite() {
                return Err(Error::NonFinite("amplitude"));
            }
        }
        if self.grid == Some(0) && self.p() >= 2 {
            return Err(Error::InvalidParameter("grid must be at least 1 when p >= 2".into()));
        }
        Ok(())
    }

    fn anchors_for(&self, index: u64) -> Result<Option<AnchorSet>> {
        if self.p() < 2 {
            return Ok(None);
        }
        let mode = match self.anchors {
            AnchorKind::Halton => AnchorMode::Halton,
            AnchorKind::Random => AnchorMode::Random {
                seed: derive_seed(self.seed, "anchors", index),
            },
        };
        generate_anchors(self.n, self.p(), mode).map(Some)
    }
}

/// Sorted replication statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted_values: Vec<f64>,
}

impl Ecdf {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { sorted_values: values }
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn len(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_values.is_empty()
    }

    /// Share of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.sorted_values.partition_point(|&v| v <= x);
        k as f64 / self.len().max(1) as f64
    }

    /// The `ceil((1 - alpha) r)`-th smallest value; a statistic strictly above
    /// it rejects at level `alpha`.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if self.is_empty() || !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("critical value at level {alpha}")));
        }
        let r = self.len();
        let k = ((1.0 - alpha) * r as f64).ceil() as usize;
        Ok(self.sorted_values[k.clamp(1, r) - 1])
    }

    /// Monte Carlo p-value `(1 + #{v >= x}) / (r + 1)`.
    pub fn p_value(&self, x: f64) -> f64 {
        let below = self.sorted_values.partition_point(|&v| v < x);
        (1 + self.len() - below) as f64 / (self.len() + 1) as f64
    }

    /// Largest gap between this step function and a continuous `cdf`.
    pub fn sup_distance_to<F: Fn(f64) -> Result<f64>>(&self, cdf: F) -> Result<f64> {
        let r = self.len() as f64;
        let mut worst: f64 = 0.0;
        for (i, &v) in self.sorted_values.iter().enumerate() {
            let f = cdf(v)?;
            worst = worst.max((f - i as f64 / r).abs()).max(((i + 1) as f64 / r - f).abs());
        }
        Ok(worst)
    }
}

/// Two-sample sup distance between step ECDFs, computed exactly by merging.
pub fn ecdf_sup_distance(a: &Ecdf, b: &Ecdf) -> f64 {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let (va, vb) = (a.values(), b.values());
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst: u128 = 0;
    while i < na || j < nb {
        let next = match (va.get(i), vb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < na && va[i] <= next {
            i += 1;
        }
        while j < nb && vb[j] <= next {
            j += 1;
        }
        let gap = (i as u128 * nb as u128).abs_diff(j as u128 * na as u128);
        worst = worst.max(gap);
    }
    worst as f64 / (na as f64 * nb as f64)
}

/// Statistics of one replication, indexed like [`StatisticKind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationStats {
    pub transformed: [f64; 3],
    pub raw: [f64; 3],
}

fn kind_index(kind: StatisticKind) -> usize {
    StatisticKind::ALL.iter().position(|&k| k == kind).unwrap_or(0)
}

impl ReplicationStats {
    fn from_output(out: &PipelineOutput) -> Self {
        let pick = |stats: &[crate::process::StatisticResult]| {
            let mut v = [0.0; 3];
            for s in stats {
                v[kind_index(s.name)] = s.value;
            }
            v
        };
        Self {
            transformed: pick(&out.stats_e),
            raw: pick(&out.stats_raw),
        }
    }
}

/// Per-replication results together with the number of discarded fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Replications<T> {
    /// Successful replications in index order.
    pub results: Vec<T>,
    pub failures: usize,
    pub reps: usize,
}

fn is_fit_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Singular { .. } | Error::RankDeficient { .. } | Error::NonFinite(_)
    )
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Runs `config.reps` replications of the pipeline on up to `workers` threads
/// and maps each output through `extract`. The stream label separates, for
/// example, a null run from the paired alternative run.
///
/// Replications whose fit fails or does not converge are dropped and counted;
/// more than 1% of them is an error.
pub fn run_replications<T, F>(
    config: &ExperimentConfig,
    label: &str,
    workers: usize,
    extract: F,
) -> Result<Replications<T>>
where
    T: Send,
    F: Fn(&PipelineOutput) -> T + Sync,
{
    config.validate()?;
    let fixed_anchors = if config.resample_anchors {
        None
    } else {
        config.anchors_for(0)?
    };
    let theta = config.theta();
    let opts = PipelineOptions {
        grid: config.grid_spec(),
        studentize: config.studentize,
    };
    let amplitude = config.alternative.map(|a| {
        if a.local_scaling {
            a.amplitude / (config.n as f64).sqrt()
        } else {
            a.amplitude
        }
    });

    // Designs get distinct streams so that runs sharing a seed are independent.
    let stream = format!("{label}/{}", config.design.id());
    let one = |index: usize| -> Result<Option<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &stream, index as u64));
        let x = config.design.draw(config.n, &mut rng)?;
        let p = config.p();
        let placeholder = Sample::new(x, p, vec![0.0; config.n])?;
        let model = config.model.build(&placeholder)?;
        let y: Vec<f64> = placeholder
            .rows()
            .map(|xi| {
                let mut v = model.mean(&theta, xi);
                if let (Some(alt), Some(a)) = (config.alternative, amplitude) {
                    v += a * alt.psi.eval(xi);
                }
                v + config.error_sd * config.errors.draw(&mut rng)
            })
            .collect();
        let sample = placeholder.with_y(y)?;
        let resampled;
        let anchors = if config.resample_anchors {
            resampled = config.anchors_for(index as u64 + 1)?;
            resampled.as_ref()
        } else {
            fixed_anchors.as_ref()
        };
        match run_pipeline(&sample, &*model, &theta, anchors, &opts) {
            Ok(out) if out.fit.converged => Ok(Some(extract(&out))),
            Ok(_) => Ok(None),
            Err(e) if is_fit_failure(&e) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let pool = build_pool(workers)?;
    let outcomes: Vec<Result<Option<T>>> = pool.install(|| (0..config.reps).into_par_iter().map(one).collect());
    let mut results = Vec::with_capacity(config.reps);
    let mut failures = 0;
    for o in outcomes {
        match o? {
            Some(t) => results.push(t),
            None => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * config.reps as f64 {
        return Err(Error::TooManyFitFailures {
            failed: failures,
            total: config.reps,
        });
    }
    Ok(Replications {
        results,
        failures,
        reps: config.reps,
    })
}

/// Outcome of a simulation under one data-generating law.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub replications: Replications<ReplicationStats>,
}

impl SimulationRun {
    /// ECDF of `kind` computed on the rotated (`transformed = true`) or raw
    /// residual process.
    pub fn ecdf(&self, kind: StatisticKind, transformed: bool) -> Ecdf {
        let k = kind_index(kind);
        Ecdf::from_values(
            self.replications
                .results
                .iter()
                .map(|s| if transformed { s.transformed[k] } else { s.raw[k] })
                .collect(),
        )
    }

    pub fn failures(&self) -> usize {
        self.replications.failures
    }
}

fn simulate(config: &ExperimentConfig, label: &str, workers: usize) -> Result<SimulationRun> {
    Ok(SimulationRun {
        replications: run_replications(config, label, workers, ReplicationStats::from_output)?,
    })
}

/// Null simulation; the alternative must be absent.
pub fn simulate_null(config: &ExperimentConfig, workers: usize) -> Result<SimulationRun> {
    if config.alternative.is_some() {
        return Err(Error::InvalidParameter(
            "null simulation with an alternative set".into(),
        ));
    }
    simulate(config, "null", workers)
}

/// Rejection rate of `alt` at each level against critical values from `null`.
pub fn rejection_rates(null: &Ecdf, alt: &Ecdf, levels: &[f64]) -> Result<Vec<(f64, f64)>> {
    levels
        .iter()
        .map(|&alpha| {
            let c = null.critical_value(alpha)?;
            let rejected = alt.values().iter().filter(|&&v| v > c).count();
            Ok((alpha, rejected as f64 / alt.len().max(1) as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRun {
    pub null: SimulationRun,
    pub alternative: SimulationRun,
    pub statistic: StatisticKind,
    /// `(level, rate)` for the rotated-residual statistic.
    pub rejection_rate_at: Vec<(f64, f64)>,
    /// `(level, rate)` for the raw-residual statistic.
    pub raw_rejection_rate_at: Vec<(f64, f64)>,
}

impl PowerRun {
    pub fn ecdf(&self) -> Ecdf {
        self.alternative.ecdf(self.statistic, true)
    }

    pub fn rate_at(&self, alpha: f64, transformed: bool) -> Option<f64> {
        let table = if transformed {
            &self.rejection_rate_at
        } else {
            &self.raw_rejection_rate_at
        };
        table.iter().find(|(a, _)| (a - alpha).abs() < 1e-12).map(|&(_, r)| r)
    }
}

/// Simulates under the alternative and under the paired null (same config
/// without the alternative, independent stream), and reports rejection rates
/// at [`DEFAULT_LEVELS`].
pub fn simulate_power(config: &ExperimentConfig, workers: usize) -> Result<PowerRun> {
    if config.alternative.is_none() {
        return Err(Error::InvalidParameter("power simulation needs an alternative".into()));
    }
    let mut null_cfg = config.clone();
    null_cfg.alternative = None;
    let null = simulate_null(&null_cfg, workers)?;
    let alternative = simulate(config, "alternative", workers)?;
    let k = config.statistic;
    let rejection_rate_at = rejection_rates(&null.ecdf(k, true), &alternative.ecdf(k, true), &DEFAULT_LEVELS)?;
    let raw_rejection_rate_at = rejection_rates(&null.ecdf(k, false), &alternative.ecdf(k, false), &DEFAULT_LEVELS)?;
    Ok(PowerRun {
        null,
        alternative,
        statistic: k,
        rejection_rate_at,
        raw_rejection_rate_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_input() {
        let s = derive_seed(7, "null", 3);
        assert_eq!(s, derive_seed(7, "null", 3));
        assert_ne!(s, derive_seed(8, "null", 3));
        assert_ne!(s, derive_seed(7, "alternative", 3));
        assert_ne!(s, derive_seed(7, "null", 4));
    }

    #[test]
    fn designs_have_their_support() {
        let u = covariate_design("uniform_0_2", 500, 1, 1).unwrap();
        assert!(u.iter().all(|&v| (0.0..=2.0).contains(&v)));
        for id in ["beta_dep_a", "beta_dep_b", "beta_indep"] {
            let x = covariate_design(id, 500, 2, 1).unwrap();
            assert_eq!(x.len(), 1000);
            assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let g = covariate_design("normal_1_2", 20000, 1, 1).unwrap();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / g.len() as f64;
        assert!((mean - 1.0).abs() < 0.05);
        assert!((var - 2.0).abs() < 0.1);
        assert!(covariate_design("uniform_0_2", 5, 2, 1).is_err());
        assert!(matches!(
            covariate_design("triangle", 5, 1, 1),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn dependent_beta_follows_first_coordinate() {
        // E[X2 | X1] = 1 - X1 for design a and X1 for design b.
        let a = covariate_design("beta_dep_a", 4000, 2, 9).unwrap();
        let b = covariate_design("beta_dep_b", 4000, 2, 9).unwrap();
        let corr_sign = |x: &[f64]| x.chunks_exact(2).map(|r| (r[0] - 0.5) * (r[1] - 0.5)).sum::<f64>();
        assert!(corr_sign(&a) < 0.0);
        assert!(corr_sign(&b) > 0.0);
    }

    #[test]
    fn same_seed_same_design() {
        assert_eq!(
            covariate_design("beta_indep", 50, 2, 4).unwrap(),
            covariate_design("beta_indep", 50, 2, 4).unwrap()
        );
        assert_ne!(
            covariate_design("beta_indep", 50, 2, 4).unwrap(),
            covariate_design("beta_indep", 50, 2, 5).unwrap()
        );
    }

    #[test]
    fn ecdf_distance_examples() {
        let a = Ecdf::from_values(vec![1.0, 3.0]);
        let b = Ecdf::from_values(vec![2.0, 4.0]);
        assert_eq!(ecdf_sup_distance(&a, &a), 0.0);
        assert_eq!(ecdf_sup_distance(&a, &b), 0.5);
        let c = Ecdf::from_values(vec![5.0, 6.0, 7.0]);
        assert_eq!(ecdf_sup_distance(&a, &c), 1.0);
        assert_eq!(ecdf_sup_distance(&c, &a), 1.0);
        // Ties across samples are handled as jumps at the same location.
        let d = Ecdf::from_values(vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(ecdf_sup_distance(&a, &d), 0.0);
    }

    #[test]
    fn ecdf_levels_and_critical_values() {
        let e = Ecdf::from_values((1..=20).rev().map(f64::from).collect());
        assert_eq!(e.values()[0], 1.0);
        assert_eq!(e.eval(5.0), 0.25);
        assert_eq!(e.critical_value(0.05).unwrap(), 19.0);
        assert_eq!(e.critical_value(0.10).unwrap(), 18.0);
        assert_eq!(e.p_value(0.0), 1.0);
        assert_eq!(e.p_value(100.0), 1.0 / 21.0);
        assert!(e.critical_value(1.0).is_err());
    }

    #[test]
    fn ecdf_distance_to_uniform_cdf() {
        let e = Ecdf::from_values(vec![0.25, 0.75]);
        let d = e.sup_distance_to(|x| Ok(x.clamp(0.0, 1.0))).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::new(Design::Uniform02, ModelSpec::SimpleLinear, 50, 10, 1);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.n = 9;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.reps = 0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.basis_d = Some(2);
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.design = Design::BetaIndep;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.alternative = Some(Alternative {
            psi: Psi::X2Cubed,
            amplitude: f64::NAN,
            local_scaling: false,
        });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_replication() {
        let cfg = ExperimentConfig::new(Design::Uniform02, ModelSpec::SimpleLinear, 30, 1, 11);
        let run = simulate_null(&cfg, 1).unwrap();
        assert_eq!(run.ecdf(StatisticKind::KsAbs, true).len(), 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::new(Design::BetaDepA, ModelSpec::Bilinear2d, 40, 24, 5);
        cfg.grid = Some(8);
        let a = simulate_null(&cfg, 1).unwrap();
        let b = simulate_null(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_needs_alternative_and_null_refuses_one() {
        let mut cfg = ExperimentConfig::new(Design::Uniform02, ModelSpec::SimpleLinear, 30, 5, 1);
        assert!(simulate_power(&cfg, 1).is_err());
        cfg.alternative = Some(Alternative {
            psi: Psi::X2Squared,
            amplitude: 1.0,
            local_scaling: true,
        });
        assert!(simulate_null(&cfg, 1).is_err());
        let run = simulate_power(&cfg, 2).unwrap();
        assert_eq!(run.rejection_rate_at.len(), DEFAULT_LEVELS.len());
        assert!(run.rate_at(0.05, true).is_some());
    }

    #[test]
    fn psi_functions() {
        assert_eq!(Psi::X2Cubed.eval(&[0.3, 0.5]), 0.125);
        assert_eq!(Psi::X2Squared.eval(&[0.3, 0.5]), 0.25);
        assert!((Psi::SinHalfPiX2.eval(&[0.0, 1.0]) - 1.0).abs() < 1e-15);
        for id in ["x2_squared", "x2_cubed", "sin_half_pi_x2"] {
            assert_eq!(Psi::parse(id).unwrap().id(), id);
        }
    }
}
