use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use dfresid::basis::make_basis;
use dfresid::harness::{
    derive_seed, ecdf_sup_distance, simulate_null, simulate_power, AnchorKind, Ecdf, ExperimentConfig, SimulationRun,
};
use dfresid::io::{format_assignment, format_ecdf, format_process, parse_points, parse_sample};
use dfresid::model::{fit, ModelSpec, Sample};
use dfresid::pipeline::{run_pipeline, PipelineOptions};
use dfresid::process::{kolmogorov_cdf, limit_covariance, GridSpec, StatisticKind};
use dfresid::transport::{generate_anchors, solve_assignment, AnchorMode, UnitRescale};
use toml::{Table, Value};

use crate::config::{fixed_design, parse_config, ResolvedConfig};
use crate::error::{io_err, CliError, Result};
use crate::output::{OutputSet, RunManifest};
use crate::{AssignArgs, FitArgs, LimitsArgs, SimArgs, TestArgs};

pub(crate) struct Context<'a> {
    pub output_dir: &'a Path,
    pub workers: usize,
    pub delimiter: char,
}

const CVM_NOTE: &str = "cvm is the mean squared process value over the evaluation set, a discrete stand-in for the Cramer-von Mises integral";

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("`{command}` needs a seed (--seed or experiment.seed)")))
}

fn manifest(ctx: &Context, command: &str) -> RunManifest {
    RunManifest {
        command: command.into(),
        config_path: None,
        output_dir: ctx.output_dir.display().to_string(),
        seed: None,
        overrides: Vec::new(),
        parameters: None,
        config: None,
    }
}

fn timing(started: Instant, workers: usize) -> String {
    format!(
        "elapsed_seconds = {}\nworkers = {workers}\n",
        started.elapsed().as_secs_f64()
    )
}

fn model_for(id: &str, sample: &Sample) -> Result<(ModelSpec, std::sync::Arc<dyn dfresid::model::RegressionModel>)> {
    let spec = ModelSpec::parse(id)?;
    let model = spec.build(sample)?;
    Ok((spec, model))
}

fn theta0(given: &Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match given {
        Some(t) if t.len() != d => Err(CliError::Usage(format!("--theta0 needs {d} values, got {}", t.len()))),
        Some(t) => Ok(t.clone()),
        None => Ok(vec![1.0; d]),
    }
}

pub(crate) fn fit_cmd(ctx: &Context, args: &FitArgs) -> Result<()> {
    let sample = parse_sample(&read(&args.data)?, ctx.delimiter)?;
    let (spec, model) = model_for(&args.model, &sample)?;
    let t0 = theta0(&args.theta0, spec.dim())?;
    let result = fit(&*model, &sample, &t0)?;
    let d = ctx.delimiter;

    let mut out = OutputSet::default();
    let mut theta = format!("k{d}theta_hat\n");
    for (k, t) in result.theta_hat.iter().enumerate() {
        let _ = writeln!(theta, "{k}{d}{t}");
    }
    out.add("theta.csv", theta);
    let mut res = format!("i{d}residual\n");
    for (i, r) in result.residuals.iter().enumerate() {
        let _ = writeln!(res, "{i}{d}{r}");
    }
    out.add("residuals.csv", res);

    let mut summary = Table::new();
    summary.insert("model".into(), spec.id().into());
    summary.insert("n".into(), int(sample.n()));
    summary.insert("p".into(), int(sample.p()));
    summary.insert("theta_hat".into(), floats(&result.theta_hat));
    summary.insert("sse".into(), result.residuals.iter().map(|r| r * r).sum::<f64>().into());
    summary.insert("converged".into(), result.converged.into());
    summary.insert("iterations".into(), int(result.iterations));
    out.add_toml("summary.toml", &summary)?;

    let mut params = Table::new();
    params.insert("data".into(), args.data.display().to_string().into());
    params.insert("model".into(), spec.id().into());
    params.insert("theta0".into(), floats(&t0));
    let mut m = manifest(ctx, "fit");
    m.parameters = Some(params);
    out.add_toml("manifest.toml", &m)?;
    if !result.converged {
        eprintln!("warning: the fit did not converge");
    }
    out.commit(ctx.output_dir)
}

pub(crate) fn test_cmd(ctx: &Context, args: &TestArgs) -> Result<()> {
    let started = Instant::now();
    let seed = require_seed(args.seed, "test")?;
    let sample = parse_sample(&read(&args.data)?, ctx.delimiter)?;
    let (spec, model) = model_for(&args.model, &sample)?;
    let t0 = theta0(&args.theta0, spec.dim())?;
    let statistic = StatisticKind::parse(&args.statistic)?;
    let anchors_kind = AnchorKind::parse(&args.anchors)?;
    let (n, p) = (sample.n(), sample.p());
    let grid = args
        .grid
        .map(|resolution| GridSpec { resolution })
        .unwrap_or_else(|| GridSpec::default_for(p));

    let anchors = if p >= 2 {
        let mode = match anchors_kind {
            AnchorKind::Halton => AnchorMode::Halton,
            AnchorKind::Random => AnchorMode::Random {
                seed: derive_seed(seed, "anchors", 0),
            },
        };
        Some(generate_anchors(n, p, mode)?)
    } else {
        None
    };
    let opts = PipelineOptions {
        grid,
        studentize: args.studentize,
    };
    let out_obs = run_pipeline(&sample, &*model, &t0, anchors.as_ref(), &opts)?;

    let mut cfg = ExperimentConfig::new(fixed_design(sample.covariates(), p), spec, n, args.reps, seed);
    cfg.statistic = statistic;
    cfg.anchors = anchors_kind;
    cfg.grid = Some(grid.resolution);
    cfg.studentize = args.studentize;
    cfg.theta = Some(out_obs.fit.theta_hat.clone());
    // Null data are generated at the estimated noise level so that
    // unstudentized statistics are on the scale of the observed ones.
    let sse: f64 = out_obs.fit.residuals.iter().map(|r| r * r).sum();
    let sigma_hat = (sse / (n - spec.dim()) as f64).sqrt();
    // A numerically exact fit has no noise level to speak of.
    let y_rms = (sample.y().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    cfg.error_sd = if sigma_hat > 1e-10 * y_rms.max(1.0) {
        sigma_hat
    } else {
        1.0
    };
    cfg.validate()?;
    let null = simulate_null(&cfg, ctx.workers)?;

    let d = ctx.delimiter;
    let mut out = OutputSet::default();
    let mut stats = format!("process{d}statistic{d}value{d}p_value{d}argmax\n");
    let mut values = Table::new();
    let mut p_values = Table::new();
    for (label, list, transformed) in [
        ("transformed", &out_obs.stats_e, true),
        ("raw", &out_obs.stats_raw, false),
    ] {
        let mut v = Table::new();
        let mut pv = Table::new();
        for s in list.iter() {
            let pval = null.ecdf(s.name, transformed).p_value(s.value);
            let argmax: Vec<String> = s.argmax.iter().map(f64::to_string).collect();
            let _ = writeln!(
                stats,
                "{label}{d}{}{d}{}{d}{pval}{d}{}",
                s.name.id(),
                s.value,
                argmax.join(" ")
            );
            v.insert(s.name.id().into(), s.value.into());
            pv.insert(s.name.id().into(), pval.into());
        }
        values.insert(label.into(), v.into());
        p_values.insert(label.into(), pv.into());
    }
    out.add("statistics.csv", stats);

    let mut res = String::new();
    let head: Vec<String> = (1..=p).map(|k| format!("x{k}")).collect();
    let _ = writeln!(res, "i{d}{}{d}residual{d}e_hat", head.join(&d.to_string()));
    let mut e_by_obs = vec![0.0; n];
    for (k, &i) in out_obs.transformed.scan_order.iter().enumerate() {
        e_by_obs[i] = out_obs.transformed.e_hat[k];
    }
    for (i, (res_i, e_i)) in out_obs.fit.residuals.iter().zip(&e_by_obs).enumerate() {
        let xs: Vec<String> = sample.x(i).iter().map(f64::to_string).collect();
        let _ = writeln!(res, "{i}{d}{}{d}{res_i}{d}{e_i}", xs.join(&d.to_string()));
    }
    out.add("residuals.csv", res);
    if args.dump_process {
        out.add("process_transformed.csv", format_process(&out_obs.process_e, d));
        out.add("process_raw.csv", format_process(&out_obs.process_raw, d));
    }

    let mut summary = Table::new();
    summary.insert("model".into(), spec.id().into());
    summary.insert("n".into(), int(n));
    summary.insert("p".into(), int(p));
    summary.insert("basis".into(), out_obs.basis.describe().into());
    summary.insert("theta_hat".into(), floats(&out_obs.fit.theta_hat));
    summary.insert("converged".into(), out_obs.fit.converged.into());
    summary.insert("reliable".into(), out_obs.transformed.reliable.into());
    summary.insert("statistic".into(), statistic.id().into());
    if p >= 2 {
        summary.insert("grid".into(), int(grid.resolution));
        summary.insert("anchors".into(), anchors_kind.id().into());
        if let Some(r) = &out_obs.rescale {
            summary.insert("rescale_min".into(), floats(&r.mins));
            summary.insert("rescale_max".into(), floats(&r.maxs));
        }
        if let Some(a) = &out_obs.assignment {
            summary.insert("transport_cost".into(), a.cost.into());
        }
    }
    summary.insert("sigma_hat".into(), sigma_hat.into());
    summary.insert("null_reps".into(), int(args.reps));
    summary.insert("null_fit_failures".into(), int(null.failures()));
    summary.insert("values".into(), values.into());
    summary.insert("p_values".into(), p_values.into());
    summary.insert("note".into(), CVM_NOTE.into());
    out.add_toml("summary.toml", &summary)?;

    let mut params = Table::new();
    params.insert("data".into(), args.data.display().to_string().into());
    params.insert("model".into(), spec.id().into());
    params.insert("theta0".into(), floats(&t0));
    params.insert("reps".into(), int(args.reps));
    params.insert("statistic".into(), statistic.id().into());
    params.insert("anchors".into(), anchors_kind.id().into());
    params.insert("grid".into(), int(grid.resolution));
    params.insert("studentize".into(), args.studentize.into());
    let mut m = manifest(ctx, "test");
    m.seed = Some(seed);
    m.parameters = Some(params);
    out.add_toml("manifest.toml", &m)?;
    out.add("timing.toml", timing(started, ctx.workers));
    if !out_obs.transformed.reliable {
        eprintln!("warning: the fit did not converge; results are unreliable");
    }
    out.commit(ctx.output_dir)
}

fn load(ctx: &Context, args: &SimArgs, command: &str) -> Result<(ResolvedConfig, RunManifest, u64)> {
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(format!("experiment.seed={s}"));
    }
    if let Some(r) = args.reps {
        overrides.push(format!("experiment.reps={r}"));
    }
    if let Some(n) = args.n {
        overrides.push(format!("experiment.n={n}"));
    }
    if args.plot_data {
        overrides.push("output.plot_data=true".into());
    }
    overrides.extend(args.set.iter().cloned());
    let resolved = parse_config(&args.config, &overrides)?;
    let seed = require_seed(resolved.file.experiment.seed, command)?;
    let mut m = manifest(ctx, command);
    m.config_path = Some(args.config.display().to_string());
    m.seed = Some(seed);
    m.overrides = overrides;
    m.config = Some(resolved.file.clone());
    Ok((resolved, m, seed))
}

fn design_header(cfg: &ExperimentConfig, run: &SimulationRun) -> Table {
    let mut t = Table::new();
    t.insert("reps".into(), int(cfg.reps));
    t.insert("fit_failures".into(), int(run.failures()));
    t
}

fn run_table(resolved: &ResolvedConfig, command: &str) -> Result<Table> {
    let first = &resolved.experiments[0];
    let mut t = Table::new();
    t.insert("command".into(), command.into());
    t.insert("model".into(), first.model.id().into());
    t.insert("statistic".into(), first.statistic.id().into());
    t.insert(
        "basis".into(),
        make_basis(first.p(), first.model.dim())?.describe().into(),
    );
    if first.p() >= 2 {
        t.insert("grid".into(), int(first.grid_spec().resolution));
        t.insert("anchors".into(), first.anchors.id().into());
    }
    if first.statistic == StatisticKind::Cvm {
        t.insert("note".into(), CVM_NOTE.into());
    }
    Ok(t)
}

fn plot_table(ecdf: &Ecdf, d: char) -> Result<String> {
    let mut s = format!("x{d}kolmogorov{d}empirical\n");
    let r = ecdf.len();
    for (i, &x) in ecdf.values().iter().enumerate() {
        let _ = writeln!(
            s,
            "{x}{d}{}{d}{}",
            kolmogorov_cdf(x.max(0.0))?,
            (i + 1) as f64 / r as f64
        );
    }
    Ok(s)
}

fn pairwise(names: &[&str], ecdfs: &[Ecdf]) -> Table {
    let mut t = Table::new();
    for i in 0..ecdfs.len() {
        for j in i + 1..ecdfs.len() {
            t.insert(
                format!("{}__{}", names[i], names[j]),
                ecdf_sup_distance(&ecdfs[i], &ecdfs[j]).into(),
            );
        }
    }
    t
}

pub(crate) fn simulate_cmd(ctx: &Context, args: &SimArgs) -> Result<()> {
    let started = Instant::now();
    let (resolved, m, _) = load(ctx, args, "simulate")?;
    if resolved.file.alternative.is_some() {
        return Err(CliError::Config(
            "`simulate` runs the null model; use `power` for alternatives".into(),
        ));
    }
    let d = ctx.delimiter;
    let output = &resolved.file.output;
    let mut out = OutputSet::default();
    let mut summary = Table::new();
    summary.insert("run".into(), run_table(&resolved, "simulate")?.into());
    let mut designs = Table::new();
    let mut names = Vec::new();
    let mut transformed = Vec::new();
    let mut raw = Vec::new();
    for cfg in &resolved.experiments {
        let run = simulate_null(cfg, ctx.workers)?;
        let id = cfg.design.id();
        let e = run.ecdf(cfg.statistic, true);
        let r = run.ecdf(cfg.statistic, false);
        let mut t = design_header(cfg, &run);
        if cfg.model.dim() == 1 && cfg.p() == 1 && cfg.statistic == StatisticKind::KsAbs {
            t.insert("kolmogorov_distance".into(), e.sup_distance_to(kolmogorov_cdf)?.into());
        }
        out.add(format!("ecdf_{id}.csv"), format_ecdf(&e, d));
        if output.raw {
            out.add(format!("ecdf_{id}_raw.csv"), format_ecdf(&r, d));
        }
        if output.plot_data {
            out.add(format!("plot_{id}.csv"), plot_table(&e, d)?);
        }
        designs.insert(id.into(), t.into());
        names.push(id);
        transformed.push(e);
        raw.push(r);
    }
    summary.insert("designs".into(), designs.into());
    if names.len() > 1 {
        summary.insert("distances".into(), pairwise(&names, &transformed).into());
        summary.insert("raw_distances".into(), pairwise(&names, &raw).into());
    }
    out.add_toml("summary.toml", &summary)?;
    out.add_toml("manifest.toml", &m)?;
    out.add("timing.toml", timing(started, ctx.workers));
    out.commit(ctx.output_dir)
}

pub(crate) fn power_cmd(ctx: &Context, args: &SimArgs) -> Result<()> {
    let started = Instant::now();
    let (resolved, m, _) = load(ctx, args, "power")?;
    let alt = resolved
        .file
        .alternative
        .as_ref()
        .ok_or_else(|| CliError::Config("`power` needs an [alternative] section".into()))?;
    let d = ctx.delimiter;
    let mut out = OutputSet::default();
    let mut run_t = run_table(&resolved, "power")?;
    run_t.insert("psi".into(), alt.psi.clone().into());
    run_t.insert("amplitude".into(), alt.amplitude.into());
    run_t.insert("local_scaling".into(), alt.local_scaling.into());
    let mut summary = Table::new();
    summary.insert("run".into(), run_t.into());
    let mut designs = Table::new();
    let mut rejection = format!("design{d}level{d}transformed{d}raw\n");
    for cfg in &resolved.experiments {
        let run = simulate_power(cfg, ctx.workers)?;
        let id = cfg.design.id();
        let null_e = run.null.ecdf(cfg.statistic, true);
        let alt_e = run.ecdf();
        out.add(format!("ecdf_{id}_null.csv"), format_ecdf(&null_e, d));
        out.add(format!("ecdf_{id}_alternative.csv"), format_ecdf(&alt_e, d));
        if resolved.file.output.raw {
            out.add(
                format!("ecdf_{id}_null_raw.csv"),
                format_ecdf(&run.null.ecdf(cfg.statistic, false), d),
            );
            out.add(
                format!("ecdf_{id}_alternative_raw.csv"),
                format_ecdf(&run.alternative.ecdf(cfg.statistic, false), d),
            );
        }
        let mut t = design_header(cfg, &run.alternative);
        t.insert("null_fit_failures".into(), int(run.null.failures()));
        t.insert(
            "null_alternative_distance".into(),
            ecdf_sup_distance(&null_e, &alt_e).into(),
        );
        let mut rates = Table::new();
        let mut raw_rates = Table::new();
        for (&(level, rate), &(_, raw_rate)) in run.rejection_rate_at.iter().zip(&run.raw_rejection_rate_at) {
            let _ = writeln!(rejection, "{id}{d}{level}{d}{rate}{d}{raw_rate}");
            rates.insert(level.to_string(), rate.into());
            raw_rates.insert(level.to_string(), raw_rate.into());
        }
        t.insert("rejection_rate".into(), rates.into());
        t.insert("raw_rejection_rate".into(), raw_rates.into());
        designs.insert(id.into(), t.into());
    }
    summary.insert("designs".into(), designs.into());
    out.add("rejection.csv", rejection);
    out.add_toml("summary.toml", &summary)?;
    out.add_toml("manifest.toml", &m)?;
    out.add("timing.toml", timing(started, ctx.workers));
    out.commit(ctx.output_dir)
}

pub(crate) fn assign_cmd(ctx: &Context, args: &AssignArgs) -> Result<()> {
    let (x, p) = parse_points(&read(&args.data)?, ctx.delimiter)?;
    let n = x.len() / p;
    let kind = AnchorKind::parse(&args.anchors)?;
    let mode = match kind {
        AnchorKind::Halton => AnchorMode::Halton,
        AnchorKind::Random => AnchorMode::Random {
            seed: derive_seed(require_seed(args.seed, "assign --anchors random")?, "anchors", 0),
        },
    };
    let rescale = UnitRescale::fit(&x, p);
    let unit = rescale.apply(&x);
    let anchors = generate_anchors(n, p, mode)?;
    let assignment = solve_assignment(&unit, &anchors)?;

    let mut out = OutputSet::default();
    out.add(
        "pairs.csv",
        format_assignment(&unit, &anchors, &assignment, ctx.delimiter),
    );
    let mut anchor_text = String::new();
    for j in 0..n {
        let row: Vec<String> = anchors.point(j).iter().map(f64::to_string).collect();
        let _ = writeln!(anchor_text, "{}", row.join(&ctx.delimiter.to_string()));
    }
    out.add("anchors.csv", anchor_text);
    let mut summary = Table::new();
    summary.insert("n".into(), int(n));
    summary.insert("p".into(), int(p));
    summary.insert("anchors".into(), kind.id().into());
    summary.insert("total_cost".into(), assignment.cost.into());
    summary.insert("rescale_min".into(), floats(&rescale.mins));
    summary.insert("rescale_max".into(), floats(&rescale.maxs));
    out.add_toml("summary.toml", &summary)?;

    let mut params = Table::new();
    params.insert("data".into(), args.data.display().to_string().into());
    params.insert("anchors".into(), kind.id().into());
    let mut m = manifest(ctx, "assign");
    m.seed = args.seed;
    m.parameters = Some(params);
    out.add_toml("manifest.toml", &m)?;
    out.commit(ctx.output_dir)
}

pub(crate) fn limits_cmd(ctx: &Context, args: &LimitsArgs) -> Result<()> {
    if args.points == 0 || args.x_steps == 0 || !(args.x_max > 0.0) {
        return Err(CliError::Usage(
            "--points, --x-steps and --x-max must be positive".into(),
        ));
    }
    let d = ctx.delimiter;
    let basis = make_basis(args.p, args.d)?;
    let mut out = OutputSet::default();
    let mut k = format!("x{d}cdf\n");
    for i in 0..=args.x_steps {
        let x = args.x_max * i as f64 / args.x_steps as f64;
        let _ = writeln!(k, "{x}{d}{}", kolmogorov_cdf(x)?);
    }
    out.add("kolmogorov.csv", k);
    // Points (t, ..., t) on the diagonal of the unit cube.
    let ts: Vec<f64> = (1..=args.points).map(|i| i as f64 / args.points as f64).collect();
    let mut c = format!("s{d}t{d}covariance\n");
    for &s in &ts {
        for &t in &ts {
            let v = limit_covariance(&vec![s; args.p], &vec![t; args.p], &basis)?;
            let _ = writeln!(c, "{s}{d}{t}{d}{v}");
        }
    }
    out.add("limit_covariance.csv", c);
    let mut summary = Table::new();
    summary.insert("basis".into(), basis.describe().into());
    summary.insert("p".into(), int(args.p));
    summary.insert("d".into(), int(args.d));
    out.add_toml("summary.toml", &summary)?;
    let mut params = Table::new();
    params.insert("d".into(), int(args.d));
    params.insert("p".into(), int(args.p));
    params.insert("points".into(), int(args.points));
    params.insert("x_max".into(), args.x_max.into());
    params.insert("x_steps".into(), int(args.x_steps));
    let mut m = manifest(ctx, "limits");
    m.parameters = Some(params);
    out.add_toml("manifest.toml", &m)?;
    out.commit(ctx.output_dir)
}
