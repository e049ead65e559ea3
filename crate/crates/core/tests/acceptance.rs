//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 if any criterion fails.
//!
//! Set `DFRESID_ACCEPT_WORKERS` to change the worker count of the primary
//! runs (default 4); the determinism rerun uses a different count.

use std::process::ExitCode;
use std::time::Instant;

use dfresid::basis::{make_basis, sample_on_points, unit_grid};
use dfresid::harness::{
    ecdf_sup_distance, run_replications, simulate_null, simulate_power, Alternative, Design, Ecdf, ExperimentConfig,
    Psi,
};
use dfresid::io::format_ecdf;
use dfresid::model::{fit_linear, scan_order, score_basis, ModelSpec, Sample};
use dfresid::process::{kolmogorov_cdf, StatisticKind};
use dfresid::transform::transform_matrix;
use dfresid::transport::{brute_force_assignment, generate_anchors, solve_assignment, AnchorMode};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
    /// Rendered output files, compared across worker counts.
    files: Vec<(String, String)>,
}

fn covariance_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for spec in [
        ModelSpec::SimpleLinear,
        ModelSpec::CenteredLinear,
        ModelSpec::Bilinear2d,
    ] {
        for n in [50usize, 200] {
            let p = spec.covariate_dim();
            let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sample = Sample::new(x, p, y).unwrap();
            let model = spec.build(&sample).unwrap();
            let fit = fit_linear(&*model, &sample).unwrap();
            let (order, points) = if p == 1 {
                (scan_order(&sample), unit_grid(n))
            } else {
                let anchors = generate_anchors(n, p, AnchorMode::Halton).unwrap();
                let a = solve_assignment(sample.covariates(), &anchors).unwrap();
                ((0..n).collect(), a.transported_points(&anchors))
            };
            let mu = score_basis(&*model, &fit, &sample, &order).unwrap();
            let r = sample_on_points(&make_basis(p, spec.dim()).unwrap(), &points).unwrap();
            let a = transform_matrix(&mu, &r).unwrap();
            let mut target = DMatrix::identity(n, n);
            for v in r.vectors() {
                let c = DMatrix::from_column_slice(n, 1, v.as_slice());
                target -= &c * c.transpose();
            }
            worst = worst.max((&a * a.transpose() - target).amax());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max entrywise deviation {worst:.3e} (tolerance 1e-10)"),
        files: Vec::new(),
    }
}

fn null_law(workers: usize) -> Outcome {
    let mut ecdfs = Vec::new();
    let mut files = Vec::new();
    let mut to_kolmogorov = Vec::new();
    for design in [Design::Uniform02, Design::Normal12] {
        let cfg = ExperimentConfig::new(design.clone(), ModelSpec::SimpleLinear, 200, 2000, SEED);
        let run = simulate_null(&cfg, workers).unwrap();
        let e = run.ecdf(StatisticKind::KsAbs, true);
        to_kolmogorov.push(e.sup_distance_to(kolmogorov_cdf).unwrap());
        files.push((format!("fig1_{}.csv", design.id()), format_ecdf(&e, ',')));
        ecdfs.push(e);
    }
    let between = ecdf_sup_distance(&ecdfs[0], &ecdfs[1]);
    let pass = to_kolmogorov.iter().all(|&d| d <= 0.06) && between <= 0.05;
    Outcome {
        pass,
        detail: format!(
            "distance to Kolmogorov {:.4} / {:.4} (<= 0.06), between designs {:.4} (<= 0.05)",
            to_kolmogorov[0], to_kolmogorov[1], between
        ),
        files,
    }
}

fn max_pairwise(ecdfs: &[Ecdf]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..ecdfs.len() {
        for j in i + 1..ecdfs.len() {
            m = m.max(ecdf_sup_distance(&ecdfs[i], &ecdfs[j]));
        }
    }
    m
}

fn design_invariance(workers: usize) -> Outcome {
    let mut transformed = Vec::new();
    let mut raw = Vec::new();
    let mut files = Vec::new();
    for design in [Design::BetaDepA, Design::BetaDepB, Design::BetaIndep] {
        let mut cfg = ExperimentConfig::new(design.clone(), ModelSpec::Bilinear2d, 200, 1000, SEED);
        cfg.statistic = StatisticKind::KsPlus;
        let run = simulate_null(&cfg, workers).unwrap();
        let e = run.ecdf(StatisticKind::KsPlus, true);
        let r = run.ecdf(StatisticKind::KsPlus, false);
        files.push((format!("fig3_{}.csv", design.id()), format_ecdf(&e, ',')));
        files.push((format!("fig3_{}_raw.csv", design.id()), format_ecdf(&r, ',')));
        transformed.push(e);
        raw.push(r);
    }
    let t = max_pairwise(&transformed);
    let r = max_pairwise(&raw);
    Outcome {
        pass: t <= 0.07 && r > t,
        detail: format!("transformed max pairwise {t:.4} (<= 0.07), untransformed max pairwise {r:.4} (> transformed)"),
        files,
    }
}

fn assignment_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    let mut total = 0;
    for n in 2..=7 {
        for p in 1..=3 {
            for _ in 0..100 {
                let x: Vec<f64> = (0..n * p).map(|_| rng.random()).collect();
                let anchors = generate_anchors(n, p, AnchorMode::Random { seed: rng.random() }).unwrap();
                let fast = solve_assignment(&x, &anchors).unwrap();
                let slow = brute_force_assignment(&x, &anchors).unwrap();
                total += 1;
                if fast.cost != slow.cost {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} cost mismatches in {total} instances (exact equality)"),
        files: Vec::new(),
    }
}

fn limit_covariance_mc(workers: usize) -> Outcome {
    let times = [0.2, 0.4, 0.6, 0.8];
    let cfg = ExperimentConfig::new(Design::Uniform02, ModelSpec::SimpleLinear, 300, 20000, SEED);
    let reps = run_replications(&cfg, "null", workers, |out| times.map(|t| out.process_e.value_at(&[t]))).unwrap();
    let rows = &reps.results;
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|a| rows.iter().map(|r| r[a]).sum::<f64>() / m).collect();
    let mut worst: f64 = 0.0;
    let mut text = String::from("s,t,empirical,limit\n");
    for a in 0..4 {
        for b in 0..4 {
            let c = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (m - 1.0);
            let target = times[a].min(times[b]) - times[a] * times[b];
            worst = worst.max((c - target).abs());
            text.push_str(&format!("{},{},{c},{target}\n", times[a], times[b]));
        }
    }
    Outcome {
        pass: worst <= 0.03,
        detail: format!("max entrywise deviation from min(s,t) - st: {worst:.4} (<= 0.03)"),
        files: vec![("mc_covariance.csv".into(), text)],
    }
}

fn power(workers: usize) -> Outcome {
    let base = ExperimentConfig::new(Design::BetaDepA, ModelSpec::Bilinear2d, 200, 1000, SEED);
    let mut rates = Vec::new();
    let mut files = Vec::new();
    for (psi, amplitude) in [(Psi::X2Cubed, 1.0), (Psi::SinHalfPiX2, 1.0), (Psi::X2Cubed, 0.0)] {
        let mut cfg = base.clone();
        cfg.alternative = Some(Alternative {
            psi,
            amplitude,
            local_scaling: false,
        });
        let run = simulate_power(&cfg, workers).unwrap();
        let rate = run.rate_at(0.05, true).unwrap();
        let raw = run.rate_at(0.05, false).unwrap();
        files.push((
            format!("power_{}_{amplitude}.csv", psi.id()),
            format_ecdf(&run.ecdf(), ','),
        ));
        rates.push((psi, amplitude, rate, raw));
    }
    let pass = rates[0].2 > 0.10 && rates[1].2 > 0.10 && (rates[2].2 - 0.05).abs() <= 0.02;
    let detail = rates
        .iter()
        .map(|(psi, a, r, raw)| format!("{} amplitude {a}: {r:.3} (raw {raw:.3})", psi.id()))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        pass,
        detail: format!("design beta_dep_a, level 0.05 rejection rates: {detail}; need > 0.10, > 0.10, 0.05 +/- 0.02"),
        files,
    }
}

fn report(id: usize, name: &str, outcome: &Outcome, started: Instant) -> bool {
    println!(
        "criterion {id} [{name}]: {} | {} | {:.1}s",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
    outcome.pass
}

fn main() -> ExitCode {
    let workers: usize = std::env::var("DFRESID_ACCEPT_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4);
    let rerun_workers = if workers == 1 { 2 } else { 1 };
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "exact covariance", &covariance_identity(), t);

    type Run = fn(usize) -> Outcome;
    let stochastic: [(usize, &str, Run); 4] = [
        (2, "null law, one dimension", null_law),
        (3, "design invariance, two dimensions", design_invariance),
        (5, "Monte Carlo limit covariance", limit_covariance_mc),
        (6, "power direction", power),
    ];
    let mut outputs = Vec::new();
    for (id, name, f) in stochastic {
        if id == 5 {
            let t = Instant::now();
            all &= report(4, "assignment exactness", &assignment_exactness(), t);
        }
        let t = Instant::now();
        let o = f(workers);
        all &= report(id, name, &o, t);
        outputs.push((id, f, o.files));
    }

    let t = Instant::now();
    let mut differing = Vec::new();
    for (id, f, files) in &outputs {
        if f(rerun_workers).files != *files {
            differing.push(id.to_string());
        }
    }
    let det = Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("outputs of criteria 2, 3, 5, 6 identical with {workers} and {rerun_workers} workers")
        } else {
            format!("outputs differ for criteria {}", differing.join(", "))
        },
        files: Vec::new(),
    };
    all &= report(7, "determinism across worker counts", &det, t);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
