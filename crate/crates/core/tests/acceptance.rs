//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mmhm::data::write_forecast_csv;
use mmhm::domain::{discretize_gamma, INCUBATION_SCALE, INCUBATION_SHAPE};
use mmhm::estimate::{
    attribution_sums, fit_spec, loro_cv, tune, BackgroundGrid, CvConfig, FitSpec, Grid, TuneResult,
};
use mmhm::eval::{baseline_panel, baseline_spec, score, wilcoxon_signed_rank};
use mmhm::forecast::{forecast, poisson_sample, ForecastConfig};
use mmhm::mark::{fit_poisson_lasso, standardize_rows, MarkFitProblem};
use mmhm::process::{compute_correction, intensity, IntensityParams};
use mmhm::simulate::{simulate_panel, ScenarioSpec, SimulationOutput};
use mmhm::{DayIndex, ImportTerm, Kernel, RegionId};
use ndarray::Array2;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

use common::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    check(
        elapsed < budget,
        format!("{detail}; {:.2}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64()),
    )
}

fn kernel_correctness() -> Outcome {
    let t0 = Instant::now();
    let oracle = quadrature_kernel(INCUBATION_SHAPE, INCUBATION_SCALE, 30);
    let raw = discretize_gamma(INCUBATION_SHAPE, INCUBATION_SCALE, 30, false).map_err(|e| e.to_string())?;
    let lag_err = raw
        .probs()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let oracle_total: f64 = oracle.iter().sum();
    let norm_err = Kernel::incubation()
        .probs()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b / oracle_total).abs())
        .fold(0.0, f64::max);
    let cdf = Gamma::new(INCUBATION_SHAPE, 1.0 / INCUBATION_SCALE).unwrap().cdf(30.5);
    let mass_err = (raw.probs().iter().sum::<f64>() - cdf).abs();
    let elapsed = t0.elapsed();
    let detail = format!(
        "max lag error {lag_err:.2e} (renormalized {norm_err:.2e}), mass identity error {mass_err:.2e}"
    );
    if lag_err > 1e-8 || norm_err > 1e-8 || mass_err > 1e-12 {
        return Err(detail);
    }
    within_budget(elapsed, Duration::from_secs(1), detail)
}

fn correction_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng(2);
    let mut mismatches = 0;
    for _ in 0..100 {
        let t = rng.random_range(5..=30);
        let panel = random_panel(&mut rng, 5, t, 0, 50);
        let mobility = random_mobility(&mut rng, 5, t);
        let fast = compute_correction(&panel, &mobility).map_err(|e| e.to_string())?;
        if fast.n_hat != brute_correction(&panel, &mobility) {
            mismatches += 1;
        }
    }
    let detail = format!("{mismatches} of 100 instances differ bitwise");
    if mismatches > 0 {
        return Err(detail);
    }
    within_budget(t0.elapsed(), Duration::from_secs(1), detail)
}

fn intensity_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng(3);
    let kernel = Kernel::incubation();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let panel = random_panel(&mut rng, 3, 40, 2, 40);
        let mobility = random_mobility(&mut rng, 3, 40);
        let correction = compute_correction(&panel, &mobility).map_err(|e| e.to_string())?;
        let alpha = rng.random_range(0.0..3.0);
        let params = IntensityParams {
            import: ImportTerm::Travel { alpha },
            kernel: kernel.clone(),
            mark: random_mark(&mut rng, 2),
        };
        for i in 0..3 {
            for d in 0..40 {
                let fast = intensity(&params, &panel, &correction, RegionId(i), DayIndex::from_offset(d))
                    .map_err(|e| e.to_string())?;
                let slow = brute_intensity(&panel, &correction.n_hat, &params.mark, &kernel, alpha, 0.0, i, d);
                worst = worst.max((fast - slow).abs() / slow.abs().max(1.0));
            }
        }
    }
    let detail = format!("max relative error {worst:.2e} over 20 panels of 3 x 40");
    if worst > 1e-8 {
        return Err(detail);
    }
    within_budget(t0.elapsed(), Duration::from_secs(5), detail)
}

fn attribution_consistency() -> Outcome {
    let mut rng = rng(4);
    let kernel = Kernel::incubation();
    let (mut worst, mut checked): (f64, usize) = (0.0, 0);
    for k in 0..20 {
        let t = rng.random_range(20..60);
        let mut panel = random_panel(&mut rng, 4, t, 2, 30);
        // a panel with zero-count days mixed in
        if k % 2 == 0 {
            let cases = panel.cases().mapv(|y| if y % 3 == 0 { 0 } else { y });
            panel = mmhm::RegionPanel::new(
                panel.codes().to_vec(),
                panel.population().to_vec(),
                cases,
                panel.covariates().clone(),
                panel.covariate_names().to_vec(),
            )
            .unwrap();
        }
        let mobility = random_mobility(&mut rng, 4, t);
        let correction = compute_correction(&panel, &mobility).map_err(|e| e.to_string())?;
        let mark = random_mark(&mut rng, 2);
        let import = if k % 3 == 0 {
            ImportTerm::Background { rate: rng.random_range(0.1..5.0) }
        } else {
            ImportTerm::Travel { alpha: rng.random_range(0.0..3.0) }
        };
        let sums = attribution_sums(&panel, &correction, &mark, &kernel, import, 1e-10);
        for ((i, d), s) in sums.indexed_iter() {
            if panel.case(i, d) == 0 {
                continue;
            }
            let has_source = import.background() > 0.0 || (0..d).any(|s| panel.case(i, s) > 0 || correction.n_hat[[i, s]] > 0.0);
            if !has_source {
                continue;
            }
            checked += 1;
            worst = worst.max(if s.is_finite() { (s - 1.0).abs() } else { f64::INFINITY });
        }
    }
    check(
        worst <= 1e-10 && checked > 0,
        format!("max |sum - 1| = {worst:.2e} over {checked} region-days with cases"),
    )
}

fn m_step_optimality() -> Outcome {
    let mut rng = rng(5);
    let mut worst: f64 = 0.0;
    let mut shrink_theta: f64 = 0.0;
    let mut shrink_beta: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(60..200);
        let raw = Array2::from_shape_fn((n, 1), |_| rng.random_range(-2.0..2.0));
        let design = standardize_rows(raw.view(), &["x".to_string()]).map_err(|e| e.to_string())?;
        let (b, t) = (rng.random_range(-0.5..1.0), rng.random_range(-0.8..0.8));
        let r: Vec<f64> = design
            .x
            .column(0)
            .iter()
            .map(|x| (b + t * x).exp() * rng.random_range(0.2..1.8))
            .collect();
        let x: Vec<f64> = design.x.column(0).to_vec();
        let fit = fit_poisson_lasso(&MarkFitProblem { design: design.clone(), r: r.clone(), xi: 0.0 })
            .map_err(|e| e.to_string())?;
        let (ob, ot) = grid_search_mle(&x, &r);
        worst = worst.max((fit.beta0 - ob).abs()).max((fit.theta[0] - ot).abs());

        let heavy = fit_poisson_lasso(&MarkFitProblem { design, r: r.clone(), xi: 1e6 })
            .map_err(|e| e.to_string())?;
        let mean_r = r.iter().sum::<f64>() / r.len() as f64;
        shrink_theta = shrink_theta.max(heavy.theta[0].abs());
        shrink_beta = shrink_beta.max((heavy.beta0 - mean_r.ln()).abs());
    }
    check(
        worst <= 1e-4 && shrink_theta == 0.0 && shrink_beta <= 1e-8,
        format!(
            "max deviation from grid MLE {worst:.2e}; at xi=1e6 max |theta| {shrink_theta:.1e}, intercept error {shrink_beta:.2e}"
        ),
    )
}

fn fit_raw(sim: &SimulationOutput, kernel: &Kernel) -> Result<Vec<f64>, String> {
    let panel = &sim.bundle.panel;
    let correction = compute_correction(panel, &sim.bundle.mobility).map_err(|e| e.to_string())?;
    let fit = fit_spec(panel, &correction, kernel, &FitSpec::travel(0.0, 0.0), None).map_err(|e| e.to_string())?;
    let (b0, theta) = fit.mark.raw_coefficients();
    Ok(std::iter::once(b0).chain(theta).collect())
}

fn parameter_recovery() -> Outcome {
    const RUNS: u64 = 20;
    const BOOTSTRAP: u64 = 50;
    let t0 = Instant::now();
    let kernel = Kernel::incubation();
    let (mut hits, mut min_cases) = (0, u64::MAX);
    for run in 0..RUNS {
        let spec = recovery_scenario(1000 + run);
        let truth: Vec<f64> = std::iter::once(spec.true_beta0).chain(spec.true_theta.iter().copied()).collect();
        let sim = simulate_panel(&spec).map_err(|e| e.to_string())?;
        min_cases = min_cases.min(sim.truth.total_cases);
        let est = fit_raw(&sim, &kernel)?;
        // parametric bootstrap around the estimate
        let mut draws: Vec<Vec<f64>> = Vec::new();
        for b in 0..BOOTSTRAP {
            let boot = ScenarioSpec {
                true_beta0: est[0],
                true_theta: est[1..].to_vec(),
                rng_seed: 50_000 + run * 100 + b,
                ..spec.clone()
            };
            draws.push(fit_raw(&simulate_panel(&boot).map_err(|e| e.to_string())?, &kernel)?);
        }
        let covered = (0..truth.len()).all(|j| {
            let m = draws.iter().map(|d| d[j]).sum::<f64>() / BOOTSTRAP as f64;
            let var = draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / (BOOTSTRAP - 1) as f64;
            (est[j] - truth[j]).abs() <= 3.0 * var.sqrt()
        });
        hits += covered as u32;
    }
    let detail = format!("{hits}/{RUNS} runs within 3 bootstrap SEs; fewest cases {min_cases}");
    if hits < 18 || min_cases < 5_000 {
        return Err(detail);
    }
    within_budget(t0.elapsed(), Duration::from_secs(600), detail)
}

struct HubRun {
    sim: SimulationOutput,
    tuned: TuneResult,
}

fn hub_cv() -> CvConfig {
    CvConfig {
        horizon: 14,
        ..CvConfig::default()
    }
}

fn hub_runs() -> Result<Vec<HubRun>, String> {
    let kernel = Kernel::incubation();
    (0..10u64)
        .map(|run| {
            let sim = simulate_panel(&hub_scenario(100 + run)).map_err(|e| e.to_string())?;
            let b = &sim.bundle;
            let tuned = tune(&b.panel, &b.mobility, &kernel, &Grid::default(), &FitSpec::travel(1.0, 0.0), &hub_cv())
                .map_err(|e| e.to_string())?;
            Ok(HubRun { sim, tuned })
        })
        .collect()
}

fn tuning_signal(runs: &[HubRun]) -> Outcome {
    let alphas: Vec<f64> = runs.iter().map(|r| r.tuned.best_alpha).collect();
    let hits = alphas.iter().filter(|a| (0.5..=1.75).contains(*a)).count();
    check(hits >= 8, format!("best_alpha in [0.5, 1.75] for {hits}/10 runs: {alphas:?}"))
}

fn forecast_checks() -> Outcome {
    let mut rng = rng(8);
    let mut notes = Vec::new();
    for rate in [0.5, 4.0, 100.0] {
        let m = 200_000;
        let draws: Vec<f64> = (0..m)
            .map(|_| poisson_sample(rate, &mut rng).map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let mean = draws.iter().sum::<f64>() / m as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let mean_z = (mean - rate) / (rate / m as f64).sqrt();
        let var_z = (var - rate) / ((rate + 2.0 * rate * rate) / m as f64).sqrt();
        if mean_z.abs() > 3.0 || var_z.abs() > 3.0 {
            return Err(format!("rate {rate}: mean z {mean_z:.2}, variance z {var_z:.2}"));
        }
        notes.push(format!("{rate}: z {mean_z:.2}/{var_z:.2}"));
    }

    let sim = simulate_panel(&ScenarioSpec::desk_scale(7)).map_err(|e| e.to_string())?;
    let b = &sim.bundle;
    let correction = compute_correction(&b.panel, &b.mobility).map_err(|e| e.to_string())?;
    let model = fit_spec(&b.panel, &correction, &Kernel::incubation(), &FitSpec::travel(1.0, 0.0), None)
        .map_err(|e| e.to_string())?;
    let config = ForecastConfig {
        horizon: 21,
        replicates: 10,
        seed: 42,
        ..ForecastConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let first = forecast(&model, &b.panel, &b.mobility, &config).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let second = forecast(&model, &b.panel, &b.mobility, &config).map_err(|e| e.to_string())?;
    let start = b.date_of(b.n_days());
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_forecast_csv(&pa, &first, b.panel.codes(), start).map_err(|e| e.to_string())?;
    write_forecast_csv(&pb, &second, b.panel.codes(), start).map_err(|e| e.to_string())?;
    let same = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
    if !same {
        return Err("forecast files differ between identical runs".into());
    }
    within_budget(
        elapsed,
        Duration::from_secs(30),
        format!(
            "sampler moments ({}); forecast bytes identical; N={} x 10 replicates x 21 days",
            notes.join(", "),
            b.n_regions()
        ),
    )
}

fn ablation(runs: &[HubRun]) -> Outcome {
    let kernel = Kernel::incubation();
    let cv = hub_cv();
    let (mut beats_nc, mut beats_naive) = (0, 0);
    let mut rows = Vec::new();
    for run in runs {
        let b = &run.sim.bundle;
        let (alpha, xi) = (run.tuned.best_alpha, run.tuned.best_xi);
        let macro_rmse = |panel, spec: &FitSpec| {
            loro_cv(panel, &b.mobility, &kernel, spec, &cv)
                .map(|r| r.report.macro_rmse)
                .map_err(|e| e.to_string())
        };
        let full = macro_rmse(&b.panel, &FitSpec::travel(alpha, xi))?;
        let no_correction = macro_rmse(&b.panel, &FitSpec::background(BackgroundGrid::default(), xi))?;
        let naive_panel = baseline_panel(&b.panel, &b.demographics()).map_err(|e| e.to_string())?;
        let naive = macro_rmse(&naive_panel, &baseline_spec(BackgroundGrid::default()))?;
        beats_nc += (full < no_correction) as u32;
        beats_naive += (full < naive) as u32;
        rows.push(format!("{full:.0}/{no_correction:.0}/{naive:.0}"));
    }
    // one-sided sign test: P(X >= k) for X ~ Binomial(10, 1/2)
    let p = |k: u32| (k..=10).map(|j| binomial(10, j)).sum::<f64>() / 1024.0;
    let (p_nc, p_naive) = (p(beats_nc), p(beats_naive));
    check(
        p_nc < 0.1 && p_naive < 0.1,
        format!(
            "full beats no-correction {beats_nc}/10 (p={p_nc:.4}), naive {beats_naive}/10 (p={p_naive:.4}); macro RMSE full/no-corr/naive {}",
            rows.join(" ")
        ),
    )
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn metrics_and_wilcoxon() -> Outcome {
    let cases: [(&[f64], &[f64], f64, f64); 5] = [
        (&[0.0, 0.0, 0.0, 0.0], &[3.0, 4.0, 0.0, 0.0], 2.5, 1.75),
        (&[10.0], &[7.0], 3.0, 3.0),
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 0.0, 0.0),
        (&[5.0, 5.0, 5.0, 5.0], &[3.0, 7.0, 3.0, 7.0], 2.0, 2.0),
        (&[0.0, 0.0], &[6.0, 8.0], 50f64.sqrt(), 7.0),
    ];
    for (a, p, rmse, mae) in cases {
        let got = score(a, p).map_err(|e| e.to_string())?;
        if got != (rmse, mae) {
            return Err(format!("score({a:?}, {p:?}) = {got:?}, expected ({rmse}, {mae})"));
        }
    }
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 0..300 {
        let n = 6 + k % 7;
        // integer-valued differences produce ties
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-6..=6) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| if k % 2 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        if diffs.iter().filter(|d| **d != 0.0).count() < 6 {
            continue;
        }
        let (stat, p) = enumerate_wilcoxon(&diffs);
        let got = wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())?;
        if got.statistic != stat || !got.exact {
            return Err(format!("statistic {} vs oracle {stat} for {diffs:?}", got.statistic));
        }
        worst = worst.max((got.p_value - p).abs());
        count += 1;
    }
    check(
        worst <= 1e-10,
        format!("5 metric cases exact; {count} Wilcoxon instances (n = 6..12), max p-value error {worst:.1e}"),
    )
}

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {label}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("FAIL {label}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut all = true;
    all &= run("criterion 1 (kernel correctness)", kernel_correctness);
    all &= run("criterion 2 (correction oracle)", correction_oracle);
    all &= run("criterion 3 (intensity oracle)", intensity_oracle);
    all &= run("criterion 4 (attribution consistency)", attribution_consistency);
    all &= run("criterion 5 (M-step optimality)", m_step_optimality);
    all &= run("criterion 6 (parameter recovery)", parameter_recovery);
    let hubs = catch_unwind(hub_runs).unwrap_or_else(|_| Err("hub scenarios panicked".into()));
    let hubs = &hubs;
    let with_hubs = |f: fn(&[HubRun]) -> Outcome| {
        move || match &hubs {
            Ok(runs) => f(runs),
            Err(e) => Err(e.clone()),
        }
    };
    all &= run("criterion 7 (tuning signal)", with_hubs(tuning_signal));
    all &= run("criterion 8 (forecast distribution)", forecast_checks);
    all &= run("criterion 9 (ablation direction)", with_hubs(ablation));
    all &= run("criterion 10 (metrics and Wilcoxon)", metrics_and_wilcoxon);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
