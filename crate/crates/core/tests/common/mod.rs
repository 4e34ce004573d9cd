//! Shared scenario builders and independent oracles for the integration
//! tests. Oracles here deliberately avoid the library's own numerics.
#![allow(dead_code)]

use std::f64::consts::TAU;

use chrono::NaiveDate;
use mmhm::mark::MarkModel;
use mmhm::simulate::{
    gravity_od, swiss_cantons, Change, KernelSpec, MobilityCategory, OdProcess, RegionSpec,
    ScenarioSpec, Seed, Trajectory,
};
use mmhm::{Kernel, MobilityTensor, RegionPanel};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic value in `[0, 1)` per region and salt.
pub fn spread(i: usize, salt: u64) -> f64 {
    (mmhm::rng::stream_seed(salt, &[i as u64]) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
}

fn slow_sinusoid(i: usize, salt: u64, amplitude: f64) -> Trajectory {
    Trajectory::Sinusoid {
        mean: 1.0,
        amplitude,
        period: 90.0 + 60.0 * spread(i, salt),
        phase: TAU * spread(i, salt + 10),
    }
}

/// 26 cantons, 120 days, no travel import, every region seeded on day 1.
pub fn recovery_scenario(seed: u64) -> ScenarioSpec {
    let regions = swiss_cantons();
    let n = regions.len();
    let category = |mode: &str, salt: u64| MobilityCategory {
        mode: mode.into(),
        purpose: "all".into(),
        base_trips: regions.iter().map(|r| r.population as f64).collect(),
        trajectories: (0..n).map(|i| slow_sinusoid(i, salt, 0.3)).collect(),
    };
    let weather = (0..n)
        .map(|i| Trajectory::Sinusoid {
            mean: 5.0 + 15.0 * spread(i, 3),
            amplitude: 4.0,
            period: 120.0 + 60.0 * spread(i, 4),
            phase: 6.0 * spread(i, 5),
        })
        .collect();
    let seeds = regions
        .iter()
        .map(|r| Seed {
            region: r.code.clone(),
            day: 1,
            cases: 10,
        })
        .collect();
    ScenarioSpec {
        n_days: 120,
        start_date: start_date(),
        od: OdProcess {
            baseline: gravity_od(&regions, 0.01),
            multiplier: Trajectory::constant(1.0),
        },
        mobility: vec![category("rail", 1), category("road", 2)],
        weather: Some(weather),
        regions,
        true_beta0: -0.45,
        true_theta: vec![0.6, -0.5, 0.02],
        true_alpha: 0.0,
        kernel: KernelSpec::default(),
        reference_days: 14,
        seeds,
        lambda_cap: 1e6,
        rng_seed: seed,
    }
}

/// Three hubs exporting cases to seven satellites through strong OD flows.
/// Satellites are never seeded, so their outbreaks start from travel.
pub fn hub_scenario(seed: u64) -> ScenarioSpec {
    let (hubs, n) = (3, 10);
    let regions: Vec<RegionSpec> = (0..n)
        .map(|i| RegionSpec {
            code: format!("R{i:02}"),
            name: format!("region {i}"),
            population: if i < hubs { 1_000_000 } else { 100_000 },
            density: 50.0 + 400.0 * spread(i, 7),
            city_pct: 20.0 + 70.0 * spread(i, 8),
        })
        .collect();
    let mut od = vec![vec![0.0; n]; n];
    for (a, row) in od.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            if a != b {
                *v = match (a < hubs, b < hubs) {
                    (true, false) => 15_000.0,
                    (false, true) | (true, true) => 5_000.0,
                    (false, false) => 500.0,
                };
            }
        }
    }
    let mobility = MobilityCategory {
        mode: "all".into(),
        purpose: "all".into(),
        base_trips: regions.iter().map(|r| r.population as f64).collect(),
        trajectories: (0..n).map(|i| slow_sinusoid(i, 1, 0.2)).collect(),
    };
    let seeds = (0..hubs)
        .flat_map(|h| {
            [1, 15, 30, 45, 60].map(|day| Seed {
                region: format!("R{h:02}"),
                day,
                cases: 20,
            })
        })
        .collect();
    ScenarioSpec {
        n_days: 90,
        start_date: start_date(),
        regions,
        true_beta0: -0.15,
        true_theta: vec![0.5],
        true_alpha: 1.0,
        kernel: KernelSpec::default(),
        mobility: vec![mobility],
        weather: None,
        reference_days: 14,
        od: OdProcess {
            baseline: od,
            multiplier: Trajectory::PiecewiseConstant {
                initial: 1.0,
                changes: vec![Change { day: 35, value: 0.3 }, Change { day: 60, value: 1.5 }],
            },
        },
        seeds,
        lambda_cap: 1e6,
        rng_seed: seed,
    }
}

/// Random panel with `p` covariates and Poisson-ish counts.
pub fn random_panel(rng: &mut impl Rng, n: usize, t: usize, p: usize, max_cases: u64) -> RegionPanel {
    let cases = Array2::from_shape_fn((n, t), |_| rng.random_range(0..=max_cases));
    let covariates = Array3::from_shape_fn((n, t, p), |_| rng.random_range(-1.0..1.0));
    RegionPanel::new(
        (0..n).map(|i| format!("R{i}")).collect(),
        (0..n).map(|_| rng.random_range(1_000..1_000_000)).collect(),
        cases,
        covariates,
        (0..p).map(|j| format!("x{j}")).collect(),
    )
    .unwrap()
}

/// Random OD tensor (`T x N x N`) with a zero diagonal.
pub fn random_mobility(rng: &mut impl Rng, n: usize, t: usize) -> MobilityTensor {
    let od = Array3::from_shape_fn((t, n, n), |(_, a, b)| {
        if a == b {
            0.0
        } else {
            rng.random_range(0.0..5_000.0)
        }
    });
    MobilityTensor::from_od(od).unwrap()
}

pub fn random_mark(rng: &mut impl Rng, p: usize) -> MarkModel {
    MarkModel::from_raw(
        rng.random_range(-0.5..0.3),
        (0..p).map(|_| rng.random_range(-0.4..0.4)).collect(),
        (0..p).map(|j| format!("x{j}")).collect(),
    )
    .unwrap()
}

/// Gamma density from its definition, with `ln Γ` from statrs.
pub fn gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - statrs::function::gamma::ln_gamma(shape)).exp()
}

/// Composite Simpson rule.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Lag masses of a Gamma distribution by quadrature: lag 1 covers
/// `[0, 1.5]`, lag `l` covers `[l − 0.5, l + 0.5]`.
pub fn quadrature_kernel(shape: f64, scale: f64, truncation: usize) -> Vec<f64> {
    (1..=truncation)
        .map(|l| {
            let lo = if l == 1 { 0.0 } else { l as f64 - 0.5 };
            simpson(|x| gamma_pdf(x, shape, scale), lo, l as f64 + 0.5, 4_000)
        })
        .collect()
}

/// Travel correction straight from its defining sum.
pub fn brute_correction(panel: &RegionPanel, mobility: &MobilityTensor) -> Array2<f64> {
    let (n, t) = (panel.n_regions(), panel.n_days());
    let mut out = Array2::zeros((n, t));
    for day in 0..t {
        for to in 0..n {
            let mut acc = 0.0;
            for from in 0..n {
                if from != to {
                    let prevalence = panel.case(from, day) as f64 / panel.population()[from] as f64;
                    acc += mobility.trips(day, from, to) * prevalence;
                }
            }
            out[[to, day]] = acc;
        }
    }
    out
}

/// `R(x)` from raw coefficients.
pub fn brute_mark(mark: &MarkModel, x: &[f64]) -> f64 {
    let (b0, theta) = mark.raw_coefficients();
    (b0 + theta.iter().zip(x).map(|(t, v)| t * v).sum::<f64>()).exp()
}

/// Intensity summing over every earlier day, with `φ(l) = 0` beyond the
/// kernel support. `day` is zero-based.
pub fn brute_intensity(
    panel: &RegionPanel,
    n_hat: &Array2<f64>,
    mark: &MarkModel,
    kernel: &Kernel,
    alpha: f64,
    background: f64,
    region: usize,
    day: usize,
) -> f64 {
    let probs = kernel.probs();
    let mut acc = 0.0;
    for s in 0..day {
        let lag = day - s;
        let phi = if lag <= probs.len() { probs[lag - 1] } else { 0.0 };
        acc += (panel.case(region, s) as f64 + alpha * n_hat[[region, s]]) * phi;
    }
    let x: Vec<f64> = panel.covariates_at(region, day).to_vec();
    background + brute_mark(mark, &x) * acc
}

/// E-step as a triple loop over regions, source days and receiving days.
pub fn brute_e_step(
    panel: &RegionPanel,
    n_hat: &Array2<f64>,
    mark: &MarkModel,
    kernel: &Kernel,
    alpha: f64,
    background: f64,
) -> Array2<f64> {
    let (n, t) = (panel.n_regions(), panel.n_days());
    let probs = kernel.probs();
    let mut r = Array2::zeros((n, t));
    for i in 0..n {
        for s in 0..t {
            for tp in s + 1..t {
                let lag = tp - s;
                if lag > probs.len() || panel.case(i, tp) == 0 {
                    continue;
                }
                let lambda = brute_intensity(panel, n_hat, mark, kernel, alpha, background, i, tp);
                let x: Vec<f64> = panel.covariates_at(i, tp).to_vec();
                r[[i, s]] += brute_mark(mark, &x) * probs[lag - 1] / lambda * panel.case(i, tp) as f64;
            }
        }
    }
    r
}

/// Mean Poisson loss of `(b0, t)` on a single standardized column.
pub fn poisson_loss(x: &[f64], r: &[f64], b0: f64, t: f64) -> f64 {
    x.iter()
        .zip(r)
        .map(|(xk, rk)| {
            let eta = b0 + t * xk;
            eta.exp() - rk * eta
        })
        .sum::<f64>()
        / x.len() as f64
}

/// Two-parameter minimizer by successively refined grid search.
pub fn grid_search_mle(x: &[f64], r: &[f64]) -> (f64, f64) {
    let (mut cb, mut ct) = (0.0, 0.0);
    let mut step = 0.25;
    let mut half_width = 40;
    while step > 1e-8 {
        let mut best = (f64::INFINITY, cb, ct);
        for a in -half_width..=half_width {
            for b in -half_width..=half_width {
                let (pb, pt) = (cb + a as f64 * step, ct + b as f64 * step);
                let v = poisson_loss(x, r, pb, pt);
                if v < best.0 {
                    best = (v, pb, pt);
                }
            }
        }
        cb = best.1;
        ct = best.2;
        step /= 8.0;
        half_width = 16;
    }
    (cb, ct)
}

/// Exact two-sided signed-rank p-value by enumerating all `2^n` signs.
/// Ranks are doubled mid-ranks, matching the tie convention under test.
pub fn enumerate_wilcoxon(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let mut ranks2 = vec![0u64; n];
    for i in 0..n {
        let less = d.iter().filter(|v| v.abs() < d[i].abs()).count() as u64;
        let equal = d.iter().filter(|v| v.abs() == d[i].abs()).count() as u64;
        // mid-rank = less + (equal + 1) / 2, doubled
        ranks2[i] = 2 * less + equal + 1;
    }
    let total: u64 = ranks2.iter().sum();
    let w_plus: u64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks2[i]).sum();
    let stat = w_plus.min(total - w_plus);
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks2[i]).sum();
        if w <= stat {
            extreme += 1;
        }
    }
    let p = (2.0 * extreme as f64 / (1u64 << n) as f64).min(1.0);
    (stat as f64 / 2.0, p)
}
