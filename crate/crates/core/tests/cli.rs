use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mmhm");

fn mmhm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulates the desk-scale scenario truncated to `days` into `dir`.
fn simulate_days(root: &Path, dir: &Path, days: usize) {
    let base = root.join("base");
    if !base.join("scenario.json").exists() {
        let out = mmhm(&["simulate", "--seed", "11", "--out", p(&base)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(base.join("scenario.json")).unwrap()).unwrap();
    spec["n_days"] = days.into();
    let file = root.join(format!("scenario_{days}.json"));
    std::fs::write(&file, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    let out = mmhm(&["simulate", "--scenario", p(&file), "--out", p(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&mmhm(&["--help"])), 0);
    assert_eq!(code(&mmhm(&["--version"])), 0);
    assert_eq!(code(&mmhm(&[])), 64);
    assert_eq!(code(&mmhm(&["explode"])), 64);
    assert_eq!(code(&mmhm(&["fit", "--data", "x"])), 64);

    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_days(tmp.path(), &data, 40);
    let out = tmp.path().join("o");
    assert_eq!(code(&mmhm(&["fit", "--data", p(&data), "--xi", "-1", "--out", p(&out)])), 64);
    assert_eq!(code(&mmhm(&["--jobs", "0", "fit", "--data", p(&data), "--out", p(&out)])), 64);
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "alpha = 1\nmystery = 3\n").unwrap();
    assert_eq!(code(&mmhm(&["--config", p(&cfg), "fit", "--data", p(&data), "--out", p(&out)])), 64);
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let missing = mmhm(&["fit", "--data", p(&tmp.path().join("nope")), "--out", p(&out)]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("regions.csv"));

    let data = tmp.path().join("data");
    simulate_days(tmp.path(), &data, 40);
    let cases = data.join("cases.csv");
    let text = std::fs::read_to_string(&cases).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let broken = lines[2].rsplit_once(',').unwrap().0.to_string() + ",-4";
    lines[2] = &broken;
    std::fs::write(&cases, lines.join("\n") + "\n").unwrap();
    let bad = mmhm(&["fit", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("cases.csv:3"), "{}", String::from_utf8_lossy(&bad.stderr));
}

#[test]
fn fit_forecast_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, full) = (tmp.path().join("train"), tmp.path().join("full"));
    simulate_days(tmp.path(), &train, 70);
    simulate_days(tmp.path(), &full, 90);

    // per-day draws do not depend on the panel length
    let head: Vec<String> = std::fs::read_to_string(train.join("cases.csv")).unwrap().lines().map(String::from).collect();
    let full_cases = std::fs::read_to_string(full.join("cases.csv")).unwrap();
    let full_lines: Vec<&str> = full_cases.lines().collect();
    assert!(head.iter().all(|l| full_lines.contains(&l.as_str())));

    let fit_dir = tmp.path().join("fit");
    let fit = mmhm(&["fit", "--data", p(&train), "--alpha", "1", "--xi", "2", "--out", p(&fit_dir)]);
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(fit_dir.join("model.json").exists() && fit_dir.join("fit_report.txt").exists());

    let run_forecast = |dir: &Path, jobs: &str| {
        let out = mmhm(&[
            "--jobs", jobs, "forecast", "--model", p(&fit_dir.join("model.json")), "--data", p(&train),
            "--horizon", "20", "--replicates", "5", "--seed", "9", "--out", p(dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    let (fa, fb, fc) = (tmp.path().join("fa"), tmp.path().join("fb"), tmp.path().join("fc"));
    run_forecast(&fa, "1");
    run_forecast(&fb, "1");
    run_forecast(&fc, "3");
    for f in ["forecast.csv", "band.csv"] {
        let a = std::fs::read(fa.join(f)).unwrap();
        assert_eq!(a, std::fs::read(fb.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(a, std::fs::read(fc.join(f)).unwrap(), "{f} depends on the thread count");
    }
    let forecast = std::fs::read_to_string(fa.join("forecast.csv")).unwrap();
    assert!(forecast.starts_with("replicate,region_code,date,predicted_cases\n"));
    assert_eq!(forecast.lines().count(), 1 + 5 * 26 * 20);
    let band = std::fs::read_to_string(fa.join("band.csv")).unwrap();
    assert!(band.lines().nth(1).unwrap().contains("2020-05-04"), "first forecast day follows the data");

    let eval_dir = tmp.path().join("eval");
    let eval = mmhm(&["evaluate", "--band", p(&fa.join("band.csv")), "--data", p(&full), "--out", p(&eval_dir)]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let scores = std::fs::read_to_string(eval_dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 26 * 20 + 1);
    assert!(scores.lines().last().unwrap().starts_with("macro,all,"));

    // scoring past the observed data is a data error
    let late = mmhm(&["evaluate", "--band", p(&fa.join("band.csv")), "--data", p(&train), "--out", p(&eval_dir)]);
    assert_eq!(code(&late), 1);
}

#[test]
fn cv_tune_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_days(tmp.path(), &data, 60);
    let cv_args = ["--horizon", "7", "--replicates", "2", "--stride", "7"];

    let full = tmp.path().join("cv_full");
    let mut args = vec!["cv", "--data", p(&data), "--alpha", "1", "--out", p(&full)];
    args.extend(cv_args);
    assert_eq!(code(&mmhm(&args)), 0);
    let ablated = tmp.path().join("cv_nc");
    let mut args = vec!["cv", "--data", p(&data), "--no-correction", "--out", p(&ablated)];
    args.extend(cv_args);
    let out = mmhm(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let cmp = mmhm(&["compare", p(&full.join("scores.csv")), p(&ablated.join("scores.csv"))]);
    assert_eq!(code(&cmp), 0, "{}", String::from_utf8_lossy(&cmp.stderr));
    let text = String::from_utf8_lossy(&cmp.stdout);
    assert!(text.contains("pairs      182") && text.contains("method     normal"), "{text}");

    let cfg = tmp.path().join("tune.cfg");
    std::fs::write(&cfg, "# small grid\nalphas = 0, 1\nxis = 0,4\nhorizon = 7\nreplicates = 2\n").unwrap();
    let tune_dir = tmp.path().join("tune");
    let tune = mmhm(&["--config", p(&cfg), "--jobs", "1", "tune", "--data", p(&data), "--out", p(&tune_dir)]);
    assert_eq!(code(&tune), 0, "{}", String::from_utf8_lossy(&tune.stderr));
    let grid = std::fs::read_to_string(tune_dir.join("tune.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("alpha,xi,cv_rmse"));
    assert_eq!(grid.lines().count(), 5);

    let nc = mmhm(&["tune", "--data", p(&data), "--no-correction", "--out", p(&tune_dir)]);
    assert_eq!(code(&nc), 64);
}

#[test]
fn baseline_variant_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_days(tmp.path(), &data, 50);
    let out = tmp.path().join("fit");
    let fit = mmhm(&["fit", "--data", p(&data), "--baseline", "--out", p(&out)]);
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    let model = std::fs::read_to_string(out.join("model.json")).unwrap();
    assert!(model.contains("\"variant\": \"naive_baseline\""));
    assert!(model.contains("city_pct"));
}
