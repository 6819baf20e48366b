use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn volatil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volatil"))
        .args(args)
        .env_remove("VOLATIL_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, n: usize, seed: &str) -> std::path::PathBuf {
    let sim = dir.join("sim");
    let o = volatil(&[
        "simulate", "--n", &n.to_string(), "--mu", "-9", "--phi", "0.95", "--sigma", "0.25",
        "--seed", seed, "--out", p(&sim),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    sim.join("returns.csv")
}

#[test]
fn simulate_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let returns = simulate(dir.path(), 1500, "11");
    let fit = dir.path().join("fit");
    let o = volatil(&[
        "fit", p(&returns), "--out", p(&fit), "--burnin", "500", "--draws", "3000", "--forecast", "5",
        "--quantiles", "0.005,0.5,0.995", "--seed", "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!o.stderr.is_empty(), "progress expected without --quiet");

    let summary = read_json(&fit.join("summary.json"));
    for (k, truth) in [(0, -9.0), (1, 0.95), (2, 0.25)] {
        let rec = &summary["parameters"][k];
        let lo = rec["quantiles"]["q0.005"].as_f64().unwrap();
        let hi = rec["quantiles"]["q0.995"].as_f64().unwrap();
        assert!(lo < truth && truth < hi, "{}: {truth} outside [{lo}, {hi}]", rec["name"]);
    }
    let para = fs::read_to_string(fit.join("para.csv")).unwrap();
    assert!(para.starts_with("chain,iteration,mu,phi,sigma\n"));
    assert_eq!(para.lines().count(), 3001);
    let vol = fs::read_to_string(fit.join("volatility.csv")).unwrap();
    assert!(vol.starts_with("t,date,mean,sd,q0.005,q0.5,q0.995\n"));
    assert_eq!(vol.lines().count(), 1501);
    assert_eq!(fs::read_to_string(fit.join("forecast.csv")).unwrap().lines().count(), 6);
    let meta = read_json(&fit.join("metadata.json"));
    assert_eq!(meta["sampler"]["strategy"], "GIS_C");
    assert_eq!(meta["chains"][0]["seed"], 3);
    assert_eq!(meta["sampler"]["mixture"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fit_is_reproducible_from_seed_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let returns = simulate(dir.path(), 200, "5");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let base = ["--burnin", "50", "--draws", "200", "--quiet"];
    let o = volatil(&[&["fit", p(&returns), "--out", p(&a), "--seed", "8"][..], &base].concat());
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_volatil"))
        .args([&["fit", p(&returns), "--out", p(&b)][..], &base].concat())
        .env("VOLATIL_SEED", "8")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["para.csv", "latent.csv", "latent0.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn quiet_writes_nothing_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    // contains a zero return, which would otherwise log a warning
    fs::write(&input, "0.01\n-0.02\n0.0\n0.015\n-0.005\n0.03\n-0.01\n0.002\n").unwrap();
    let o = volatil(&["fit", p(&input), "--out", p(&dir.path().join("o")), "--burnin", "10", "--draws", "20", "--quiet"]);
    assert!(o.status.success());
    assert!(o.stderr.is_empty(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
}

#[test]
fn bad_input_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for (k, content) in ["date,value\nd1,0.01\nd2,NA\nd3,0.02\n", "date,value\nd1,0.01\nd2,0.02,7\n", "0.1\nx\n"]
        .iter()
        .enumerate()
    {
        let input = dir.path().join(format!("bad{k}.csv"));
        fs::write(&input, content).unwrap();
        let out = dir.path().join(format!("out{k}"));
        let o = volatil(&["fit", p(&input), "--out", p(&out), "--draws", "10", "--burnin", "0"]);
        assert_eq!(o.status.code(), Some(2), "{content:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("line"), "{content:?}");
        let leftovers = fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
        assert_eq!(leftovers, 0);
    }
    let o = volatil(&["fit", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let o = volatil(&["evaluate", "x.csv", "--out", "o", "--model", "arch", "--training-cutoff", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = volatil(&["fit", "x.csv", "--out", "o", "--thinpara", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

fn evaluate(dir: &Path, name: &str, returns: &Path, models: &[&str], threads: &str) -> Output {
    let mut args = vec![
        "evaluate", p(returns), "--training-cutoff", "45", "--burnin", "50", "--draws", "150", "--quiet",
        "--threads", threads, "--seed", "21",
    ];
    for m in models {
        args.extend(["--model", m]);
    }
    let out = dir.join(name);
    let out = out.to_str().unwrap().to_string();
    args.extend(["--out", &out]);
    volatil(&args)
}

#[test]
fn evaluate_single_model_has_no_bayes_factor() {
    let dir = tempfile::tempdir().unwrap();
    let returns = simulate(dir.path(), 50, "2");
    let o = evaluate(dir.path(), "one", &returns, &["homoskedastic"], "1");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("one");
    let pl = fs::read_to_string(out.join("pl.csv")).unwrap();
    assert!(pl.starts_with("model,t,log_pl,q0.01,q0.5,q0.99\n"));
    assert_eq!(pl.lines().count(), 1 + 5);
    assert!(!out.join("bf.csv").exists());
    assert_eq!(read_json(&out.join("manifest.json"))["complete"], true);
}

#[test]
fn evaluate_pairs_and_thread_count_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let returns = simulate(dir.path(), 50, "2");
    let models = ["sv", "homoskedastic", "garch"];
    let o = evaluate(dir.path(), "serial", &returns, &models, "1");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = evaluate(dir.path(), "pool", &returns, &models, "4");
    assert!(o.status.success());
    let s = dir.path().join("serial");
    let bf = fs::read_to_string(s.join("bf.csv")).unwrap();
    assert!(bf.starts_with("t,sv_vs_homoskedastic,sv_vs_garch,homoskedastic_vs_garch\n"));
    assert_eq!(bf.lines().count(), 1 + 5);
    for f in ["pl.csv", "bf.csv"] {
        assert_eq!(fs::read(s.join(f)).unwrap(), fs::read(dir.path().join("pool").join(f)).unwrap());
    }
}

#[test]
fn regress_each_error_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("xy.csv");
    let mut text = String::from("y,x\n");
    for i in 0..120 {
        let x = (i as f64 * 0.37).sin();
        let e = ((i * 7919 % 101) as f64 / 101.0 - 0.5) * 0.2;
        text.push_str(&format!("{},{}\n", 0.1 + 0.5 * x + e, x));
    }
    fs::write(&input, text).unwrap();
    for (model, last) in [("homoskedastic", "sigma"), ("sv", "sigma"), ("garch", "sigma2_next")] {
        let out = dir.path().join(model);
        let o = volatil(&[
            "regress", p(&input), "--out", p(&out), "--model", model, "--burnin", "200", "--draws", "600", "--quiet",
        ]);
        assert!(o.status.success(), "{model}: {}", String::from_utf8_lossy(&o.stderr));
        let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
        let header = draws.lines().next().unwrap();
        assert!(header.starts_with("iteration,beta_0,beta_1,"), "{header}");
        assert!(header.ends_with(last), "{header}");
        assert_eq!(draws.lines().count(), 601);
        let summary = read_json(&out.join("summary.json"));
        let slope = summary["parameters"][1]["mean"].as_f64().unwrap();
        assert!((slope - 0.5).abs() < 0.1, "{model}: {slope}");
    }
    assert!(dir.path().join("sv").join("volatility.csv").exists());
}
