use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tiercache::{validate, Placement};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tiercache"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tiercache")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse::<f64>().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

const SMALL: &str = r#"{"network":{"cache_sizes":[4,3,2],"catalog_size":20},"popularity":{"zipf_exponent":0.8}}"#;

const SINGLE_TIER: &str = r#"{"network":{"alpha":4,"densities":[1e-3],"powers":[1],"sir_thresholds":[TAU],
  "cache_sizes":[1],"catalog_size":1},"popularity":{"weights":[1]}}"#;

/// history.csv without its timing column.
fn strip_wall(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn optimize_writes_valid_outputs_reproducibly() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    for alg in ["sca", "stochastic", "baseline1", "baseline2"] {
        let mut files = Vec::new();
        for rep in 0..2 {
            let out_dir = dir.path().join(format!("{alg}_{rep}"));
            let out = run(&["optimize", "--algorithm", alg, "--config", &cfg, "--seed", "7", "--out", out_dir.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{alg}: {}", String::from_utf8_lossy(&out.stderr));
            let t = std::fs::read_to_string(out_dir.join("T.csv")).unwrap();
            let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
            assert!(history.starts_with("iter,objective,step,stationarity,wall_ms\n"));
            assert!(!t.contains('\r') && !history.contains('\r'));
            validate(&Placement::from_csv(&t).unwrap(), &[4, 3, 2]).unwrap();
            files.push((t, strip_wall(&history)));
        }
        assert_eq!(files[0], files[1], "{alg} is not reproducible");
    }
    assert!(dir.path().join("stochastic_0/slots.csv").exists());
}

#[test]
fn flags_override_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out_dir = dir.path().join("o");
    let out = run(&["optimize", "--config", &cfg, "--max-iters", "5", "--tol", "1e-12", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged false"));
}

#[test]
fn robust_at_zero_epsilon_matches_sca() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let mut values = Vec::new();
    for alg in ["sca", "robust"] {
        let out_dir = dir.path().join(alg);
        let out = run(&["optimize", "--algorithm", alg, "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        values.push(stdout_value(&out, "objective"));
    }
    assert!((values[0] - values[1]).abs() <= 1e-3, "{values:?}");
}

#[test]
fn unsupported_algorithm_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = run(&["optimize", "--algorithm", "baseline3", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().to_str().unwrap().to_string();
    let unknown = write(dir.path(), "a.json", r#"{"network":{"cache_sizes":[1],"catalog_size":2,"extra":0}}"#);
    let broken = write(dir.path(), "b.json", "{ not json");
    let missing_tiers = write(dir.path(), "c.json", r#"{"network":{"cache_sizes":[1,1],"catalog_size":2}}"#);
    let oversized = write(dir.path(), "d.json", r#"{"network":{"cache_sizes":[4,3,9],"catalog_size":5}}"#);
    for cfg in [&unknown, &broken, &missing_tiers, &oversized, &"/nonexistent/cfg.json".to_string()] {
        let out = run(&["optimize", "--config", cfg, "--out", &out_dir]);
        assert_eq!(out.status.code(), Some(1), "{cfg}");
    }
    assert_eq!(run(&["optimize", "--bogus"]).status.code(), Some(1));
}

#[test]
fn validate_single_tier_coverage() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", &SINGLE_TIER.replace("TAU", "1"));
    let t = write(dir.path(), "T.csv", "file_1\n1\n");
    let out = run(&["validate", "--config", &cfg, "--placement", &t, "--trials", "100000", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let analytic = stdout_value(&out, "analytic");
    assert!((analytic - 1.0 / (1.0 + std::f64::consts::PI / 4.0)).abs() < 1e-9);
    assert!(stdout_value(&out, "z_score").abs() <= 3.5);
    assert!(stdout_value(&out, "std_error") > 0.0);
}

#[test]
fn validate_zero_threshold_is_certain() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", &SINGLE_TIER.replace("TAU", "0"));
    let t = write(dir.path(), "T.csv", "file_1\n1\n");
    let out = run(&["validate", "--config", &cfg, "--placement", &t, "--trials", "5000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_value(&out, "analytic"), 1.0);
    assert_eq!(stdout_value(&out, "monte_carlo"), 1.0);
    assert_eq!(stdout_value(&out, "z_score"), 0.0);
}

#[test]
fn validate_dimension_mismatch_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let t = write(dir.path(), "T.csv", "file_1,file_2\n1,0\n1,0\n1,0\n");
    let out = run(&["validate", "--config", &cfg, "--placement", &t]);
    assert_eq!(out.status.code(), Some(1));
}

fn sweep_rows(csv: &str) -> Vec<(String, f64, String, f64, f64)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("param,value,scheme,objective,stderr"));
    lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].into(), c[1].parse().unwrap(), c[2].into(), c[3].parse().unwrap(), c[4].parse().unwrap())
        })
        .collect()
}

fn by_scheme(rows: &[(String, f64, String, f64, f64)], scheme: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.2 == scheme).map(|r| r.3).collect()
}

fn sweep(dir: &Path, cfg: &str, spec: &str, seed: &str) -> String {
    let cfg = write(dir, "cfg.json", cfg);
    let spec = write(dir, "sweep.json", spec);
    let out = run(&["sweep", "--config", &cfg, "--sweep", &spec, "--seed", seed]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cache_size_sweep_is_monotone() {
    let dir = TempDir::new().unwrap();
    let csv = sweep(dir.path(), SMALL, r#"{"param":"k3","values":[1,2,3,4]}"#, "1");
    let rows = sweep_rows(&csv);
    assert_eq!(rows.len(), 12);
    for scheme in ["sca", "baseline1", "baseline2"] {
        let v = by_scheme(&rows, scheme);
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "{scheme}: {v:?}");
    }
    let sca = by_scheme(&rows, "sca");
    let b1 = by_scheme(&rows, "baseline1");
    assert!(sca.iter().zip(&b1).all(|(s, b)| s > b));
}

#[test]
fn zipf_sweep_is_monotone() {
    let dir = TempDir::new().unwrap();
    let csv = sweep(dir.path(), SMALL, r#"{"param":"gamma","values":[0.15,0.55,0.95,1.35],"schemes":["sca"]}"#, "1");
    let v = by_scheme(&sweep_rows(&csv), "sca");
    assert_eq!(v.len(), 4);
    assert!(v.windows(2).all(|w| w[1] >= w[0]), "{v:?}");
}

#[test]
fn epsilon_sweep_is_monotone_and_robust_dominates() {
    let dir = TempDir::new().unwrap();
    let csv = sweep(
        dir.path(),
        SMALL,
        r#"{"param":"epsilon","values":[0.05,0.25,0.45],"schemes":["robust","sca"]}"#,
        "1",
    );
    let rows = sweep_rows(&csv);
    let robust = by_scheme(&rows, "robust");
    let sca = by_scheme(&rows, "sca");
    assert!(robust.windows(2).all(|w| w[1] <= w[0]), "{robust:?}");
    assert!(robust.iter().zip(&sca).all(|(r, s)| r >= s), "{robust:?} {sca:?}");
}

#[test]
fn sweep_csv_is_bit_identical_and_seeded() {
    let dir = TempDir::new().unwrap();
    let spec = r#"{"param":"observers","values":[20,200],"repeats":3}"#;
    let a = sweep(dir.path(), SMALL, spec, "5");
    let b = sweep(dir.path(), SMALL, spec, "5");
    let c = sweep(dir.path(), SMALL, spec, "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let rows = sweep_rows(&a);
    assert!(rows.iter().any(|r| r.2 == "stochastic" && r.4 > 0.0));
    assert!(rows.iter().filter(|r| r.2 == "sca").all(|r| r.4 == 0.0));
}

#[test]
fn sweep_section_from_config_and_output_dir() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL.replacen('{', r#"{"sweep":{"param":"slots","values":[5,50],"schemes":["stochastic"]},"#, 1);
    let cfg = write(dir.path(), "cfg.json", &cfg);
    let out_dir = dir.path().join("s");
    let out = run(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = sweep_rows(&std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].0, "slots");

    let plain = write(dir.path(), "plain.json", SMALL);
    assert_eq!(run(&["sweep", "--config", &plain]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.json", r#"{"param":"k3","values":[1.5]}"#);
    assert_eq!(run(&["sweep", "--config", &plain, "--sweep", &bad]).status.code(), Some(1));
}
