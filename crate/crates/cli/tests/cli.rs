use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_coalescent"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .expect("binary runs")
}

fn csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(dir.join("out").join(name)).unwrap();
    let mut lines = text.split("\r\n").filter(|l| !l.is_empty());
    assert!(lines.next().unwrap().starts_with("# coalescent "));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn kingman_last_merger_is_always_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "last-merger", r#"{"measure":{"kingman":1.0},"n":40,"replicates":500,"seed":3}"#, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv(dir.path(), "last_merger.csv");
    assert_eq!(rows[0], ["i", "exact_prob", "mc_freq", "ci_lo", "ci_hi"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "2");
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn check_reports_dust_and_infinite_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "check", r#"{"measure":{"beta":{"a":1.5,"b":0.5}}}"#, &[]);
    assert!(out.status.success());
    let rows = csv(dir.path(), "check.csv");
    let get = |k: &str| rows.iter().find(|r| r[0] == k).unwrap()[1].clone();
    assert_eq!(get("has_dust"), "true");
    assert_eq!(get("log_condition"), "true");
    assert_eq!(get("intensity_integral"), "inf");
}

#[test]
fn unknown_keys_warn_but_do_not_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "check", r#"{"measure":{"kingman":1.0},"flavour":"x"}"#, &[]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`flavour`"));
}

#[test]
fn size_guard_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "last-merger", r#"{"measure":{"kingman":1.0},"n":25000}"#, &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size guard"));
}

#[test]
fn failed_precondition_names_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "lattice-scan", r#"{"measure":{"beta":{"a":1.0,"b":1.0}}}"#, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lattice-scan"));
}

#[test]
fn missing_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "rates", r#"{"measure":{"kingman":1.0}}"#, &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`n`"));
}

#[test]
fn reference_kingman_matches_single_atom_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "reference", r#"{"measure":{"kingman":2.0},"J":6}"#, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv(dir.path(), "reference.csv");
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn rates_rows_sum_to_totals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "rates", r#"{"measure":{"beta":{"a":1.0,"b":1.0}},"n":12}"#, &[]);
    assert!(out.status.success());
    let rows = csv(dir.path(), "rates.csv");
    let totals = csv(dir.path(), "rate_totals.csv");
    for t in &totals[1..] {
        let b: usize = t[0].parse().unwrap();
        let sum: f64 = rows[1..]
            .iter()
            .filter(|r| r[0].parse::<usize>().unwrap() == b)
            .map(|r| r[6].parse::<f64>().unwrap())
            .sum();
        let total: f64 = t[2].parse().unwrap();
        assert!((sum - total).abs() <= 1e-12 * total, "b={b}");
    }
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"measure":{"beta":{"a":1.0,"b":1.0}},"n":50,"replicates":20,"seed":1}"#;
    run(dir.path(), "simulate", cfg, &[]);
    let a = csv(dir.path(), "simulate.csv");
    run(dir.path(), "simulate", cfg, &["--seed", "2"]);
    let b = csv(dir.path(), "simulate.csv");
    assert_eq!(a.len(), 21);
    assert_ne!(a, b);
    assert_eq!(b[1][1], "2");
}
