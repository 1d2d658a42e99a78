use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pathlse::montecarlo::OUTPUT_FILES;

fn pathlse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathlse")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

const SMALL: &str = "preset = \"heat1d\"\nhurst = 0.3\nlambda1 = 1.0\nn_modes = 3\nn_steps = 4\nseed = 11\n";

#[test]
fn simulate_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = pathlse(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(a.join("trajectories.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,x1,x2,x3");
    assert_eq!(rows.len(), 6);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 4));
    assert_eq!(text, fs::read_to_string(b.join("trajectories.csv")).unwrap());

    let c = dir.path().join("c");
    let o = pathlse(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    assert!(o.status.success());
    assert_ne!(text, fs::read_to_string(c.join("trajectories.csv")).unwrap());
}

#[test]
fn invalid_hurst_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "preset = \"heat1d\"\nhurst = 1.2\nn_modes = 3\n",
    );
    let o = pathlse(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=validation field=hurst "), "{err}");
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "hurts = 0.3\n");
    let o = pathlse(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=validation"));
}

#[test]
fn estimate_round_trip_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let body = "preset = \"heat1d\"\nhurst = 0.5\nlambda1 = 1.0\nn_modes = 6\nn_steps = 256\nseed = 3\n";
    let cfg = write_config(dir.path(), "run.toml", body);
    let out = dir.path().to_str().unwrap();
    assert!(pathlse(&["simulate", "--config", &cfg, "--out", out]).status.success());
    let csv = dir.path().join("trajectories.csv");
    let o = pathlse(&["estimate", "--config", &cfg, "--trajectory", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let case = field(&text, "case_tag");
    assert!(["unique", "none", "two_roots_greater", "constant_map"].contains(&case));
    for key in ["iterations", "residual", "r_at_zero"] {
        field(&text, key);
    }
    let value: f64 = field(&text, "value").parse().unwrap();
    let theory: f64 = field(&text, "theoretical_lse").parse().unwrap();
    assert!(
        (value - theory.max(0.0)).abs() <= 1e-9 * theory.abs().max(1.0),
        "{text}"
    );

    let full = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let truncated = dir.path().join("short.csv");
    fs::write(&truncated, lines[..100].join("\n")).unwrap();
    let o = pathlse(&[
        "estimate",
        "--config",
        &cfg,
        "--trajectory",
        truncated.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));

    let cut_row = dir.path().join("cut.csv");
    let mut broken = lines.join("\n");
    broken.truncate(broken.len() - 30);
    fs::write(&cut_row, broken).unwrap();
    let o = pathlse(&["estimate", "--config", &cfg, "--trajectory", cut_row.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let renamed = dir.path().join("renamed.csv");
    fs::write(&renamed, full.replacen("x2", "y2", 1)).unwrap();
    let o = pathlse(&["estimate", "--config", &cfg, "--trajectory", renamed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_trajectory_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "preset = \"heat1d\"\nhurst = 0.3\n");
    let csv = dir.path().join("zeros.csv");
    fs::write(&csv, "t,x1,x2\n0,0,0\n0.5,0,0\n1,0,0\n").unwrap();
    let o = pathlse(&["estimate", "--config", &cfg, "--trajectory", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error kind=numeric field=-"));
}

#[test]
fn delta_prints_three_numbers() {
    let o = pathlse(&["delta", "--mu", "1", "--hurst", "0.5", "--horizon", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.5 0 0");
    let o = pathlse(&["delta", "--mu", "2", "--hurst", "0.3", "--horizon", "1"]);
    let parts: Vec<f64> = stdout(&o).split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(parts.len(), 3);
    assert!(parts[1] > 0.0 && parts[2] < 0.0);
    let o = pathlse(&["delta", "--mu=-1", "--hurst", "0.5", "--horizon", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_heat1d() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "preset = \"heat1d\"\nhurst = 0.8\n");
    let o = pathlse(&["check", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "existence_ok"), "true");
    assert_eq!(field(&text, "theoretical_lse_consistent"), "true");
    assert_eq!(field(&text, "pathwise_extra_ok"), "true");
}

#[test]
fn mc_writes_exactly_four_tables() {
    let dir = tempfile::tempdir().unwrap();
    let body =
        "preset = \"heat1d\"\nhurst = 0.3\nlambda1 = 1.0\nn_list = [2, 4, 8, 12]\nruns = 3\nn_steps = 128\nseed = 5\n";
    let cfg = write_config(dir.path(), "run.toml", body);
    let out = dir.path().join("mc");
    let o = pathlse(&["mc", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut expected: Vec<String> = OUTPUT_FILES.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(names, expected);
    let est = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().next().unwrap(), "run,N,estimator,value,case");
    assert_eq!(est.lines().count(), 1 + 3 * 4 * 2);
}
