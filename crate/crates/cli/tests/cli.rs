use std::fs;
use std::path::Path;
use std::process::Command;

use dynkin_cli::commands::{boundary, cmd_run, cmd_table};
use dynkin_cli::config::{parse_pairs, RunConfig};
use dynkin_cli::main_with_args;
use dynkin_cli::output::read_solution_csv;

fn solver(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_solver")).args(args).output().expect("binary runs").status.code().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let out = dir.to_str().unwrap();
    let mut full = vec!["solver"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", out]);
    main_with_args(full)
}

#[test]
fn exit_codes() {
    assert_eq!(solver(&["run"]), 2);
    assert_eq!(solver(&["run", "--preset", "exp3", "--p", "1.5"]), 2);
    assert_eq!(solver(&["table", "exp1", "sl", "q"]), 2);
    assert_eq!(solver(&["table", "exp1", "sl", "p"]), 2);
    assert_eq!(solver(&["boundary", "--preset", "exp1"]), 2);
    assert_eq!(solver(&["frobnicate"]), 2);
    assert_eq!(solver(&["--help"]), 0);
    assert_eq!(solver(&["run", "--config", "/nonexistent/run.cfg"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(solver(&["run", "--preset", "exp1", "--n", "8", "--l", "8", "--out", out]), 0);
}

#[test]
fn run_writes_solution_manifest_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["run", "--preset", "exp2", "--n", "4", "--l", "4", "--m", "4"]), 0);
    for name in ["exp2_sl.csv", "exp2_sl.json", "exp2_sl.gp"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("exp2_sl.json")).unwrap()).unwrap();
    assert_eq!(manifest["grids"]["m"], 4);
    assert_eq!(manifest["decisions"]["operation_order"][3], "envelope");

    let cfg = RunConfig::from_pairs(&parse_pairs("preset = exp2\nn = 4\nl = 4\nm = 4").unwrap()).unwrap();
    let field = cmd_run(&RunConfig { out: dir.path().join("again"), ..cfg }).unwrap().computed.field;
    let text = fs::read_to_string(dir.path().join("exp2_sl.csv")).unwrap();
    let back = read_solution_csv(&text, field.grids()).unwrap();
    assert_eq!(back.values(), field.values());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--preset", "exp3", "--scheme", "nn", "--n", "4", "--l", "8", "--m", "4", "--iters", "40", "--seed", "9"];
    assert_eq!(run_in(a.path(), &args), 0);
    assert_eq!(run_in(b.path(), &args), 0);
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# small exp1 run\npreset = exp1\nn = 4\nl = 4\n").unwrap();
    let file = file.to_str().unwrap();
    assert_eq!(run_in(dir.path(), &["run", "--config", file, "--n", "6"]), 0);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("exp1_sl.json")).unwrap()).unwrap();
    assert_eq!((manifest["grids"]["n"].as_u64(), manifest["grids"]["l"].as_u64()), (Some(6), Some(4)));
}

#[test]
fn custom_problem_from_expressions() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run", "--preset", "custom", "--set", "scenarios=2", "--set", "terminal.1=x", "--set", "terminal.2=1 - x",
        "--set", "diffusion=0.1", "--n", "4", "--l", "4", "--m", "4",
    ];
    assert_eq!(run_in(dir.path(), &args), 0);
    assert!(dir.path().join("custom_sl.csv").is_file());
    assert_eq!(run_in(dir.path(), &["run", "--preset", "custom", "--set", "terminal=x +"]), 2);
}

#[test]
fn table_and_boundary_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["table", "exp2", "sl", "x", "--rows", "4,8", "--pin", "8", "--reference", "16"]), 0);
    let table = fs::read_to_string(dir.path().join("exp2_sl_x_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_eq!(run_in(dir.path(), &["boundary", "--preset", "exp3", "--n", "8", "--l", "8", "--m", "8"]), 0);
    let mask = fs::read_to_string(dir.path().join("exp3_sl_boundary.csv")).unwrap();
    assert_eq!(mask.lines().next(), Some("t,x,state"));
    assert_eq!(mask.lines().count(), 1 + 9 * 9);
}

#[test]
fn zero_tolerance_gives_empty_masks() {
    let masks = |tol: &str| {
        let text = format!("preset = exp3\nn = 8\nl = 8\nm = 8\ntol = {tol}");
        boundary(&RunConfig::from_pairs(&parse_pairs(&text).unwrap()).unwrap()).unwrap().2
    };
    let none = masks("0");
    assert_eq!((none.lower_count(), none.upper_count()), (0, 0));
    let (small, large) = (masks("2e-5"), masks("1e-2"));
    assert!(small.lower_count() > 0 && small.upper_count() > 0);
    for (a, b) in small.lower.iter().zip(&large.lower).chain(small.upper.iter().zip(&large.upper)) {
        assert!(!a || *b);
    }
}

#[test]
fn exp1_time_rates_stay_near_first_order() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = parse_pairs(&format!("preset = exp1\naxis = t\nout = {}", dir.path().display())).unwrap();
    let report = cmd_table(&RunConfig::from_pairs(&pairs).unwrap()).unwrap().report;
    assert_eq!(report.rows.len(), 5);
    assert!((report.rows[0].delta - 1.0 / 64.0).abs() < 1e-15);
    for r in report.max_rates().iter().chain(&report.rms_rates()) {
        assert!((0.68..=1.44).contains(r), "rate {r}");
    }
}

#[test]
fn belief_rates_are_finite() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("preset = exp2\naxis = p\nrows = 4,8,16\npin = 16\nreference = 32\nout = {}", dir.path().display());
    let report = cmd_table(&RunConfig::from_pairs(&parse_pairs(&text).unwrap()).unwrap()).unwrap().report;
    assert!(report.rows[0].max_rate.is_none());
    assert!(report.rows[1..].iter().all(|r| r.max_rate.is_some_and(f64::is_finite)));
}
