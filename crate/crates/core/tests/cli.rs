use std::path::{Path, PathBuf};
use std::process::Command;

use banach_vi::harness::{self, ScenarioFile};
use banach_vi::iterate::{self, AlgorithmConfig, TerminalStatus};
use banach_vi::operators::Operator;
use banach_vi::params::{Gains, Mode, Schedule};
use banach_vi::space::Vector;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn fixtures() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(fixture(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_banach-vi"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixtures_round_trip() {
    let all = fixtures();
    assert!(all.len() >= 5);
    for path in all {
        let text = std::fs::read_to_string(&path).unwrap();
        let file = ScenarioFile::from_toml(&text).unwrap();
        let again = ScenarioFile::from_toml(&file.to_toml().unwrap()).unwrap();
        assert_eq!(again, file, "{}", path.display());
    }
}

#[test]
fn fixtures_resolve_except_the_invalid_one() {
    for path in fixtures() {
        let r = harness::parse_scenario(&path);
        if path.ends_with("invalid_gamma.toml") {
            let msg = r.unwrap_err().to_string();
            assert!(msg.contains("strict inequality required"), "{msg}");
        } else {
            r.unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn canonical_run_converges_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, stderr) = cli(&[
        "run",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{stdout}\n{stderr}");
    for run in ["synchronal", "cyclic"] {
        let s = read_json(&dir.path().join(format!("{run}.summary.json")));
        assert_eq!(s["schema_version"], 1);
        assert_eq!(s["status"], "converged");
        assert_eq!(s["exit_code"], 0);
        assert_eq!(s["gains"]["tau"], 0.5);
        assert!(s["dist_to_oracle"].as_f64().unwrap() <= 1e-4);
        let x = s["oracle"]["x_star"].as_array().unwrap();
        assert!((x[0].as_f64().unwrap() - 1.0 / 0.9).abs() < 1e-12);
        assert!(s["certificates"]["passed"].as_bool().unwrap());
        assert!(dir.path().join(format!("{run}.trace.csv")).exists());
        assert!(dir.path().join(format!("{run}.plot.csv")).exists());
    }
}

#[test]
fn summary_fields_are_populated_on_max_iter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = cli(&[
        "run",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        out,
        "--max-iter",
        "50",
    ]);
    assert_eq!(code, 1);
    let s = read_json(&dir.path().join("synchronal.summary.json"));
    assert_eq!(s["status"], "max_iter");
    for key in [
        "schema_version",
        "iterations",
        "final_residuals",
        "dist_to_oracle",
        "gains",
        "validation",
        "certificates",
        "wall_clock_seconds",
    ] {
        assert!(!s[key].is_null(), "{key}");
    }
    assert!(!s["validation"]["flags"]["alpha_vanishing"].is_null());
}

#[test]
fn override_runs_but_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let scenario = fixture("invalid_gamma.toml");
    let (code, _, stderr) = cli(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("strict inequality required"));
    let (code, _, _) = cli(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out,
        "--override-validation",
    ]);
    assert_eq!(code, 1);
    let s = read_json(&dir.path().join("synchronal.summary.json"));
    assert_eq!(s["validation"]["override_used"], true);
    assert!(s["validation"]["failures"][0]
        .as_str()
        .unwrap()
        .contains("gamma_range"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture("canonical.toml"))
        .unwrap()
        .replace("[gains]", "[gains]\nnu = 2.0");
    std::fs::write(&path, text).unwrap();
    let (code, _, stderr) = cli(&["certify", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown key `gains.nu`"), "{stderr}");
}

#[test]
fn trace_csv_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, stderr) = cli(&[
            "run",
            "--scenario",
            fixture("lp3.toml").to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--max-iter",
            "5000",
            "--cadence",
            "7",
        ]);
        assert!(code <= 1, "{stderr}");
    }
    for run in ["synchronal", "cyclic"] {
        let name = format!("{run}.trace.csv");
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y);
    }
}

#[test]
fn seed_flag_changes_generated_problem() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scenario = fixture("generated_hilbert.toml");
    for (d, seed) in [(&a, "1"), (&b, "2")] {
        cli(&[
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--max-iter",
            "100",
            "--seed",
            seed,
        ]);
    }
    let x = std::fs::read(a.path().join("synchronal.trace.csv")).unwrap();
    let y = std::fs::read(b.path().join("synchronal.trace.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn cadence_controls_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, stderr) = cli(&[
        "run",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--max-iter",
        "95",
        "--cadence",
        "10",
    ]);
    let csv = std::fs::read_to_string(dir.path().join("synchronal.trace.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, 95usize.div_ceil(10) + 1, "{stderr}");
    assert_eq!(
        csv.lines().next().unwrap(),
        harness::TRACE_COLUMNS.join(",")
    );
    let plot = std::fs::read_to_string(dir.path().join("synchronal.plot.csv")).unwrap();
    assert_eq!(plot.lines().count() - 1, rows);
}

#[test]
fn converged_plotdata_ends_below_tolerance() {
    let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
    cfg.stopping.max_iter = 3_000_000;
    cfg.cadence = 100_000;
    let t = iterate::run_config(&cfg).unwrap();
    assert_eq!(t.status, TerminalStatus::Converged);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.csv");
    harness::emit_plotdata(&t, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[5], "converged");
    assert!(last[2].parse::<f64>().unwrap() <= cfg.stopping.residual_tol);
}

#[test]
fn diverged_plotdata_is_truncated_at_last_finite_row() {
    let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
    cfg.override_validation = true;
    cfg.gains = Gains::new(1.0, 1.0, 0.1, 1.0, 1.0, 2.0, 1.0);
    cfg.problem.contraction = Operator::diagonal(vec![1e300, 1e300], Vector::zeros(2))
        .unwrap()
        .with_contraction(0.1)
        .unwrap();
    cfg.alpha = Schedule::Constant { b: 0.5 };
    cfg.stopping.max_iter = 1000;
    cfg.cadence = 1;
    let t = iterate::run_config(&cfg).unwrap();
    assert_eq!(t.status, TerminalStatus::Diverged);
    let text = harness::plotdata_csv(&t).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.ends_with(",diverged"));
    for line in text.lines().skip(1) {
        for cell in line.split(',').skip(1).take(4).filter(|c| !c.is_empty()) {
            assert!(cell.parse::<f64>().unwrap().is_finite(), "{line}");
        }
    }
}

#[test]
fn compare_synchronal_and_cyclic() {
    let dir = tempfile::tempdir().unwrap();
    let (_, stdout, stderr) = cli(&[
        "compare",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--max-iter",
        "100000",
    ]);
    assert!(stdout.contains("limit distances"), "{stderr}");
    let table = read_json(&dir.path().join("compare.json"));
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert!(table["pairs"][0]["distance"].as_f64().unwrap() <= 2e-4);
    assert!(dir.path().join("compare.csv").exists());
}

#[test]
fn steepest_descent_preset_matches_plain_loop_in_compare() {
    let mut base = AlgorithmConfig::canonical(Mode::Synchronal);
    base.alpha = Schedule::Power { a: 0.5, r: 1.0 };
    base.stopping.max_iter = 2000;
    let preset = iterate::apply_preset(&base, iterate::Preset::SteepestDescent).unwrap();
    let table = harness::compare(&[("steepest-descent".into(), preset.clone())]).unwrap();
    assert_eq!(table.rows.len(), 1);
    // x <- (1 - a_n) A x with A = diag(1, 0.375)
    let mut x = [5.0f64, 5.0];
    for k in 0..table.rows[0].iterations {
        let a = 0.5 / (k as f64 + 1.0);
        x = [(1.0 - a) * x[0], (1.0 - a) * (0.375 * x[1])];
    }
    let y = &table.rows[0].final_x;
    assert!((y[0] - x[0]).abs() <= 1e-12 && (y[1] - x[1]).abs() <= 1e-12);
}

#[test]
fn certify_and_oracle_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = cli(&[
        "certify",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{stdout}");
    let c = read_json(&dir.path().join("certify.json"));
    assert_eq!(c["passed"], true);
    assert!(c["reports"].as_array().unwrap().len() >= 6);
    let (code, _, _) = cli(&[
        "oracle",
        "--scenario",
        fixture("canonical.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 0);
    let o = read_json(&dir.path().join("oracle.json"));
    assert_eq!(o["method"], "affine-direct");
    assert!((o["x_star"][0].as_f64().unwrap() - 1.0 / 0.9).abs() < 1e-12);
}
