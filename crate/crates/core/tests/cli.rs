use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fnlse::io::Snapshot;
use tempfile::TempDir;

fn fnlse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnlse")).current_dir(dir).env("FNLSE_THREADS", "1").args(args).output().expect("spawn fnlse")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

const LINEAR_GROUND: &str = r#"
[grid]
lo = [-8.0, -8.0]
hi = [8.0, 8.0]
points = [64, 64]

[physics]
s = 1.0
"#;

fn ground(dir: &Path) {
    fs::write(dir.join("g.toml"), LINEAR_GROUND).unwrap();
    let out = fnlse(dir, &["ground", "--config", "g.toml", "--out", "gout"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn linear_ground_state_has_unit_energy() {
    let tmp = TempDir::new().unwrap();
    ground(tmp.path());
    let s = summary(&tmp.path().join("gout/summary.toml"));
    let e = s["summary"]["total_energy"].as_float().unwrap();
    assert!((e - 1.0).abs() < 1e-6, "E = {e}");
    assert!(s["summary"]["converged"].as_bool().unwrap());
    let snap = Snapshot::read(&tmp.path().join("gout/ground_state.snap")).unwrap();
    assert_eq!(snap.points, vec![64, 64]);
    let conv = fs::read_to_string(tmp.path().join("gout/convergence.csv")).unwrap();
    assert!(conv.lines().count() > 2);
}

#[test]
fn zero_final_time_writes_one_diagnostics_row() {
    let tmp = TempDir::new().unwrap();
    ground(tmp.path());
    fs::write(
        tmp.path().join("d.toml"),
        format!("{LINEAR_GROUND}\n[dynamics]\nt_final = 0.0\n\n[initial]\nkind = \"file\"\npath = \"gout/ground_state.snap\"\n"),
    )
    .unwrap();
    let out = fnlse(tmp.path(), &["dynamics", "--config", "d.toml", "--out", "dout"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("dout/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
}

#[test]
fn bad_grid_is_a_keyed_config_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[grid]\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\npoints = [-4, 64]\n").unwrap();
    let out = fnlse(tmp.path(), &["ground", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("kind=config") && err.contains("key=grid.points"), "{err}");
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[physics]\ns = 1.0\nbetta = 3.0\n").unwrap();
    let out = fnlse(tmp.path(), &["ground", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("physics.betta"), "{}", stderr(&out));
}

#[test]
fn conflicting_mode_is_rejected() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.toml"), format!("mode = \"dynamics\"\n{LINEAR_GROUND}")).unwrap();
    let out = fnlse(tmp.path(), &["ground", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("key=mode"));
}

#[test]
fn missing_config_file_exits_with_config_code() {
    let tmp = TempDir::new().unwrap();
    let out = fnlse(tmp.path(), &["ground", "--config", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonexistence_exits_four_and_keeps_artifacts() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("n.toml"),
        "[grid]\nlo = [-16.0, -16.0]\nhi = [16.0, 16.0]\npoints = [128, 128]\n\n[physics]\ns = 0.5\nomega = 0.8\nlambda = 1.0\n\n[ground]\ndt = 0.01\n",
    )
    .unwrap();
    let out = fnlse(tmp.path(), &["ground", "--config", "n.toml", "--out", "nout"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("kind=nonexistence_regime"));
    let conv = fs::read_to_string(tmp.path().join("nout/convergence.csv")).unwrap();
    assert!(conv.lines().count() > 1);
    assert!(tmp.path().join("nout/ground_state.snap").exists());
}

#[test]
fn runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = "seed = 7\n[grid]\nlo = [-8.0, -8.0]\nhi = [8.0, 8.0]\npoints = [32, 32]\n\n[physics]\ns = 0.8\nbeta = 5.0\nomega = 0.3\nlambda = 1.0\n\n\
               [dynamics]\ndt = 0.01\nt_final = 0.2\nsnapshot_every = 10\ndiagnostics_every = 5\n\n\
               [initial]\nkind = \"guess\"\nnoise = 0.1\n";
    fs::write(tmp.path().join("r.toml"), cfg).unwrap();
    for dir in ["a", "b"] {
        let out = fnlse(tmp.path(), &["dynamics", "--config", "r.toml", "--out", dir]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in ["diagnostics.csv", "snapshots/step_00000010.snap", "snapshots/step_00000020.snap"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn plot_kinds() {
    let tmp = TempDir::new().unwrap();
    ground(tmp.path());
    let slice = fnlse(tmp.path(), &["plot", "--kind", "slice_x", "--input", "gout/ground_state.snap"]);
    assert!(slice.status.success(), "{}", stderr(&slice));
    let peak = String::from_utf8(slice.stdout)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1)?.parse::<f64>().ok())
        .fold(0.0, f64::max);
    // linear ground state: exp(-r^2/2)/sqrt(pi)
    assert!((peak - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6, "{peak}");

    let out = fnlse(tmp.path(), &["plot", "--kind", "contour_grid", "--input", "gout/ground_state.snap", "--out", "c.dat"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = fs::read_to_string(tmp.path().join("c.dat")).unwrap();
    assert_eq!(rows.lines().skip(1).filter(|l| !l.trim().is_empty()).count(), 64 * 64);

    let ts = fnlse(tmp.path(), &["plot", "--kind", "timeseries", "--input", "gout/convergence.csv", "--columns", "step,energy"]);
    assert!(ts.status.success(), "{}", stderr(&ts));

    let bad = fnlse(tmp.path(), &["plot", "--kind", "histogram", "--input", "gout/ground_state.snap"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("unknown_plot_kind"));
}
