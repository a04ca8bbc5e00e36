use std::ffi::{CStr, CString};
use std::ptr;

use fnlse_ffi::*;

const LINEAR_GROUND: &str = "[grid]\nlo = [-8.0, -8.0]\nhi = [8.0, 8.0]\npoints = [64, 64]\n\n[physics]\ns = 1.0\n";

fn last_error() -> String {
    let p = fnlse_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(text: &str, mode: FnlseMode) -> (FnlseStatus, *mut FnlseConfig) {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { fnlse_config_parse(text.as_ptr(), mode, &mut cfg) };
    (status, cfg)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(fnlse_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg = ptr::null_mut();
    let status = unsafe { fnlse_config_parse(ptr::null(), FnlseMode::Ground, &mut cfg) };
    assert_eq!(status, FnlseStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert!(last_error().contains("text"));

    let dir = CString::new("unused").unwrap();
    let status = unsafe { fnlse_ground_run(ptr::null(), dir.as_ptr(), ptr::null_mut()) };
    assert_eq!(status, FnlseStatus::InvalidArgument);

    let mut buf = [0.0; 4];
    assert_eq!(unsafe { fnlse_snapshot_values(ptr::null(), buf.as_mut_ptr(), 4) }, FnlseStatus::InvalidArgument);
    assert_eq!(unsafe { fnlse_snapshot_len(ptr::null()) }, 0);
    unsafe {
        fnlse_config_free(ptr::null_mut());
        fnlse_snapshot_free(ptr::null_mut());
        fnlse_string_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_map_to_config_status() {
    let (status, cfg) = parse("[grid]\npoints = [-4, 64]\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\n", FnlseMode::Ground);
    assert_eq!(status, FnlseStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("grid.points"), "{}", last_error());

    let (status, _) = parse(&format!("mode = \"sweep\"\n{LINEAR_GROUND}"), FnlseMode::Ground);
    assert_eq!(status, FnlseStatus::Config);
}

#[test]
fn document_without_mode_defaults_to_ground() {
    let (status, cfg) = parse(LINEAR_GROUND, FnlseMode::FromDocument);
    assert_eq!(status, FnlseStatus::Ok);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { fnlse_config_to_toml(cfg, &mut text) }, FnlseStatus::Ok);
    assert!(unsafe { CStr::from_ptr(text) }.to_str().unwrap().contains("mode = \"ground\""));
    unsafe {
        fnlse_string_free(text);
        fnlse_config_free(cfg);
    }
}

#[test]
fn success_clears_the_last_error() {
    let _ = parse("not toml [", FnlseMode::Ground);
    assert!(!fnlse_last_error().is_null());
    let (status, cfg) = parse(LINEAR_GROUND, FnlseMode::Ground);
    assert_eq!(status, FnlseStatus::Ok);
    assert!(fnlse_last_error().is_null());
    unsafe { fnlse_config_free(cfg) };
}

#[test]
fn config_round_trips_through_toml() {
    let (status, cfg) = parse(LINEAR_GROUND, FnlseMode::Dynamics);
    assert_eq!(status, FnlseStatus::Ok);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { fnlse_config_to_toml(cfg, &mut text) }, FnlseStatus::Ok);
    let owned = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
    assert!(owned.contains("mode = \"dynamics\""), "{owned}");
    let (status, again) = parse(&owned, FnlseMode::FromDocument);
    assert_eq!(status, FnlseStatus::Ok);
    unsafe {
        fnlse_string_free(text);
        fnlse_config_free(cfg);
        fnlse_config_free(again);
    }
}

#[test]
fn ground_then_dynamics_through_handles() {
    let tmp = tempfile::TempDir::new().unwrap();
    let gout = tmp.path().join("g");
    let (status, cfg) = parse(LINEAR_GROUND, FnlseMode::Ground);
    assert_eq!(status, FnlseStatus::Ok);
    let mut g = FnlseGroundSummary::default();
    let dir = CString::new(gout.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fnlse_ground_run(cfg, dir.as_ptr(), &mut g) }, FnlseStatus::Ok);
    unsafe { fnlse_config_free(cfg) };
    assert!(g.converged);
    assert!((g.total_energy - 1.0).abs() < 1e-6, "{}", g.total_energy);
    assert!((g.mass - 1.0).abs() < 1e-12);

    let snap_path = CString::new(gout.join("ground_state.snap").to_str().unwrap()).unwrap();
    let mut snap = ptr::null_mut();
    assert_eq!(unsafe { fnlse_snapshot_read(snap_path.as_ptr(), &mut snap) }, FnlseStatus::Ok);
    assert_eq!(unsafe { fnlse_snapshot_dim(snap) }, 2);
    let n = unsafe { fnlse_snapshot_len(snap) };
    assert_eq!(n, 64 * 64);
    let (mut t, mut rotating) = (f64::NAN, true);
    let (mut points, mut lo, mut hi) = ([0usize; 2], [0.0; 2], [0.0; 2]);
    let status = unsafe { fnlse_snapshot_info(snap, &mut t, &mut rotating, points.as_mut_ptr(), lo.as_mut_ptr(), hi.as_mut_ptr()) };
    assert_eq!(status, FnlseStatus::Ok);
    assert_eq!(points, [64, 64]);
    assert_eq!((lo, hi), ([-8.0, -8.0], [8.0, 8.0]));
    assert!(!rotating);

    let mut short = vec![0.0; 2 * n - 1];
    assert_eq!(unsafe { fnlse_snapshot_values(snap, short.as_mut_ptr(), short.len()) }, FnlseStatus::InvalidArgument);
    let mut buf = vec![0.0; 2 * n];
    assert_eq!(unsafe { fnlse_snapshot_values(snap, buf.as_mut_ptr(), buf.len()) }, FnlseStatus::Ok);
    let h2 = (16.0 / 64.0f64).powi(2);
    let summed: f64 = buf.chunks(2).map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>() * h2;
    let mut mass = 0.0;
    assert_eq!(unsafe { fnlse_snapshot_mass(snap, &mut mass) }, FnlseStatus::Ok);
    assert!((summed - mass).abs() < 1e-12 && (mass - 1.0).abs() < 1e-12, "{summed} {mass}");
    unsafe { fnlse_snapshot_free(snap) };

    let dyn_text = format!(
        "{LINEAR_GROUND}\n[dynamics]\ndt = 0.01\nt_final = 0.1\nsnapshot_every = 5\ndiagnostics_every = 1\n\n[initial]\nkind = \"file\"\npath = {:?}\n",
        gout.join("ground_state.snap").to_str().unwrap()
    );
    let (status, cfg) = parse(&dyn_text, FnlseMode::Dynamics);
    assert_eq!(status, FnlseStatus::Ok, "{}", last_error());
    let mut d = FnlseDynamicsSummary::default();
    let dir = CString::new(tmp.path().join("d").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fnlse_dynamics_run(cfg, dir.as_ptr(), &mut d) }, FnlseStatus::Ok, "{}", last_error());
    unsafe { fnlse_config_free(cfg) };
    assert_eq!(d.steps, 10);
    assert_eq!(d.diagnostics_rows, 11);
    assert!(d.max_mass_drift < 1e-12);
}

#[test]
fn nonexistence_has_its_own_status() {
    let tmp = tempfile::TempDir::new().unwrap();
    let text = "[grid]\nlo = [-16.0, -16.0]\nhi = [16.0, 16.0]\npoints = [128, 128]\n\n[physics]\ns = 0.5\nomega = 0.8\nlambda = 1.0\n\n[ground]\ndt = 0.01\n";
    let (status, cfg) = parse(text, FnlseMode::Ground);
    assert_eq!(status, FnlseStatus::Ok);
    let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();
    let status = unsafe { fnlse_ground_run(cfg, dir.as_ptr(), ptr::null_mut()) };
    unsafe { fnlse_config_free(cfg) };
    assert_eq!(status, FnlseStatus::Nonexistence);
    assert!(tmp.path().join("convergence.csv").exists());
}

#[test]
fn missing_files_map_to_io_status() {
    let path = CString::new("/nonexistent/ground_state.snap").unwrap();
    let mut snap = ptr::null_mut();
    assert_eq!(unsafe { fnlse_snapshot_read(path.as_ptr(), &mut snap) }, FnlseStatus::Io);
    assert!(snap.is_null());
}

#[test]
fn status_codes_are_stable() {
    let codes = [
        (FnlseStatus::Ok, 0),
        (FnlseStatus::InvalidArgument, 1),
        (FnlseStatus::Config, 2),
        (FnlseStatus::Numerical, 3),
        (FnlseStatus::Nonexistence, 4),
        (FnlseStatus::Io, 5),
        (FnlseStatus::Panic, 6),
    ];
    for (s, c) in codes {
        assert_eq!(s as i32, c);
    }
}
