//! Drivers that turn a [`RunConfig`] into artifacts on disk.
//!
//! Output layout under the run directory:
//!
//! - `ground`: `ground_state.snap`, `convergence.csv`, `summary.toml`
//! - `dynamics`: `diagnostics.csv`, `laws.csv`, `snapshots/step_NNNNNNNN.snap`, `summary.toml`
//! - `sweep`: `sweep.csv`, `summary.toml`
//!
//! Artifacts gathered before a failure are written before the error is returned.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{InitialConfig, RunConfig};
use crate::dynamics::{shift_and_boost, Event, Propagator};
use crate::error::{Error, Result};
use crate::groundstate::{critical_rotation, initial_guess, CriticalRotation, GroundStateSolver, Termination};
use crate::io::{self, hex, params_hash, CsvSink, FrameKind, Snapshot, DIAGNOSTICS_COLUMNS};
use crate::kernel::NonlocalSolver;
use crate::model::PhysicsParams;
use crate::observables::{com_law_residuals, DiagnosticsRecord, EnergyParts};
use crate::spectral::{ComplexField, Grid};
use crate::verify;

/// Nonlocal solver for `params`, or `None` when `lambda = 0`.
pub fn build_nonlocal(cfg: &RunConfig, grid: &Arc<Grid>, params: &PhysicsParams) -> Result<Option<Arc<NonlocalSolver>>> {
    if !params.has_nonlocal() {
        return Ok(None);
    }
    let k = &cfg.kernel;
    let solver = NonlocalSolver::with_cache_dir(grid.clone(), k.spec, k.delta, k.eps0, k.cache_dir.as_deref())?;
    Ok(Some(Arc::new(solver)))
}

fn read_field(path: &Path, grid: &Arc<Grid>) -> Result<ComplexField> {
    let snap = Snapshot::read(path)?;
    if snap.lo != grid.lo() || snap.hi != grid.hi() || snap.points != grid.points() {
        return Err(Error::config("initial.path", format!("{} was written on a different grid", path.display())));
    }
    ComplexField::new(grid.clone(), snap.values)
}

/// Ground state of `params` at `Omega = 0` with the `[ground]` settings, aborting on failure.
fn static_ground_state(
    cfg: &RunConfig,
    grid: &Arc<Grid>,
    params: &PhysicsParams,
    nonlocal: Option<Arc<NonlocalSolver>>,
) -> Result<ComplexField> {
    let mut p = params.clone();
    p.omega = 0.0;
    let solver = GroundStateSolver::new(grid.clone(), p, cfg.ground.to_run()?, nonlocal)?;
    let gs = solver.run(initial_guess(grid, 0.0)?)?;
    gs.check()?;
    Ok(gs.phi)
}

/// Starting field described by `[initial]`.
pub fn initial_field(
    cfg: &RunConfig,
    grid: &Arc<Grid>,
    params: &PhysicsParams,
    nonlocal: Option<Arc<NonlocalSolver>>,
) -> Result<ComplexField> {
    match &cfg.initial {
        InitialConfig::Guess { omega, noise } => {
            let mut phi = initial_guess(grid, omega.unwrap_or(params.omega))?;
            if *noise > 0.0 {
                let amp = noise * phi.max_abs();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                for v in phi.values_mut() {
                    *v += C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp;
                }
                phi.normalize()?;
            }
            Ok(phi)
        }
        InitialConfig::File { path } => read_field(path, grid),
        InitialConfig::ShiftedGround { path, x0, v0 } => {
            let phi_g = match path {
                Some(p) => read_field(p, grid)?,
                None => static_ground_state(cfg, grid, params, nonlocal)?,
            };
            shift_and_boost(&phi_g, x0, *v0)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundSummary {
    pub termination: Termination,
    pub steps: usize,
    pub converged: bool,
    pub energy: EnergyParts,
    pub total_energy: f64,
    pub mass: f64,
    pub max_abs: f64,
    pub lz: f64,
    pub monotonicity_violations: usize,
    pub params_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a, T: Serialize> {
    summary: &'a T,
    params: &'a PhysicsParams,
}

fn write_summary<T: Serialize>(out: &Path, summary: &T, params: &PhysicsParams) -> Result<()> {
    let text = toml::to_string(&SummaryFile { summary, params }).map_err(|e| Error::Format(e.to_string()))?;
    io::write_text(&out.join("summary.toml"), &text)
}

/// Computes a ground state and writes its artifacts.
pub fn run_ground(cfg: &RunConfig, out: &Path) -> Result<GroundSummary> {
    std::fs::create_dir_all(out)?;
    let grid = cfg.build_grid()?;
    let params = cfg.physics_params(&grid)?;
    let nonlocal = build_nonlocal(cfg, &grid, &params)?;
    let phi0 = initial_field(cfg, &grid, &params, nonlocal.clone())?;
    let solver = GroundStateSolver::new(grid, params.clone(), cfg.ground.to_run()?, nonlocal)?;
    let mut csv = CsvSink::new(BufWriter::new(File::create(out.join("convergence.csv"))?), io::HISTORY_COLUMNS)?;
    let mut csv_err = None;
    let gs = solver.run_with(phi0, |r| {
        let e = &r.energy;
        let row = [
            r.step as f64,
            r.t,
            e.kinetic,
            e.potential,
            e.rotation,
            e.interaction,
            e.nonlocal,
            r.total,
            r.residual,
            r.inner_iterations as f64,
        ];
        if let Err(e) = csv.row(&row) {
            csv_err.get_or_insert(e);
        }
    })?;
    csv.flush()?;
    if let Some(e) = csv_err {
        return Err(e);
    }
    Snapshot::from_field(&gs.phi, &params, 0.0, FrameKind::Lab, crate::dynamics::rotation_matrix(0.0, 0.0, 3))
        .write(&out.join("ground_state.snap"))?;
    let summary = GroundSummary {
        termination: gs.termination.clone(),
        steps: gs.history.len() - 1,
        converged: gs.converged(),
        energy: gs.energy,
        total_energy: gs.energy.total(),
        mass: crate::observables::mass(&gs.phi),
        max_abs: gs.phi.max_abs(),
        lz: crate::observables::angular_momentum_expectation(&gs.phi),
        monotonicity_violations: gs.monotonicity_violations.len(),
        params_hash: hex(&params_hash(&params)),
    };
    write_summary(out, &summary, &params)?;
    gs.check()?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsSummary {
    pub t_final: f64,
    pub steps: usize,
    pub diagnostics_rows: usize,
    pub snapshots: usize,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub max_law_residual: Option<f64>,
    pub params_hash: String,
}

fn snapshot_path(out: &Path, step: usize) -> PathBuf {
    out.join("snapshots").join(format!("step_{step:08}.snap"))
}

/// Propagates the initial field and writes diagnostics and snapshots.
pub fn run_dynamics(cfg: &RunConfig, out: &Path) -> Result<DynamicsSummary> {
    std::fs::create_dir_all(out)?;
    let grid = cfg.build_grid()?;
    let params = cfg.physics_params(&grid)?;
    let run = cfg.dynamics.to_run()?;
    let nonlocal = build_nonlocal(cfg, &grid, &params)?;
    let psi0 = initial_field(cfg, &grid, &params, nonlocal.clone())?;
    let mut prop = Propagator::new(grid.clone(), params.clone(), nonlocal)?;
    let mut csv = CsvSink::new(BufWriter::new(File::create(out.join("diagnostics.csv"))?), DIAGNOSTICS_COLUMNS)?;
    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut snapshots = 0;
    if run.snapshot_every > 0 {
        std::fs::create_dir_all(out.join("snapshots"))?;
    }
    let result = prop.run(psi0, &run, |ev| {
        match ev {
            Event::Diagnostics(r) => {
                csv.diagnostics(r)?;
                records.push(r.clone());
            }
            Event::Snapshot { step, t, frame, phi } => {
                Snapshot::from_field(phi, &params, t, FrameKind::Rotating, frame.a).write(&snapshot_path(out, step))?;
                snapshots += 1;
            }
        }
        Ok(())
    });
    csv.flush()?;
    if records.is_empty() {
        result?;
        return Err(Error::Format("no diagnostics were produced".into()));
    }

    let law = if records.len() >= 3 && records.windows(2).all(|w| (w[1].t - w[0].t - (records[1].t - records[0].t)).abs() < 1e-9) {
        let res = com_law_residuals(&records, &params, grid.dim())?;
        io::write_text(&out.join("laws.csv"), &io::law_csv(&res)?)?;
        res.iter().map(|r| r.first_order).reduce(f64::max)
    } else {
        None
    };
    let (n0, e0) = (records[0].mass, records[0].total_energy);
    let summary = DynamicsSummary {
        t_final: records.last().map_or(0.0, |r| r.t),
        steps: run.schedule().0,
        diagnostics_rows: records.len(),
        snapshots,
        max_mass_drift: records.iter().map(|r| (r.mass - n0).abs() / n0).fold(0.0, f64::max),
        max_energy_drift: records.iter().map(|r| (r.total_energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max),
        max_law_residual: law,
        params_hash: hex(&params_hash(&params)),
    };
    write_summary(out, &summary, &params)?;
    result?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub s: Vec<f64>,
    pub omega_c: Vec<f64>,
}

/// Critical rotation frequency for every order in `[sweep].s_values`.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<SweepSummary> {
    std::fs::create_dir_all(out)?;
    let grid = cfg.build_grid()?;
    let base = cfg.physics_params(&grid)?;
    let nonlocal = build_nonlocal(cfg, &grid, &base)?;
    let run = cfg.ground.to_run()?;
    let sw = &cfg.sweep;
    let mut results: Vec<(f64, CriticalRotation)> = Vec::new();
    let mut failure = None;
    for &s in &sw.s_values {
        let mut p = base.clone();
        p.s = s;
        match critical_rotation(grid.clone(), &p, &run, nonlocal.clone(), sw.omega_lo, sw.omega_hi, sw.resolution) {
            Ok(c) => {
                log::info!("s = {s}: Omega_c = {:.4}", c.omega_c);
                results.push((s, c));
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    io::write_text(&out.join("sweep.csv"), &io::sweep_csv(&results)?)?;
    let summary = SweepSummary { s: results.iter().map(|r| r.0).collect(), omega_c: results.iter().map(|r| r.1.omega_c).collect() };
    write_summary(out, &summary, &base)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Runs the built-in acceptance fixtures, writing `verify.txt` when `out` is given.
pub fn run_verify(out: Option<&Path>, include_slow: bool, mut report: impl FnMut(&verify::Outcome)) -> Result<Vec<verify::Outcome>> {
    let mut outcomes = Vec::new();
    for c in verify::criteria() {
        if c.slow && !include_slow {
            continue;
        }
        let o = c.run();
        report(&o);
        outcomes.push(o);
    }
    if let Some(dir) = out {
        let text: String = outcomes.iter().map(|o| format!("{o}\n")).collect();
        io::write_text(&dir.join("verify.txt"), &text)?;
    }
    match verify::summary_error(&outcomes) {
        Some(e) => Err(e),
        None => Ok(outcomes),
    }
}
