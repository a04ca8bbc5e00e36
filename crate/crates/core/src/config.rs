//! Run configuration files.
//!
//! A configuration is a TOML document with flat sections:
//!
//! ```toml
//! mode = "ground"
//!
//! [grid]
//! lo = [-8.0, -8.0]
//! hi = [8.0, 8.0]
//! points = [128, 128]
//!
//! [physics]
//! s = 1.0
//! beta = 100.0
//! ```
//!
//! Every omitted key takes the default documented on the corresponding field.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::dynamics::DynamicsRun;
use crate::error::{Error, Result};
use crate::groundstate::{GroundStateRun, InnerSolver};
use crate::kernel::KernelSpec;
use crate::model::{PhysicsParams, Trap};
use crate::spectral::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ground,
    Dynamics,
    Sweep,
}

/// `[grid]`: box `[lo, hi)` with `points` nodes per axis. Defaults to
/// `[-32, 32]^2` for ground states and `[-16, 16]^2` for dynamics, both with `h = 1/8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<i64>,
}

impl GridConfig {
    pub fn default_for(mode: Mode) -> Self {
        let half = if mode == Mode::Dynamics { 16.0 } else { 32.0 };
        let n = (2.0 * half * 8.0) as i64;
        GridConfig { lo: vec![-half; 2], hi: vec![half; 2], points: vec![n; 2] }
    }

    pub fn build(&self) -> Result<Grid> {
        if self.points.iter().any(|&n| n <= 0) {
            return Err(Error::config("grid.points", format!("point counts must be positive, got {:?}", self.points)));
        }
        if self.lo.len() != self.points.len() || self.hi.len() != self.points.len() {
            return Err(Error::config("grid", "lo, hi and points must have the same length"));
        }
        let n: Vec<usize> = self.points.iter().map(|&n| n as usize).collect();
        Grid::new(&self.lo, &self.hi, &n).map_err(|e| Error::config("grid", e.to_string()))
    }
}

/// `[physics]`: model constants; all default to the linear problem `s = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub s: f64,
    pub m: f64,
    pub beta: f64,
    pub lambda: f64,
    pub omega: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig { s: 1.0, m: 0.0, beta: 0.0, lambda: 0.0, omega: 0.0 }
    }
}

/// `[trap]`: harmonic (`gamma` defaults to ones), harmonic plus optical lattice, or a sampled file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrapConfig {
    Harmonic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<Vec<f64>>,
    },
    HarmonicLattice {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<Vec<f64>>,
        depth: f64,
        wavenumber: f64,
    },
    /// Little-endian `f64` values in grid order.
    Sampled { path: PathBuf },
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig::Harmonic { gamma: None }
    }
}

/// `[kernel]`: nonlocal kernel and GauSum accuracy (`delta = 1e-3`, `eps0 = 1e-12`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(flatten)]
    pub spec: KernelSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    /// Directory for persisted tensor tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

fn default_delta() -> f64 {
    1e-3
}
fn default_eps0() -> f64 {
    1e-12
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { spec: KernelSpec::Coulomb { mu: 1.0 }, delta: default_delta(), eps0: default_eps0(), cache_dir: None }
    }
}

/// `[ground]`: gradient-flow controls (`dt = 1e-3`, `eps_stop = 1e-9`, Laplace-preconditioned BiCGStab).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundConfig {
    pub dt: f64,
    pub eps_stop: f64,
    pub inner: InnerSolver,
    pub inner_tol: f64,
    pub inner_max_iter: i64,
    pub max_steps: i64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        let r = GroundStateRun::default();
        GroundConfig {
            dt: r.dt,
            eps_stop: r.eps_stop,
            inner: r.inner,
            inner_tol: r.inner_tol,
            inner_max_iter: r.inner_max_iter as i64,
            max_steps: r.max_steps as i64,
        }
    }
}

impl GroundConfig {
    pub fn to_run(&self) -> Result<GroundStateRun> {
        positive("ground.dt", self.dt)?;
        positive("ground.eps_stop", self.eps_stop)?;
        positive("ground.inner_tol", self.inner_tol)?;
        if self.inner_max_iter <= 0 {
            return Err(Error::config("ground.inner_max_iter", "must be positive"));
        }
        if self.max_steps <= 0 {
            return Err(Error::config("ground.max_steps", "must be positive"));
        }
        Ok(GroundStateRun {
            dt: self.dt,
            eps_stop: self.eps_stop,
            inner: self.inner,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter as usize,
            max_steps: self.max_steps as usize,
            ..GroundStateRun::default()
        })
    }
}

/// `[dynamics]`: `dt = 1e-3`, `t_final = 1`, diagnostics every 10 steps, no snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_every: i64,
    pub diagnostics_every: i64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let r = DynamicsRun::default();
        DynamicsConfig {
            dt: r.dt,
            t_final: r.t_final,
            snapshot_every: r.snapshot_every as i64,
            diagnostics_every: r.diagnostics_every as i64,
        }
    }
}

impl DynamicsConfig {
    pub fn to_run(&self) -> Result<DynamicsRun> {
        positive("dynamics.dt", self.dt)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("dynamics.t_final", "must be non-negative"));
        }
        if self.snapshot_every < 0 {
            return Err(Error::config("dynamics.snapshot_every", "must be non-negative"));
        }
        if self.diagnostics_every < 0 {
            return Err(Error::config("dynamics.diagnostics_every", "must be non-negative"));
        }
        Ok(DynamicsRun {
            dt: self.dt,
            t_final: self.t_final,
            snapshot_every: self.snapshot_every as usize,
            diagnostics_every: self.diagnostics_every as usize,
        })
    }
}

/// `[initial]`: starting field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Gaussian/vortex blend weighted by `omega` (defaults to the physics rotation).
    Guess {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        /// Relative amplitude of seeded random noise.
        #[serde(default)]
        noise: f64,
    },
    /// Field read from a snapshot file.
    File { path: PathBuf },
    /// `phi_g(x - x0) exp(i v0 (0.8 x + 0.5 y))`, with `phi_g` read from `path`
    /// or computed with the `[ground]` settings at `Omega = 0`.
    ShiftedGround {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default)]
        x0: Vec<f64>,
        #[serde(default)]
        v0: f64,
    },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Guess { omega: None, noise: 0.0 }
    }
}

/// `[sweep]`: critical-rotation bisection over `s_values` within `[omega_lo, omega_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub s_values: Vec<f64>,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub resolution: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { s_values: vec![1.0], omega_lo: 0.0, omega_hi: 0.8, resolution: 0.01 }
    }
}

/// `[output]`: destination directory (overridden on the command line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

/// A complete, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub trap: TrapConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub ground: GroundConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["lo", "hi", "points"]),
    ("physics", &["s", "m", "beta", "lambda", "omega"]),
    ("trap", &["kind", "gamma", "depth", "wavenumber", "path"]),
    ("kernel", &["kind", "mu", "n", "delta", "eps0", "cache_dir"]),
    ("ground", &["dt", "eps_stop", "inner", "inner_tol", "inner_max_iter", "max_steps"]),
    ("dynamics", &["dt", "t_final", "snapshot_every", "diagnostics_every"]),
    ("initial", &["kind", "omega", "noise", "path", "x0", "v0"]),
    ("sweep", &["s_values", "omega_lo", "omega_hi", "resolution"]),
    ("output", &["dir"]),
];
const TOP_LEVEL: &[&str] = &["mode", "seed"];

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_as(text, None)
}

/// Like [`parse_config`], with `mode` supplying the default mode. A document
/// naming a different mode is rejected.
pub fn parse_config_as(text: &str, mode: Option<Mode>) -> Result<RunConfig> {
    let mut table = text.parse::<toml::Table>().map_err(|e| Error::config("<document>", e.message().to_string()))?;
    check_keys(&table)?;
    let hint = mode.map(|m| Value::try_from(m).expect("unit variant"));
    match (table.get("mode"), hint) {
        (None, hint) => {
            table.insert("mode".into(), hint.unwrap_or_else(|| Value::String("ground".into())));
        }
        (Some(given), Some(hint)) if *given != hint => {
            return Err(Error::config("mode", format!("document says {given} but the command runs {hint}")));
        }
        _ => {}
    }
    let mode: Mode = Value::String(table["mode"].as_str().unwrap_or_default().to_string())
        .try_into()
        .map_err(|_| Error::config("mode", format!("expected one of ground, dynamics, sweep, got {}", table["mode"])))?;
    let mut grid = match table.get("grid") {
        Some(v) => v.as_table().cloned().ok_or_else(|| Error::config("grid", "must be a table"))?,
        None => toml::Table::new(),
    };
    let defaults = GridConfig::default_for(mode);
    grid.entry("lo").or_insert_with(|| Value::try_from(&defaults.lo).unwrap());
    grid.entry("hi").or_insert_with(|| Value::try_from(&defaults.hi).unwrap());
    grid.entry("points").or_insert_with(|| Value::try_from(&defaults.points).unwrap());
    table.insert("grid".into(), Value::Table(grid));
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        Error::config(&locate(&msg), msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path, mode: Option<Mode>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    parse_config_as(&text, mode)
}

fn check_keys(table: &toml::Table) -> Result<()> {
    for (key, value) in table {
        if TOP_LEVEL.contains(&key.as_str()) {
            continue;
        }
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| s == key) else {
            return Err(Error::config(key, "unknown key"));
        };
        let Some(section) = value.as_table() else {
            return Err(Error::config(key, "must be a table"));
        };
        for inner in section.keys() {
            if !allowed.contains(&inner.as_str()) {
                return Err(Error::config(&format!("{key}.{inner}"), "unknown key"));
            }
        }
    }
    Ok(())
}

// Best-effort key path for serde messages such as "missing field `depth`".
fn locate(msg: &str) -> String {
    let field = msg.split('`').nth(1).unwrap_or("<document>");
    for (section, keys) in SECTIONS {
        if keys.contains(&field) {
            return format!("{section}.{field}");
        }
    }
    field.to_string()
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Default configuration for `mode`.
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            seed: 0,
            grid: GridConfig::default_for(mode),
            physics: PhysicsConfig::default(),
            trap: TrapConfig::default(),
            kernel: KernelConfig::default(),
            ground: GroundConfig::default(),
            dynamics: DynamicsConfig::default(),
            initial: InitialConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a TOML integer (at most 2^63 - 1)"));
        }
        let grid = self.grid.build()?;
        let d = grid.dim();
        let p = &self.physics;
        positive("physics.s", p.s)?;
        if !(p.m >= 0.0 && p.m.is_finite()) {
            return Err(Error::config("physics.m", "must be non-negative"));
        }
        for (k, v) in [("physics.beta", p.beta), ("physics.lambda", p.lambda), ("physics.omega", p.omega)] {
            if !v.is_finite() {
                return Err(Error::config(k, "must be finite"));
            }
        }
        match &self.trap {
            TrapConfig::Harmonic { gamma } | TrapConfig::HarmonicLattice { gamma, .. } => {
                if let Some(g) = gamma {
                    if g.len() != d {
                        return Err(Error::config("trap.gamma", format!("need {d} values, got {}", g.len())));
                    }
                    if g.iter().any(|v| !(*v > 0.0)) {
                        return Err(Error::config("trap.gamma", "frequencies must be positive"));
                    }
                }
            }
            TrapConfig::Sampled { path } => {
                if !path.exists() {
                    return Err(Error::config("trap.path", format!("{} does not exist", path.display())));
                }
            }
        }
        if p.lambda != 0.0 {
            self.kernel.spec.validate(d).map_err(|e| Error::config("kernel", e.to_string()))?;
        }
        if !(self.kernel.delta > 0.0 && self.kernel.delta < 1.0) {
            return Err(Error::config("kernel.delta", "must lie in (0, 1)"));
        }
        positive("kernel.eps0", self.kernel.eps0)?;
        self.ground.to_run()?;
        self.dynamics.to_run()?;
        match &self.initial {
            InitialConfig::File { path } if !path.exists() => {
                return Err(Error::config("initial.path", format!("{} does not exist", path.display())));
            }
            InitialConfig::ShiftedGround { path: Some(path), .. } if !path.exists() => {
                return Err(Error::config("initial.path", format!("{} does not exist", path.display())));
            }
            InitialConfig::ShiftedGround { x0, .. } if !x0.is_empty() && x0.len() != d => {
                return Err(Error::config("initial.x0", format!("need {d} values")));
            }
            InitialConfig::Guess { noise, .. } if !(*noise >= 0.0) => {
                return Err(Error::config("initial.noise", "must be non-negative"));
            }
            _ => {}
        }
        if self.mode == Mode::Sweep {
            let s = &self.sweep;
            if s.s_values.is_empty() || s.s_values.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config("sweep.s_values", "need at least one positive order"));
            }
            if !(s.omega_lo >= 0.0 && s.omega_hi > s.omega_lo) {
                return Err(Error::config("sweep.omega_hi", "need 0 <= omega_lo < omega_hi"));
            }
            positive("sweep.resolution", s.resolution)?;
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(self.grid.build()?))
    }

    /// Model constants, reading sampled traps from disk.
    pub fn physics_params(&self, grid: &Grid) -> Result<PhysicsParams> {
        let d = grid.dim();
        let trap = match &self.trap {
            TrapConfig::Harmonic { gamma } => Trap::Harmonic { gamma: gamma.clone().unwrap_or_else(|| vec![1.0; d]) },
            TrapConfig::HarmonicLattice { gamma, depth, wavenumber } => {
                Trap::HarmonicLattice { gamma: gamma.clone().unwrap_or_else(|| vec![1.0; d]), depth: *depth, wavenumber: *wavenumber }
            }
            TrapConfig::Sampled { path } => {
                let bytes = std::fs::read(path)?;
                if bytes.len() != 8 * grid.len() {
                    return Err(Error::config("trap.path", format!("expected {} bytes, found {}", 8 * grid.len(), bytes.len())));
                }
                let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                Trap::Sampled { values: Arc::new(values) }
            }
        };
        let p = &self.physics;
        let params = PhysicsParams { s: p.s, m: p.m, beta: p.beta, lambda: p.lambda, omega: p.omega, trap, kernel: self.kernel.spec };
        params.validate(grid)?;
        Ok(params)
    }

    /// Serializes back to TOML.
    pub fn to_toml(&self) -> Result<String> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a TOML integer (at most 2^63 - 1)"));
        }
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[physics]\ns = 0.8\nbeta = 10.0\n").unwrap();
        assert_eq!(cfg.mode, Mode::Ground);
        assert_eq!(cfg.grid.points, vec![512, 512]);
        assert_eq!(cfg.grid.lo, vec![-32.0, -32.0]);
        assert_eq!(cfg.ground.dt, 1e-3);
        assert_eq!(cfg.ground.eps_stop, 1e-9);
        assert_eq!(cfg.kernel.delta, 1e-3);
        assert_eq!(cfg.kernel.eps0, 1e-12);
        let dyn_cfg = parse_config("mode = \"dynamics\"\n").unwrap();
        assert_eq!(dyn_cfg.grid.hi, vec![16.0, 16.0]);
        assert_eq!(dyn_cfg.grid.points, vec![256, 256]);
        assert_eq!(parse_config_as("", Some(Mode::Dynamics)).unwrap(), dyn_cfg);
        let err = parse_config_as("mode = \"sweep\"\n", Some(Mode::Ground)).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "mode"), "{err}");
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse_config("[grid]\nlo = [-8.0, -8.0]\nhi = [8.0, 8.0]\npoints = [-4, 64]\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "grid.points"), "{err}");
        let err = parse_config("[physics]\nsigma = 1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "physics.sigma"), "{err}");
        let err = parse_config("[physics]\ns = -1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "physics.s"), "{err}");
        let err = parse_config("colour = 1\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "colour"), "{err}");
        let err = parse_config("[trap]\nkind = \"harmonic_lattice\"\ndepth = 1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "trap.wavenumber"), "{err}");
    }

    #[test]
    fn round_trip_through_toml() {
        let text = "mode = \"ground\"\n[physics]\ns = 0.5\nbeta = 10.0\nlambda = 10.0\n[kernel]\nkind = \"coulomb\"\nmu = 1.0\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let mut d = RunConfig::new(Mode::Dynamics);
        d.kernel.spec = KernelSpec::Ddi2d { n: [0.0, 0.6, 0.8] };
        d.initial = InitialConfig::ShiftedGround { path: None, x0: vec![1.0, 1.0], v0: 1.0 };
        d.trap = TrapConfig::HarmonicLattice { gamma: Some(vec![1.0, 2.0]), depth: 3.0, wavenumber: 0.5 };
        assert_eq!(parse_config(&d.to_toml().unwrap()).unwrap(), d);
    }
}
