//! Strang time splitting in rotating Lagrangian coordinates.
//!
//! The rotating-frame field `phi(x~, t) = psi(A(t) x~, t)` obeys an equation
//! without the `Omega L_z` term, with a time-dependent trap `V(A(t) x~)` and
//! dipole axis `m(t) = A(t)^T n`. Each step applies half a kinetic flow, the
//! exactly integrated potential flow, and another half kinetic flow.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DensityOperator, KernelSpec, NonlocalSolver};
use crate::model::{rotate, PhysicsParams, Trap};
use crate::observables::{DiagnosticsRecord, Frame, Observer};
use crate::special::gauss_legendre;
use crate::spectral::{ComplexField, FractionalSymbol, Grid};

/// Abort when the sup norm grows by more than this factor in one step.
pub const INSTABILITY_GROWTH: f64 = 1e3;

/// `A(t)` rotating the frame by `Omega t` about the z-axis, embedded in 3x3.
pub fn rotation_matrix(omega: f64, t: f64, d: usize) -> [[f64; 3]; 3] {
    let (s, c) = (omega * t).sin_cos();
    let z = if d == 3 { 1.0 } else { 0.0 };
    [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, z]]
}

/// Rotation angle and rotated dipole axis at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationState {
    pub omega: f64,
    pub t: f64,
    pub a: [[f64; 3]; 3],
    /// `m(t) = A(t)^T n`.
    pub axis: Option<[f64; 3]>,
}

impl RotationState {
    pub fn new(omega: f64, t: f64, d: usize, dipole: Option<[f64; 3]>) -> Self {
        let a = rotation_matrix(omega, t, d);
        let axis = dipole.map(|n| {
            let mut m = [0.0; 3];
            for (j, v) in m.iter_mut().enumerate() {
                *v = (0..3).map(|i| a[i][j] * n[i]).sum();
            }
            if d == 2 {
                m[2] = n[2];
            }
            m
        });
        RotationState { omega, t, a, axis }
    }

    pub fn frame(&self) -> Frame {
        Frame { a: self.a, axis: self.axis }
    }
}

/// Closed-form integrals over `[t0, t1]` of the trigonometric factors of `A(tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TrigIntegrals {
    one: f64,
    c: f64,
    s: f64,
    cc: f64,
    ss: f64,
    cs: f64,
}

impl TrigIntegrals {
    fn new(omega: f64, t0: f64, t1: f64) -> Self {
        let one = t1 - t0;
        if omega == 0.0 {
            return TrigIntegrals { one, c: one, s: 0.0, cc: one, ss: 0.0, cs: 0.0 };
        }
        let (a0, a1) = (omega * t0, omega * t1);
        let c = (a1.sin() - a0.sin()) / omega;
        let s = (a0.cos() - a1.cos()) / omega;
        let cos2 = ((2.0 * a1).sin() - (2.0 * a0).sin()) / (2.0 * omega);
        let sin2 = ((2.0 * a0).cos() - (2.0 * a1).cos()) / (2.0 * omega);
        TrigIntegrals { one, c, s, cc: 0.5 * (one + cos2), ss: 0.5 * (one - cos2), cs: 0.5 * sin2 }
    }
}

/// Time-integrated nonlocal kernel over `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeKernel {
    pub t0: f64,
    pub t1: f64,
    /// `int m_i m_j dtau` (dipolar kernels), symmetric.
    pub second: [[f64; 3]; 3],
    /// Density operator whose potential equals `int Phi dtau` for a frozen density.
    pub operator: DensityOperator,
}

/// Integrates the rotating-frame kernel of `spec` over `[t0, t1]` in closed form.
pub fn time_integrated_kernel(spec: &KernelSpec, omega: f64, t0: f64, t1: f64) -> TimeKernel {
    let ti = TrigIntegrals::new(omega, t0, t1);
    let dt = ti.one;
    let mut second = [[0.0; 3]; 3];
    if let Some(n) = spec.dipole() {
        let (n1, n2, n3) = (n[0], n[1], n[2]);
        second[0][0] = ti.cc * n1 * n1 - 2.0 * ti.cs * n1 * n2 + ti.ss * n2 * n2;
        second[1][1] = ti.ss * n1 * n1 + 2.0 * ti.cs * n1 * n2 + ti.cc * n2 * n2;
        second[0][1] = ti.cs * (n1 * n1 - n2 * n2) + (ti.cc - ti.ss) * n1 * n2;
        second[0][2] = n3 * (ti.c * n1 - ti.s * n2);
        second[1][2] = n3 * (ti.s * n1 + ti.c * n2);
        second[2][2] = n3 * n3 * dt;
        second[1][0] = second[0][1];
        second[2][0] = second[0][2];
        second[2][1] = second[1][2];
    }
    let operator = match spec {
        KernelSpec::Coulomb { .. } => DensityOperator { local: 0.0, conv: dt, identity: 1.0, second: [[0.0; 3]; 3] },
        KernelSpec::Ddi3d { .. } => DensityOperator { local: -dt, conv: -3.0, identity: 0.0, second },
        KernelSpec::Ddi2d { n } => {
            let mut m = [[0.0; 3]; 3];
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    m[i][j] = -1.5 * (second[i][j] - n[2] * n[2] * dt * delta);
                }
            }
            DensityOperator { local: 0.0, conv: 1.0, identity: 0.0, second: m }
        }
    };
    TimeKernel { t0, t1, second, operator }
}

/// `P(x~) = int_{t0}^{t1} V(A(tau) x~) dtau`.
pub fn potential_time_integral(trap: &Trap, omega: f64, grid: &Grid, t0: f64, t1: f64) -> Result<Vec<f64>> {
    let dt = t1 - t0;
    if omega == 0.0 {
        return Ok(trap.sample(grid)?.into_iter().map(|v| v * dt).collect());
    }
    trap.validate(grid)?;
    let d = grid.dim();
    let ti = TrigIntegrals::new(omega, t0, t1);
    match trap {
        Trap::Harmonic { gamma } => Ok(harmonic_integral(gamma, &ti, grid)),
        Trap::HarmonicLattice { gamma, depth, wavenumber } => {
            let mut p = harmonic_integral(gamma, &ti, grid);
            let (gx, gw) = gauss_legendre(4);
            let (depth, k) = (*depth, *wavenumber);
            for (x, w) in gx.iter().zip(&gw) {
                let tau = t0 + 0.5 * dt * (1.0 + x);
                let a = rotation_matrix(omega, tau, d);
                let lat = grid.sample(|x| {
                    let y = rotate(&a, x, d);
                    depth * y[..d].iter().map(|v| (k * v).sin().powi(2)).sum::<f64>()
                });
                p.par_iter_mut().zip(lat.par_iter()).for_each(|(p, l)| *p += 0.5 * dt * w * l);
            }
            Ok(p)
        }
        Trap::Sampled { .. } => Err(Error::param("trap", "a sampled potential cannot be used with rotation")),
    }
}

fn harmonic_integral(gamma: &[f64], ti: &TrigIntegrals, grid: &Grid) -> Vec<f64> {
    let (gx2, gy2) = (gamma[0] * gamma[0], gamma[1] * gamma[1]);
    let gz2 = gamma.get(2).map_or(0.0, |g| g * g);
    grid.sample(|x| {
        let (a, b) = (x[0], x[1]);
        // (c a + s b)^2 and (-s a + c b)^2 integrated over tau
        let u = ti.cc * a * a + 2.0 * ti.cs * a * b + ti.ss * b * b;
        let v = ti.ss * a * a - 2.0 * ti.cs * a * b + ti.cc * b * b;
        let z = if x.len() == 3 { gz2 * x[2] * x[2] * ti.one } else { 0.0 };
        0.5 * (gx2 * u + gy2 * v + z)
    })
}

/// Multiplies each Fourier coefficient by `exp(-i dt/4 (|k|^2 + m^2)^s)`.
pub fn kinetic_half_step(phi: &mut ComplexField, sym: &FractionalSymbol, dt: f64) {
    let table = sym.table(phi.grid());
    let phases: Vec<C64> = table.par_iter().map(|s| C64::from_polar(1.0, -0.25 * dt * s)).collect();
    apply_phases(phi, &phases);
}

fn apply_phases(phi: &mut ComplexField, phases: &[C64]) {
    let grid = phi.grid().clone();
    let fft = grid.fft();
    let inv_n = 1.0 / grid.len() as f64;
    let data = phi.values_mut();
    fft.forward(data);
    data.par_iter_mut().zip(phases.par_iter()).for_each(|(v, p)| *v *= p * inv_n);
    fft.inverse(data);
}

/// `phi(x - x0) exp(i v0 (0.8 x + 0.5 y))`, translating spectrally.
pub fn shift_and_boost(phi: &ComplexField, x0: &[f64], v0: f64) -> Result<ComplexField> {
    let grid = phi.grid().clone();
    let d = grid.dim();
    if !x0.is_empty() && x0.len() != d {
        return Err(Error::param("x0", format!("need {d} components, got {}", x0.len())));
    }
    let mut out = phi.clone();
    if x0.iter().any(|v| *v != 0.0) {
        let phases: Vec<C64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let k = grid.wavevector(i);
                C64::from_polar(1.0, -(0..d).map(|a| k[a] * x0[a]).sum::<f64>())
            })
            .collect();
        apply_phases(&mut out, &phases);
    }
    if v0 != 0.0 && d >= 2 {
        out.values_mut().par_iter_mut().enumerate().for_each(|(i, v)| {
            let x = grid.point(i);
            *v *= C64::from_polar(1.0, v0 * (0.8 * x[0] + 0.5 * x[1]));
        });
    }
    Ok(out)
}

/// Controls for a dynamics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRun {
    pub dt: f64,
    pub t_final: f64,
    /// Steps between snapshots, 0 for none.
    pub snapshot_every: usize,
    /// Steps between diagnostics rows, 0 for only the first and last.
    pub diagnostics_every: usize,
}

impl Default for DynamicsRun {
    fn default() -> Self {
        DynamicsRun { dt: 1e-3, t_final: 1.0, snapshot_every: 0, diagnostics_every: 10 }
    }
}

impl DynamicsRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::param("t_final", "final time must be non-negative"));
        }
        Ok(())
    }

    /// Number of steps and the length of the last one.
    pub fn schedule(&self) -> (usize, f64) {
        let ratio = self.t_final / self.dt;
        let full = (ratio + 1e-9).floor() as usize;
        let rest = self.t_final - full as f64 * self.dt;
        if rest > 1e-9 * self.dt {
            (full + 1, rest)
        } else {
            (full, self.dt)
        }
    }
}

/// Output produced while stepping.
pub enum Event<'a> {
    Diagnostics(&'a DiagnosticsRecord),
    /// Rotating-frame field with its frame at time `t`.
    Snapshot {
        step: usize,
        t: f64,
        frame: &'a Frame,
        phi: &'a ComplexField,
    },
}

/// TS2 integrator for one grid and model.
pub struct Propagator {
    grid: Arc<Grid>,
    params: PhysicsParams,
    sym: FractionalSymbol,
    nonlocal: Option<Arc<NonlocalSolver>>,
    /// Kinetic phases for the nominal step.
    phases: Option<(f64, Vec<C64>)>,
    /// Cached `P` when it does not depend on time.
    static_potential: Option<(f64, Vec<f64>)>,
}

impl Propagator {
    pub fn new(grid: Arc<Grid>, params: PhysicsParams, nonlocal: Option<Arc<NonlocalSolver>>) -> Result<Self> {
        params.validate(&grid)?;
        if params.has_nonlocal() && nonlocal.is_none() {
            return Err(Error::param("lambda", "nonzero lambda needs a nonlocal solver"));
        }
        if params.omega != 0.0 && !params.trap.is_analytic() {
            return Err(Error::param("trap", "a sampled potential cannot be used with rotation"));
        }
        let sym = FractionalSymbol::new(params.s, params.m)?;
        Ok(Propagator { grid, params, sym, nonlocal, phases: None, static_potential: None })
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn rotation(&self, t: f64) -> RotationState {
        RotationState::new(self.params.omega, t, self.grid.dim(), self.params.kernel.dipole())
    }

    fn kinetic(&mut self, phi: &mut ComplexField, dt: f64) {
        if self.phases.as_ref().is_none_or(|(h, _)| *h != dt) {
            let table = self.sym.table(&self.grid);
            let ph = table.par_iter().map(|s| C64::from_polar(1.0, -0.25 * dt * s)).collect();
            self.phases = Some((dt, ph));
        }
        apply_phases(phi, &self.phases.as_ref().unwrap().1);
    }

    fn potential_integral(&mut self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        let dt = t1 - t0;
        if self.params.omega == 0.0 {
            if let Some((h, p)) = &self.static_potential {
                if *h == dt {
                    return Ok(p.clone());
                }
            }
            let p = potential_time_integral(&self.params.trap, 0.0, &self.grid, t0, t1)?;
            self.static_potential = Some((dt, p.clone()));
            return Ok(p);
        }
        potential_time_integral(&self.params.trap, self.params.omega, &self.grid, t0, t1)
    }

    /// Exact flow of `i phi_t = [W + beta |phi|^2 + lambda Phi] phi` over `[t0, t1]` with frozen density.
    pub fn nonlinear_step(&mut self, phi: &mut ComplexField, t0: f64, t1: f64) -> Result<()> {
        let dt = t1 - t0;
        let p = self.potential_integral(t0, t1)?;
        let rho = phi.density();
        let nonlocal = match (&self.nonlocal, self.params.has_nonlocal()) {
            (Some(solver), true) => {
                let k = time_integrated_kernel(&self.params.kernel, self.params.omega, t0, t1);
                Some(solver.apply(&rho, &k.operator))
            }
            _ => None,
        };
        let (beta, lambda) = (self.params.beta, self.params.lambda);
        phi.values_mut().par_iter_mut().enumerate().for_each(|(i, v)| {
            let theta = dt * beta * rho[i] + p[i] + nonlocal.as_ref().map_or(0.0, |f| lambda * f[i]);
            *v *= C64::from_polar(1.0, -theta);
        });
        Ok(())
    }

    /// One Strang step from `t` to `t + dt`.
    pub fn step(&mut self, phi: &mut ComplexField, t: f64, dt: f64) -> Result<()> {
        self.kinetic(phi, dt);
        self.nonlinear_step(phi, t, t + dt)?;
        self.kinetic(phi, dt);
        Ok(())
    }

    /// Steps `phi0` (lab-frame data at `t = 0`) to `run.t_final`, reporting events.
    pub fn run<F: FnMut(Event<'_>) -> Result<()>>(&mut self, phi0: ComplexField, run: &DynamicsRun, mut sink: F) -> Result<ComplexField> {
        run.validate()?;
        let observer = Observer::new(self.grid.clone(), self.params.clone(), self.nonlocal.clone())?;
        let (steps, last_dt) = run.schedule();
        let mut phi = phi0;
        let mut t = 0.0;
        let frame0 = self.rotation(0.0).frame();
        let rec = observer.record(0.0, &phi, &frame0)?;
        sink(Event::Diagnostics(&rec))?;
        if run.snapshot_every > 0 {
            sink(Event::Snapshot { step: 0, t: 0.0, frame: &frame0, phi: &phi })?;
        }
        let mut sup = phi.max_abs();
        for n in 1..=steps {
            let dt = if n == steps { last_dt } else { run.dt };
            let prev = phi.clone();
            self.step(&mut phi, t, dt)?;
            let t_next = if n == steps { run.t_final } else { n as f64 * run.dt };
            let new_sup = phi.max_abs();
            if !new_sup.is_finite() || new_sup > INSTABILITY_GROWTH * sup {
                let frame = self.rotation(t).frame();
                sink(Event::Snapshot { step: n - 1, t, frame: &frame, phi: &prev })?;
                return Err(Error::Instability { t: t_next, reason: format!("sup norm went from {sup:.3e} to {new_sup:.3e}") });
            }
            sup = new_sup;
            t = t_next;
            let frame = self.rotation(t).frame();
            let diag_due = (run.diagnostics_every > 0 && n % run.diagnostics_every == 0) || n == steps;
            if diag_due {
                let rec = observer.record(t, &phi, &frame)?;
                sink(Event::Diagnostics(&rec))?;
            }
            if run.snapshot_every > 0 && (n % run.snapshot_every == 0 || n == steps) {
                sink(Event::Snapshot { step: n, t, frame: &frame, phi: &phi })?;
            }
        }
        Ok(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotation_matrix_properties() {
        let a = rotation_matrix(1.0, 0.0, 2);
        assert_eq!(a[0][0], 1.0);
        assert_eq!(a[0][1], 0.0);
        let a = rotation_matrix(1.0, PI / 2.0, 2);
        let y = rotate(&a, &[1.0, 0.0], 2);
        assert!(y[0].abs() < 1e-15 && (y[1] + 1.0).abs() < 1e-15);
        for t in [0.3, 1.7, -4.2] {
            let a = rotation_matrix(0.8, t, 3);
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| a[k][i] * a[k][j]).sum();
                    assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn kernel_integrals_match_quadrature() {
        let n = [0.48, 0.6, 0.64];
        let (t0, t1, om) = (0.4, 0.7, 1.0);
        let k = time_integrated_kernel(&KernelSpec::Ddi3d { n }, om, t0, t1);
        let samples = 10_000;
        let h = (t1 - t0) / samples as f64;
        let mut want = [[0.0; 3]; 3];
        for q in 0..=samples {
            let w = if q == 0 || q == samples { 0.5 * h } else { h };
            let m = RotationState::new(om, t0 + q as f64 * h, 3, Some(n)).axis.unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    want[i][j] += w * m[i] * m[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.second[i][j] - want[i][j]).abs() < 1e-9, "{i}{j}");
                assert_eq!(k.second[i][j], k.second[j][i]);
            }
        }
        let axial = time_integrated_kernel(&KernelSpec::Ddi3d { n: [0.0, 0.0, 1.0] }, om, t0, t1);
        assert!((axial.second[2][2] - 0.3).abs() < 1e-15 && axial.second[0][0].abs() < 1e-15);
        let zero = time_integrated_kernel(&KernelSpec::Ddi3d { n }, om, t0, t0);
        assert!(zero.second.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn anisotropic_potential_integral_matches_quadrature() {
        let g = Grid::cube(2, 4.0, 16).unwrap();
        let trap = Trap::harmonic(&[1.0, 1.7]);
        let (t0, t1, om) = (0.2, 0.9, 0.8);
        let p = potential_time_integral(&trap, om, &g, t0, t1).unwrap();
        let (gx, gw) = gauss_legendre(64);
        let mut want = vec![0.0; g.len()];
        for (x, w) in gx.iter().zip(&gw) {
            let tau = t0 + 0.5 * (t1 - t0) * (1.0 + x);
            let v = trap.sample_rotated(&g, &rotation_matrix(om, tau, 2)).unwrap();
            for (o, v) in want.iter_mut().zip(v) {
                *o += 0.5 * (t1 - t0) * w * v;
            }
        }
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let iso = potential_time_integral(&Trap::harmonic(&[1.0, 1.0]), om, &g, t0, t1).unwrap();
        let v = Trap::harmonic(&[1.0, 1.0]).sample(&g).unwrap();
        for (a, b) in iso.iter().zip(&v) {
            assert!((a - 0.7 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn kinetic_half_step_is_unitary() {
        let g = Arc::new(Grid::cube(2, 6.0, 32).unwrap());
        let mut f = ComplexField::from_fn(g.clone(), |x| C64::new((-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp(), 0.2 * x[1]));
        let n0 = f.norm_sq();
        kinetic_half_step(&mut f, &FractionalSymbol::new(0.7, 0.0).unwrap(), 0.1);
        assert!((f.norm_sq() - n0).abs() < 1e-14 * n0);
        let mut one = ComplexField::from_fn(g.clone(), |_| C64::new(1.0, 0.0));
        kinetic_half_step(&mut one, &FractionalSymbol::new(0.7, 0.0).unwrap(), 0.1);
        assert!(one.values().iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-14));
        // s = 1 single mode advances by -dt k^2 / 4
        let k = g.wavenumbers(0)[2];
        let mut wave = ComplexField::from_fn(g.clone(), |x| C64::from_polar(1.0, k * x[0]));
        let before = wave.values()[5];
        kinetic_half_step(&mut wave, &FractionalSymbol::new(1.0, 0.0).unwrap(), 0.1);
        let ratio = wave.values()[5] / before;
        assert!((ratio - C64::from_polar(1.0, -0.1 * k * k / 4.0)).norm() < 1e-13);
    }

    #[test]
    fn schedule_handles_partial_steps() {
        let r = DynamicsRun { dt: 0.1, t_final: 1.0, ..Default::default() };
        assert_eq!(r.schedule().0, 10);
        let r = DynamicsRun { dt: 0.3, t_final: 1.0, ..Default::default() };
        let (n, last) = r.schedule();
        assert_eq!(n, 4);
        assert!((last - 0.1).abs() < 1e-12);
        let r = DynamicsRun { dt: 0.1, t_final: 0.0, ..Default::default() };
        assert_eq!(r.schedule().0, 0);
    }
}
