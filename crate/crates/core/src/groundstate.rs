//! Ground states by the normalized gradient flow with a backward-Euler
//! Fourier pseudo-spectral discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::NonlocalSolver;
use crate::model::PhysicsParams;
use crate::observables::{energy, EnergyParts};
use crate::spectral::{ComplexField, FractionalSymbol, Grid};

/// Inner linear solver for each backward-Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Stabilized fixed-point iteration with the kinetic inverse.
    FixedPoint,
    /// BiCGStab without preconditioning.
    Krylov,
    /// BiCGStab with the Fourier-diagonal kinetic preconditioner.
    KrylovLaplace,
    /// BiCGStab with the real-diagonal potential preconditioner.
    KrylovThomasFermi,
}

/// Preconditioner variants of the backward-Euler system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Identity,
    Laplace,
    ThomasFermi,
}

/// Controls for a ground-state computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateRun {
    pub dt: f64,
    /// Stop once `|phi^(n+1) - phi^n|_inf <= eps_stop * dt`.
    pub eps_stop: f64,
    pub inner: InnerSolver,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub max_steps: usize,
    /// Abort below this energy.
    pub energy_floor: f64,
    /// Abort when one step lowers the energy by more than this.
    pub max_energy_drop: f64,
    /// Abort when this fraction of the mass reaches the outer tenth of the box while the energy still falls.
    pub boundary_mass_limit: f64,
}

impl Default for GroundStateRun {
    fn default() -> Self {
        GroundStateRun {
            dt: 1e-3,
            eps_stop: 1e-9,
            inner: InnerSolver::KrylovLaplace,
            inner_tol: 1e-11,
            inner_max_iter: 2000,
            max_steps: 1_000_000,
            energy_floor: -1e6,
            max_energy_drop: 1e3,
            boundary_mass_limit: 1e-6,
        }
    }
}

impl GroundStateRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::param("eps_stop", "stop tolerance must be positive"));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::param("inner_tol", "inner tolerance must be positive"));
        }
        if self.inner_max_iter == 0 || self.max_steps == 0 {
            return Err(Error::param("max_steps", "iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Normalized blend `(1 - Omega) phi_ho + Omega phi_ho^v`; 3D grids add a Gaussian factor in z.
pub fn initial_guess(grid: &Arc<Grid>, omega: f64) -> Result<ComplexField> {
    let d = grid.dim();
    let mut f = ComplexField::from_fn(grid.clone(), |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = (-r2 / 2.0).exp() / PI.sqrt() * if d == 3 { PI.powf(-0.25) } else { 1.0 };
        C64::new(1.0 - omega, 0.0) * g + C64::new(x[0], x[1]) * (omega * g)
    });
    f.normalize()?;
    Ok(f)
}

/// Rotates `psi` by a global phase so that its largest-magnitude entry is real and positive.
pub fn fix_phase(psi: &mut ComplexField) {
    let (_, z) =
        psi.values().iter().enumerate().fold((0.0, C64::new(1.0, 0.0)), |acc, (_, z)| if z.norm() > acc.0 { (z.norm(), *z) } else { acc });
    if z.norm() > 0.0 {
        let rot = z.conj() / z.norm();
        psi.values_mut().par_iter_mut().for_each(|v| *v *= rot);
    }
}

/// `A = I/dt + (-Delta + m^2)^s / 2 + D - Omega L_z` with the real diagonal `D` frozen at step `n`.
pub struct BeOperator {
    grid: Arc<Grid>,
    dt: f64,
    omega: f64,
    /// Half the fractional symbol per mode.
    half_symbol: Vec<f64>,
    /// `V + beta |phi^n|^2 + lambda Phi^n`.
    diag: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl BeOperator {
    pub fn new(grid: Arc<Grid>, sym: &FractionalSymbol, dt: f64, omega: f64, diag: Vec<f64>) -> Self {
        let half_symbol = sym.table(&grid).into_iter().map(|v| 0.5 * v).collect();
        let xs = grid.coordinate_array(0);
        let ys = grid.coordinate_array(1);
        let kx = grid.derivative_array(0);
        let ky = grid.derivative_array(1);
        BeOperator { grid, dt, omega, half_symbol, diag, xs, ys, kx, ky }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let fft = self.grid.fft();
        let n = x.len();
        let inv_n = 1.0 / n as f64;
        let mut hat = x.to_vec();
        fft.forward(&mut hat);
        let mut kin: Vec<C64> = hat.par_iter().zip(&self.half_symbol).map(|(c, s)| c * (s * inv_n)).collect();
        fft.inverse(&mut kin);
        let mut out: Vec<C64> = (0..n).into_par_iter().map(|i| x[i] * (1.0 / self.dt + self.diag[i]) + kin[i]).collect();
        if self.omega != 0.0 {
            let mut dx: Vec<C64> = hat.par_iter().zip(&self.kx).map(|(c, k)| c * C64::new(0.0, k * inv_n)).collect();
            let mut dy: Vec<C64> = hat.par_iter().zip(&self.ky).map(|(c, k)| c * C64::new(0.0, k * inv_n)).collect();
            fft.inverse(&mut dx);
            fft.inverse(&mut dy);
            let om = self.omega;
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                // -Omega L_z x = i Omega (x d_y - y d_x)
                let v = dy[i] * self.xs[i] - dx[i] * self.ys[i];
                *o += C64::new(0.0, om) * v;
            });
        }
        out
    }

    /// Applies the inverse of the chosen preconditioner.
    pub fn precondition(&self, kind: Preconditioner, r: &[C64]) -> Result<Vec<C64>> {
        match kind {
            Preconditioner::Identity => Ok(r.to_vec()),
            Preconditioner::Laplace => Ok(self.kinetic_inverse(r, 0.0)),
            Preconditioner::ThomasFermi => {
                let inv_dt = 1.0 / self.dt;
                let min = self.diag.par_iter().map(|d| (inv_dt + d).abs()).reduce(|| f64::INFINITY, f64::min);
                if min < 1e-12 * inv_dt {
                    return Err(Error::SingularPreconditioner(min));
                }
                Ok(r.par_iter().zip(&self.diag).map(|(v, d)| v / (inv_dt + d)).collect())
            }
        }
    }

    /// `(I/dt + shift + sym/2)^-1 r`.
    fn kinetic_inverse(&self, r: &[C64], shift: f64) -> Vec<C64> {
        let fft = self.grid.fft();
        let inv_n = 1.0 / r.len() as f64;
        let mut buf = r.to_vec();
        fft.forward(&mut buf);
        let base = 1.0 / self.dt + shift;
        buf.par_iter_mut().zip(&self.half_symbol).for_each(|(c, s)| *c *= inv_n / (base + s));
        fft.inverse(&mut buf);
        buf
    }
}

/// Convergence record of one linear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerStats {
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.par_iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Right-preconditioned BiCGStab for `A x = b`, stopping at relative residual `tol`.
pub fn bicgstab<A, M>(apply: A, precond: M, b: &[C64], x0: &[C64], tol: f64, max_iter: usize) -> Result<(Vec<C64>, InnerStats)>
where
    A: Fn(&[C64]) -> Vec<C64>,
    M: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut stats = InnerStats::default();
    if bnorm == 0.0 {
        return Ok((vec![C64::default(); n], stats));
    }
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<C64> = b.par_iter().zip(ax.par_iter()).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let mut rho = C64::new(1.0, 0.0);
    let mut alpha = C64::new(1.0, 0.0);
    let mut omega = C64::new(1.0, 0.0);
    let mut v = vec![C64::default(); n];
    let mut p = vec![C64::default(); n];
    let mut res = norm(&r) / bnorm;
    stats.residuals.push(res);
    if res <= tol {
        return Ok((x, stats));
    }
    for it in 1..=max_iter {
        let rho_new = cdot(&r_hat, &r);
        if rho_new.norm() == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        p.par_iter_mut().zip(r.par_iter()).zip(v.par_iter()).for_each(|((p, r), v)| *p = r + beta * (*p - omega * v));
        let y = precond(&p)?;
        v = apply(&y);
        let denom = cdot(&r_hat, &v);
        if denom.norm() == 0.0 {
            break;
        }
        alpha = rho_new / denom;
        let s: Vec<C64> = r.par_iter().zip(v.par_iter()).map(|(r, v)| r - alpha * v).collect();
        x.par_iter_mut().zip(y.par_iter()).for_each(|(x, y)| *x += alpha * y);
        let s_norm = norm(&s) / bnorm;
        if s_norm <= tol {
            stats.iterations = it;
            stats.residuals.push(s_norm);
            return Ok((x, stats));
        }
        let z = precond(&s)?;
        let t = apply(&z);
        let tt = cdot(&t, &t).re;
        omega = if tt > 0.0 { cdot(&t, &s) / tt } else { C64::default() };
        x.par_iter_mut().zip(z.par_iter()).for_each(|(x, z)| *x += omega * z);
        r = s.par_iter().zip(t.par_iter()).map(|(s, t)| s - omega * t).collect();
        rho = rho_new;
        res = norm(&r) / bnorm;
        stats.iterations = it;
        stats.residuals.push(res);
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok((x, stats));
        }
        if omega.norm() == 0.0 {
            break;
        }
    }
    Err(Error::InnerSolverDiverged { iterations: stats.iterations, last: res, residuals: stats.residuals })
}

/// Stabilized fixed point `(I/dt + alpha + sym/2) x' = b - (D - alpha - Omega L_z) x`.
fn fixed_point(op: &BeOperator, b: &[C64], x0: &[C64], tol: f64, max_iter: usize) -> Result<(Vec<C64>, InnerStats)> {
    let (lo, hi) = op
        .diag
        .par_iter()
        .fold(|| (f64::INFINITY, f64::NEG_INFINITY), |a, &d| (a.0.min(d), a.1.max(d)))
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let alpha = 0.5 * (lo + hi);
    let bnorm = norm(b).max(1e-300);
    let mut x = x0.to_vec();
    let mut stats = InnerStats::default();
    for it in 1..=max_iter {
        // b - (A - I/dt - alpha - sym/2) x = b - A x + (I/dt + alpha + sym/2) x
        let ax = op.apply(&x);
        let r: Vec<C64> = b.par_iter().zip(ax.par_iter()).map(|(b, a)| b - a).collect();
        let res = norm(&r) / bnorm;
        stats.residuals.push(res);
        stats.iterations = it - 1;
        if res <= tol {
            return Ok((x, stats));
        }
        if !res.is_finite() {
            break;
        }
        let dx = op.kinetic_inverse(&r, alpha);
        x.par_iter_mut().zip(dx.par_iter()).for_each(|(x, d)| *x += d);
    }
    let last = *stats.residuals.last().unwrap_or(&f64::INFINITY);
    Err(Error::InnerSolverDiverged { iterations: stats.iterations, last, residuals: stats.residuals })
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyParts,
    pub total: f64,
    /// `|phi^(n+1) - phi^n|_inf / dt`.
    pub residual: f64,
    pub inner_iterations: usize,
}

/// Why a ground-state run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    Nonexistence { reason: String },
    Divergence { reason: String },
}

/// Outcome of [`GroundStateSolver::run`].
#[derive(Debug, Clone)]
pub struct GroundState {
    pub phi: ComplexField,
    pub energy: EnergyParts,
    pub history: Vec<HistoryRow>,
    pub termination: Termination,
    /// Steps at which the energy rose by more than `1e-10`.
    pub monotonicity_violations: Vec<usize>,
}

impl GroundState {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Converts an aborted run into the matching error.
    pub fn check(&self) -> Result<()> {
        match &self.termination {
            Termination::Converged => Ok(()),
            Termination::MaxSteps => Err(Error::Divergence(format!("no convergence within {} steps", self.history.len()))),
            Termination::Nonexistence { reason } => Err(Error::NonexistenceRegime(reason.clone())),
            Termination::Divergence { reason } => Err(Error::Divergence(reason.clone())),
        }
    }
}

/// Gradient-flow driver for a fixed grid and model.
pub struct GroundStateSolver {
    grid: Arc<Grid>,
    params: PhysicsParams,
    run: GroundStateRun,
    sym: FractionalSymbol,
    v: Vec<f64>,
    nonlocal: Option<Arc<NonlocalSolver>>,
    boundary: Vec<bool>,
}

impl GroundStateSolver {
    pub fn new(grid: Arc<Grid>, params: PhysicsParams, run: GroundStateRun, nonlocal: Option<Arc<NonlocalSolver>>) -> Result<Self> {
        params.validate(&grid)?;
        run.validate()?;
        if params.has_nonlocal() && nonlocal.is_none() {
            return Err(Error::param("lambda", "nonzero lambda needs a nonlocal solver"));
        }
        let sym = FractionalSymbol::new(params.s, params.m)?;
        let v = params.trap.sample(&grid)?;
        let d = grid.dim();
        let boundary = grid.sample(|x| {
            (0..d).any(|j| {
                let (lo, hi) = (grid.lo()[j], grid.hi()[j]);
                let w = 0.1 * (hi - lo);
                x[j] < lo + w || x[j] > hi - w
            })
        });
        Ok(GroundStateSolver { grid, params, run, sym, v, nonlocal, boundary })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn trap(&self) -> &[f64] {
        &self.v
    }

    /// `Phi` of `|phi|^2`, when the model has a nonlocal term.
    pub fn nonlocal_potential(&self, phi: &ComplexField) -> Result<Option<Vec<f64>>> {
        match (&self.nonlocal, self.params.has_nonlocal()) {
            (Some(s), true) => Ok(Some(s.potential(&phi.density())?)),
            _ => Ok(None),
        }
    }

    pub fn energy(&self, phi: &ComplexField) -> Result<EnergyParts> {
        let pot = self.nonlocal_potential(phi)?;
        energy(phi, &self.params, &self.v, pot.as_deref())
    }

    /// Backward-Euler operator frozen at `phi`.
    pub fn operator(&self, phi: &ComplexField, pot: Option<&[f64]>) -> BeOperator {
        let p = &self.params;
        let diag: Vec<f64> = phi
            .values()
            .par_iter()
            .enumerate()
            .map(|(i, z)| self.v[i] + p.beta * z.norm_sqr() + pot.map_or(0.0, |f| p.lambda * f[i]))
            .collect();
        BeOperator::new(self.grid.clone(), &self.sym, self.run.dt, p.omega, diag)
    }

    /// One normalized backward-Euler step.
    pub fn step(&self, phi: &ComplexField) -> Result<(ComplexField, InnerStats)> {
        let pot = self.nonlocal_potential(phi)?;
        self.step_with(phi, pot.as_deref())
    }

    fn step_with(&self, phi: &ComplexField, pot: Option<&[f64]>) -> Result<(ComplexField, InnerStats)> {
        let op = self.operator(phi, pot);
        let dt = self.run.dt;
        let b: Vec<C64> = phi.values().par_iter().map(|v| v / dt).collect();
        // warm start phi / (1 + dt mu) with the Rayleigh quotient mu
        let a_phi = op.apply(phi.values());
        let mu = self.grid.dot(&a_phi, phi.values()).re / phi.norm_sq() - 1.0 / dt;
        let x0: Vec<C64> = phi.values().par_iter().map(|v| v / (1.0 + dt * mu)).collect();
        let (tol, max) = (self.run.inner_tol, self.run.inner_max_iter);
        let (x, stats) = match self.run.inner {
            InnerSolver::FixedPoint => fixed_point(&op, &b, &x0, tol, max)?,
            InnerSolver::Krylov => bicgstab(|v| op.apply(v), |r| op.precondition(Preconditioner::Identity, r), &b, &x0, tol, max)?,
            InnerSolver::KrylovLaplace => bicgstab(|v| op.apply(v), |r| op.precondition(Preconditioner::Laplace, r), &b, &x0, tol, max)?,
            InnerSolver::KrylovThomasFermi => {
                bicgstab(|v| op.apply(v), |r| op.precondition(Preconditioner::ThomasFermi, r), &b, &x0, tol, max)?
            }
        };
        let mut next = ComplexField::new(self.grid.clone(), x)?;
        next.normalize()?;
        Ok((next, stats))
    }

    /// Runs the flow from `phi0` until the stopping criterion or a guard fires.
    pub fn run(&self, phi0: ComplexField) -> Result<GroundState> {
        self.run_with(phi0, |_| {})
    }

    /// Like [`run`](Self::run), reporting every history row to `observe`.
    pub fn run_with<F: FnMut(&HistoryRow)>(&self, phi0: ComplexField, mut observe: F) -> Result<GroundState> {
        let mut phi = phi0;
        phi.normalize()?;
        let dt = self.run.dt;
        let mut pot = self.nonlocal_potential(&phi)?;
        let mut e = energy(&phi, &self.params, &self.v, pot.as_deref())?;
        let mut history = vec![HistoryRow { step: 0, t: 0.0, energy: e, total: e.total(), residual: f64::NAN, inner_iterations: 0 }];
        observe(&history[0]);
        let mut violations = Vec::new();
        let regime = self.params.in_nonexistence_regime();
        let abort = |reason: String| {
            if regime {
                Termination::Nonexistence { reason }
            } else {
                Termination::Divergence { reason }
            }
        };
        let mut termination = Termination::MaxSteps;
        for step in 1..=self.run.max_steps {
            let (next, stats) = self.step_with(&phi, pot.as_deref())?;
            let change = phi.values().par_iter().zip(next.values().par_iter()).map(|(a, b)| (a - b).norm()).reduce(|| 0.0, f64::max);
            pot = self.nonlocal_potential(&next)?;
            let e_next = energy(&next, &self.params, &self.v, pot.as_deref())?;
            let row = HistoryRow {
                step,
                t: step as f64 * dt,
                energy: e_next,
                total: e_next.total(),
                residual: change / dt,
                inner_iterations: stats.iterations,
            };
            observe(&row);
            history.push(row);
            let (prev, cur) = (e.total(), e_next.total());
            if cur > prev + 1e-10 {
                violations.push(step);
            }
            phi = next;
            e = e_next;
            if !cur.is_finite() {
                termination = abort(format!("energy became {cur} at step {step}"));
                break;
            }
            if cur < self.run.energy_floor {
                termination = abort(format!("energy {cur:.6e} fell below {:.1e} at step {step}", self.run.energy_floor));
                break;
            }
            if prev - cur > self.run.max_energy_drop {
                termination = abort(format!("energy dropped by {:.3e} in one step at step {step}", prev - cur));
                break;
            }
            if cur < prev {
                let edge = self.boundary_mass(&phi);
                if edge > self.run.boundary_mass_limit {
                    termination =
                        abort(format!("energy still decreasing ({cur:.6e}) with mass fraction {edge:.3e} at the box edge at step {step}"));
                    break;
                }
            }
            if change <= self.run.eps_stop * dt {
                termination = Termination::Converged;
                break;
            }
        }
        if !violations.is_empty() {
            log::warn!("energy increased at {} of {} steps", violations.len(), history.len() - 1);
        }
        fix_phase(&mut phi);
        Ok(GroundState { phi, energy: e, history, termination, monotonicity_violations: violations })
    }

    fn boundary_mass(&self, phi: &ComplexField) -> f64 {
        let h = self.grid.cell_volume();
        h * phi.values().par_iter().zip(self.boundary.par_iter()).filter(|(_, b)| **b).map(|(z, _)| z.norm_sqr()).sum::<f64>()
    }
}

/// One probe of the critical-rotation bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepProbe {
    pub omega: f64,
    pub energy_plain: f64,
    pub energy_vortex: f64,
    pub lz_vortex: f64,
}

/// Result of the critical-rotation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRotation {
    pub omega_c: f64,
    pub probes: Vec<SweepProbe>,
}

/// Bisects for the smallest `Omega` at which the vortex-seeded state has lower energy
/// than the vortex-free one, to resolution `resolution` within `[lo, hi]`.
pub fn critical_rotation(
    grid: Arc<Grid>,
    params: &PhysicsParams,
    run: &GroundStateRun,
    nonlocal: Option<Arc<NonlocalSolver>>,
    lo: f64,
    hi: f64,
    resolution: f64,
) -> Result<CriticalRotation> {
    let mut probes = Vec::new();
    let mut probe = |omega: f64| -> Result<bool> {
        let mut p = params.clone();
        p.omega = omega;
        let solver = GroundStateSolver::new(grid.clone(), p, run.clone(), nonlocal.clone())?;
        let plain = solver.run(initial_guess(&grid, 0.0)?)?;
        let vortex = solver.run(initial_guess(&grid, 1.0)?)?;
        plain.check()?;
        vortex.check()?;
        let lz = crate::observables::angular_momentum_expectation(&vortex.phi);
        probes.push(SweepProbe { omega, energy_plain: plain.energy.total(), energy_vortex: vortex.energy.total(), lz_vortex: lz });
        log::info!("omega {omega:.4}: plain {:.8} vortex {:.8}", plain.energy.total(), vortex.energy.total());
        Ok(vortex.energy.total() < plain.energy.total() - 1e-9)
    };
    let (mut a, mut b) = (lo, hi);
    if !probe(b)? {
        return Err(Error::Divergence(format!("no vortex ground state below Omega = {hi}")));
    }
    while b - a > resolution {
        let mid = 0.5 * (a + b);
        if probe(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(CriticalRotation { omega_c: 0.5 * (a + b), probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Trap;

    fn small_grid() -> Arc<Grid> {
        Arc::new(Grid::cube(2, 8.0, 64).unwrap())
    }

    #[test]
    fn initial_guess_limits() {
        let g = small_grid();
        let a = initial_guess(&g, 0.0).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let i = 32 * 64 + 32;
        assert!((a.values()[i].re - 1.0 / PI.sqrt()).abs() < 1e-12);
        let b = initial_guess(&g, 1.0).unwrap();
        assert!(b.values()[i].norm() < 1e-14);
        let c = initial_guess(&g, 0.37).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn operator_on_constants_and_plane_waves() {
        let g = small_grid();
        let sym = FractionalSymbol::new(1.0, 0.0).unwrap();
        let op = BeOperator::new(g.clone(), &sym, 0.1, 0.0, vec![0.0; g.len()]);
        let one = vec![C64::new(1.0, 0.0); g.len()];
        assert!(op.apply(&one).iter().all(|v| (v - C64::new(10.0, 0.0)).norm() < 1e-12));
        let k = g.wavenumbers(0)[3];
        let wave = g.sample(|x| C64::from_polar(1.0, k * x[0]));
        let out = op.apply(&wave);
        for (o, w) in out.iter().zip(&wave) {
            assert!((o - w * (10.0 + 0.5 * k * k)).norm() < 1e-10);
        }
        // Laplace preconditioner on the zero mode multiplies by dt
        let p = op.precondition(Preconditioner::Laplace, &one).unwrap();
        assert!(p.iter().all(|v| (v - C64::new(0.1, 0.0)).norm() < 1e-12));
        // and inverts the kinetic part exactly
        let back = op.precondition(Preconditioner::Laplace, &out).unwrap();
        for (b, w) in back.iter().zip(&wave) {
            assert!((b - w).norm() < 1e-12);
        }
    }

    #[test]
    fn operator_without_rotation_is_self_adjoint() {
        let g = small_grid();
        let sym = FractionalSymbol::new(0.7, 0.2).unwrap();
        let diag = g.sample(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let op = BeOperator::new(g.clone(), &sym, 1e-2, 0.0, diag);
        let u = g.sample(|x| C64::new((-(x[0] - 0.3).powi(2) - x[1] * x[1]).exp(), x[0] * (-x[1] * x[1] - x[0] * x[0]).exp()));
        let v = g.sample(|x| C64::new(x[1] * (-x[0] * x[0] - x[1] * x[1]).exp(), (-(x[1] + 0.5).powi(2) - x[0] * x[0]).exp()));
        let a = g.dot(&op.apply(&u), &v);
        let b = g.dot(&u, &op.apply(&v));
        assert!((a - b).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn thomas_fermi_preconditioner_detects_singularity() {
        let g = small_grid();
        let sym = FractionalSymbol::new(1.0, 0.0).unwrap();
        let op = BeOperator::new(g.clone(), &sym, 1.0, 0.0, vec![-1.0; g.len()]);
        let r = vec![C64::new(1.0, 0.0); g.len()];
        assert!(matches!(op.precondition(Preconditioner::ThomasFermi, &r), Err(Error::SingularPreconditioner(_))));
    }

    #[test]
    fn linear_harmonic_ground_state() {
        let g = Arc::new(Grid::cube(2, 8.0, 64).unwrap());
        let params = PhysicsParams::harmonic(2, 1.0);
        let run = GroundStateRun { dt: 0.1, ..Default::default() };
        let solver = GroundStateSolver::new(g.clone(), params, run, None).unwrap();
        let start = ComplexField::from_fn(g.clone(), |x| C64::new((-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 3.0).exp(), 0.0));
        let gs = solver.run(start).unwrap();
        assert!(gs.converged());
        assert!((gs.energy.total() - 1.0).abs() < 1e-8, "{}", gs.energy.total());
        assert!(gs.monotonicity_violations.is_empty());
        let want = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt();
        let err = g.sample(want).iter().zip(gs.phi.values()).map(|(w, z)| (w - z).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn inner_solvers_agree() {
        let g = Arc::new(Grid::cube(2, 8.0, 64).unwrap());
        let mut params = PhysicsParams::harmonic(2, 1.0);
        params.beta = 10.0;
        params.omega = 0.3;
        params.trap = Trap::harmonic(&[1.0, 1.2]);
        let phi0 = initial_guess(&g, 0.3).unwrap();
        let mut states = Vec::new();
        for inner in [InnerSolver::FixedPoint, InnerSolver::Krylov, InnerSolver::KrylovLaplace, InnerSolver::KrylovThomasFermi] {
            let run = GroundStateRun { dt: 0.05, eps_stop: 1e-8, inner, ..Default::default() };
            let solver = GroundStateSolver::new(g.clone(), params.clone(), run, None).unwrap();
            let gs = solver.run(phi0.clone()).unwrap();
            assert!(gs.converged(), "{inner:?}");
            states.push(gs.phi);
        }
        for s in &states[1..] {
            let diff = s.values().iter().zip(states[0].values()).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-6, "{diff}");
        }
    }
}
