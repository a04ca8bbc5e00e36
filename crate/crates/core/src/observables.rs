//! Conserved quantities and dynamical-law diagnostics.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, NonlocalSolver};
use crate::model::{rotate, PhysicsParams, Trap};
use crate::spectral::{angular_momentum, ComplexField, FractionalSymbol, Grid};

/// Imaginary parts of real-valued functionals above this are flagged.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// Energy split into its five contributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
    pub rotation: f64,
    pub interaction: f64,
    pub nonlocal: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential + self.rotation + self.interaction + self.nonlocal
    }
}

/// Orientation of the computational frame relative to the lab frame: `x = A x~`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub a: [[f64; 3]; 3],
    /// Dipole axis expressed in the computational frame.
    pub axis: Option<[f64; 3]>,
}

impl Frame {
    pub fn lab(kernel: &KernelSpec) -> Self {
        Frame { a: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], axis: kernel.dipole() }
    }

    /// `A v` for a frame vector.
    pub fn to_lab(&self, v: [f64; 3], d: usize) -> [f64; 3] {
        rotate(&self.a, &v[..d], d)
    }
}

/// `N = int |psi|^2`.
pub fn mass(psi: &ComplexField) -> f64 {
    psi.norm_sq()
}

/// Energy parts for `psi` given the sampled trap `v` and nonlocal potential `phi` of `|psi|^2`.
pub fn energy(psi: &ComplexField, params: &PhysicsParams, v: &[f64], phi: Option<&[f64]>) -> Result<EnergyParts> {
    let grid = psi.grid();
    let sym = FractionalSymbol::new(params.s, params.m)?;
    let kinetic = 0.5 * psi.apply_fractional(&sym).dot(psi).re;
    let data = psi.values();
    let h = grid.cell_volume();
    let (pot, quart, non) = data
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let r = z.norm_sqr();
            (v[i] * r, r * r, phi.map_or(0.0, |p| p[i] * r))
        })
        .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if params.lambda != 0.0 && phi.is_none() {
        return Err(Error::param("lambda", "nonlocal energy requested without a potential"));
    }
    let rotation = if params.omega != 0.0 { -params.omega * angular_momentum_expectation(psi) } else { 0.0 };
    Ok(EnergyParts {
        kinetic,
        potential: h * pot,
        rotation,
        interaction: 0.5 * params.beta * h * quart,
        nonlocal: 0.5 * params.lambda * h * non,
    })
}

/// `<L_z> = Re int conj(psi) L_z psi`.
pub fn angular_momentum_expectation(psi: &ComplexField) -> f64 {
    let lz = angular_momentum(psi.grid(), psi.values());
    psi.grid().dot(&lz, psi.values()).re
}

/// Imaginary part of `int conj(psi) L_z psi`, zero for exact arithmetic.
pub fn angular_momentum_residue(psi: &ComplexField) -> f64 {
    let lz = angular_momentum(psi.grid(), psi.values());
    psi.grid().dot(&lz, psi.values()).im
}

/// `int |psi|^2 (y d_x - x d_y) W` from the planar gradient components of `W`.
pub fn ame_production(psi: &ComplexField, w_x: &[f64], w_y: &[f64]) -> f64 {
    let grid = psi.grid();
    let (xs, ys) = (grid.coordinate_array(0), grid.coordinate_array(1));
    let s: f64 = psi.values().par_iter().enumerate().map(|(i, z)| z.norm_sqr() * (ys[i] * w_x[i] - xs[i] * w_y[i])).sum();
    s * grid.cell_volume()
}

/// Spectral gradient of a real array along the first two axes.
pub fn planar_gradient(grid: &Grid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = |axis| {
        let mut buf: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        grid.differentiate(&mut buf, axis);
        buf.into_iter().map(|v| v.re).collect::<Vec<f64>>()
    };
    (d(0), d(1))
}

/// Planar gradient of `V(A x~)` with respect to `x~`, analytic for closed-form traps.
pub fn trap_gradient(trap: &Trap, grid: &Grid, a: &[[f64; 3]; 3]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !trap.is_analytic() {
        return Ok(planar_gradient(grid, &trap.sample_rotated(grid, a)?));
    }
    let d = grid.dim();
    let g: Vec<[f64; 2]> = grid.sample(|x| {
        let y = rotate(a, x, d);
        let gv = trap.gradient(&y[..d]).unwrap();
        // A^T grad V
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|i| a[i][j] * gv[i]).sum();
        }
        out
    });
    Ok((g.iter().map(|v| v[0]).collect(), g.iter().map(|v| v[1]).collect()))
}

/// `x_c = int x |psi|^2` in the field's own frame.
pub fn center_of_mass(psi: &ComplexField) -> [f64; 3] {
    let m = second_moments(psi);
    m.0
}

/// Condensate widths `delta_v = int v^2 |psi|^2`.
pub fn condensate_widths(psi: &ComplexField) -> [f64; 3] {
    let m = second_moments(psi).1;
    [m[0][0], m[1][1], m[2][2]]
}

/// First moments and the full second-moment tensor of `|psi|^2`.
pub fn second_moments(psi: &ComplexField) -> ([f64; 3], [[f64; 3]; 3]) {
    let grid = psi.grid();
    let d = grid.dim();
    let h = grid.cell_volume();
    let (first, second) = psi
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let r = z.norm_sqr();
            let x = grid.point(i);
            let mut f = [0.0; 3];
            let mut s = [[0.0; 3]; 3];
            for a in 0..d {
                f[a] = x[a] * r;
                for b in 0..d {
                    s[a][b] = x[a] * x[b] * r;
                }
            }
            (f, s)
        })
        .reduce(
            || ([0.0; 3], [[0.0; 3]; 3]),
            |mut acc, v| {
                for a in 0..3 {
                    acc.0[a] += v.0[a];
                    for b in 0..3 {
                        acc.1[a][b] += v.1[a][b];
                    }
                }
                acc
            },
        );
    let mut f = first;
    let mut s = second;
    for a in 0..3 {
        f[a] *= h;
        for b in 0..3 {
            s[a][b] *= h;
        }
    }
    (f, s)
}

/// `g = s (2 pi)^-d <(|k|^2 + m^2)^(s-1) k psi^, psi^>`; the `k = 0` mode contributes nothing.
pub fn generalized_momentum(psi: &ComplexField, s: f64, m: f64) -> [f64; 3] {
    let grid = psi.grid();
    let d = grid.dim();
    let spec = psi.forward_transform();
    let inv_vol = 1.0 / grid.volume();
    let k2 = grid.k_squared();
    let g = spec
        .coefficients()
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut out = [0.0; 3];
            let base = k2[i] + m * m;
            if base == 0.0 {
                return out;
            }
            let w = base.powf(s - 1.0) * c.norm_sqr();
            for (j, o) in out.iter_mut().enumerate().take(d) {
                *o = w * grid.derivative_wavenumbers(j)[grid.axis_index(i, j)];
            }
            out
        })
        .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    [s * g[0] * inv_vol, s * g[1] * inv_vol, s * g[2] * inv_vol]
}

/// One row of the diagnostics stream, lab-frame vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: EnergyParts,
    pub total_energy: f64,
    pub lz: f64,
    pub center: [f64; 3],
    pub widths: [f64; 3],
    pub momentum: [f64; 3],
    pub ame_production: f64,
    /// Largest imaginary residue among the real functionals.
    pub imag_residue: f64,
}

/// Evaluates [`DiagnosticsRecord`]s for a fixed grid and model.
pub struct Observer {
    grid: Arc<Grid>,
    params: PhysicsParams,
    nonlocal: Option<Arc<NonlocalSolver>>,
}

impl Observer {
    pub fn new(grid: Arc<Grid>, params: PhysicsParams, nonlocal: Option<Arc<NonlocalSolver>>) -> Result<Self> {
        params.validate(&grid)?;
        if params.has_nonlocal() && nonlocal.is_none() {
            return Err(Error::param("lambda", "nonzero lambda needs a nonlocal solver"));
        }
        Ok(Observer { grid, params, nonlocal })
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    /// Nonlocal potential of `|psi|^2` with the frame's dipole axis.
    pub fn nonlocal_potential(&self, psi: &ComplexField, frame: &Frame) -> Result<Option<Vec<f64>>> {
        if !self.params.has_nonlocal() {
            return Ok(None);
        }
        let solver = self.nonlocal.as_ref().expect("checked in new");
        let rho = psi.density();
        Ok(Some(match frame.axis {
            Some(n) => solver.potential_with_axis(&rho, n)?,
            None => solver.potential(&rho)?,
        }))
    }

    pub fn record(&self, t: f64, psi: &ComplexField, frame: &Frame) -> Result<DiagnosticsRecord> {
        let d = self.grid.dim();
        let p = &self.params;
        let v = p.trap.sample_rotated(&self.grid, &frame.a)?;
        let phi = self.nonlocal_potential(psi, frame)?;
        let energy = energy(psi, p, &v, phi.as_deref())?;
        let lz = angular_momentum_expectation(psi);
        let residue = angular_momentum_residue(psi).abs();
        if residue > IMAG_TOLERANCE * (1.0 + lz.abs()) {
            log::warn!("angular momentum has imaginary residue {residue:.3e} at t = {t}");
        }

        let (mut wx, mut wy) = trap_gradient(&p.trap, &self.grid, &frame.a)?;
        if let Some(phi) = &phi {
            let (px, py) = planar_gradient(&self.grid, phi);
            for i in 0..wx.len() {
                wx[i] += p.lambda * px[i];
                wy[i] += p.lambda * py[i];
            }
        }
        let production = ame_production(psi, &wx, &wy);

        let (first, second) = second_moments(psi);
        let center = frame.to_lab(first, d);
        // diag(A S A^T)
        let mut widths = [0.0; 3];
        for (v, w) in widths.iter_mut().enumerate().take(d) {
            for a in 0..d {
                for b in 0..d {
                    *w += frame.a[v][a] * second[a][b] * frame.a[v][b];
                }
            }
        }
        let momentum = frame.to_lab(generalized_momentum(psi, p.s, p.m), d);
        Ok(DiagnosticsRecord {
            t,
            mass: mass(psi),
            total_energy: energy.total(),
            energy,
            lz,
            center,
            widths,
            momentum,
            ame_production: production,
            imag_residue: residue,
        })
    }
}

/// `J` of the rotating-frame center-of-mass law.
pub const ROTATION_GENERATOR: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];

/// Residuals of the center-of-mass laws at one interior sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawResidual {
    pub t: f64,
    /// `|x_c' - Omega J x_c - g|`.
    pub first_order: f64,
    /// Scale of the first-order law: `|x_c'| + |Omega J x_c| + |g|`.
    pub first_scale: f64,
    /// Harmonic second-order law residual, when it applies (`s = 1`, harmonic trap).
    pub second_order: Option<f64>,
}

/// Evaluates the center-of-mass laws by centered differences on a uniform trajectory.
pub fn com_law_residuals(records: &[DiagnosticsRecord], params: &PhysicsParams, d: usize) -> Result<Vec<LawResidual>> {
    if records.len() < 3 {
        return Err(Error::TrajectoryTooShort(records.len()));
    }
    let dt = records[1].t - records[0].t;
    if dt <= 0.0 || records.windows(2).any(|w| ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::param("trajectory", "samples must be uniformly spaced in time"));
    }
    let j = ROTATION_GENERATOR;
    let om = params.omega;
    let lambda = match (&params.trap, params.s == 1.0) {
        (Trap::Harmonic { gamma }, true) => {
            let mut l = [0.0; 3];
            for (v, g) in gamma.iter().enumerate() {
                l[v] = g * g;
            }
            Some(l)
        }
        _ => None,
    };
    let jx = |x: &[f64; 3]| -> [f64; 3] {
        let mut o = [0.0; 3];
        for a in 0..3 {
            o[a] = (0..3).map(|b| j[a][b] * x[b]).sum();
        }
        o
    };
    let norm = |v: &[f64; 3]| v.iter().take(d).map(|x| x * x).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(records.len() - 2);
    for w in records.windows(3) {
        let (xm, x0, xp) = (&w[0].center, &w[1].center, &w[2].center);
        let mut vel = [0.0; 3];
        let mut acc = [0.0; 3];
        for a in 0..d {
            vel[a] = (xp[a] - xm[a]) / (2.0 * dt);
            acc[a] = (xp[a] - 2.0 * x0[a] + xm[a]) / (dt * dt);
        }
        let jx0 = jx(x0);
        let mut r1 = [0.0; 3];
        for a in 0..d {
            r1[a] = vel[a] - om * jx0[a] - w[1].momentum[a];
        }
        let scale = norm(&vel) + om.abs() * norm(&jx0) + norm(&w[1].momentum);
        let second = lambda.map(|l| {
            let jv = jx(&vel);
            let jjx = jx(&jx0);
            let mut r = [0.0; 3];
            for a in 0..d {
                r[a] = acc[a] - 2.0 * om * jv[a] + om * om * jjx[a] + l[a] * x0[a];
            }
            norm(&r)
        });
        out.push(LawResidual { t: w[1].t, first_order: norm(&r1), first_scale: scale, second_order: second });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use std::f64::consts::PI;

    fn gaussian(grid: &Arc<Grid>, x0: [f64; 2]) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |x| {
            let r2 = (x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2);
            C64::new((-r2 / 2.0).exp() / PI.sqrt(), 0.0)
        })
    }

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::cube(2, 10.0, 128).unwrap())
    }

    #[test]
    fn harmonic_gaussian_energy_is_one() {
        let g = grid();
        let psi = gaussian(&g, [0.0, 0.0]);
        let p = PhysicsParams::harmonic(2, 1.0);
        let v = p.trap.sample(&g).unwrap();
        let e = energy(&psi, &p, &v, None).unwrap();
        assert!((mass(&psi) - 1.0).abs() < 1e-12);
        assert!((e.kinetic - 0.5).abs() < 1e-12);
        assert!((e.potential - 0.5).abs() < 1e-12);
        assert!((e.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_kinetic_energy_of_gaussian() {
        // <(-Delta)^s phi, phi> / 2 = Gamma(s + 1) / 2 for the unit 2D Gaussian.
        // The |k|^(2s) cusp at k = 0 leaves an O(dk^(2 + 2s)) quadrature error, hence the wide box.
        let g = Arc::new(Grid::cube(2, 512.0, 2048).unwrap());
        let psi = gaussian(&g, [0.0, 0.0]);
        for s in [0.5, 1.5, 2.0] {
            let mut p = PhysicsParams::harmonic(2, s);
            p.omega = 0.3;
            let v = p.trap.sample(&g).unwrap();
            let e = energy(&psi, &p, &v, None).unwrap();
            assert!((e.kinetic - gamma(s + 1.0) / 2.0).abs() < 1e-8, "s={s}: {}", e.kinetic);
            assert!(e.rotation.abs() < 1e-10);
        }
    }

    #[test]
    fn vortex_angular_momentum_is_one() {
        let g = grid();
        let psi = ComplexField::from_fn(g.clone(), |x| C64::new(x[0], x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt());
        assert!((angular_momentum_expectation(&psi) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn moments_of_shifted_gaussian() {
        let g = grid();
        let c = center_of_mass(&gaussian(&g, [0.0, 0.0]));
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        let w = condensate_widths(&gaussian(&g, [0.0, 0.0]));
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        let c = center_of_mass(&gaussian(&g, [1.0, 1.0]));
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn momentum_of_boosted_gaussian() {
        let g = grid();
        let k0 = [0.7, -0.4];
        let mut psi = gaussian(&g, [0.0, 0.0]);
        assert!(generalized_momentum(&psi, 0.75, 0.0).iter().all(|v| v.abs() < 1e-12));
        let xs = (g.coordinate_array(0), g.coordinate_array(1));
        for (i, z) in psi.values_mut().iter_mut().enumerate() {
            *z *= C64::from_polar(1.0, k0[0] * xs.0[i] + k0[1] * xs.1[i]);
        }
        let p = generalized_momentum(&psi, 1.0, 0.0);
        assert!((p[0] - k0[0]).abs() < 1e-8 && (p[1] - k0[1]).abs() < 1e-8, "{p:?}");
        // i <psi, grad psi> in real space
        let grads = psi.spectral_gradient();
        for (j, gr) in grads.iter().enumerate() {
            let v = C64::new(0.0, 1.0) * psi.dot(gr);
            assert!((v.re - p[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_production_vanishes() {
        let g = grid();
        let psi = gaussian(&g, [0.5, -0.3]);
        let trap = Trap::harmonic(&[1.0, 1.0]);
        let (wx, wy) = trap_gradient(&trap, &g, &Frame::lab(&KernelSpec::Coulomb { mu: 1.0 }).a).unwrap();
        let centred = gaussian(&g, [0.0, 0.0]);
        assert!(ame_production(&centred, &wx, &wy).abs() < 1e-10);
        // off-centre density in an isotropic trap still has zero torque
        assert!(ame_production(&psi, &wx, &wy).abs() < 1e-10);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let p = PhysicsParams::harmonic(2, 1.0);
        assert!(matches!(com_law_residuals(&[], &p, 2), Err(Error::TrajectoryTooShort(0))));
    }
}
