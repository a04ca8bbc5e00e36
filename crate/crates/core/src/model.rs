//! Model constants and trapping potentials.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::spectral::Grid;

/// External trapping potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trap {
    /// `V = sum_v gamma_v^2 x_v^2 / 2`.
    Harmonic { gamma: Vec<f64> },
    /// Harmonic trap plus `depth * sum_v sin^2(wavenumber x_v)`.
    HarmonicLattice { gamma: Vec<f64>, depth: f64, wavenumber: f64 },
    /// Potential sampled on the simulation grid.
    Sampled {
        #[serde(skip)]
        values: Arc<Vec<f64>>,
    },
}

impl Trap {
    pub fn harmonic(gamma: &[f64]) -> Self {
        Trap::Harmonic { gamma: gamma.to_vec() }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        match self {
            Trap::Harmonic { gamma } | Trap::HarmonicLattice { gamma, .. } => {
                if gamma.len() != d {
                    return Err(Error::param("gamma", format!("need {d} trap frequencies, got {}", gamma.len())));
                }
                if gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                    return Err(Error::param("gamma", "trap frequencies must be positive"));
                }
                if let Trap::HarmonicLattice { depth, wavenumber, .. } = self {
                    if !depth.is_finite() || !wavenumber.is_finite() {
                        return Err(Error::param("lattice", "depth and wavenumber must be finite"));
                    }
                }
            }
            Trap::Sampled { values } => {
                if values.len() != grid.len() {
                    return Err(Error::param("trap", format!("sampled potential has {} values, grid has {}", values.len(), grid.len())));
                }
            }
        }
        Ok(())
    }

    /// Largest trap frequency in the rotation plane, when defined.
    pub fn planar_frequency(&self) -> Option<f64> {
        match self {
            Trap::Harmonic { gamma } | Trap::HarmonicLattice { gamma, .. } => Some(gamma[0].max(gamma[1])),
            Trap::Sampled { .. } => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Trap::Sampled { .. })
    }

    /// Value at a point, for analytic traps.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            Trap::Harmonic { gamma } => Some(harmonic(gamma, x)),
            Trap::HarmonicLattice { gamma, depth, wavenumber } => {
                Some(harmonic(gamma, x) + depth * x.iter().map(|v| (wavenumber * v).sin().powi(2)).sum::<f64>())
            }
            Trap::Sampled { .. } => None,
        }
    }

    /// Gradient at a point, for analytic traps.
    pub fn gradient(&self, x: &[f64]) -> Option<[f64; 3]> {
        let mut g = [0.0; 3];
        match self {
            Trap::Harmonic { gamma } => {
                for (j, v) in x.iter().enumerate() {
                    g[j] = gamma[j] * gamma[j] * v;
                }
            }
            Trap::HarmonicLattice { gamma, depth, wavenumber } => {
                for (j, v) in x.iter().enumerate() {
                    g[j] = gamma[j] * gamma[j] * v + depth * wavenumber * (2.0 * wavenumber * v).sin();
                }
            }
            Trap::Sampled { .. } => return None,
        }
        Some(g)
    }

    /// Samples `V` on the grid.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate(grid)?;
        match self {
            Trap::Sampled { values } => Ok(values.as_ref().clone()),
            _ => Ok(grid.sample(|x| self.eval(x).unwrap())),
        }
    }

    /// Samples `W(x~) = V(A x~)` for a `d x d` rotation `a` (row-major in a 3x3 block).
    pub fn sample_rotated(&self, grid: &Grid, a: &[[f64; 3]; 3]) -> Result<Vec<f64>> {
        if is_identity(a) {
            return self.sample(grid);
        }
        if !self.is_analytic() {
            return Err(Error::param("trap", "a sampled potential cannot be evaluated in a rotating frame"));
        }
        self.validate(grid)?;
        let d = grid.dim();
        Ok(grid.sample(|x| {
            let y = rotate(a, x, d);
            self.eval(&y[..d]).unwrap()
        }))
    }
}

fn harmonic(gamma: &[f64], x: &[f64]) -> f64 {
    0.5 * gamma.iter().zip(x).map(|(g, v)| g * g * v * v).sum::<f64>()
}

pub(crate) fn is_identity(a: &[[f64; 3]; 3]) -> bool {
    (0..3).all(|i| (0..3).all(|j| a[i][j] == if i == j { 1.0 } else { 0.0 }))
}

/// `A x` for the leading `d x d` block.
pub fn rotate(a: &[[f64; 3]; 3], x: &[f64], d: usize) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..d {
        for j in 0..d {
            y[i] += a[i][j] * x[j];
        }
    }
    y
}

/// Every model constant of the fractional NLS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Fractional order.
    pub s: f64,
    /// Scaled particle mass.
    pub m: f64,
    /// Local (contact) interaction strength.
    pub beta: f64,
    /// Nonlocal interaction strength.
    pub lambda: f64,
    /// Rotation frequency.
    pub omega: f64,
    pub trap: Trap,
    pub kernel: KernelSpec,
}

impl PhysicsParams {
    /// Linear isotropic harmonic problem in `d` dimensions.
    pub fn harmonic(d: usize, s: f64) -> Self {
        PhysicsParams {
            s,
            m: 0.0,
            beta: 0.0,
            lambda: 0.0,
            omega: 0.0,
            trap: Trap::harmonic(&vec![1.0; d]),
            kernel: KernelSpec::Coulomb { mu: 1.0 },
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::param("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::param("m", format!("must be non-negative, got {}", self.m)));
        }
        for (name, v) in [("beta", self.beta), ("lambda", self.lambda), ("omega", self.omega)] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        self.trap.validate(grid)?;
        if self.lambda != 0.0 {
            self.kernel.validate(grid.dim())?;
        }
        Ok(())
    }

    pub fn has_nonlocal(&self) -> bool {
        self.lambda != 0.0
    }

    /// Whether ground states provably fail to exist (fractional subdispersion with rotation).
    pub fn in_nonexistence_regime(&self) -> bool {
        if !(self.s > 0.0 && self.s < 1.0 && self.omega > 0.0) {
            return false;
        }
        match (&self.trap, &self.kernel) {
            (Trap::Sampled { .. }, _) => false,
            (_, KernelSpec::Ddi2d { .. }) if self.lambda != 0.0 => {
                let gamma = self.trap.planar_frequency().unwrap_or(1.0);
                let c = ((2.0 * std::f64::consts::PI.powi(2) + 1.0).powi(4) * gamma.powi(6)
                    / (48.0 * std::f64::consts::E * std::f64::consts::PI.powi(9)))
                .powf(0.2);
                self.omega > c * self.lambda.abs().powf(0.4)
            }
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_values_and_gradient() {
        let t = Trap::harmonic(&[1.0, 2.0]);
        assert_eq!(t.eval(&[1.0, 1.0]), Some(0.5 + 2.0));
        assert_eq!(t.gradient(&[1.0, 1.0]).unwrap()[..2], [1.0, 4.0]);
    }

    #[test]
    fn rotated_sampling_of_isotropic_trap_is_invariant() {
        let g = Grid::cube(2, 4.0, 16).unwrap();
        let t = Trap::harmonic(&[1.0, 1.0]);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
        let v0 = t.sample(&g).unwrap();
        let v1 = t.sample_rotated(&g, &a).unwrap();
        for (x, y) in v0.iter().zip(&v1) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nonexistence_regime_classification() {
        let mut p = PhysicsParams::harmonic(2, 0.5);
        p.omega = 0.8;
        p.lambda = 1.0;
        assert!(p.in_nonexistence_regime());
        p.s = 1.0;
        assert!(!p.in_nonexistence_regime());
        p.s = 0.5;
        p.kernel = KernelSpec::Ddi2d { n: [1.0, 0.0, 0.0] };
        p.omega = 0.3;
        assert!(!p.in_nonexistence_regime());
        p.omega = 0.6;
        assert!(p.in_nonexistence_regime());
    }
}
