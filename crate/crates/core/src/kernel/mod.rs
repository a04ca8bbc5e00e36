//! Interaction kernels and the sum-of-Gaussians (GauSum) convolution.

mod cache_io;
mod gausum;
pub mod oracle;
mod solver;
mod tensor;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

pub use gausum::{build_gausum, GauSumApprox, MAX_TERMS};
pub use solver::{BoxScaling, DensityOperator, NearField, NonlocalSolver};
pub use tensor::{axis_integrals, TensorCache, PADDED_HALF_WIDTH};

/// Interaction kernel variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `U(x) = 1 / (2^(d-1) pi |x|^mu)` with `0 < mu <= d - 1`.
    Coulomb { mu: f64 },
    /// `U_hat(k) = -1 + 3 (n.k)^2 / |k|^2` in three dimensions.
    Ddi3d { n: [f64; 3] },
    /// Quasi-2D dipolar kernel `U_hat(k) = 3 [(n_perp.k)^2 - n_3^2 |k|^2] / (2 |k|)`.
    Ddi2d { n: [f64; 3] },
}

impl KernelSpec {
    /// Checks the variant invariants for spatial dimension `d`.
    ///
    /// The closed range `mu = d - 1` is accepted for Coulomb kernels.
    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            KernelSpec::Coulomb { mu } => {
                if !(mu > 0.0 && mu <= d as f64 - 1.0) {
                    return Err(Error::UnsupportedKernel(format!("Coulomb needs 0 < mu <= {} in {d}D, got {mu}", d - 1)));
                }
            }
            KernelSpec::Ddi3d { n } => {
                if d != 3 {
                    return Err(Error::UnsupportedKernel("3D dipolar kernel needs a 3D grid".into()));
                }
                check_unit(n)?;
            }
            KernelSpec::Ddi2d { n } => {
                if d != 2 {
                    return Err(Error::UnsupportedKernel("2D dipolar kernel needs a 2D grid".into()));
                }
                check_unit(n)?;
            }
        }
        Ok(())
    }

    /// Exponent of the Coulomb-type kernel that the variant reduces to.
    pub fn base_exponent(&self) -> f64 {
        match *self {
            KernelSpec::Coulomb { mu } => mu,
            _ => 1.0,
        }
    }

    pub fn dipole(&self) -> Option<[f64; 3]> {
        match *self {
            KernelSpec::Coulomb { .. } => None,
            KernelSpec::Ddi3d { n } | KernelSpec::Ddi2d { n } => Some(n),
        }
    }

    /// Same variant with the dipole axis replaced.
    pub fn with_dipole(&self, n: [f64; 3]) -> KernelSpec {
        match *self {
            KernelSpec::Coulomb { mu } => KernelSpec::Coulomb { mu },
            KernelSpec::Ddi3d { .. } => KernelSpec::Ddi3d { n },
            KernelSpec::Ddi2d { .. } => KernelSpec::Ddi2d { n },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Coulomb { .. } => "coulomb",
            KernelSpec::Ddi3d { .. } => "ddi3d",
            KernelSpec::Ddi2d { .. } => "ddi2d",
        }
    }
}

fn check_unit(n: [f64; 3]) -> Result<()> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::UnsupportedKernel(format!("dipole axis must be a unit vector, |n| = {norm}")));
    }
    Ok(())
}

/// Real-space prefactor `1 / (2^(d-1) pi)` of the Coulomb kernel.
pub fn coulomb_prefactor(d: usize) -> f64 {
    1.0 / (2f64.powi(d as i32 - 1) * PI)
}

/// Constant `C` in `U_hat(k) = C / |k|^(d - mu)`.
pub fn coulomb_symbol_constant(d: usize, mu: f64) -> f64 {
    let df = d as f64;
    PI.powf(df / 2.0 - 1.0) * 2f64.powf(1.0 - mu) * gamma((df - mu) / 2.0) / gamma(mu / 2.0)
}

/// Fourier symbol of the kernel at a nonzero wavevector.
pub fn kernel_fourier_symbol(spec: &KernelSpec, k: &[f64]) -> Result<f64> {
    let k2: f64 = k.iter().map(|v| v * v).sum();
    if k2 == 0.0 {
        return Err(Error::SingularAtZero);
    }
    let kn = k2.sqrt();
    Ok(match *spec {
        KernelSpec::Coulomb { mu } => coulomb_symbol_constant(k.len(), mu) / kn.powf(k.len() as f64 - mu),
        KernelSpec::Ddi3d { n } => {
            let nk: f64 = n.iter().zip(k).map(|(a, b)| a * b).sum();
            -1.0 + 3.0 * nk * nk / k2
        }
        KernelSpec::Ddi2d { n } => {
            let nk = n[0] * k[0] + n[1] * k[1];
            3.0 * (nk * nk - n[2] * n[2] * k2) / (2.0 * kn)
        }
    })
}
