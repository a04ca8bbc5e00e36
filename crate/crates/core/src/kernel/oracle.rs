//! Direct real-space quadrature of `U * rho`, used to validate the fast solver.
//!
//! The punctured trapezoidal sum `h^d sum_{j != i} U(x_i - x_j) rho_j` differs
//! from the integral by lattice-sum terms `c h^(d - mu) [Z(mu) rho + ...]`
//! (generalized Euler-Maclaurin expansion for an algebraic point singularity).
//! They are subtracted through fourth order, after refining the density 2x by
//! trigonometric interpolation when the grid is small enough.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::{coulomb_prefactor, DensityOperator, KernelSpec};
use crate::error::{Error, Result};
use crate::special::{epstein_zeta, harmonic_quartic_zeta};
use crate::spectral::{Grid, NdFft};

/// Upper bound on refined points for which 2x refinement is applied.
const REFINE_LIMIT: usize = 40_000;

/// Direct quadrature of the potential; requires uniform spacing and at most `64^d` points.
pub fn direct_oracle(grid: &Grid, rho: &[f64], spec: &KernelSpec) -> Result<Vec<f64>> {
    let d = grid.dim();
    spec.validate(d)?;
    let limit = 64usize.pow(d as u32);
    if grid.len() > limit {
        return Err(Error::GridTooLarge { points: grid.len(), limit });
    }
    if rho.len() != grid.len() {
        return Err(Error::InvalidGrid("density length does not match grid".into()));
    }
    let h = grid.spacing()[0];
    if grid.spacing().iter().any(|&hj| (hj - h).abs() > 1e-12 * h) {
        return Err(Error::InvalidGrid("direct quadrature needs equal spacing on every axis".into()));
    }
    let op = DensityOperator::for_kernel(spec);
    let density = if matches!(spec, KernelSpec::Coulomb { .. }) { rho.to_vec() } else { spectral_modify(grid, rho, &op) };
    let factor = if grid.len() << d <= REFINE_LIMIT { 2 } else { 1 };
    let (fine, fine_n) = refine(grid, &density, factor);
    let conv = punctured_sum(&fine, &fine_n, h / factor as f64, factor, grid.points(), spec.base_exponent());
    Ok(conv.into_iter().zip(rho).map(|(c, r)| op.conv * c + op.local * r).collect())
}

fn spectral_modify(grid: &Grid, rho: &[f64], op: &DensityOperator) -> Vec<f64> {
    let d = grid.dim();
    let mut buf: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
    let sym: Vec<f64> = (0..grid.len())
        .map(|i| {
            let k = grid.wavevector(i);
            let mut s = op.identity;
            for a in 0..d {
                for b in 0..d {
                    let (ka, kb) = if a == b {
                        (k[a], k[b])
                    } else {
                        (grid.derivative_wavenumbers(a)[grid.axis_index(i, a)], grid.derivative_wavenumbers(b)[grid.axis_index(i, b)])
                    };
                    s -= op.second[a][b] * ka * kb;
                }
            }
            s
        })
        .collect();
    grid.apply_symbol(&mut buf, &sym);
    buf.into_iter().map(|v| v.re).collect()
}

/// Trigonometric interpolation onto a grid `factor` times finer.
fn refine(grid: &Grid, data: &[f64], factor: usize) -> (Vec<f64>, Vec<usize>) {
    let n = grid.points().to_vec();
    if factor == 1 {
        return (data.to_vec(), n);
    }
    let d = n.len();
    let fine_n: Vec<usize> = n.iter().map(|v| v * factor).collect();
    let coarse_fft = NdFft::new(&n);
    let fine_fft = NdFft::new(&fine_n);
    let mut c: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
    coarse_fft.forward(&mut c);
    let total_fine: usize = fine_n.iter().product();
    let mut f = vec![C64::default(); total_fine];
    let cs = strides(&n);
    let fs = strides(&fine_n);
    for (i, v) in c.iter().enumerate() {
        // Split Nyquist modes evenly between +n/2 and -n/2.
        let mut targets: Vec<(usize, f64)> = vec![(0, 1.0)];
        for j in 0..d {
            let p = (i / cs[j]) % n[j];
            let mut next = Vec::with_capacity(targets.len() * 2);
            for (off, w) in targets {
                if p == n[j] / 2 {
                    next.push((off + p * fs[j], 0.5 * w));
                    next.push((off + (fine_n[j] - p) * fs[j], 0.5 * w));
                } else if p < n[j] / 2 {
                    next.push((off + p * fs[j], w));
                } else {
                    next.push((off + (fine_n[j] - (n[j] - p)) * fs[j], w));
                }
            }
            targets = next;
        }
        for (idx, w) in targets {
            f[idx] += v * w;
        }
    }
    fine_fft.inverse(&mut f);
    let scale = 1.0 / grid.len() as f64;
    (f.into_iter().map(|v| v.re * scale).collect(), fine_n)
}

fn strides(n: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; n.len()];
    for j in (0..n.len() - 1).rev() {
        s[j] = s[j + 1] * n[j + 1];
    }
    s
}

/// Corrected punctured sum of `U_mu * rho` evaluated at every `factor`-th fine point.
fn punctured_sum(rho: &[f64], n: &[usize], h: f64, factor: usize, coarse_n: &[usize], mu: f64) -> Vec<f64> {
    let d = n.len();
    let df = d as f64;
    let c = coulomb_prefactor(d);
    let s = strides(n);
    // kernel table over index offsets in [-(n-1), n-1]
    let span: Vec<usize> = n.iter().map(|v| 2 * v - 1).collect();
    let ks = strides(&span);
    let table_len: usize = span.iter().product();
    let table: Vec<f64> = (0..table_len)
        .into_par_iter()
        .map(|t| {
            let mut r2 = 0.0;
            for j in 0..d {
                let o = ((t / ks[j]) % span[j]) as f64 - (n[j] - 1) as f64;
                r2 += o * o;
            }
            if r2 == 0.0 {
                0.0
            } else {
                (r2 * h * h).powf(-mu / 2.0)
            }
        })
        .collect();

    let lap = fd_laplacian(rho, n, h);
    let (d4_axis, d4_mixed) = fd_fourth(rho, n, h);
    let z0 = epstein_zeta(d, mu);
    let z2 = epstein_zeta(d, mu - 2.0);
    let z4 = epstein_zeta(d, mu - 4.0);
    let hq = harmonic_quartic_zeta(d, mu);
    let (a4, b4) = if d == 2 {
        let b = (z4 - hq) / 8.0;
        (z4 / 2.0 - b, b)
    } else {
        let a = (z4 + hq) / 5.0;
        (a, (z4 - 3.0 * a) / 6.0)
    };
    let hd = h.powi(d as i32);
    let coarse_total: usize = coarse_n.iter().product();
    let cstr = strides(coarse_n);

    (0..coarse_total)
        .into_par_iter()
        .map(|ci| {
            let mut target = [0usize; 3];
            for j in 0..d {
                target[j] = ((ci / cstr[j]) % coarse_n[j]) * factor;
            }
            let ti: usize = (0..d).map(|j| target[j] * s[j]).sum();
            let mut acc = 0.0;
            if d == 2 {
                for a in 0..n[0] {
                    let row_t = (a + n[0] - 1 - target[0]) * ks[0];
                    let row_r = a * s[0];
                    let base = n[1] - 1 - target[1];
                    let kr = &table[row_t + base..row_t + base + n[1]];
                    let rr = &rho[row_r..row_r + n[1]];
                    acc += kr.iter().zip(rr).map(|(k, r)| k * r).sum::<f64>();
                }
            } else {
                for a in 0..n[0] {
                    for b in 0..n[1] {
                        let row_t = (a + n[0] - 1 - target[0]) * ks[0] + (b + n[1] - 1 - target[1]) * ks[1];
                        let row_r = a * s[0] + b * s[1];
                        let base = n[2] - 1 - target[2];
                        let kr = &table[row_t + base..row_t + base + n[2]];
                        let rr = &rho[row_r..row_r + n[2]];
                        acc += kr.iter().zip(rr).map(|(k, r)| k * r).sum::<f64>();
                    }
                }
            }
            let corr = h.powf(df - mu)
                * (z0 * rho[ti] + h * h * z2 / (2.0 * df) * lap[ti] + h.powi(4) / 24.0 * (a4 * d4_axis[ti] + 6.0 * b4 * d4_mixed[ti]));
            c * (hd * acc - corr)
        })
        .collect()
}

fn at(rho: &[f64], n: &[usize], s: &[usize], idx: usize, axis: usize, shift: isize) -> f64 {
    let p = (idx / s[axis]) % n[axis];
    let q = p as isize + shift;
    if q < 0 || q >= n[axis] as isize {
        0.0
    } else {
        rho[(idx as isize + shift * s[axis] as isize) as usize]
    }
}

/// Fourth-order central-difference Laplacian with zero extension.
fn fd_laplacian(rho: &[f64], n: &[usize], h: f64) -> Vec<f64> {
    let s = strides(n);
    (0..rho.len())
        .into_par_iter()
        .map(|i| {
            let mut sum = 0.0;
            for axis in 0..n.len() {
                let f = |k| at(rho, n, &s, i, axis, k);
                sum += (-f(-2) + 16.0 * f(-1) - 30.0 * f(0) + 16.0 * f(1) - f(2)) / (12.0 * h * h);
            }
            sum
        })
        .collect()
}

/// Second-order differences `sum_a d_a^4 rho` and `sum_{a<b} d_a^2 d_b^2 rho`.
fn fd_fourth(rho: &[f64], n: &[usize], h: f64) -> (Vec<f64>, Vec<f64>) {
    let d = n.len();
    let s = strides(n);
    let h2 = h * h;
    let second: Vec<Vec<f64>> = (0..d)
        .map(|axis| {
            (0..rho.len()).into_par_iter().map(|i| (at(rho, n, &s, i, axis, -1) - 2.0 * rho[i] + at(rho, n, &s, i, axis, 1)) / h2).collect()
        })
        .collect();
    let axis4: Vec<f64> = (0..rho.len())
        .into_par_iter()
        .map(|i| {
            (0..d)
                .map(|axis| {
                    let f = |k| at(rho, n, &s, i, axis, k);
                    (f(-2) - 4.0 * f(-1) + 6.0 * f(0) - 4.0 * f(1) + f(2)) / (h2 * h2)
                })
                .sum()
        })
        .collect();
    let mixed: Vec<f64> = (0..rho.len())
        .into_par_iter()
        .map(|i| {
            let mut sum = 0.0;
            for a in 0..d {
                for b in (a + 1)..d {
                    let g = &second[a];
                    sum += (at(g, n, &s, i, b, -1) - 2.0 * g[i] + at(g, n, &s, i, b, 1)) / h2;
                }
            }
            sum
        })
        .collect();
    (axis4, mixed)
}
