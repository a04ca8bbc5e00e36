use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::gausum::build_gausum;
use super::tensor::PADDED_HALF_WIDTH;
use super::{cache_io, coulomb_prefactor, GauSumApprox, KernelSpec, TensorCache};
use crate::error::{Error, Result};
use crate::special::{gauss_legendre, integrate_panels};
use crate::spectral::{Grid, NdFft};

/// Maps the physical box onto the unit box `B_1 = [-1, 1]^d` by `x = c + L x~`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxScaling {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl BoxScaling {
    pub fn for_grid(grid: &Grid) -> Self {
        let d = grid.dim();
        let center: Vec<f64> = (0..d).map(|j| 0.5 * (grid.lo()[j] + grid.hi()[j])).collect();
        let half_width = (0..d).map(|j| 0.5 * (grid.hi()[j] - grid.lo()[j])).fold(0.0, f64::max);
        BoxScaling { center, half_width }
    }

    /// Homogeneity factor `L^(d - mu)` of the convolution with `|x|^-mu`.
    pub fn potential_factor(&self, d: usize, mu: f64) -> f64 {
        self.half_width.powf(d as f64 - mu)
    }
}

/// Radial moments of `r^-mu - fit(r)` over the ball of radius `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearField {
    /// `int_{B_delta} (r^-mu - fit) dy`
    pub m0: f64,
    /// `int_{B_delta} |y|^2 (r^-mu - fit) dy`
    pub m2: f64,
}

impl NearField {
    pub fn compute(approx: &GauSumApprox, d: usize) -> Self {
        let delta = approx.delta();
        let mu = approx.mu();
        let df = d as f64;
        let sphere = if d == 2 { 2.0 * PI } else { 4.0 * PI };
        let rule = gauss_legendre(20);
        let fit_moment = |extra: f64| -> f64 {
            approx
                .weights()
                .iter()
                .zip(approx.nodes())
                .map(|(w, t)| {
                    let panels = ((t * delta).ceil() as usize).clamp(1, 64) * 2;
                    w * integrate_panels(|r| (-t * t * r * r).exp() * r.powf(df - 1.0 + extra), 0.0, delta, panels, &rule)
                })
                .sum()
        };
        let m0 = sphere * (delta.powf(df - mu) / (df - mu) - fit_moment(0.0));
        let m2 = sphere * (delta.powf(df + 2.0 - mu) / (df + 2.0 - mu) - fit_moment(2.0));
        NearField { m0, m2 }
    }
}

/// Second-order operator defining `Phi = local rho + conv U_mu * (identity rho + sum_ij M_ij d_i d_j rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOperator {
    pub local: f64,
    pub conv: f64,
    pub identity: f64,
    pub second: [[f64; 3]; 3],
}

impl DensityOperator {
    /// Static operator of a kernel variant.
    pub fn for_kernel(spec: &KernelSpec) -> Self {
        match *spec {
            KernelSpec::Coulomb { .. } => DensityOperator { local: 0.0, conv: 1.0, identity: 1.0, second: [[0.0; 3]; 3] },
            KernelSpec::Ddi3d { n } => {
                let mut m = [[0.0; 3]; 3];
                for (i, row) in m.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = n[i] * n[j];
                    }
                }
                DensityOperator { local: -1.0, conv: -3.0, identity: 0.0, second: m }
            }
            KernelSpec::Ddi2d { n } => {
                let mut m = [[0.0; 3]; 3];
                for i in 0..2 {
                    for j in 0..2 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        m[i][j] = -1.5 * (n[i] * n[j] - n[2] * n[2] * delta);
                    }
                }
                DensityOperator { local: 0.0, conv: 1.0, identity: 0.0, second: m }
            }
        }
    }

    /// Fourier multiplier of the density modification at one mode.
    fn multiplier(&self, k: &[f64; 3], kd: &[f64; 3], d: usize) -> f64 {
        let mut s = self.identity;
        for i in 0..d {
            s -= self.second[i][i] * k[i] * k[i];
            for j in 0..d {
                if i != j {
                    s -= self.second[i][j] * kd[i] * kd[j];
                }
            }
        }
        s
    }

    fn is_identity(&self) -> bool {
        self.identity == 1.0 && self.second.iter().flatten().all(|&v| v == 0.0)
    }
}

/// GauSum evaluator of `Phi = U * rho` on a fixed grid.
pub struct NonlocalSolver {
    grid: Arc<Grid>,
    spec: KernelSpec,
    approx: GauSumApprox,
    cache: TensorCache,
    scaling: BoxScaling,
    near: NearField,
    prefactor: f64,
    padded: NdFft,
    offsets: Vec<usize>,
    symbol: Vec<f64>,
}

impl std::fmt::Debug for NonlocalSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlocalSolver")
            .field("spec", &self.spec)
            .field("terms", &self.approx.len())
            .field("padded", &self.padded.dims())
            .finish()
    }
}

impl NonlocalSolver {
    pub fn new(grid: Arc<Grid>, spec: KernelSpec, delta: f64, eps0: f64) -> Result<Self> {
        Self::with_cache_dir(grid, spec, delta, eps0, None)
    }

    /// Like [`NonlocalSolver::new`], reusing or writing tensor tables under `dir`.
    pub fn with_cache_dir(grid: Arc<Grid>, spec: KernelSpec, delta: f64, eps0: f64, dir: Option<&Path>) -> Result<Self> {
        let d = grid.dim();
        spec.validate(d)?;
        let scaling = BoxScaling::for_grid(&grid);
        let (dims, _) = padded_layout(&grid, &scaling)?;
        let key = cache_key(&grid, &spec, delta, eps0);
        let path = dir.map(|p| p.join(format!("gausum-{}.bin", &key[..16])));

        let mut loaded = None;
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            match cache_io::load(p, &key) {
                Ok((a, c)) if c.check_compatible(&dims).is_ok() => loaded = Some((a, c)),
                Ok(_) => log::warn!("ignoring incompatible tensor cache {}", p.display()),
                Err(e) => log::warn!("ignoring unreadable tensor cache {}: {e}", p.display()),
            }
        }
        let (approx, cache) = match loaded {
            Some(v) => v,
            None => {
                let approx = build_gausum(&spec, delta, eps0)?;
                let cache = TensorCache::build(&approx, &dims);
                if let Some(p) = path.as_deref() {
                    std::fs::create_dir_all(p.parent().unwrap_or(Path::new(".")))?;
                    cache_io::save(p, &key, &approx, &cache)?;
                }
                (approx, cache)
            }
        };
        Self::from_parts(grid, spec, approx, cache)
    }

    /// Assembles a solver from an existing fit and tensor cache.
    pub fn from_parts(grid: Arc<Grid>, spec: KernelSpec, approx: GauSumApprox, cache: TensorCache) -> Result<Self> {
        let d = grid.dim();
        spec.validate(d)?;
        let scaling = BoxScaling::for_grid(&grid);
        let (dims, offsets) = padded_layout(&grid, &scaling)?;
        cache.check_compatible(&dims)?;
        let near = NearField::compute(&approx, d);
        let mu = spec.base_exponent();
        let prefactor = coulomb_prefactor(d) * scaling.potential_factor(d, mu);
        let symbol = cache.symbol();
        Ok(NonlocalSolver { grid, spec, approx, cache, scaling, near, prefactor, padded: NdFft::new(&dims), offsets, symbol })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
    pub fn approx(&self) -> &GauSumApprox {
        &self.approx
    }
    pub fn cache(&self) -> &TensorCache {
        &self.cache
    }
    pub fn scaling(&self) -> &BoxScaling {
        &self.scaling
    }
    pub fn near_field(&self) -> &NearField {
        &self.near
    }

    /// `Phi = U * rho` for the solver's kernel.
    pub fn potential(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_len(rho)?;
        let max = rho.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let min = rho.iter().fold(0.0f64, |a, &b| a.min(b));
        if min < -1e-12 * max.max(1e-300) {
            log::warn!("negative density passed to nonlocal potential (min {min:.3e})");
        }
        Ok(self.apply(rho, &DensityOperator::for_kernel(&self.spec)))
    }

    /// Potential of the same kernel family with its dipole axis replaced by `n`.
    pub fn potential_with_axis(&self, rho: &[f64], n: [f64; 3]) -> Result<Vec<f64>> {
        self.check_len(rho)?;
        Ok(self.apply(rho, &DensityOperator::for_kernel(&self.spec.with_dipole(n))))
    }

    /// Evaluates `local rho + conv U_mu * (modified rho)`.
    pub fn apply(&self, rho: &[f64], op: &DensityOperator) -> Vec<f64> {
        let modified = if op.is_identity() { rho.to_vec() } else { self.modified_density(rho, op) };
        let mut phi = self.coulomb(&modified);
        if op.conv != 1.0 || op.local != 0.0 {
            phi.par_iter_mut().zip(rho.par_iter()).for_each(|(p, r)| *p = op.conv * *p + op.local * r);
        }
        phi
    }

    /// Applies the second-order density modification spectrally.
    pub fn modified_density(&self, rho: &[f64], op: &DensityOperator) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim();
        let sym: Vec<f64> = (0..g.len())
            .map(|i| {
                let k = g.wavevector(i);
                let mut kd = [0.0; 3];
                for (j, v) in kd.iter_mut().enumerate().take(d) {
                    *v = g.derivative_wavenumbers(j)[g.axis_index(i, j)];
                }
                op.multiplier(&k, &kd, d)
            })
            .collect();
        let mut buf: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
        g.apply_symbol(&mut buf, &sym);
        buf.into_iter().map(|v| v.re).collect()
    }

    /// Convolution with the Coulomb-type kernel `U_mu` (prefactor included).
    pub fn coulomb(&self, density: &[f64]) -> Vec<f64> {
        let i1 = self.regular_integral(density);
        let lap = self.grid.laplacian_real(density);
        let i2 = self.nearfield_correction(density, &lap);
        let f = self.prefactor;
        i1.par_iter().zip(i2.par_iter()).map(|(a, b)| f * (a + b)).collect()
    }

    /// Long-range part `I_1` in unit coordinates, sampled at the grid points.
    pub fn regular_integral(&self, density: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim();
        let dims = self.padded.dims();
        let total: usize = dims.iter().product();
        let mut buf = vec![C64::default(); total];
        let pstrides = strides(dims);
        let map = |i: usize| -> usize { (0..d).map(|j| (g.axis_index(i, j) + self.offsets[j]) * pstrides[j]).sum() };
        for (i, &v) in density.iter().enumerate() {
            buf[map(i)] = C64::new(v, 0.0);
        }
        self.padded.forward(&mut buf);
        let inv = 1.0 / total as f64;
        buf.par_iter_mut().zip(self.symbol.par_iter()).for_each(|(b, s)| *b *= s * inv);
        self.padded.inverse(&mut buf);
        (0..density.len()).into_par_iter().map(|i| buf[map(i)].re).collect()
    }

    /// Near-field correction `I_2 = rho m0 + Delta~ rho m2 / (2d)` with the unit-box Laplacian.
    pub fn nearfield_correction(&self, density: &[f64], laplacian: &[f64]) -> Vec<f64> {
        let d = self.grid.dim() as f64;
        let l2 = self.scaling.half_width * self.scaling.half_width;
        let (m0, m2) = (self.near.m0, self.near.m2);
        density.par_iter().zip(laplacian.par_iter()).map(|(r, lap)| r * m0 + l2 * lap * m2 / (2.0 * d)).collect()
    }

    fn check_len(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.grid.len() {
            return Err(Error::InvalidGrid(format!("density has {} values, grid has {}", rho.len(), self.grid.len())));
        }
        Ok(())
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for j in (0..dims.len() - 1).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// Padded grid sizes covering `[c - 3L, c + 3L)` and the offset of the physical grid inside it.
fn padded_layout(grid: &Grid, scaling: &BoxScaling) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut dims = Vec::new();
    let mut offsets = Vec::new();
    let l = scaling.half_width;
    for j in 0..grid.dim() {
        let h = grid.spacing()[j];
        let m = 2.0 * PADDED_HALF_WIDTH * l / h;
        let off = (grid.lo()[j] - (scaling.center[j] - PADDED_HALF_WIDTH * l)) / h;
        if (m - m.round()).abs() > 1e-8 * m || (off - off.round()).abs() > 1e-8 * m.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "axis {j}: spacing {h} does not tile the padded box of half-width {}",
                PADDED_HALF_WIDTH * l
            )));
        }
        dims.push(m.round() as usize);
        offsets.push(off.round() as usize);
    }
    Ok((dims, offsets))
}

fn cache_key(grid: &Grid, spec: &KernelSpec, delta: f64, eps0: f64) -> String {
    let mut h = Sha256::new();
    h.update(b"fnlse-gausum-v1");
    for j in 0..grid.dim() {
        h.update(grid.lo()[j].to_le_bytes());
        h.update(grid.hi()[j].to_le_bytes());
        h.update((grid.points()[j] as u64).to_le_bytes());
    }
    h.update(spec.name().as_bytes());
    h.update(spec.base_exponent().to_le_bytes());
    h.update(delta.to_le_bytes());
    h.update(eps0.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
