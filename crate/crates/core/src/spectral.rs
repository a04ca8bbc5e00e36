//! Periodic tensor grids, Fourier transforms and spectral operators.
//!
//! Fourier coefficients use the non-unitary convention
//! `c_p = h^d * sum_j psi_j exp(-i k_p (x_j - lo))`, so that the discrete
//! inverse carries the factor `(2 pi)^-d` and Parseval reads
//! `h^d sum |psi|^2 = sum |c|^2 / |box|`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Multi-dimensional complex FFT over a row-major array (last axis fastest).
#[derive(Clone)]
pub struct NdFft {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for NdFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NdFft").field("dims", &self.dims).finish()
    }
}

impl NdFft {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        NdFft { dims: dims.to_vec(), fwd, inv }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [C64]) {
        for axis in 0..self.dims.len() {
            transform_axis(data, &self.dims, axis, self.fwd[axis].as_ref());
        }
    }

    /// Unnormalized inverse transform in place.
    pub fn inverse(&self, data: &mut [C64]) {
        for axis in 0..self.dims.len() {
            transform_axis(data, &self.dims, axis, self.inv[axis].as_ref());
        }
    }
}

fn transform_axis(data: &mut [C64], dims: &[usize], axis: usize, plan: &dyn Fft<f64>) {
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let scratch_len = plan.get_inplace_scratch_len();
    if inner == 1 {
        let rows_per_task = (4096 / len).max(1) * len;
        data.par_chunks_mut(rows_per_task)
            .for_each_init(|| vec![C64::default(); scratch_len], |scratch, rows| plan.process_with_scratch(rows, scratch));
        return;
    }
    let block = len * inner;
    let mut tmp = vec![C64::default(); block];
    for chunk in data.chunks_mut(block) {
        for l in 0..len {
            let src = &chunk[l * inner..(l + 1) * inner];
            for (i, v) in src.iter().enumerate() {
                tmp[i * len + l] = *v;
            }
        }
        tmp.par_chunks_mut((4096 / len).max(1) * len)
            .for_each_init(|| vec![C64::default(); scratch_len], |s, rows| plan.process_with_scratch(rows, s));
        for l in 0..len {
            let dst = &mut chunk[l * inner..(l + 1) * inner];
            for (i, v) in dst.iter_mut().enumerate() {
                *v = tmp[i * len + l];
            }
        }
    }
}

/// Wavenumbers in FFT order for `n` points on a box of length `len`.
pub fn fft_wavenumbers(n: usize, len: f64) -> Vec<f64> {
    let dk = 2.0 * PI / len;
    (0..n)
        .map(|p| {
            let q = if p <= n / 2 { p as f64 } else { p as f64 - n as f64 };
            q * dk
        })
        .collect()
}

/// Uniform periodic tensor grid on `prod [lo_j, hi_j)`.
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
    coords: Vec<Vec<f64>>,
    freqs: Vec<Vec<f64>>,
    deriv: Vec<Vec<f64>>,
    k2: Vec<f64>,
    fft: NdFft,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("lo", &self.lo).field("hi", &self.hi).field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.n == other.n
    }
}

impl Grid {
    /// Builds a grid. Requires `d` in {2, 3}, `hi > lo` and an even number
    /// of at least 4 points per axis.
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Grid> {
        let d = n.len();
        if !(2..=3).contains(&d) || lo.len() != d || hi.len() != d {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3 with matching lo/hi/points (got {}, {}, {})",
                lo.len(),
                hi.len(),
                d
            )));
        }
        for j in 0..d {
            if !(lo[j].is_finite() && hi[j].is_finite()) || hi[j] <= lo[j] {
                return Err(Error::InvalidGrid(format!("axis {j}: need lo < hi, got [{}, {}]", lo[j], hi[j])));
            }
            if n[j] < 4 || !n[j].is_multiple_of(2) {
                return Err(Error::InvalidGrid(format!("axis {j}: points must be even and >= 4, got {}", n[j])));
            }
        }
        let h: Vec<f64> = (0..d).map(|j| (hi[j] - lo[j]) / n[j] as f64).collect();
        let mut strides = vec![1usize; d];
        for j in (0..d - 1).rev() {
            strides[j] = strides[j + 1] * n[j + 1];
        }
        let coords: Vec<Vec<f64>> = (0..d).map(|j| (0..n[j]).map(|i| lo[j] + i as f64 * h[j]).collect()).collect();
        let freqs: Vec<Vec<f64>> = (0..d).map(|j| fft_wavenumbers(n[j], hi[j] - lo[j])).collect();
        let deriv: Vec<Vec<f64>> = freqs
            .iter()
            .zip(n)
            .map(|(f, &nj)| {
                let mut v = f.clone();
                v[nj / 2] = 0.0;
                v
            })
            .collect();
        let total: usize = n.iter().product();
        let mut k2 = vec![0.0; total];
        for (idx, v) in k2.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..d {
                let p = (idx / strides[j]) % n[j];
                s += freqs[j][p] * freqs[j][p];
            }
            *v = s;
        }
        Ok(Grid { lo: lo.to_vec(), hi: hi.to_vec(), n: n.to_vec(), h, strides, coords, freqs, deriv, k2, fft: NdFft::new(n) })
    }

    /// Square/cubic grid `[-half, half)^d` with `n` points per axis.
    pub fn cube(d: usize, half: f64, n: usize) -> Result<Grid> {
        Grid::new(&vec![-half; d], &vec![half; d], &vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
    pub fn points(&self) -> &[usize] {
        &self.n
    }
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn len(&self) -> usize {
        self.k2.len()
    }
    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
    /// Grid coordinates along one axis.
    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }
    /// Wavenumbers along one axis in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.freqs[axis]
    }
    /// Wavenumbers for odd-order derivatives, with the Nyquist mode zeroed.
    pub fn derivative_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.deriv[axis]
    }
    /// `|k|^2` per Fourier mode in FFT order.
    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }
    pub fn fft(&self) -> &NdFft {
        &self.fft
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.n[axis]
    }

    /// Physical coordinates of a flat index (unused slots are zero).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (j, xj) in x.iter_mut().enumerate().take(self.dim()) {
            *xj = self.coords[j][self.axis_index(idx, j)];
        }
        x
    }

    /// Wavevector of a flat Fourier index (unused slots are zero).
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let mut k = [0.0; 3];
        for (j, kj) in k.iter_mut().enumerate().take(self.dim()) {
            *kj = self.freqs[j][self.axis_index(idx, j)];
        }
        k
    }

    /// Full-length array of one coordinate.
    pub fn coordinate_array(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.coords[axis][self.axis_index(i, axis)]).collect()
    }

    /// Full-length array of one derivative wavenumber.
    pub fn derivative_array(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.deriv[axis][self.axis_index(i, axis)]).collect()
    }

    /// Evaluates `f` at every grid point.
    pub fn sample<T: Send, F: Fn(&[f64]) -> T + Sync>(&self, f: F) -> Vec<T> {
        let d = self.dim();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let x = self.point(i);
                f(&x[..d])
            })
            .collect()
    }

    /// Forward transform with the physical normalization `h^d`.
    pub fn forward(&self, data: &mut [C64]) {
        self.fft.forward(data);
        let s = self.cell_volume();
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Inverse of [`Grid::forward`].
    pub fn inverse(&self, data: &mut [C64]) {
        self.fft.inverse(data);
        let s = 1.0 / (self.cell_volume() * self.len() as f64);
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Applies the real Fourier multiplier `symbol` (FFT order) in place.
    pub fn apply_symbol(&self, data: &mut [C64], symbol: &[f64]) {
        self.fft.forward(data);
        let inv_n = 1.0 / self.len() as f64;
        data.par_iter_mut().zip(symbol.par_iter()).for_each(|(v, s)| *v *= s * inv_n);
        self.fft.inverse(data);
    }

    /// Spectral derivative along `axis` in place.
    pub fn differentiate(&self, data: &mut [C64], axis: usize) {
        self.fft.forward(data);
        let inv_n = 1.0 / self.len() as f64;
        let dk = &self.deriv[axis];
        let stride = self.strides[axis];
        let n = self.n[axis];
        data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let k = dk[(i / stride) % n];
            *v *= C64::new(0.0, k * inv_n);
        });
        self.fft.inverse(data);
    }

    /// Spectral Laplacian of a real array.
    pub fn laplacian_real(&self, data: &[f64]) -> Vec<f64> {
        let mut buf: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
        let sym: Vec<f64> = self.k2.iter().map(|k| -k).collect();
        self.apply_symbol(&mut buf, &sym);
        buf.into_iter().map(|v| v.re).collect()
    }

    /// `h^d sum a_j conj(b_j)`.
    pub fn dot(&self, a: &[C64], b: &[C64]) -> C64 {
        let s: C64 = a.par_iter().zip(b.par_iter()).map(|(x, y)| x * y.conj()).sum();
        s * self.cell_volume()
    }

    /// `h^d sum |a_j|^2`.
    pub fn norm_sq(&self, a: &[C64]) -> f64 {
        let s: f64 = a.par_iter().map(|v| v.norm_sqr()).sum();
        s * self.cell_volume()
    }

    /// `h^d sum f_j`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.par_iter().sum::<f64>() * self.cell_volume()
    }
}

/// Fourier symbol `(|k|^2 + m^2)^s` of the fractional operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalSymbol {
    pub s: f64,
    pub m: f64,
}

impl FractionalSymbol {
    pub fn new(s: f64, m: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param("s", format!("must be positive, got {s}")));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::param("m", format!("must be non-negative, got {m}")));
        }
        Ok(FractionalSymbol { s, m })
    }

    pub fn eval(&self, k2: f64) -> f64 {
        (k2 + self.m * self.m).powf(self.s)
    }

    /// Symbol values per Fourier mode of `grid`.
    pub fn table(&self, grid: &Grid) -> Vec<f64> {
        grid.k_squared().par_iter().map(|&k2| self.eval(k2)).collect()
    }
}

/// A complex field sampled on a grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<Grid>,
    data: Vec<C64>,
}

/// Fourier coefficients of a field.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("field has {} values, grid has {}", data.len(), grid.len())));
        }
        Ok(ComplexField { grid, data })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let data = vec![C64::default(); grid.len()];
        ComplexField { grid, data }
    }

    pub fn from_fn<F: Fn(&[f64]) -> C64 + Sync>(grid: Arc<Grid>, f: F) -> Self {
        let data = grid.sample(f);
        ComplexField { grid, data }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[C64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_values(self) -> Vec<C64> {
        self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.norm_sq(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rescales to unit discrete L2 norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Divergence(format!("cannot normalize field with norm {n}")));
        }
        let inv = 1.0 / n;
        self.data.par_iter_mut().for_each(|v| *v *= inv);
        Ok(())
    }

    /// Largest modulus; NaN if any entry is NaN.
    pub fn max_abs(&self) -> f64 {
        self.data.par_iter().map(|v| v.norm()).reduce(|| 0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
    }

    pub fn density(&self) -> Vec<f64> {
        self.data.par_iter().map(|v| v.norm_sqr()).collect()
    }

    /// `h^d sum self * conj(other)`.
    pub fn dot(&self, other: &ComplexField) -> C64 {
        self.grid.dot(&self.data, &other.data)
    }

    pub fn forward_transform(&self) -> Spectrum {
        let mut coeffs = self.data.clone();
        self.grid.forward(&mut coeffs);
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    /// Applies `(-Delta + m^2)^s`.
    pub fn apply_fractional(&self, sym: &FractionalSymbol) -> ComplexField {
        let table = sym.table(&self.grid);
        let mut data = self.data.clone();
        self.grid.apply_symbol(&mut data, &table);
        ComplexField { grid: self.grid.clone(), data }
    }

    /// Spectral gradient, one component per axis.
    pub fn spectral_gradient(&self) -> Vec<ComplexField> {
        (0..self.grid.dim())
            .map(|axis| {
                let mut data = self.data.clone();
                self.grid.differentiate(&mut data, axis);
                ComplexField { grid: self.grid.clone(), data }
            })
            .collect()
    }

    /// Applies `L_z = -i (x d_y - y d_x)`.
    pub fn apply_angular_momentum(&self) -> ComplexField {
        let data = angular_momentum(&self.grid, &self.data);
        ComplexField { grid: self.grid.clone(), data }
    }
}

/// `L_z psi = -i (x d_y psi - y d_x psi)` on a grid of dimension 2 or 3.
pub fn angular_momentum(grid: &Grid, psi: &[C64]) -> Vec<C64> {
    let mut dx = psi.to_vec();
    grid.differentiate(&mut dx, 0);
    let mut dy = psi.to_vec();
    grid.differentiate(&mut dy, 1);
    let xs = grid.coords(0);
    let ys = grid.coords(1);
    let (sx, nx) = (grid.strides()[0], grid.points()[0]);
    let (sy, ny) = (grid.strides()[1], grid.points()[1]);
    dx.par_iter()
        .zip(dy.par_iter())
        .enumerate()
        .map(|(i, (a, b))| {
            let x = xs[(i / sx) % nx];
            let y = ys[(i / sy) % ny];
            let v = b * x - a * y;
            C64::new(v.im, -v.re)
        })
        .collect()
}

impl Spectrum {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn coefficients(&self) -> &[C64] {
        &self.coeffs
    }
    pub fn inverse_transform(&self) -> ComplexField {
        let mut data = self.coeffs.clone();
        self.grid.inverse(&mut data);
        ComplexField { grid: self.grid.clone(), data }
    }
}
