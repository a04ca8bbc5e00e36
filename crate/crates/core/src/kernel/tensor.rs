use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::GauSumApprox;
use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Half-width of the zero-padded periodic box in unit coordinates.
pub const PADDED_HALF_WIDTH: f64 = 3.0;
/// Half-width of the truncated kernel support in unit coordinates.
const KERNEL_HALF_WIDTH: f64 = 2.0;
/// Beyond this node the truncation of the Gaussian at the kernel box edge is below 1e-17.
const CLOSED_FORM_TAU: f64 = 3.2;
const NODES_PER_PANEL: usize = 16;

/// Cosine integrals `int_{-2}^{2} exp(-tau_q^2 y^2) cos(omega_p y) dy` on the
/// padded period `[-3, 3)`, `omega_p = 2 pi p / 6`, for `m` modes in FFT order.
/// Returned row-major with one row of length `m` per node.
pub fn axis_integrals(nodes: &[f64], m: usize) -> Vec<f64> {
    let period = 2.0 * PADDED_HALF_WIDTH;
    let half = m / 2;
    let omega = |p: usize| 2.0 * PI * p as f64 / period;
    let small: Vec<usize> = (0..nodes.len()).filter(|&q| nodes[q] < CLOSED_FORM_TAU).collect();

    // Composite Gauss-Legendre on [0, 2], at most half a wave per panel.
    let panels = ((2.0 * KERNEL_HALF_WIDTH * omega(half) / (2.0 * PI)).ceil() as usize).max(4);
    let (gx, gw) = gauss_legendre(NODES_PER_PANEL);
    let width = KERNEL_HALF_WIDTH / panels as f64;
    let mut ys = Vec::with_capacity(panels * NODES_PER_PANEL);
    let mut ws = Vec::with_capacity(panels * NODES_PER_PANEL);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (x, w) in gx.iter().zip(&gw) {
            ys.push(mid + 0.5 * width * x);
            ws.push(0.5 * w * width);
        }
    }
    let gauss: Vec<Vec<f64>> = small
        .iter()
        .map(|&q| {
            let t2 = nodes[q] * nodes[q];
            ys.iter().zip(&ws).map(|(y, w)| 2.0 * w * (-t2 * y * y).exp()).collect()
        })
        .collect();

    let columns: Vec<Vec<f64>> = (0..=half)
        .into_par_iter()
        .map(|p| {
            let om = omega(p);
            let cosrow: Vec<f64> = ys.iter().map(|y| (om * y).cos()).collect();
            let mut col = vec![0.0; nodes.len()];
            for (q, &tau) in nodes.iter().enumerate() {
                if tau >= CLOSED_FORM_TAU {
                    col[q] = PI.sqrt() / tau * (-om * om / (4.0 * tau * tau)).exp();
                }
            }
            for (row, &q) in gauss.iter().zip(&small) {
                col[q] = row.iter().zip(&cosrow).map(|(a, b)| a * b).sum();
            }
            col
        })
        .collect();

    let mut out = vec![0.0; nodes.len() * m];
    for (p, col) in columns.iter().enumerate() {
        for (q, v) in col.iter().enumerate() {
            out[q * m + p] = *v;
            if p != 0 && p != half {
                out[q * m + (m - p)] = *v;
            }
        }
    }
    out
}

/// Per-axis tensor factors of the truncated Gaussian-sum kernel on the padded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCache {
    dims: Vec<usize>,
    weights: Vec<f64>,
    tables: Vec<Vec<f64>>,
}

impl TensorCache {
    /// Computes the 1D integrals for padded axis lengths `dims`.
    pub fn build(approx: &GauSumApprox, dims: &[usize]) -> Self {
        let mut by_len: HashMap<usize, Vec<f64>> = HashMap::new();
        for &m in dims {
            by_len.entry(m).or_insert_with(|| axis_integrals(approx.nodes(), m));
        }
        let tables = dims.iter().map(|m| by_len[m].clone()).collect();
        TensorCache { dims: dims.to_vec(), weights: approx.weights().to_vec(), tables }
    }

    pub(crate) fn from_parts(dims: Vec<usize>, weights: Vec<f64>, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != dims.len() {
            return Err(Error::Format("table count does not match dimension".into()));
        }
        for (t, m) in tables.iter().zip(&dims) {
            if t.len() != m * weights.len() {
                return Err(Error::Format("table length does not match padded size".into()));
            }
        }
        Ok(TensorCache { dims, weights, tables })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Row-major `[q][p]` table for one axis.
    pub fn table(&self, axis: usize) -> &[f64] {
        &self.tables[axis]
    }

    pub fn check_compatible(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::CacheMismatch(format!("cache built for {:?}, grid needs {:?}", self.dims, dims)));
        }
        Ok(())
    }

    /// Assembles `sum_q w_q prod_j G_j[q][k_j]` on the padded grid in FFT order.
    pub fn symbol(&self) -> Vec<f64> {
        let d = self.dims.len();
        let last = self.dims[d - 1];
        let rows: usize = self.dims[..d - 1].iter().product();
        let q_count = self.weights.len();
        let mut out = vec![0.0; rows * last];
        out.par_chunks_mut(last).enumerate().for_each(|(r, row)| {
            let mut idx = [0usize; 2];
            let mut rem = r;
            for j in (0..d - 1).rev() {
                idx[j] = rem % self.dims[j];
                rem /= self.dims[j];
            }
            let tl = &self.tables[d - 1];
            for q in 0..q_count {
                let mut a = self.weights[q];
                for (j, &i) in idx.iter().enumerate().take(d - 1) {
                    a *= self.tables[j][q * self.dims[j] + i];
                }
                if a == 0.0 {
                    continue;
                }
                let t = &tl[q * last..(q + 1) * last];
                for (o, v) in row.iter_mut().zip(t) {
                    *o += a * v;
                }
            }
        });
        out
    }
}
