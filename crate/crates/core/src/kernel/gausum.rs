use std::f64::consts::PI;

use super::KernelSpec;
use crate::error::{Error, Result};
use crate::special::gamma;

/// Default ceiling on the number of Gaussians in a fit.
pub const MAX_TERMS: usize = 512;

/// Outer radius of the fit window. Covers the diagonal of the doubled unit
/// box in up to three dimensions.
pub const FIT_RADIUS: f64 = 2.0 * 1.732_050_807_568_877_2;

/// Sum-of-Gaussians surrogate `sum_q w_q exp(-tau_q^2 r^2)` for `r^-mu` on `[delta, r_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GauSumApprox {
    mu: f64,
    delta: f64,
    eps0: f64,
    r_max: f64,
    weights: Vec<f64>,
    nodes: Vec<f64>,
    achieved: f64,
}

/// Fits the radial generating kernel of `spec` on `[delta, FIT_RADIUS]`.
pub fn build_gausum(spec: &KernelSpec, delta: f64, eps0: f64) -> Result<GauSumApprox> {
    GauSumApprox::fit(spec.base_exponent(), delta, eps0, FIT_RADIUS)
}

fn neumaier<I: Iterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl GauSumApprox {
    /// Fits `r^-mu` (`mu = 0` is the constant kernel) by trapezoidal
    /// quadrature of `r^-mu = 2/Gamma(mu/2) int exp(-r^2 e^{2u} + mu u) du`.
    /// The discrete tail below the first node is lumped into one Gaussian that
    /// matches its zeroth and second moments.
    pub fn fit(mu: f64, delta: f64, eps0: f64, r_max: f64) -> Result<Self> {
        Self::fit_with_limit(mu, delta, eps0, r_max, MAX_TERMS)
    }

    /// [`fit`](Self::fit) with an explicit term ceiling.
    pub fn fit_with_limit(mu: f64, delta: f64, eps0: f64, r_max: f64, max_terms: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(Error::param("eps0", format!("must be positive, got {eps0}")));
        }
        if !(0.0..3.0).contains(&mu) {
            return Err(Error::param("mu", format!("unsupported exponent {mu}")));
        }
        if mu == 0.0 {
            let tau = 0.5 * eps0.sqrt() / r_max;
            let mut g = GauSumApprox { mu, delta, eps0, r_max, weights: vec![1.0], nodes: vec![tau], achieved: 0.0 };
            g.achieved = g.rounding_aware_error(delta, r_max, 10_000);
            return Ok(g);
        }

        let scale = 2.0 / gamma(mu / 2.0);
        let eta = (eps0 * delta.powf(mu) / 10.0).max(1e-18);
        let log_eta = -eta.ln();
        let mut h = PI * PI / (2.0 * (log_eta + 3.0));
        let mut u_max = ((log_eta + 3.0).sqrt() / delta).ln();
        let mut u_min = {
            let a = mu + 4.0;
            let pref = 0.5 * r_max.powi(4) * scale * h / (1.0 - (-a * h).exp());
            ((eps0 / 10.0) / pref).ln() / a
        };
        let mut best: Option<GauSumApprox> = None;
        for _ in 0..10 {
            let count = ((u_max - u_min) / h).ceil() as usize + 1;
            if count + 1 > max_terms {
                break;
            }
            let mut weights = Vec::with_capacity(count + 1);
            let mut nodes = Vec::with_capacity(count + 1);
            let r_mu = (-mu * h).exp();
            let r_mu2 = (-(mu + 2.0) * h).exp();
            let w_tail = scale * h * (mu * u_min).exp() * r_mu / (1.0 - r_mu);
            let m2_tail = scale * h * ((mu + 2.0) * u_min).exp() * r_mu2 / (1.0 - r_mu2);
            weights.push(w_tail);
            nodes.push((m2_tail / w_tail).sqrt());
            for q in 0..count {
                let u = u_min + q as f64 * h;
                weights.push(scale * h * (mu * u).exp());
                nodes.push(u.exp());
            }
            let mut g = GauSumApprox { mu, delta, eps0, r_max, weights, nodes, achieved: 0.0 };
            g.achieved = g.rounding_aware_error(delta, r_max, 10_000);
            let done = g.achieved <= eps0;
            if best.as_ref().is_none_or(|b| g.achieved < b.achieved) {
                best = Some(g);
            }
            if done {
                return Ok(best.unwrap());
            }
            h *= 0.85;
            u_max += 0.3;
            u_min -= 0.5;
        }
        let (achieved, terms) = best.map(|b| (b.achieved, b.weights.len())).unwrap_or((f64::INFINITY, max_terms));
        Err(Error::FitFailure { eps0, achieved, terms })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn eps0(&self) -> f64 {
        self.eps0
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    /// Sup error measured on the full fit window at construction.
    pub fn achieved_error(&self) -> f64 {
        self.achieved
    }

    /// Rebuilds an approximation from stored parameters.
    pub fn from_parts(mu: f64, delta: f64, eps0: f64, r_max: f64, weights: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        if weights.len() != nodes.len() || weights.is_empty() {
            return Err(Error::Format("weights and nodes must have equal nonzero length".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= 0.0 {
            return Err(Error::Format("nodes must be positive and strictly increasing".into()));
        }
        let mut g = GauSumApprox { mu, delta, eps0, r_max, weights, nodes, achieved: 0.0 };
        g.achieved = g.rounding_aware_error(delta, r_max, 2_000);
        Ok(g)
    }

    /// Evaluates the Gaussian sum at radius `r`.
    pub fn eval(&self, r: f64) -> f64 {
        let r2 = r * r;
        neumaier(self.weights.iter().zip(&self.nodes).rev().map(|(w, t)| w * (-t * t * r2).exp()))
    }

    /// Reference kernel `r^-mu`.
    pub fn target(&self, r: f64) -> f64 {
        if self.mu == 0.0 {
            1.0
        } else {
            r.powf(-self.mu)
        }
    }

    /// Max `|r^-mu - fit|` over `samples` log-spaced plus `samples` uniform points of `[a, b]`.
    pub fn sup_error(&self, a: f64, b: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        let (la, lb) = (a.ln(), b.ln());
        let log_pts = (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp());
        let lin_pts = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64);
        log_pts.chain(lin_pts).map(|r| (self.target(r) - self.eval(r)).abs()).fold(0.0, f64::max)
    }

    /// Like [`sup_error`](Self::sup_error) but with the error at each point rescaled so that
    /// the double rounding floor `8 eps U(r)` counts as `eps0` where it exceeds `eps0`.
    pub fn rounding_aware_error(&self, a: f64, b: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        let (la, lb) = (a.ln(), b.ln());
        let log_pts = (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp());
        let lin_pts = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64);
        log_pts
            .chain(lin_pts)
            .map(|r| {
                let u = self.target(r);
                let tol = self.eps0.max(8.0 * f64::EPSILON * u);
                (u - self.eval(r)).abs() * self.eps0 / tol
            })
            .fold(0.0, f64::max)
    }
}
