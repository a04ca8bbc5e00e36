//! Quadrature rules and special functions.

use std::f64::consts::PI;

pub use statrs::function::gamma::gamma;
use statrs::function::gamma::gamma_ur;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Integrates `f` over `[a, b]` with `panels` equal Gauss-Legendre panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// Upper incomplete gamma `Gamma(a, x)` for `x > 0` and any real `a`
/// (`a = 0, -1, ...` only when `x >= 1`).
pub fn upper_incomplete_gamma(a: f64, x: f64) -> f64 {
    if x >= 1.0 {
        continued_fraction(a, x)
    } else if a > 0.0 {
        gamma_ur(a, x) * gamma(a)
    } else {
        // Gamma(a, x) = (Gamma(a + 1, x) - x^a e^-x) / a
        (upper_incomplete_gamma(a + 1.0, x) - x.powf(a) * (-x).exp()) / a
    }
}

// Modified Lentz evaluation of the Legendre continued fraction.
fn continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln()).exp() * h
}

/// Analytically continued lattice sum `Z_d(s) = sum_{m != 0} |m|^-s` over `Z^d`.
pub fn epstein_zeta(d: usize, s: f64) -> f64 {
    let half = s / 2.0;
    if half <= 0.0 && half.fract() == 0.0 {
        return if s == 0.0 { -1.0 } else { 0.0 };
    }
    let df = d as f64;
    let r = 7i64;
    let mut sum = 0.0;
    let mut visit = |m2: i64| {
        if m2 == 0 {
            return;
        }
        let t = PI * m2 as f64;
        sum += upper_incomplete_gamma(half, t) * t.powf(-half);
        sum += upper_incomplete_gamma((df - s) / 2.0, t) * t.powf(-(df - s) / 2.0);
    };
    for i in -r..=r {
        for j in -r..=r {
            if d == 2 {
                visit(i * i + j * j);
            } else {
                for k in -r..=r {
                    visit(i * i + j * j + k * k);
                }
            }
        }
    }
    PI.powf(half) / gamma(half) * (sum - 2.0 / (df - s) - 2.0 / s)
}

/// Lattice sum `sum_{m != 0} P(m) |m|^-s` over `Z^d` for the harmonic quartic
/// `P(m) = m_1^4 - 6 m_1^2 m_2^2 + m_2^4`, continued analytically in `s`.
pub fn harmonic_quartic_zeta(d: usize, s: f64) -> f64 {
    let half = s / 2.0;
    let dual = 4.0 + d as f64 / 2.0 - half;
    let r = 7i64;
    let mut sum = 0.0;
    let mut visit = |a: i64, b: i64, m2: i64| {
        if m2 == 0 {
            return;
        }
        let (a2, b2) = ((a * a) as f64, (b * b) as f64);
        let p = a2 * a2 - 6.0 * a2 * b2 + b2 * b2;
        if p == 0.0 {
            return;
        }
        let t = PI * m2 as f64;
        sum += p * (upper_incomplete_gamma(half, t) * t.powf(-half) + upper_incomplete_gamma(dual, t) * t.powf(-dual));
    };
    for i in -r..=r {
        for j in -r..=r {
            if d == 2 {
                visit(i, j, i * i + j * j);
            } else {
                for k in -r..=r {
                    visit(i, j, i * i + j * j + k * k);
                }
            }
        }
    }
    PI.powf(half) / gamma(half) * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn incomplete_gamma_reference_values() {
        // 30-digit reference values
        let cases = [
            (0.5, 2.0, 0.080_647_117_960_317_69),
            (-0.5, 2.0, 0.030_098_757_100_186_466),
            (0.0, 3.5, 0.006_970_139_857_548_393),
            (-1.5, 0.4, 1.230_284_180_264_935_4),
            (2.5, 0.3, 1.313_392_614_298_146_7),
        ];
        for (a, x, want) in cases {
            let got = upper_incomplete_gamma(a, x);
            assert!((got - want).abs() < 1e-13 * want, "a={a} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn square_lattice_zeta_matches_dirichlet_product() {
        // Z_2(s) = 4 zeta(s/2) beta(s/2); at s = 1, zeta(1/2) = -1.4603545088095868 and
        // beta(1/2) = 0.6676914571896092.
        let want = 4.0 * -1.460_354_508_809_586_8 * 0.667_691_457_189_609_2;
        assert!((epstein_zeta(2, 1.0) - want).abs() < 1e-12);
        // Absolutely convergent case: Z_2(4) = 4 zeta(2) beta(2) with Catalan's constant.
        let want4 = 4.0 * PI * PI / 6.0 * 0.915_965_594_177_219;
        assert!((epstein_zeta(2, 4.0) - want4).abs() < 1e-12);
        // Z_2(-1) = 4 zeta(-1/2) beta(-1/2) with zeta(-1/2) = -0.2078862249773545 and
        // beta(-1/2) = 0.2751797412288203.
        let want_m1 = 4.0 * -0.207_886_224_977_354_5 * 0.275_179_741_228_820_3;
        assert!((epstein_zeta(2, -1.0) - want_m1).abs() < 1e-10);
    }

    #[test]
    fn harmonic_sum_matches_direct_summation() {
        // absolutely convergent for s = 9 in 2D and s = 10 in 3D
        let mut direct2 = 0.0;
        for i in -400i64..=400 {
            for j in -400i64..=400 {
                let m2 = (i * i + j * j) as f64;
                if m2 > 0.0 {
                    let (a2, b2) = ((i * i) as f64, (j * j) as f64);
                    direct2 += (a2 * a2 - 6.0 * a2 * b2 + b2 * b2) * m2.powf(-4.5);
                }
            }
        }
        assert!((harmonic_quartic_zeta(2, 9.0) - direct2).abs() < 1e-7);
        let mut direct3 = 0.0;
        for i in -60i64..=60 {
            for j in -60i64..=60 {
                for k in -60i64..=60 {
                    let m2 = (i * i + j * j + k * k) as f64;
                    if m2 > 0.0 {
                        let (a2, b2) = ((i * i) as f64, (j * j) as f64);
                        direct3 += (a2 * a2 - 6.0 * a2 * b2 + b2 * b2) * m2.powf(-5.0);
                    }
                }
            }
        }
        assert!((harmonic_quartic_zeta(3, 10.0) - direct3).abs() < 1e-5);
    }

    #[test]
    fn cubic_lattice_zeta_known_values() {
        // Simple cubic Madelung-type constant for the Coulomb sum.
        assert!((epstein_zeta(3, 1.0) - -2.837_297_479_480_6).abs() < 1e-10);
        // Z_3(4) direct summation with tail estimate
        let mut direct = 0.0;
        let r = 60i64;
        for i in -r..=r {
            for j in -r..=r {
                for k in -r..=r {
                    let m2 = i * i + j * j + k * k;
                    if m2 > 0 && m2 <= r * r {
                        direct += 1.0 / (m2 as f64 * m2 as f64);
                    }
                }
            }
        }
        direct += 4.0 * PI / r as f64;
        assert!((epstein_zeta(3, 4.0) - direct).abs() < 1e-3);
        assert_eq!(epstein_zeta(3, 0.0), -1.0);
    }
}
