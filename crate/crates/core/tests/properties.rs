use std::sync::{Arc, OnceLock};

use fnlse::config::{parse_config, InitialConfig, Mode, RunConfig, TrapConfig};
use fnlse::dynamics::Propagator;
use fnlse::io::{FrameKind, Snapshot};
use fnlse::kernel::{KernelSpec, NonlocalSolver};
use fnlse::model::{PhysicsParams, Trap};
use fnlse::observables::{mass, Frame, Observer};
use fnlse::spectral::{ComplexField, Grid};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Arc<Grid> {
    static G: OnceLock<Arc<Grid>> = OnceLock::new();
    G.get_or_init(|| Arc::new(Grid::cube(2, 6.0, 32).unwrap())).clone()
}

fn coulomb() -> Arc<NonlocalSolver> {
    static S: OnceLock<Arc<NonlocalSolver>> = OnceLock::new();
    S.get_or_init(|| Arc::new(NonlocalSolver::new(grid(), KernelSpec::Coulomb { mu: 1.0 }, 1e-3, 1e-12).unwrap())).clone()
}

// a few random Gaussian blobs with random phases
fn random_field(seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<[f64; 6]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.6..1.5),
                rng.gen_range(0.2..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let mut f = ComplexField::from_fn(grid(), |x| {
        blobs
            .iter()
            .map(|b| {
                let r2 = ((x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2)) / (b[2] * b[2]);
                C64::from_polar(b[3] * (-r2 / 2.0).exp(), b[4] * x[0] + b[5] * x[1])
            })
            .sum()
    });
    f.normalize().unwrap();
    f
}

fn params(s: f64, beta: f64, lambda: f64, omega: f64, gx: f64, gy: f64) -> PhysicsParams {
    let mut p = PhysicsParams::harmonic(2, s);
    p.beta = beta;
    p.lambda = lambda;
    p.omega = omega;
    p.trap = Trap::harmonic(&[gx, gy]);
    p
}

fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn ts2_conserves_mass(seed in any::<u64>(), s in 0.3f64..2.0, beta in 0.0f64..50.0, lambda in -2.0f64..2.0,
                          omega in -1.0f64..1.0, gx in 0.5f64..2.0, gy in 0.5f64..2.0, dt in 1e-4f64..0.05) {
        let p = params(s, beta, lambda, omega, gx, gy);
        let mut prop = Propagator::new(grid(), p, Some(coulomb())).unwrap();
        let mut phi = random_field(seed);
        let n0 = mass(&phi);
        for n in 0..20 {
            prop.step(&mut phi, n as f64 * dt, dt).unwrap();
        }
        prop_assert!((mass(&phi) - n0).abs() / n0 < 1e-12);
    }

    #[test]
    fn ts2_is_time_reversible(seed in any::<u64>(), s in 0.3f64..2.0, beta in 0.0f64..50.0, lambda in -2.0f64..2.0,
                              omega in -1.0f64..1.0, gx in 0.5f64..2.0, gy in 0.5f64..2.0, t in 0.0f64..5.0, dt in 1e-3f64..0.05) {
        let p = params(s, beta, lambda, omega, gx, gy);
        let mut prop = Propagator::new(grid(), p, Some(coulomb())).unwrap();
        let psi = random_field(seed);
        let mut phi = psi.clone();
        prop.step(&mut phi, t, dt).unwrap();
        prop.step(&mut phi, t + dt, -dt).unwrap();
        prop_assert!(max_diff(&phi, &psi) < 1e-11);
    }

    #[test]
    fn nonlinear_step_is_a_pure_phase(seed in any::<u64>(), beta in 0.0f64..100.0, lambda in -5.0f64..5.0,
                                      omega in -1.0f64..1.0, t in 0.0f64..3.0, dt in 1e-3f64..0.5) {
        let p = params(1.0, beta, lambda, omega, 1.0, 1.7);
        let mut prop = Propagator::new(grid(), p, Some(coulomb())).unwrap();
        let psi = random_field(seed);
        let mut phi = psi.clone();
        prop.nonlinear_step(&mut phi, t, t + dt).unwrap();
        for (a, b) in phi.values().iter().zip(psi.values()) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn observables_ignore_global_phase(seed in any::<u64>(), alpha in 0.0f64..std::f64::consts::TAU, s in 0.3f64..2.0, omega in -1.0f64..1.0) {
        let p = params(s, 10.0, 1.0, omega, 1.0, 1.4);
        let obs = Observer::new(grid(), p, Some(coulomb())).unwrap();
        let psi = random_field(seed);
        let mut rotated = psi.clone();
        for v in rotated.values_mut() {
            *v *= C64::from_polar(1.0, alpha);
        }
        let frame = Frame::lab(&KernelSpec::Coulomb { mu: 1.0 });
        let a = obs.record(0.0, &psi, &frame).unwrap();
        let b = obs.record(0.0, &rotated, &frame).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
        prop_assert!(close(a.mass, b.mass));
        prop_assert!(close(a.total_energy, b.total_energy));
        prop_assert!(close(a.lz, b.lz));
        prop_assert!(close(a.ame_production, b.ame_production));
        for i in 0..3 {
            prop_assert!(close(a.center[i], b.center[i]));
            prop_assert!(close(a.widths[i], b.widths[i]));
            prop_assert!(close(a.momentum[i], b.momentum[i]));
        }
    }

    #[test]
    fn mass_scales_quadratically(seed in any::<u64>(), c in 0.1f64..10.0) {
        let psi = random_field(seed);
        let mut scaled = psi.clone();
        for v in scaled.values_mut() {
            *v *= c;
        }
        prop_assert!((mass(&scaled) - c * c * mass(&psi)).abs() < 1e-12 * c * c);
    }

    #[test]
    fn nonlocal_potential_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let solver = coulomb();
        let r1 = random_field(s1).density();
        let r2 = random_field(s2).density();
        let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
        let p1 = solver.potential(&r1).unwrap();
        let p2 = solver.potential(&r2).unwrap();
        let pm = solver.potential(&mix).unwrap();
        let scale = p1.iter().chain(&p2).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..pm.len() {
            prop_assert!((pm[i] - a * p1[i] - b * p2[i]).abs() < 1e-12 * scale * (a.abs() + b.abs() + 1.0));
        }
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical(seed in any::<u64>(), t in -10.0f64..10.0, rotating in any::<bool>(), s in 0.1f64..3.0) {
        let phi = random_field(seed);
        let frame = if rotating { FrameKind::Rotating } else { FrameKind::Lab };
        let a = fnlse::dynamics::rotation_matrix(0.4, t, 2);
        let snap = Snapshot::from_field(&phi, &PhysicsParams::harmonic(2, s), t, frame, a);
        let bytes = snap.to_bytes();
        let back = Snapshot::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        let field = back.field().unwrap();
        prop_assert_eq!(field.values(), phi.values());
    }

    #[test]
    fn config_round_trips(s in 0.1f64..3.0, beta in -50.0f64..50.0, lambda in -10.0f64..10.0, omega in -1.0f64..1.0,
                          n in 4i64..64, dt in 1e-5f64..0.1, gx in 0.1f64..3.0, x0 in -3.0f64..3.0, seed in 0..=i64::MAX as u64,
                          ddi in any::<bool>()) {
        let mut cfg = RunConfig::new(Mode::Dynamics);
        cfg.seed = seed;
        cfg.grid.points = vec![2 * n, 2 * n];
        cfg.physics.s = s;
        cfg.physics.beta = beta;
        cfg.physics.lambda = lambda;
        cfg.physics.omega = omega;
        cfg.dynamics.dt = dt;
        cfg.trap = TrapConfig::Harmonic { gamma: Some(vec![gx, 1.0]) };
        cfg.initial = InitialConfig::ShiftedGround { path: None, x0: vec![x0, -x0], v0: 0.5 };
        if ddi {
            cfg.kernel.spec = KernelSpec::Ddi2d { n: [0.0, 0.6, 0.8] };
        }
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn oversized_seed_is_a_keyed_error(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let mut cfg = RunConfig::new(Mode::Ground);
        cfg.seed = seed;
        for err in [cfg.validate().unwrap_err(), cfg.to_toml().unwrap_err()] {
            let keyed = matches!(err, fnlse::Error::Config { ref key, .. } if key == "seed");
            prop_assert!(keyed);
        }
    }
}
