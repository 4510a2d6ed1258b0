use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qswitch::analysis::*;
use qswitch::network::{Network, NetworkSpec};
use qswitch::noise::apply_photon_loss;
use qswitch::ode::Options;
use qswitch::protocols::{plan_bell, QubitLabel};

fn nodes(n: usize) -> Vec<QubitLabel> {
    (0..n).map(QubitLabel::Node).collect()
}

fn pure(n: usize, psi: &[Complex64]) -> ReducedDensityMatrix {
    let d = psi.len();
    ReducedDensityMatrix {
        labels: nodes(n),
        matrix: DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj()),
    }
}

fn mixed(n: usize) -> ReducedDensityMatrix {
    let d = 1 << n;
    ReducedDensityMatrix {
        labels: nodes(n),
        matrix: DMatrix::identity(d, d) / Complex64::new(d as f64, 0.0),
    }
}

fn random_rho(n: usize, re: &[f64], im: &[f64]) -> ReducedDensityMatrix {
    let d = 1 << n;
    let a = DMatrix::from_fn(d, d, |i, j| Complex64::new(re[i * d + j], im[i * d + j]));
    let m = &a * a.adjoint();
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    ReducedDensityMatrix {
        labels: nodes(n),
        matrix: m / Complex64::new(tr, 0.0),
    }
}

/// Brute-force W overlap on a 256 × 256 phase grid.
fn w_grid(rho: &ReducedDensityMatrix) -> f64 {
    const G: usize = 256;
    let idx = [4usize, 2, 1];
    let mut best = f64::NEG_INFINITY;
    for a in 0..G {
        for b in 0..G {
            let th = [0.0, TAU * a as f64 / G as f64, TAU * b as f64 / G as f64];
            let psi: Vec<Complex64> = th.iter().map(|&t| Complex64::from_polar(1.0 / 3f64.sqrt(), t)).collect();
            let mut v = Complex64::new(0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    v += psi[i].conj() * rho.matrix[(idx[i], idx[j])] * psi[j];
                }
            }
            best = best.max(v.re);
        }
    }
    best
}

#[test]
fn reference_states_score_as_expected() {
    let z = Complex64::new(0.0, 0.0);
    let w: Vec<Complex64> = (0..8)
        .map(|i| {
            if [1usize, 2, 4].contains(&i) {
                Complex64::from_polar(1.0 / 3f64.sqrt(), 0.7 * i as f64)
            } else {
                z
            }
        })
        .collect();
    assert!((fidelity_w(&pure(3, &w)).unwrap() - 1.0).abs() < 1e-12);
    let mut g = vec![z; 8];
    g[0] = Complex64::new(0.5f64.sqrt(), 0.0);
    g[7] = Complex64::from_polar(0.5f64.sqrt(), 1.1);
    assert!((fidelity_ghz(&pure(3, &g)).unwrap() - 1.0).abs() < 1e-12);
    assert!((fidelity_ghz(&mixed(3)).unwrap() - 0.125).abs() < 1e-15);
    assert!((fidelity_w(&mixed(3)).unwrap() - 0.125).abs() < 1e-12);
    assert!((fidelity_bell(&mixed(2)).unwrap() - 0.25).abs() < 1e-15);
    assert!(fidelity_bell(&mixed(3)).is_err());
    assert!(fidelity_ghz(&mixed(2)).is_err());
}

#[test]
fn decohered_transfer_formula() {
    assert_eq!(qst_decohered_fidelity(0.99, 1e-7, 2e-7, f64::INFINITY, 0.0), 0.99);
    let f = qst_decohered_fidelity(0.99, 1e-7, 2e-7, 1e-4, 1.2e-3);
    assert!((f - 0.99 * (1.0 - 1.2e-3) * (-3e-3f64).exp()).abs() < 1e-15);
    let mut last = 1.0;
    for t1 in [1e-3, 1e-4, 1e-5, 1e-6] {
        let f = qst_decohered_fidelity(1.0, 1e-7, 1e-7, t1, 0.0);
        assert!(f < last);
        last = f;
    }
}

#[test]
fn parabola_vertex() {
    let (x, y) = parabolic_peak([0.0, 1.0, 3.0], [-4.0, -1.0, -1.0]);
    // y = −(x − 2)², through the three points.
    assert!((x - 2.0).abs() < 1e-12 && y.abs() < 1e-12);
    assert_eq!(parabolic_peak([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]), (1.0, 1.0));
}

#[test]
fn bell_fidelity_falls_with_loss() {
    let net = Network::new(NetworkSpec::default()).unwrap();
    let plan = plan_bell(&net, 400e-9).unwrap();
    let (s, _) = plan.simulate(&net, &Options::default(), None).unwrap();
    let rho = reduce(&s, &plan.labels).unwrap();
    rho.check(1e-8, 1e-10).unwrap();
    let mut last = 1.0;
    for p in [0.0, 1e-3, 1e-2, 0.1, 0.5] {
        let f = protocol_fidelity(&plan, &rho, p).unwrap();
        assert!((0.0..=1.0).contains(&f) && f < last);
        last = f;
    }
}

#[test]
fn optimal_time_grows_logarithmically_with_t1() {
    let net = Network::new(NetworkSpec::default()).unwrap();
    let k = net.kappa();
    let tp = net.propagation_time();
    let grid: Vec<f64> = (0..=68).map(|i| (6.0 + 0.5 * i as f64) / k + tp).collect();
    let t1s_us = [1.0, 10.0, 100.0, 1000.0, 10_000.0];
    let t1s: Vec<f64> = t1s_us.iter().map(|t| t * 1e-6).collect();
    let sw = sweep_optimal_tau(&net, &t1s, &grid, 1.2e-3, &Options::default()).unwrap();
    for w in sw.tau_opt.windows(2) {
        assert!(w[1] > w[0], "{:?}", sw.tau_opt);
    }
    for w in sw.fidelity_opt.windows(2) {
        assert!(w[1] > w[0]);
    }
    for (i, curve) in sw.decohered.iter().enumerate() {
        let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(sw.fidelity_opt[i] >= max);
    }
    // Least squares through the origin, τ = a·ln(T₁/1 ns).
    let xs: Vec<f64> = t1s.iter().map(|t| (t / 1e-9).ln()).collect();
    let a = xs.iter().zip(&sw.tau_opt).map(|(x, t)| x * t).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    assert!((a - 31e-9).abs() <= 4e-9, "a = {a:e}");
}

#[test]
fn optimum_on_grid_edge_is_an_error() {
    let net = Network::new(NetworkSpec::default()).unwrap();
    let k = net.kappa();
    let tp = net.propagation_time();
    let grid: Vec<f64> = (0..4).map(|i| (30.0 + i as f64) / k + tp).collect();
    let r = sweep_optimal_tau(&net, &[1e-6], &grid, 0.0, &Options::default());
    assert!(matches!(r, Err(AnalysisError::MaximumOnEdge { .. })));
    assert!(matches!(
        sweep_optimal_tau(&net, &[1e-6], &grid[..2], 0.0, &Options::default()),
        Err(AnalysisError::GridTooSmall)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn w_fidelity_matches_phase_grid(
        re in proptest::collection::vec(-1.0f64..1.0, 64),
        im in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let rho = random_rho(3, &re, &im);
        let f = fidelity_w(&rho).unwrap();
        let g = w_grid(&rho);
        // The grid is a lower bound; its spacing bounds how far below the
        // optimum it can fall.
        prop_assert!(f >= g - 1e-12, "{} < {}", f, g);
        prop_assert!(f - g < 2e-3, "{} vs {}", f, g);
    }

    #[test]
    fn fidelities_lie_in_the_unit_interval(
        re in proptest::collection::vec(-1.0f64..1.0, 64),
        im in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let r3 = random_rho(3, &re, &im);
        let r2 = random_rho(2, &re[..16], &im[..16]);
        for f in [fidelity_w(&r3).unwrap(), fidelity_ghz(&r3).unwrap(), fidelity_bell(&r2).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn bell_fidelity_is_monotone_under_loss(p in 0.0f64..0.9, dp in 1e-3f64..0.1, phase in 0.0f64..PI) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        let rho = pure(2, &[z, Complex64::new(h, 0.0), Complex64::from_polar(h, phase), z]);
        let f = |p: f64| fidelity_bell(&apply_photon_loss(&rho, p, &[QubitLabel::Node(1)]).unwrap()).unwrap();
        prop_assert!(f(p + dp) < f(p));
    }
}
