//! Condensate, Bogoliubov modes and quasiparticle rates in one dimension.

use lente::bogoliubov::reference::ReferenceRates;
use lente::bogoliubov::{
    hermite_functions, quasi_fc, quasi_temperature_flow, quasi_thermal_occupations, solve_bdg, solve_condensate,
    thomas_fermi_mu, BdgModeSet, CondensateMode, CondensateOptions, QuasiRateConfig, QuasiRateEngine,
};
use lente::fc::FcTable;
use lente::rates::{OccupationState, PulseSpec, RateEngine, RateOptions};
use lente::trap::{build_shells, BeamSet, Dimension, EmissionPattern, TrapSpec};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(n_basis: usize) -> CondensateOptions {
    CondensateOptions { n_basis, ..Default::default() }
}

fn gpe(n0: f64, g: f64, n_basis: usize) -> lente::bogoliubov::CondensateProfile {
    solve_condensate(n0, g, CondensateMode::Gpe, &opts(n_basis)).unwrap()
}

fn modes(n0: f64, g: f64, n_modes: usize) -> BdgModeSet {
    solve_bdg(&gpe(n0, g, 64), n_modes).unwrap()
}

fn pulse(s: f64, eta: f64) -> PulseSpec<f64> {
    PulseSpec::new(s, BeamSet::axial(eta, 1.0), 0.1, 0.1).unwrap()
}

#[test]
fn ideal_gas_is_the_oscillator_ground_state() {
    let p = gpe(250.0, 0.0, 16);
    assert!((p.mu - 0.5).abs() < 1e-14);
    assert!((p.coefficients[0] - 250f64.sqrt()).abs() < 1e-12);
    assert!(p.coefficients[1..].iter().all(|c| c.abs() < 1e-14));
    for (x, phi) in p.grid.iter().zip(&p.phi0) {
        let gauss = (250.0 / std::f64::consts::PI.sqrt()).sqrt() * (-0.5 * x * x).exp();
        assert!((phi - gauss).abs() < 1e-12);
    }
}

#[test]
fn profiles_are_normalized_and_converged() {
    for (n0, g) in [(100.0, 0.01), (100.0, 0.1), (1000.0, 0.1)] {
        let p = gpe(n0, g, 64);
        assert!((p.grid_norm() - n0).abs() < 1e-8 * n0, "{} vs {n0}", p.grid_norm());
        assert!(p.residual < 1e-6);
        let tf = solve_condensate(n0, g, CondensateMode::ThomasFermi, &opts(64)).unwrap();
        assert!((tf.grid_norm() - n0).abs() < 1e-8 * n0);
    }
}

#[test]
fn thomas_fermi_agrees_with_gpe_deep_in_the_interacting_regime() {
    let (n0, g) = (2000.0, 0.1);
    let p = gpe(n0, g, 96);
    let tf = thomas_fermi_mu(n0, g);
    assert!((p.mu / tf - 1.0).abs() < 0.05, "GPE {} vs TF {tf}", p.mu);
    // kinetic energy raises μ above the parabola
    assert!(p.mu > tf);
}

#[test]
fn stronger_coupling_raises_mu() {
    let mut prev = 0.5;
    for g in [0.01, 0.02, 0.04, 0.08] {
        let mu = gpe(300.0, g, 64).mu;
        assert!(mu > prev);
        prev = mu;
    }
}

#[test]
fn ideal_gas_modes_are_bare() {
    let m = modes(100.0, 0.0, 12);
    for k in 0..12 {
        assert!((m.omega_tilde[k] - k as f64).abs() < 1e-12);
        assert!(m.v[k].iter().all(|z| z.norm() < 1e-12));
        for (n, z) in m.u[k].iter().enumerate() {
            assert!((z.re - if n == k { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn dipole_mode_sits_at_the_trap_frequency() {
    // N₀·g over two decades
    for (n0, g) in [(100.0, 0.01), (100.0, 0.1), (100.0, 1.0)] {
        let m = modes(n0, g, 8);
        assert!((m.omega_tilde[1] - 1.0).abs() < 1e-3, "g N0 = {}: {}", n0 * g, m.omega_tilde[1]);
        for k in 1..8 {
            assert!((m.norm(k) - 1.0).abs() < 1e-6);
            assert!(m.omega_tilde[k] > 0.0);
        }
        assert!(m.omega_tilde.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn hydrodynamic_spectrum() {
    // 1D Thomas–Fermi limit: ω̃_k = sqrt(k(k+1)/2)
    let m = solve_bdg(&gpe(2000.0, 0.1, 96), 6).unwrap();
    for k in 1..4 {
        let want = ((k * (k + 1)) as f64 / 2.0).sqrt();
        assert!((m.omega_tilde[k] / want - 1.0).abs() < 0.03, "k = {k}: {} vs {want}", m.omega_tilde[k]);
    }
    let spacings: Vec<f64> = m.omega_tilde.windows(2).skip(1).map(|w| w[1] - w[0]).collect();
    assert!(spacings.iter().all(|&d| d > 0.3 && d < 1.0), "{spacings:?}");
}

#[test]
fn thomas_fermi_profile_is_rejected_for_modes() {
    let tf = solve_condensate(100.0, 0.1, CondensateMode::ThomasFermi, &opts(32)).unwrap();
    assert!(solve_bdg(&tf, 4).is_err());
}

#[test]
fn quasi_tables_reduce_to_bare_tables() {
    let m = modes(100.0, 0.0, 10);
    let bare = FcTable::new(14, 64, 0.7);
    let q = quasi_fc(&m, &bare).unwrap();
    for l in 0..14 {
        for s in 0..10 {
            assert!((q.eta_tilde(l, s) - bare.get(l, s)).norm() < 1e-10);
            assert!(q.zeta_tilde(l, s).norm() < 1e-10);
        }
    }
}

#[test]
fn quasi_tables_are_linear_in_the_modes() {
    let m = modes(100.0, 0.1, 6);
    let mut doubled = m.clone();
    doubled.u.iter_mut().flatten().for_each(|z| *z *= 2.0);
    doubled.v.iter_mut().flatten().for_each(|z| *z *= -3.0);
    let t = FcTable::new(10, 64, -0.4);
    let (a, b) = (quasi_fc(&m, &t).unwrap(), quasi_fc(&doubled, &t).unwrap());
    for l in 0..10 {
        for s in 0..6 {
            assert!((b.eta_tilde(l, s) - a.eta_tilde(l, s) * 2.0).norm() < 1e-12);
            assert!((b.zeta_tilde(l, s) + a.zeta_tilde(l, s) * 3.0).norm() < 1e-12);
        }
    }
}

#[test]
fn quasi_table_entry_matches_spatial_integral() {
    let m = modes(100.0, 0.1, 6);
    let kappa = 0.8;
    let q = quasi_fc(&m, &FcTable::new(12, 64, kappa)).unwrap();
    let (l, s) = (7, 3);
    let h = 0.005;
    let k = std::f64::consts::SQRT_2 * kappa;
    let (mut eta, mut zeta) = (Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
    for i in -4000..=4000 {
        let x = i as f64 * h;
        let psi = hermite_functions(64, x);
        let us: f64 = (0..64).map(|n| m.u[s][n].re * psi[n]).sum();
        let vs: f64 = (0..64).map(|n| m.v[s][n].re * psi[n]).sum();
        let ph = Complex::from_polar(h * psi[l], k * x);
        eta += ph * us;
        zeta += ph * vs;
    }
    assert!((q.eta_tilde(l, s) - eta).norm() < 1e-8, "{} vs {eta}", q.eta_tilde(l, s));
    assert!((q.zeta_tilde(l, s) - zeta).norm() < 1e-8, "{} vs {zeta}", q.zeta_tilde(l, s));
    assert!(zeta.norm() > 1e-4, "anomalous amplitude should be visible at this coupling");
}

fn sample_occupations(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..6.0)).collect()
}

#[test]
fn noninteracting_quasi_rates_equal_bare_rates() {
    let n = 12;
    let eta = 0.7;
    let m = BdgModeSet::bare(n, n);
    let b = build_shells(&TrapSpec::new(Dimension::One, 1.0, eta, n).unwrap()).unwrap();
    let pattern = EmissionPattern::isotropic(12);
    for s in [-1.0, 0.0] {
        let p = pulse(s, eta);
        let bare = RateEngine::new(&b, eta, &p, &pattern, RateOptions::default()).unwrap();
        let quasi =
            QuasiRateEngine::new(&m, eta, &p, &pattern, RateOptions::default(), QuasiRateConfig { gamma_l: 0.0 }).unwrap();
        let occ = sample_occupations(n, 3);
        let want = bare.pulse_rates(&OccupationState::new(occ.clone()).unwrap()).unwrap();
        let got = quasi.rates(&occ).unwrap();
        let scale = want.gamma_rate.iter().fold(0.0f64, |a, &v| a.max(v));
        for (x, y) in got.gamma_rate.iter().zip(&want.gamma_rate) {
            assert!((x - y).abs() < 1e-8 * scale, "{x} vs {y}");
        }
    }
}

#[test]
fn solved_modes_at_zero_coupling_reproduce_bare_rates() {
    let n = 10;
    let m = modes(50.0, 0.0, n);
    let b = build_shells(&TrapSpec::new(Dimension::One, 1.0, 0.5, n).unwrap()).unwrap();
    let pattern = EmissionPattern::isotropic(8);
    let p = pulse(-1.0, 0.5);
    let bare = RateEngine::new(&b, 0.5, &p, &pattern, RateOptions::default()).unwrap();
    let quasi = QuasiRateEngine::new(&m, 0.5, &p, &pattern, RateOptions::default(), QuasiRateConfig { gamma_l: 0.0 }).unwrap();
    let occ = sample_occupations(n, 8);
    let want = bare.pulse_rates(&OccupationState::new(occ.clone()).unwrap()).unwrap();
    let got = quasi.rates(&occ).unwrap();
    let scale = want.gamma_rate.iter().fold(0.0f64, |a, &v| a.max(v));
    for (x, y) in got.gamma_rate.iter().zip(&want.gamma_rate) {
        assert!((x - y).abs() < 1e-8 * scale);
    }
}

#[test]
fn empty_modes_silence_the_anomalous_branch() {
    let m = modes(100.0, 0.1, 8);
    let p = pulse(-1.0, 0.6);
    let e = QuasiRateEngine::new(&m, 0.6, &p, &EmissionPattern::isotropic(8), RateOptions::default(), QuasiRateConfig::default())
        .unwrap();
    let r = e.branch_rates(&[0.0; 8]).unwrap();
    assert!(r.anomalous.gamma_rate.iter().all(|&v| v == 0.0));
    assert!(r.normal.gamma_rate.iter().any(|&v| v > 0.0));
    let busy = e.branch_rates(&sample_occupations(8, 1)).unwrap();
    assert!(busy.anomalous.gamma_rate.iter().any(|&v| v > 0.0));
}

#[test]
fn quasi_rates_are_non_negative_and_scale_with_rabi_squared() {
    let m = modes(100.0, 0.1, 8);
    let occ = sample_occupations(8, 4);
    let pattern = EmissionPattern::isotropic(8);
    let p1 = pulse(-2.0, 0.6);
    let mut p2 = p1.clone();
    p2.rabi *= 3.0;
    let cfg = QuasiRateConfig { gamma_l: 0.5 };
    let r1 = QuasiRateEngine::new(&m, 0.6, &p1, &pattern, RateOptions::default(), cfg).unwrap().rates(&occ).unwrap();
    let r2 = QuasiRateEngine::new(&m, 0.6, &p2, &pattern, RateOptions::default(), cfg).unwrap().rates(&occ).unwrap();
    for (a, b) in r1.gamma_rate.iter().zip(&r2.gamma_rate) {
        assert!(*a >= 0.0);
        assert!((b - 9.0 * a).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn production_rates_match_the_reference_path() {
    let eta = 0.6;
    let m = modes(100.0, 0.1, 8);
    let p = PulseSpec::new(-1.0, BeamSet::axial(eta, 1.0), 0.1, 0.1).unwrap();
    let pattern = EmissionPattern::isotropic(8);
    let cfg = QuasiRateConfig { gamma_l: 0.3 };
    let engine = QuasiRateEngine::new(&m, eta, &p, &pattern, RateOptions::default(), cfg).unwrap();
    let mut reference = ReferenceRates::new(&m, eta, &p, &pattern, engine.excited_cap(), cfg).unwrap();
    let occ = sample_occupations(8, 5);
    let fast = engine.branch_rates(&occ).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let (n, k) = (rng.gen_range(0..8), rng.gen_range(0..8));
        let slow = reference.rate(n, k, &occ);
        let scale = fast.normal.gamma_rate.iter().fold(0.0f64, |a, &v| a.max(v));
        assert!((fast.normal.get(n, k) - slow.normal).abs() < 1e-8 * scale, "({n},{k}) normal");
        assert!((fast.anomalous.get(n, k) - slow.anomalous).abs() < 1e-8 * scale, "({n},{k}) anomalous");
    }
}

#[test]
fn dark_vacuum_flow_vanishes_at_zero_temperature() {
    let m = modes(100.0, 0.1, 8);
    let p = pulse(-1.0, 0.6);
    let e = QuasiRateEngine::new(&m, 0.6, &p, &EmissionPattern::isotropic(8), RateOptions::default(), QuasiRateConfig::default())
        .unwrap();
    assert_eq!(quasi_temperature_flow(&e, 0.0, true).unwrap(), 0.0);
    assert_eq!(quasi_thermal_occupations(&m, 0.0)[1..], [0.0; 7]);
    let mut prev = f64::INFINITY;
    for t in [0.4, 0.2, 0.1, 0.05] {
        let f = quasi_temperature_flow(&e, t, true).unwrap().abs();
        assert!(f < prev, "|F| should shrink toward T = 0: {f} at {t}");
        prev = f;
    }
    // with a leaky vacuum the flow at T → 0 does not vanish
    assert!(quasi_temperature_flow(&e, 0.05, false).unwrap().abs() > prev);
}
