//! Trajectory integrators: conservation, determinism, fixed points and agreement.

use lente::collisions::{equilibrium_bed, relative_entropy, CollisionKernel};
use lente::dynamics::{
    meanfield_laser, relax_collisions_kmc, relax_collisions_meanfield, run_ensemble, run_kmc, run_meanfield,
    CoolingProtocol, Mode, SimConfig,
};
use lente::ode::{integrate, OdeOptions};
use lente::rates::{CoolingCycle, OccupationState, PulseSpec, RateEngine, RateOptions};
use lente::trap::{build_shells, BeamSet, Dimension, EmissionPattern, ShellBasis, TrapSpec};

const KHZ: f64 = 2.0 * std::f64::consts::PI * 1000.0;

fn basis(dim: Dimension, eta: f64, n: usize) -> ShellBasis {
    build_shells(&TrapSpec::new(dim, 1.0, eta, n).unwrap()).unwrap()
}

fn config(mode: Mode, cycles: usize, seed: u64) -> SimConfig {
    SimConfig {
        mode,
        cycles_max: cycles,
        record_every: 1,
        seed,
        refresh_every: 1,
        omega_si: KHZ,
        stop_at_fraction: None,
    }
}

/// 1D sideband cooling at the first red sideband, optional collisions.
fn sideband_protocol(strength: Option<f64>) -> CoolingProtocol {
    let b = basis(Dimension::One, 0.5, 16);
    let pulse = PulseSpec::new(-1.0, BeamSet::axial(0.5, 1.0), 0.1, 0.1).unwrap();
    let cycle = CoolingCycle::new(vec![pulse], 1).unwrap();
    let kernel = strength.map(|s| CollisionKernel::new(&b, s).unwrap());
    CoolingProtocol::new(&b, 0.5, &cycle, &EmissionPattern::isotropic(16), RateOptions::default(), kernel).unwrap()
}

fn thermal_counts(n: usize) -> Vec<u64> {
    // 200 atoms spread over the low shells
    let mut c = vec![0u64; n];
    for (i, v) in [20u64, 30, 35, 35, 30, 20, 15, 10, 5].iter().enumerate() {
        c[i] = *v;
    }
    c
}

fn energy(c: &[u64]) -> u64 {
    c.iter().enumerate().map(|(i, &v)| i as u64 * v).sum()
}

#[test]
fn two_pulse_cycle_duration_in_seconds() {
    let p1 = PulseSpec::<f64>::new(-4.0, BeamSet::xyz(2.0, 1.0), 0.03, 0.04).unwrap();
    let p2 = PulseSpec::new(0.0, BeamSet::xyz(2.0, -2.0), 0.03, 0.04).unwrap();
    let cycle = CoolingCycle::new(vec![p1, p2], 1000).unwrap();
    assert!((cycle.duration() - 1600.0 / 9.0).abs() < 1e-9);
    let seconds = cycle.duration() / KHZ;
    assert_eq!(format!("{seconds:.3}"), "0.028");
    assert!((seconds - 0.02829).abs() < 5e-6);
}

#[test]
fn zero_strength_relaxation_leaves_state_unchanged() {
    let b = basis(Dimension::Three, 1.0, 6);
    let k = CollisionKernel::new(&b, 0.0).unwrap();
    let init = vec![3, 4, 0, 2, 1, 5];
    let out = relax_collisions_kmc(&k, &init, &[1.0, 1e3, 1e6], 9).unwrap();
    assert!(out.iter().all(|c| c == &init));
}

#[test]
fn collision_only_kmc_conserves_number_and_energy() {
    let b = basis(Dimension::Three, 1.0, 12);
    let k = CollisionKernel::new(&b, 0.01).unwrap();
    let init = vec![10, 0, 0, 0, 0, 0, 0, 0, 20, 0, 0, 0];
    let times: Vec<f64> = (1..=20).map(|i| i as f64 * 5.0).collect();
    let out = relax_collisions_kmc(&k, &init, &times, 3).unwrap();
    for c in &out {
        assert_eq!(c.iter().sum::<u64>(), 30);
        assert_eq!(energy(c), 160);
    }
    assert_ne!(out.last().unwrap(), &init, "collisions should have moved atoms");
}

#[test]
fn meanfield_collisions_decrease_relative_entropy() {
    let b = basis(Dimension::Three, 1.0, 14);
    let k = CollisionKernel::new(&b, 0.01).unwrap();
    let mut init = vec![0.0; 14];
    init[0] = 20.0;
    init[6] = 30.0;
    init[9] = 10.0;
    let (n, e) = (60.0f64, 270.0f64);
    let (bed, _) = equilibrium_bed(n, e, &b).unwrap();
    let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
    let out = relax_collisions_meanfield(&k, &init, &times).unwrap();
    let mut prev = relative_entropy(&init, &bed);
    for y in &out {
        let d = relative_entropy(y, &bed);
        assert!(d <= prev + 1e-9, "{d} after {prev}");
        prev = d;
        assert!((y.iter().sum::<f64>() - n).abs() < 1e-9 * n);
    }
    assert!(prev < 0.05 * relative_entropy(&init, &bed));
}

#[test]
fn meanfield_bed_is_stationary_under_collisions() {
    let b = basis(Dimension::Three, 1.0, 15);
    let k = CollisionKernel::new(&b, 1e-3).unwrap();
    let (bed, _) = equilibrium_bed(80.0, 200.0, &b).unwrap();
    let out = relax_collisions_meanfield(&k, &bed, &[100.0 * 177.8]).unwrap();
    for (a, c) in out[0].iter().zip(&bed) {
        assert!((a - c).abs() < 1e-6, "{a} vs {c}");
    }
}

#[test]
fn kmc_conserves_atoms_and_moves_energy_in_quanta() {
    let p = sideband_protocol(Some(1e-7));
    let init = thermal_counts(16);
    let rec = run_kmc(&p, &config(Mode::Kmc, 15, 4), &init).unwrap();
    assert_eq!(rec.snapshots.len(), 16);
    for s in &rec.snapshots {
        assert_eq!(s.counts.iter().sum::<f64>(), 200.0);
        assert!(s.counts.iter().all(|c| c.fract() == 0.0 && *c >= 0.0));
        assert_eq!(s.energy.fract(), 0.0);
    }
    assert!(rec.snapshots.windows(2).all(|w| w[1].time > w[0].time));
    assert!(rec.last().energy < rec.snapshots[0].energy, "sideband cooling should remove energy");
}

#[test]
fn same_seed_reproduces_trajectory_exactly() {
    let p = sideband_protocol(Some(1e-7));
    let init = thermal_counts(16);
    let a = run_kmc(&p, &config(Mode::Kmc, 8, 11), &init).unwrap();
    let b = run_kmc(&p, &config(Mode::Kmc, 8, 11), &init).unwrap();
    let c = run_kmc(&p, &config(Mode::Kmc, 8, 12), &init).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.snapshots, c.snapshots);
}

#[test]
fn ensemble_output_is_independent_of_thread_count() {
    let p = sideband_protocol(None);
    let init = thermal_counts(16);
    let job = |seed| run_kmc(&p, &config(Mode::Kmc, 5, seed), &init);
    let seeds = [5, 1, 9, 2];
    let one = run_ensemble(&seeds, 1, job).unwrap();
    let three = run_ensemble(&seeds, 3, job).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.iter().map(|r| r.seed).collect::<Vec<_>>(), seeds);
}

#[test]
fn meanfield_conserves_atoms_and_cools() {
    let p = sideband_protocol(Some(1e-7));
    let init: Vec<f64> = thermal_counts(16).iter().map(|&c| c as f64).collect();
    let rec = run_meanfield(&p, &config(Mode::Meanfield, 20, 0), &init).unwrap();
    for s in &rec.snapshots {
        assert!((s.counts.iter().sum::<f64>() - 200.0).abs() < 1e-9 * 200.0);
        assert!(s.counts.iter().all(|&c| c >= 0.0));
    }
    let f: Vec<f64> = rec.condensate_series().iter().map(|x| x.2).collect();
    assert!(f.windows(2).all(|w| w[1] > w[0]), "{f:?}");
    // collective broadening keeps this slow, but every cycle must remove energy
    assert!(rec.snapshots.windows(2).all(|w| w[1].energy < w[0].energy));
}

#[test]
fn meanfield_tracks_kmc_ensemble() {
    let p = sideband_protocol(Some(1e-7));
    let init = thermal_counts(16);
    let initf: Vec<f64> = init.iter().map(|&c| c as f64).collect();
    let mf = run_meanfield(&p, &config(Mode::Meanfield, 20, 0), &initf).unwrap();
    let seeds: Vec<u64> = (0..8).collect();
    let runs = run_ensemble(&seeds, 2, |s| run_kmc(&p, &config(Mode::Kmc, 20, s), &init)).unwrap();
    let n = 200.0f64;
    for (k, snap) in mf.snapshots.iter().enumerate() {
        let mean = runs.iter().map(|r| r.snapshots[k].condensate_fraction).sum::<f64>() / runs.len() as f64;
        for r in &runs {
            let x = r.snapshots[k].condensate_fraction;
            assert!((x - snap.condensate_fraction).abs() < 5.0 / n.sqrt(), "cycle {k}: {x} vs {}", snap.condensate_fraction);
        }
        assert!((mean - snap.condensate_fraction).abs() < 5.0 / (n * runs.len() as f64).sqrt());
    }
}

#[test]
fn dark_ground_without_collisions_never_loses_condensate() {
    let b = basis(Dimension::One, 1.0, 16);
    let pulse = PulseSpec::new(0.0, BeamSet::axial(1.0, 1.0), 0.1, 0.1).unwrap();
    let engine = RateEngine::new(&b, 1.0, &pulse, &EmissionPattern::isotropic(16), RateOptions::default()).unwrap();
    let mut y: Vec<f64> = thermal_counts(16).iter().map(|&c| c as f64).collect();
    let mut frozen = engine.freeze(&OccupationState::new(y.clone()).unwrap()).unwrap();
    frozen.make_ground_dark();
    let mut prev = y[0];
    for step in 0..40 {
        let t0 = step as f64 * 5.0;
        integrate(|_, y, d| meanfield_laser(&frozen, y, d), |_| {}, t0, t0 + 5.0, &mut y, &OdeOptions::default()).unwrap();
        assert!(y[0] >= prev - 1e-9, "N0 dropped from {prev} to {}", y[0]);
        prev = y[0];
    }
    assert!(prev > 20.0);
}

#[test]
fn invalid_configuration_is_rejected() {
    let p = sideband_protocol(None);
    let mut c = config(Mode::Kmc, 1, 0);
    c.cycles_max = 0;
    assert!(run_kmc(&p, &c, &thermal_counts(16)).is_err());
    assert!(run_kmc(&p, &config(Mode::Kmc, 1, 0), &[1, 2, 3]).is_err());
}
