//! Subcommand implementations. Each returns the artifacts to write; nothing
//! here touches the filesystem.

use lente::bogoliubov::{
    coupling_1d, quasi_thermal_occupations, solve_bdg, solve_condensate, QuasiRateEngine,
};
use lente::collisions::{
    critical_temperature, equilibrium_bed, relative_entropy, sample_initial, CollisionKernel, ThermalSample,
};
use lente::dynamics::{relax_collisions_kmc, run_ensemble, run_kmc, run_meanfield, CoolingProtocol, Mode, SimConfig, TrajectoryRecord};
use lente::estimator::{estimate, EstimateReport};
use lente::fc::FcTable;
use lente::thermo::{find_stationary_t, integrate_flow, stationary_t_bound, stationary_t_estimate, FlowSource};
use lente::trap::{build_shells, Dimension, ShellBasis};
use lente::OccupationState;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialConfig, InitialKind, RunConfig};
use crate::output::{Artifact, Cell, Table};
use crate::CliError;

/// Per-trajectory seeds drawn from the run seed; trajectory `i` always gets the same one.
pub fn trajectory_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

fn basis(config: &RunConfig) -> Result<ShellBasis, CliError> {
    Ok(build_shells(&config.trap_spec()?)?)
}

/// Integer shell populations with sum exactly `n` (largest remainders).
pub fn round_preserving_sum(x: &[f64], n: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = x.iter().map(|v| v.max(0.0).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..x.len()).collect();
    // ties broken by shell index so the result is deterministic
    order.sort_by(|&a, &b| (x[b] - x[b].floor()).total_cmp(&(x[a] - x[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Initial populations for one trajectory.
pub fn initial_counts(init: &InitialConfig, basis: &ShellBasis, seed: u64) -> lente::Result<Vec<u64>> {
    let n = basis.n_shells();
    match init.kind {
        InitialKind::Ground => {
            let mut c = vec![0; n];
            c[0] = init.atoms;
            Ok(c)
        }
        InitialKind::Bed => {
            let (bed, _) = equilibrium_bed(init.atoms as f64, init.atoms as f64 * init.mean_energy, basis)?;
            Ok(round_preserving_sum(&bed, init.atoms))
        }
        InitialKind::Boltzmann => {
            let sample = ThermalSample { target_mean_energy: init.mean_energy, n: init.atoms, seed };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(sample_initial(&sample, basis, &mut rng)?)
        }
    }
}

pub fn fc(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let c = config.section("fc", &config.fc)?;
    let table = FcTable::<f64>::new(c.rows, c.cols, c.kappa);
    let mut t = Table::new("fc", &["l", "m", "re", "im"]);
    for l in 0..c.rows {
        for m in 0..c.cols {
            let v = table.get(l, m);
            t.push(vec![l.into(), m.into(), v.re.into(), v.im.into()]);
        }
    }
    Ok(vec![Artifact::Table(t)])
}

fn protocol(config: &RunConfig, basis: &ShellBasis, with_collisions: bool) -> Result<CoolingProtocol, CliError> {
    let kernel = match (&config.collisions, with_collisions) {
        (Some(c), true) => Some(CollisionKernel::new(basis, c.strength)?),
        _ => None,
    };
    let eta = config.trap()?.eta;
    Ok(CoolingProtocol::new(basis, eta, &config.cycle()?, &config.emission.pattern(), config.rates, kernel)?)
}

/// Shell-resolved rates of every pulse at the initial populations.
pub fn rates(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let basis = basis(config)?;
    let init = config.section("initial", &config.initial)?;
    let counts = initial_counts(init, &basis, config.seed)?;
    let occ = OccupationState::from_integers(&counts);
    let proto = protocol(config, &basis, false)?;
    let mut t = Table::new("rates", &["pulse", "dest", "src", "rate"]);
    let mut d = Table::new("departure", &["pulse", "shell", "occupation", "departure"]);
    for (p, engine) in proto.engines.iter().enumerate() {
        let m = engine.pulse_rates(&occ)?;
        for src in 0..m.n {
            for dest in 0..m.n {
                t.push(vec![p.into(), dest.into(), src.into(), m.get(dest, src).into()]);
            }
            d.push(vec![p.into(), src.into(), counts[src].into(), m.departure(src).into()]);
        }
    }
    Ok(vec![Artifact::Table(t), Artifact::Table(d)])
}

/// Ensemble of collision-only relaxations from independent Boltzmann draws.
pub fn thermalize(config: &RunConfig, threads: usize) -> Result<Vec<Artifact>, CliError> {
    let basis = basis(config)?;
    let th = config.section("thermalize", &config.thermalize)?;
    let init = config.section("initial", &config.initial)?;
    let kernel = CollisionKernel::new(&basis, th.strength)?;
    let boltzmann = InitialConfig { kind: InitialKind::Boltzmann, ..*init };
    let seeds = trajectory_seeds(config.seed, th.trajectories);
    let runs = run_ensemble(&seeds, threads, |s| {
        let start = initial_counts(&boltzmann, &basis, s)?;
        let mut snaps = vec![start.clone()];
        snaps.extend(relax_collisions_kmc(&kernel, &start, &th.times, s.rotate_left(32))?);
        Ok(snaps)
    })?;
    let ns = basis.n_shells();
    let shell_energy = |c: &[u64]| c.iter().enumerate().map(|(i, &v)| i as f64 * v as f64).sum::<f64>();
    let mean_energy = runs.iter().map(|r| shell_energy(&r[0])).sum::<f64>() / runs.len() as f64;
    let (bed, _) = equilibrium_bed(init.atoms as f64, mean_energy, &basis)?;

    let mut times = vec![0.0];
    times.extend(&th.times);
    let mut pops = Table::new("thermalize", &["time", "shell", "mean_count", "bed"]);
    let mut kl = Table::new("thermalize_kl", &["time", "relative_entropy"]);
    for (k, &time) in times.iter().enumerate() {
        let mean: Vec<f64> =
            (0..ns).map(|s| runs.iter().map(|r| r[k][s] as f64).sum::<f64>() / runs.len() as f64).collect();
        for s in 0..ns {
            pops.push(vec![time.into(), s.into(), mean[s].into(), bed[s].into()]);
        }
        kl.push(vec![time.into(), relative_entropy(&mean, &bed).into()]);
    }
    Ok(vec![Artifact::Table(pops), Artifact::Table(kl)])
}

pub struct SimulationRuns {
    pub interacting: Vec<TrajectoryRecord>,
    pub ideal: Vec<TrajectoryRecord>,
}

/// Runs the configured cooling simulation (and its collisionless twin when asked).
pub fn simulate_runs(config: &RunConfig, threads: usize) -> Result<SimulationRuns, CliError> {
    let basis = basis(config)?;
    let sim = config.section("simulate", &config.simulate)?;
    let init = config.section("initial", &config.initial)?;
    let omega_si = config.trap()?.omega_si();
    let sim_config = |seed| SimConfig {
        mode: sim.mode,
        cycles_max: sim.cycles,
        record_every: sim.record_every,
        seed,
        refresh_every: sim.refresh_every,
        omega_si,
        stop_at_fraction: sim.stop_at_fraction,
    };
    let seeds = match sim.mode {
        Mode::Kmc => trajectory_seeds(config.seed, sim.trajectories),
        Mode::Meanfield => vec![config.seed],
    };
    let run = |proto: &CoolingProtocol| -> Result<Vec<TrajectoryRecord>, CliError> {
        Ok(run_ensemble(&seeds, threads, |s| {
            let start = initial_counts(init, &basis, s)?;
            let c = sim_config(s);
            match sim.mode {
                Mode::Kmc => run_kmc(proto, &c, &start),
                Mode::Meanfield => run_meanfield(proto, &c, &start.iter().map(|&v| v as f64).collect::<Vec<_>>()),
            }
        })?)
    };
    let proto = protocol(config, &basis, true)?;
    let interacting = run(&proto)?;
    let ideal = if sim.compare_ideal {
        let bare = CoolingProtocol { kernel: None, ..proto };
        run(&bare)?
    } else {
        Vec::new()
    };
    Ok(SimulationRuns { interacting, ideal })
}

pub fn simulate(config: &RunConfig, threads: usize) -> Result<Vec<Artifact>, CliError> {
    let runs = simulate_runs(config, threads)?;
    let label = if config.collisions.is_some() { "interacting" } else { "ideal" };
    let mut traj =
        Table::new("trajectory", &["run", "seed", "cycle", "time", "time_s", "condensate_fraction", "energy"]);
    let mut summary = Table::new("summary", &["run", "seed", "cycles", "final_fraction", "first_cycle_at_0.9"]);
    let groups = [(label, &runs.interacting), ("ideal", &runs.ideal)];
    for (name, records) in groups {
        for r in records {
            for s in &r.snapshots {
                traj.push(vec![
                    name.into(),
                    r.seed.into(),
                    s.cycle.into(),
                    s.time.into(),
                    s.time_s.into(),
                    s.condensate_fraction.into(),
                    s.energy.into(),
                ]);
            }
            let first = r.first_cycle_reaching(0.9).map_or(Cell::Int(-1), Cell::from);
            let last = r.last();
            summary.push(vec![name.into(), r.seed.into(), last.cycle.into(), last.condensate_fraction.into(), first]);
        }
    }
    Ok(vec![Artifact::Table(traj), Artifact::Table(summary)])
}

pub fn thermo(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let basis = basis(config)?;
    if basis.dimension != Dimension::Three {
        return Err(CliError::Config("trap.dimension: the temperature flow needs a 3D trap".into()));
    }
    let th = config.section("thermo", &config.thermo)?;
    let source = FlowSource::new(protocol(config, &basis, false)?, th.perfectly_dark)?;
    let eta = config.trap()?.eta;
    // the closed-form estimates use the first pulse's linewidth
    let gamma = config.pulses[0].gamma;
    let mut out = Vec::new();
    if !th.sweep.is_empty() {
        let mut t = Table::new("thermo_sweep", &["atoms", "t_st", "t_c", "t_st_over_t_c", "bound", "estimate"]);
        for &n in &th.sweep {
            let ts = find_stationary_t(n, &source)?;
            let tc = critical_temperature(Dimension::Three, n);
            t.push(vec![
                n.into(),
                ts.into(),
                tc.into(),
                (ts / tc).into(),
                stationary_t_bound(eta, gamma).into(),
                stationary_t_estimate(eta, gamma, n).into(),
            ]);
        }
        out.push(Artifact::Table(t));
    }
    if let Some(f) = &th.flow {
        let tc = critical_temperature(Dimension::Three, f.atoms);
        let samples = integrate_flow(f.start * tc, f.atoms, &source, f.horizon, f.samples)?;
        let mut t = Table::new("thermo_flow", &["time", "temperature", "t_over_t_c", "flow"]);
        for s in samples {
            t.push(vec![s.time.into(), s.temperature.into(), (s.temperature / tc).into(), s.flow.into()]);
        }
        out.push(Artifact::Table(t));
    }
    if out.is_empty() {
        return Err(CliError::Config("thermo: give `sweep` or a [thermo.flow] table".into()));
    }
    Ok(out)
}

pub fn bdg(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let trap = config.trap()?;
    if trap.dimension != 1 {
        return Err(CliError::Config("trap.dimension: Bogoliubov modes are computed in 1D".into()));
    }
    let b = config.section("bdg", &config.bdg)?;
    let g = coupling_1d(b.scattering_length, b.aspect);
    let profile = solve_condensate(b.condensate, g, b.profile, &b.solver)?;
    let modes = solve_bdg(&profile, b.n_modes)?;

    let mut cond = Table::new("condensate", &["x", "phi0"]);
    for (x, p) in profile.grid.iter().zip(&profile.phi0) {
        cond.push(vec![(*x).into(), (*p).into()]);
    }
    let mut mt = Table::new("modes", &["k", "omega_tilde", "norm"]);
    for k in 0..modes.n_modes() {
        mt.push(vec![k.into(), modes.omega_tilde[k].into(), modes.norm(k).into()]);
    }
    let mut out = vec![Artifact::Table(cond), Artifact::Table(mt)];
    if !config.pulses.is_empty() {
        let occ = quasi_thermal_occupations(&modes, b.temperature);
        let pattern = config.emission.pattern();
        let mut rt = Table::new("quasi_rates", &["pulse", "dest", "src", "normal", "anomalous"]);
        for (p, pulse) in config.cycle()?.pulses.iter().enumerate() {
            let engine = QuasiRateEngine::new(&modes, trap.eta, pulse, &pattern, config.rates, b.quasi)?;
            let r = engine.branch_rates(&occ)?;
            for src in 0..r.normal.n {
                for dest in 0..r.normal.n {
                    rt.push(vec![
                        p.into(),
                        dest.into(),
                        src.into(),
                        r.normal.get(dest, src).into(),
                        r.anomalous.get(dest, src).into(),
                    ]);
                }
            }
        }
        out.push(Artifact::Table(rt));
    }
    Ok(out)
}

pub fn estimate_report(config: &RunConfig) -> Result<EstimateReport, CliError> {
    let e = config.section("estimate", &config.estimate)?;
    Ok(estimate(&e.species, &e.etas, &e.params)?)
}

pub fn estimate_artifacts(report: &EstimateReport) -> Result<Vec<Artifact>, CliError> {
    let value = serde_json::to_value(report).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(vec![Artifact::Report { name: "estimate".into(), value }])
}

/// Human-readable table in the layout of the usual feasibility summary.
pub fn estimate_text(report: &EstimateReport) -> String {
    let mut s = format!("species {}\n", report.species.name);
    s.push_str(&format!(
        "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        "eta", "omega/2pi Hz", "N_max", "t_cool s", "N_max TF", "t_cool TF s"
    ));
    for r in &report.rows {
        let (n_tf, t_tf) = match &r.interacting {
            Some(i) => (format!("{:.3e}", i.n_max_tf_rounded), format!("{:.4}", i.t_cool_tf_rounded)),
            None => ("-".into(), "-".into()),
        };
        s.push_str(&format!(
            "{:>5} {:>12.1} {:>12.1} {:>12.4} {:>12} {:>12}\n",
            r.eta,
            r.trap.omega / (2.0 * std::f64::consts::PI),
            r.n_max_ideal,
            r.t_cool_ideal,
            n_tf,
            t_tf
        ));
    }
    s
}
