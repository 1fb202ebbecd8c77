//! Time evolution under pulsed laser cooling and collisions.
//!
//! Pulses of a cycle act one after another, each for its own duration;
//! collisions act all the time. Widths are frozen for `refresh_every`
//! cycles, Bose factors always follow the current occupations.
//!
//! Two integrators share one description: a Gillespie kinetic Monte Carlo
//! over integer occupations and a deterministic mean-field ODE.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collisions::{apply_channel, CollisionKernel};
use crate::error::{invalid, Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::rates::{CoolingCycle, FrozenRates, OccupationState, RateEngine, RateOptions};
use crate::trap::{EmissionPattern, ShellBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Kmc,
    Meanfield,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    pub cycles_max: usize,
    /// Snapshot every this many cycles (the initial and final states are always kept).
    pub record_every: usize,
    pub seed: u64,
    /// Cycles between width refreshes.
    #[serde(default = "one")]
    pub refresh_every: usize,
    /// Trap frequency in rad/s, used only to report times in seconds.
    pub omega_si: f64,
    /// Stop once the condensate fraction reaches this value.
    #[serde(default)]
    pub stop_at_fraction: Option<f64>,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles_max == 0 {
            return Err(invalid("cycles_max", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if self.refresh_every == 0 {
            return Err(invalid("refresh_every", "must be at least 1"));
        }
        if !(self.omega_si > 0.0) {
            return Err(invalid("omega_si", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub cycle: usize,
    /// Elapsed time in units of `1/ω`.
    pub time: f64,
    pub time_s: f64,
    pub counts: Vec<f64>,
    pub condensate_fraction: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    /// `(cycle, seconds, N₀/N)` per snapshot.
    pub fn condensate_series(&self) -> Vec<(usize, f64, f64)> {
        self.snapshots.iter().map(|s| (s.cycle, s.time_s, s.condensate_fraction)).collect()
    }

    /// First recorded cycle at which `N₀/N ≥ threshold`.
    pub fn first_cycle_reaching(&self, threshold: f64) -> Option<usize> {
        self.snapshots.iter().find(|s| s.condensate_fraction >= threshold).map(|s| s.cycle)
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory holds at least its initial state")
    }
}

/// Precomputed pulse engines and the collision kernel.
#[derive(Debug, Clone)]
pub struct CoolingProtocol {
    pub basis: ShellBasis,
    pub engines: Vec<RateEngine<f64>>,
    pub durations: Vec<f64>,
    pub kernel: Option<CollisionKernel<f64>>,
}

impl CoolingProtocol {
    pub fn new(
        basis: &ShellBasis,
        eta: f64,
        cycle: &CoolingCycle<f64>,
        pattern: &EmissionPattern<f64>,
        options: RateOptions,
        kernel: Option<CollisionKernel<f64>>,
    ) -> Result<Self> {
        cycle.validate()?;
        let engines = cycle
            .pulses
            .iter()
            .map(|p| RateEngine::new(basis, eta, p, pattern, options))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = &kernel {
            if k.n_shells() != basis.n_shells() {
                return Err(invalid("kernel", "built for a different basis"));
            }
        }
        Ok(Self { basis: basis.clone(), engines, durations: cycle.pulses.iter().map(|p| p.duration).collect(), kernel })
    }

    pub fn cycle_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    fn freeze_all(&self, counts: &[f64]) -> Result<Vec<FrozenRates<f64>>> {
        let occ = OccupationState::new(counts.to_vec())?;
        self.engines.iter().map(|e| e.freeze(&occ)).collect()
    }
}

fn snapshot(cycle: usize, time: f64, omega_si: f64, counts: &[f64]) -> Snapshot {
    let total: f64 = counts.iter().sum();
    Snapshot {
        cycle,
        time,
        time_s: time / omega_si,
        counts: counts.to_vec(),
        condensate_fraction: if total > 0.0 { counts[0] / total } else { 0.0 },
        energy: counts.iter().enumerate().map(|(s, c)| s as f64 * c).sum(),
    }
}

/// Laser event rates `N_M Γ_{S←M}` for `S ≠ M` into `buf[S * n + M]`; returns their sum.
fn laser_rates(frozen: &FrozenRates<f64>, counts: &[f64], buf: &mut [f64]) -> f64 {
    let n = frozen.n;
    let mut total = 0.0;
    for m in 0..n {
        if counts[m] == 0.0 {
            for s in 0..n {
                buf[s * n + m] = 0.0;
            }
            continue;
        }
        for s in 0..n {
            let r = if s == m { 0.0 } else { counts[m] * frozen.rate(s, m, counts) };
            buf[s * n + m] = r;
            total += r;
        }
    }
    total
}

/// Gillespie evolution for `duration` under optional laser rates and collisions.
fn kmc_interval<R: Rng>(
    frozen: Option<&FrozenRates<f64>>,
    kernel: Option<&CollisionKernel<f64>>,
    counts: &mut [u64],
    duration: f64,
    start: f64,
    rng: &mut R,
) -> Result<()> {
    let n = counts.len();
    let mut buf = vec![0.0; n * n];
    let mut cf: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut t = 0.0;
    loop {
        let laser = frozen.map_or(0.0, |f| laser_rates(f, &cf, &mut buf));
        let coll = kernel.map_or(0.0, |k| k.total_rate(&cf));
        let total = laser + coll;
        if !total.is_finite() {
            return Err(Error::Stalled {
                time: start + t,
                reason: "non-finite event rate".into(),
                state: counts.to_vec(),
            });
        }
        if total <= 0.0 {
            return Ok(());
        }
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() / total;
        if t >= duration {
            return Ok(());
        }
        let pick = rng.gen::<f64>() * total;
        if pick < laser {
            let mut acc = 0.0;
            let mut chosen = None;
            for (idx, &r) in buf.iter().enumerate() {
                if r > 0.0 {
                    acc += r;
                    chosen = Some(idx);
                    if pick < acc {
                        break;
                    }
                }
            }
            let idx = chosen.expect("positive laser rate");
            let (s, m) = (idx / n, idx % n);
            counts[m] -= 1;
            counts[s] += 1;
            cf[m] -= 1.0;
            cf[s] += 1.0;
        } else {
            let k = kernel.expect("positive collision rate");
            if let Some(ch) = k.sample_channel(&cf, rng) {
                apply_channel(counts, &ch);
                for sh in [ch.from.0, ch.from.1, ch.to.0, ch.to.1] {
                    cf[sh] = counts[sh] as f64;
                }
            }
        }
    }
}

/// Stochastic trajectory with integer occupations.
pub fn run_kmc(protocol: &CoolingProtocol, config: &SimConfig, initial: &[u64]) -> Result<TrajectoryRecord> {
    config.validate()?;
    check_initial(protocol, initial.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counts = initial.to_vec();
    let as_f = |c: &[u64]| c.iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let mut snaps = vec![snapshot(0, 0.0, config.omega_si, &as_f(&counts))];
    let mut time = 0.0;
    let mut frozen = Vec::new();
    for cycle in 0..config.cycles_max {
        if cycle % config.refresh_every == 0 {
            frozen = protocol.freeze_all(&as_f(&counts))?;
        }
        for (p, f) in frozen.iter().enumerate() {
            let d = protocol.durations[p];
            kmc_interval(Some(f), protocol.kernel.as_ref(), &mut counts, d, time, &mut rng)?;
            time += d;
        }
        let done = cycle + 1;
        let cf = as_f(&counts);
        let snap = snapshot(done, time, config.omega_si, &cf);
        let stop = config.stop_at_fraction.is_some_and(|x| snap.condensate_fraction >= x);
        if done % config.record_every == 0 || done == config.cycles_max || stop {
            snaps.push(snap);
        }
        if stop {
            break;
        }
    }
    Ok(TrajectoryRecord { seed: config.seed, snapshots: snaps })
}

/// Deterministic mean-field trajectory.
pub fn run_meanfield(protocol: &CoolingProtocol, config: &SimConfig, initial: &[f64]) -> Result<TrajectoryRecord> {
    config.validate()?;
    check_initial(protocol, initial.len())?;
    let n = initial.len();
    let mut y = initial.to_vec();
    let mut snaps = vec![snapshot(0, 0.0, config.omega_si, &y)];
    let mut time = 0.0;
    let mut frozen = Vec::new();
    let opts = OdeOptions::default();
    for cycle in 0..config.cycles_max {
        if cycle % config.refresh_every == 0 {
            frozen = protocol.freeze_all(&y)?;
        }
        for (p, f) in frozen.iter().enumerate() {
            let d = protocol.durations[p];
            let kernel = protocol.kernel.as_ref();
            let mut coll = vec![0.0; n];
            integrate(
                |_, y, dy| {
                    meanfield_laser(f, y, dy);
                    if let Some(k) = kernel {
                        k.meanfield_derivative(y, &mut coll);
                        dy.iter_mut().zip(&coll).for_each(|(a, b)| *a += b);
                    }
                },
                clamp_negative,
                time,
                time + d,
                &mut y,
                &opts,
            )?;
            time += d;
        }
        let done = cycle + 1;
        let snap = snapshot(done, time, config.omega_si, &y);
        let stop = config.stop_at_fraction.is_some_and(|x| snap.condensate_fraction >= x);
        if done % config.record_every == 0 || done == config.cycles_max || stop {
            snaps.push(snap);
        }
        if stop {
            break;
        }
    }
    Ok(TrajectoryRecord { seed: config.seed, snapshots: snaps })
}

fn clamp_negative(y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// `dN_S/dt` from one pulse with live Bose factors.
pub fn meanfield_laser(frozen: &FrozenRates<f64>, y: &[f64], dy: &mut [f64]) {
    let n = frozen.n;
    dy.iter_mut().for_each(|v| *v = 0.0);
    for m in 0..n {
        if y[m] == 0.0 {
            continue;
        }
        for s in 0..n {
            if s != m {
                let f = y[m] * frozen.rate(s, m, y);
                dy[s] += f;
                dy[m] -= f;
            }
        }
    }
}

fn check_initial(protocol: &CoolingProtocol, len: usize) -> Result<()> {
    if len != protocol.basis.n_shells() {
        return Err(invalid("initial", format!("{len} shells given, basis has {}", protocol.basis.n_shells())));
    }
    Ok(())
}

/// Collision-only stochastic relaxation for `duration`, snapshot at each time in `record`.
pub fn relax_collisions_kmc(
    kernel: &CollisionKernel<f64>,
    initial: &[u64],
    record: &[f64],
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = initial.to_vec();
    let mut out = Vec::with_capacity(record.len());
    let mut t = 0.0;
    for &target in record {
        if target > t {
            kmc_interval(None, Some(kernel), &mut counts, target - t, t, &mut rng)?;
            t = target;
        }
        out.push(counts.clone());
    }
    Ok(out)
}

/// Collision-only mean-field relaxation, snapshot at each time in `record`.
pub fn relax_collisions_meanfield(kernel: &CollisionKernel<f64>, initial: &[f64], record: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut y = initial.to_vec();
    let mut out = Vec::with_capacity(record.len());
    let mut t = 0.0;
    for &target in record {
        if target > t {
            integrate(|_, y, dy| kernel.meanfield_derivative(y, dy), clamp_negative, t, target, &mut y, &OdeOptions::default())?;
            t = target;
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Runs `job(seed)` for every seed on up to `threads` worker threads. The
/// output order follows `seeds` and does not depend on `threads`.
pub fn run_ensemble<T, F>(seeds: &[u64], threads: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let threads = threads.max(1).min(seeds.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let r = job(seeds[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every seed ran")).collect()
}
