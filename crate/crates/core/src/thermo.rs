//! Rapid-thermalization limit in a 3D isotropic trap.
//!
//! Collisions keep the gas on a Bose–Einstein distribution at temperature
//! `T`; the laser only moves `T`. With energy `E(T)` and cycle-averaged
//! laser power `Ė(T)`, the temperature obeys `dT/dt = F(T) = Ė / E'(T)`.
//! Both `Ė` and `E'` come from the same discrete shell sums, so the flow
//! stays consistent deep below `T_c` where only the first shells matter.

use serde::{Deserialize, Serialize};

use crate::collisions::critical_temperature;
use crate::dynamics::CoolingProtocol;
use crate::error::{invalid, Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::rates::OccupationState;
use crate::special::{brent_root, ZETA_4};
use crate::trap::{Dimension, ShellBasis};

/// Bose function `g_s(z) = Σ_k z^k / k^s` for `0 ≤ z ≤ 1`, `s > 1`.
pub fn bose_function(s: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 1..200_000 {
        zk *= z;
        let term = zk / (k as f64).powf(s);
        sum += term;
        // remaining terms are bounded by term · k / (s - 1)
        if term * k as f64 / (s - 1.0) < 1e-15 * sum {
            break;
        }
    }
    sum
}

/// Continuum thermodynamics of `n` trapped bosons at temperature `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoState {
    pub temperature: f64,
    pub beta: f64,
    pub n: f64,
    /// Condensate count `N(1 - (T/T_c)³)` below `T_c`, zero above.
    pub n0: f64,
    pub tc: f64,
    /// `3 T⁴ g_4(z)`, with `z = 1` below `T_c`.
    pub energy: f64,
}

impl ThermoState {
    pub fn new(n: f64, temperature: f64) -> Result<Self> {
        if !(n > 0.0) {
            return Err(invalid("n", "atom number must be positive"));
        }
        if !(temperature >= 0.0) {
            return Err(invalid("temperature", "must be non-negative"));
        }
        let tc = critical_temperature(Dimension::Three, n);
        let t = temperature;
        let (n0, energy) = if t <= tc {
            (n * (1.0 - (t / tc).powi(3)), 3.0 * ZETA_4 * t.powi(4))
        } else {
            let target = n / t.powi(3);
            let z = brent_root(|z: f64| bose_function(3.0, z) - target, 0.0, 1.0, 1e-15, 300)
                .ok_or_else(|| Error::NoConvergence(format!("fugacity at T = {t}")))?;
            (0.0, 3.0 * t.powi(4) * bose_function(4.0, z))
        };
        Ok(Self { temperature: t, beta: if t > 0.0 { 1.0 / t } else { f64::INFINITY }, n, n0, tc, energy })
    }

    pub fn is_condensed(&self) -> bool {
        self.temperature < self.tc
    }
}

/// `N_S = g_S z e^{-S/T} / (1 - z e^{-S/T})` for excited shells.
fn excited_counts(degeneracy: &[usize], t: f64, z: f64) -> Vec<f64> {
    degeneracy
        .iter()
        .enumerate()
        .map(|(s, &g)| if s == 0 || t == 0.0 { 0.0 } else { g as f64 / ((s as f64 / t).exp() / z - 1.0) })
        .collect()
}

/// Fugacity above `T_c` from the discrete shell sum including the ground shell.
fn discrete_fugacity(degeneracy: &[usize], n: f64, t: f64) -> Result<f64> {
    let count = |z: f64| -> f64 {
        excited_counts(degeneracy, t, z).iter().sum::<f64>() + degeneracy[0] as f64 * z / (1.0 - z)
    };
    // the ground term diverges as z → 1, so the bracket always closes
    brent_root(|z| count(z) - n, 0.0, 1.0 - 1e-15, 1e-15, 300)
        .ok_or_else(|| Error::NoConvergence(format!("fugacity at T = {t}")))
}

fn require_3d(basis: &ShellBasis) -> Result<()> {
    if basis.dimension != Dimension::Three {
        return Err(Error::Unsupported("the thermal flow is formulated for the 3D isotropic trap".into()));
    }
    Ok(())
}

/// Per-shell Bose–Einstein populations.
///
/// Below `T_c` the excited shells follow `μ = 0` and the ground shell holds
/// `N(1 - (T/T_c)³)`. Above `T_c` the fugacity is fixed by the shell sum.
pub fn bed_populations(state: &ThermoState, basis: &ShellBasis) -> Result<Vec<f64>> {
    require_3d(basis)?;
    let t = state.temperature;
    if state.is_condensed() {
        let mut c = excited_counts(&basis.degeneracy, t, 1.0);
        c[0] = state.n0;
        return Ok(c);
    }
    let z = discrete_fugacity(&basis.degeneracy, state.n, t)?;
    let mut c = excited_counts(&basis.degeneracy, t, z);
    c[0] = z / (1.0 - z);
    Ok(c)
}

/// `E'(T)` at fixed atom number, from the same populations as [`bed_populations`].
pub fn energy_slope(state: &ThermoState, basis: &ShellBasis) -> Result<f64> {
    let t = state.temperature;
    if t == 0.0 {
        return Ok(0.0);
    }
    let c = bed_populations(state, basis)?;
    // c_S = ∂N_S/∂ln z = N_S (1 + N_S/g_S); ∂N_S/∂T = c_S S / T²
    let cs: Vec<f64> = c.iter().zip(&basis.degeneracy).map(|(&x, &g)| x * (1.0 + x / g as f64)).collect();
    let direct: f64 = cs.iter().enumerate().map(|(s, &v)| (s * s) as f64 * v).sum::<f64>() / (t * t);
    if state.is_condensed() {
        return Ok(direct);
    }
    let num: f64 = cs.iter().enumerate().map(|(s, &v)| s as f64 * v).sum();
    let den: f64 = cs.iter().sum();
    let dlnz = -num / (t * t * den);
    Ok(direct + num * dlnz)
}

/// Laser pulses acting on a thermalized gas.
#[derive(Debug, Clone)]
pub struct FlowSource {
    pub protocol: CoolingProtocol,
    /// Zero every departure from the ground shell.
    pub perfectly_dark: bool,
}

impl FlowSource {
    pub fn new(protocol: CoolingProtocol, perfectly_dark: bool) -> Result<Self> {
        require_3d(&protocol.basis)?;
        Ok(Self { protocol, perfectly_dark })
    }

    /// Cycle-averaged laser power `Ė` at the given populations.
    pub fn power(&self, counts: &[f64]) -> Result<f64> {
        let occ = OccupationState::new(counts.to_vec())?;
        let total: f64 = self.protocol.cycle_duration();
        if self.protocol.engines.is_empty() || total == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (engine, &d) in self.protocol.engines.iter().zip(&self.protocol.durations) {
            let mut frozen = engine.freeze(&occ)?;
            if self.perfectly_dark {
                frozen.make_ground_dark();
            }
            acc += d * frozen.to_matrix(counts).energy_flux(counts);
        }
        Ok(acc / total)
    }

    fn basis(&self) -> &ShellBasis {
        &self.protocol.basis
    }
}

/// `Ė(T)` on the thermal populations of `n` atoms.
pub fn energy_rate(t: f64, n: f64, source: &FlowSource) -> Result<f64> {
    let state = ThermoState::new(n, t)?;
    source.power(&bed_populations(&state, source.basis())?)
}

/// `F(T) = Ė / E'(T)`. At `T = 0` this is `0` when the ground shell is dark
/// and `±∞` otherwise.
pub fn temperature_flow(t: f64, n: f64, source: &FlowSource) -> Result<f64> {
    let state = ThermoState::new(n, t)?;
    let power = source.power(&bed_populations(&state, source.basis())?)?;
    let slope = energy_slope(&state, source.basis())?;
    if power == 0.0 {
        return Ok(0.0);
    }
    if slope == 0.0 {
        return Ok(power.signum() * f64::INFINITY);
    }
    Ok(power / slope)
}

/// Samples of a temperature trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub time: f64,
    pub temperature: f64,
    pub flow: f64,
}

/// Integrates `dT/dt = F(T)` from `initial_t`, sampling `samples` evenly
/// spaced times up to `horizon`. Stops early once `|F| < 1e-12`. `T` is
/// kept non-negative.
pub fn integrate_flow(initial_t: f64, n: f64, source: &FlowSource, horizon: f64, samples: usize) -> Result<Vec<FlowSample>> {
    if !(horizon > 0.0) || samples == 0 {
        return Err(invalid("horizon", "need a positive horizon and at least one sample"));
    }
    let mut t = initial_t;
    let mut out = vec![FlowSample { time: 0.0, temperature: t, flow: temperature_flow(t, n, source)? }];
    let opts = OdeOptions { rtol: 1e-8, atol: 1e-12, ..Default::default() };
    let mut failure = None;
    for k in 1..=samples {
        let (t0, t1) = (horizon * (k - 1) as f64 / samples as f64, horizon * k as f64 / samples as f64);
        let mut y = [t];
        integrate(
            |_, y, dy| {
                dy[0] = if y[0] <= 0.0 {
                    0.0
                } else {
                    match temperature_flow(y[0], n, source) {
                        Ok(f) if f.is_finite() => f,
                        Ok(f) => f.signum() * 1e300,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                }
            },
            |y| y[0] = y[0].max(0.0),
            t0,
            t1,
            &mut y,
            &opts,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        t = y[0];
        let flow = temperature_flow(t, n, source)?;
        out.push(FlowSample { time: t1, temperature: t, flow });
        if flow.abs() < 1e-12 {
            break;
        }
    }
    Ok(out)
}

/// Lowest temperature in `(0, T_c]` where the flow turns from heating to
/// cooling. Returns `0` when the gas cools already at the lowest probe.
///
/// The bracket is found on a geometric grid `T_c / 2^k` scanned upward, so
/// only temperatures near the answer are ever evaluated.
pub fn find_stationary_t(n: f64, source: &FlowSource) -> Result<f64> {
    let tc = critical_temperature(Dimension::Three, n);
    let probes: Vec<f64> = (0..=6).rev().map(|k| tc / f64::powi(2.0, k)).collect();
    let mut prev: Option<(f64, f64)> = None;
    for &t in &probes {
        let p = energy_rate(t, n, source)?;
        if p <= 0.0 {
            let Some((lo, p_lo)) = prev else { return Ok(0.0) };
            let _ = p_lo;
            let mut failure = None;
            let root = brent_root(
                |x: f64| match energy_rate(x, n, source) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                lo,
                t,
                1e-9 * tc,
                200,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            return root.ok_or_else(|| Error::NoConvergence(format!("stationary temperature in [{lo}, {t}]")));
        }
        prev = Some((t, p));
    }
    Err(Error::NoConvergence(format!("the flow heats everywhere up to T_c = {tc}")))
}

/// Closed-form estimate `(γ/ω)^{1/3} η²` of the stationary temperature, in
/// units of `ħω/k_B`. It neglects Franck–Condon suppression and so bounds
/// the true value from above.
pub fn stationary_t_bound(eta: f64, gamma: f64) -> f64 {
    gamma.cbrt() * eta * eta
}

/// The same estimate in the form `T_c η² (γ/N)^{1/3}`; differs from
/// [`stationary_t_bound`] by `ζ(3)^{-1/3}`.
pub fn stationary_t_estimate(eta: f64, gamma: f64, n: f64) -> f64 {
    critical_temperature(Dimension::Three, n) * eta * eta * (gamma / n).cbrt()
}
