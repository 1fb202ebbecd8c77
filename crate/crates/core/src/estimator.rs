//! Order-of-magnitude feasibility of all-optical condensation.
//!
//! For a species and Lamb–Dicke parameter `η` the trap frequency follows
//! from `η² = ω_R/ω`. The atom number is capped by a peak density, either
//! for the ideal-gas Gaussian ground state or for a Thomas–Fermi profile.
//! Cooling time assumes a perfectly dark ground state and a fixed jump
//! probability per cycle, which gives the logistic recursion
//! `N₀(k+1) = N₀(k) + ε (N - N₀(k)) (N₀(k) + 1)` with
//! `ε = p_tot/(N + N_st)` and `N_st = (4η²)³/6` states below `4E_R`.
//! Half condensation takes about `ln N/(εN)` cycles of length `2/γ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reduced Planck constant (J s), CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg), CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Cooling-laser wavelength (m).
    pub lambda_l: f64,
    /// s-wave scattering length (m); zero for an ideal gas.
    pub a_sc: f64,
}

impl AtomSpecies {
    /// Magnesium at its standard atomic weight, 600 nm light, `a = 5 nm`.
    pub fn magnesium() -> Self {
        Self { name: "Mg".into(), mass: 24.305 * ATOMIC_MASS_UNIT, lambda_l: 600e-9, a_sc: 5e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(invalid("mass", "must be positive"));
        }
        if !(self.lambda_l > 0.0) || !self.lambda_l.is_finite() {
            return Err(invalid("lambda_l", "must be positive"));
        }
        if !(self.a_sc >= 0.0) || !self.a_sc.is_finite() {
            return Err(invalid("a_sc", "must be non-negative"));
        }
        Ok(())
    }

    /// Recoil frequency `ω_R = ħ k_L² / 2m` (rad/s).
    pub fn recoil_frequency(&self) -> f64 {
        let k = 2.0 * std::f64::consts::PI / self.lambda_l;
        HBAR * k * k / (2.0 * self.mass)
    }
}

/// Cooling assumptions shared by every row of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateParams {
    /// Peak density cap (atoms/m³).
    pub cap_density: f64,
    /// Fraction of atoms that jump per cycle.
    pub p_tot: f64,
    /// `γ/ω`; a cycle lasts `2/γ`.
    pub gamma_over_omega: f64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self { cap_density: 5e20, p_tot: 0.1, gamma_over_omega: 0.25 }
    }
}

impl EstimateParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cap_density", self.cap_density), ("p_tot", self.p_tot), ("gamma_over_omega", self.gamma_over_omega)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Trap scales for one `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapScales {
    /// rad/s
    pub omega_r: f64,
    /// rad/s
    pub omega: f64,
    /// Oscillator length `sqrt(ħ/mω)` (m).
    pub a_ho: f64,
}

pub fn trap_from_eta(species: &AtomSpecies, eta: f64) -> Result<TrapScales> {
    species.validate()?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid("eta", "must be positive"));
    }
    let omega_r = species.recoil_frequency();
    let omega = omega_r / (eta * eta);
    Ok(TrapScales { omega_r, omega, a_ho: (HBAR / (species.mass * omega)).sqrt() })
}

/// Largest `N` whose peak density stays at `cap_density`.
///
/// Ideal gas: `N/(π^{3/2} a_ho³)`. Interacting: Thomas–Fermi peak density
/// `μ/g` with `g = 4πħ²a/m` and `μ = ½ħω (15 N a/a_ho)^{2/5}`.
pub fn n_max(species: &AtomSpecies, eta: f64, cap_density: f64, interacting: bool) -> Result<f64> {
    if !(cap_density > 0.0) || !cap_density.is_finite() {
        return Err(invalid("cap_density", "must be positive"));
    }
    let trap = trap_from_eta(species, eta)?;
    if !interacting {
        return Ok(cap_density * std::f64::consts::PI.powf(1.5) * trap.a_ho.powi(3));
    }
    if species.a_sc == 0.0 {
        return Err(invalid("a_sc", "Thomas–Fermi estimate needs a positive scattering length"));
    }
    let g = 4.0 * std::f64::consts::PI * HBAR * HBAR * species.a_sc / species.mass;
    let mu = g * cap_density;
    Ok((2.0 * mu / (HBAR * trap.omega)).powf(2.5) * trap.a_ho / (15.0 * species.a_sc))
}

/// `N_st = (4η²)³/6`.
pub fn states_below_band(eta: f64) -> f64 {
    (4.0 * eta * eta).powi(3) / 6.0
}

/// Per-cycle jump coefficient `ε = p_tot/(N + N_st)`.
pub fn epsilon(n: f64, eta: f64, p_tot: f64) -> f64 {
    p_tot / (n + states_below_band(eta))
}

/// Cycles to reach `N₀ = N/2` from `N₀ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleCount {
    /// `ln N/(εN)`.
    pub closed_form: f64,
    /// First `k` with `N₀(k) ≥ N/2` under the recursion.
    pub recursion: u64,
}

pub fn cooling_cycles(n: f64, eps: f64) -> Result<CycleCount> {
    if !(n >= 2.0) || !n.is_finite() {
        return Err(invalid("n", format!("need N >= 2, got {n}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("epsilon", "must be positive"));
    }
    let mut n0 = 1.0;
    let mut k = 0u64;
    while n0 < 0.5 * n {
        n0 += eps * (n - n0) * (n0 + 1.0);
        k += 1;
    }
    Ok(CycleCount { closed_form: n.ln() / (eps * n), recursion: k })
}

/// `t_cool = (2/γ) ln N/(εN)` in seconds.
pub fn t_cool(species: &AtomSpecies, eta: f64, n: f64, params: &EstimateParams) -> Result<f64> {
    params.validate()?;
    let trap = trap_from_eta(species, eta)?;
    let cycles = cooling_cycles(n, epsilon(n, eta, params.p_tot))?.closed_form;
    Ok(cycles * 2.0 / (params.gamma_over_omega * trap.omega))
}

/// Rounds an atom number the way tables quote it: to an integer below
/// 1000, to two significant figures above.
pub fn round_as_quoted(x: f64) -> f64 {
    if !x.is_finite() || x.abs() < 1000.0 {
        return x.round();
    }
    let scale = 10f64.powi(x.abs().log10().floor() as i32 - 1);
    (x / scale).round() * scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub eta: f64,
    #[serde(flatten)]
    pub trap: TrapScales,
    pub n_st: f64,
    pub n_max_ideal: f64,
    pub epsilon_ideal: f64,
    pub cycles_ideal: CycleCount,
    pub t_cool_ideal: f64,
    /// Absent for an ideal-gas species.
    pub interacting: Option<InteractingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractingRow {
    pub n_max_tf: f64,
    pub epsilon_tf: f64,
    pub cycles_tf: CycleCount,
    pub t_cool_tf: f64,
    /// `N_max` rounded as quoted and the cooling time it implies.
    pub n_max_tf_rounded: f64,
    pub t_cool_tf_rounded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub species: AtomSpecies,
    pub params: EstimateParams,
    pub rows: Vec<EstimateRow>,
}

pub fn estimate_row(species: &AtomSpecies, eta: f64, params: &EstimateParams) -> Result<EstimateRow> {
    params.validate()?;
    let trap = trap_from_eta(species, eta)?;
    let n_ideal = n_max(species, eta, params.cap_density, false)?;
    let eps_ideal = epsilon(n_ideal, eta, params.p_tot);
    let interacting = if species.a_sc > 0.0 {
        let n = n_max(species, eta, params.cap_density, true)?;
        let rounded = round_as_quoted(n);
        let eps = epsilon(n, eta, params.p_tot);
        Some(InteractingRow {
            n_max_tf: n,
            epsilon_tf: eps,
            cycles_tf: cooling_cycles(n, eps)?,
            t_cool_tf: t_cool(species, eta, n, params)?,
            n_max_tf_rounded: rounded,
            t_cool_tf_rounded: t_cool(species, eta, rounded, params)?,
        })
    } else {
        None
    };
    Ok(EstimateRow {
        eta,
        trap,
        n_st: states_below_band(eta),
        n_max_ideal: n_ideal,
        epsilon_ideal: eps_ideal,
        cycles_ideal: cooling_cycles(n_ideal, eps_ideal)?,
        t_cool_ideal: t_cool(species, eta, n_ideal, params)?,
        interacting,
    })
}

/// One row per `η`.
pub fn estimate(species: &AtomSpecies, etas: &[f64], params: &EstimateParams) -> Result<EstimateReport> {
    let rows = etas.iter().map(|&eta| estimate_row(species, eta, params)).collect::<Result<_>>()?;
    Ok(EstimateReport { species: species.clone(), params: *params, rows })
}

/// The standard table, `η ∈ {2, 4, 6, 8}`.
pub fn table1(species: &AtomSpecies, params: &EstimateParams) -> Result<EstimateReport> {
    estimate(species, &[2.0, 4.0, 6.0, 8.0], params)
}
