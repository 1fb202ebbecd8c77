//! Run configuration: a TOML document with one optional section per
//! subcommand plus the shared physical setup.
//!
//! Every table rejects unknown keys. Values are checked by [`RunConfig::validate`]
//! with errors naming the offending field as a dotted path.

use std::path::{Path, PathBuf};

use lente::bogoliubov::{CondensateMode, CondensateOptions, QuasiRateConfig};
use lente::dynamics::Mode;
use lente::estimator::{AtomSpecies, EstimateParams};
use lente::rates::RateOptions;
use lente::trap::{BeamSet, Dimension, EmissionPattern};
use lente::{CoolingCycle, PulseSpec, TrapSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapConfig>,
    #[serde(default)]
    pub emission: EmissionConfig,
    #[serde(default)]
    pub rates: RateOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collisions: Option<CollisionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<FcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermalize: Option<ThermalizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermo: Option<ThermoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bdg: Option<BdgConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    /// Pulses of one cooling cycle, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pulses: Vec<PulseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name prefix; files are `<prefix>_<table>.<ext>`.
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), prefix: "lente".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    /// 1 or 3.
    pub dimension: u32,
    pub eta: f64,
    pub n_shells: usize,
    /// Trap frequency `ω/2π` in Hz; only converts times to seconds.
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
}

fn default_frequency() -> f64 {
    1000.0
}

impl TrapConfig {
    pub fn omega_si(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternName {
    Isotropic,
    DipoleZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionConfig {
    pub pattern: PatternName,
    pub order: usize,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        Self { pattern: PatternName::Isotropic, order: 16 }
    }
}

impl EmissionConfig {
    pub fn pattern(&self) -> EmissionPattern<f64> {
        match self.pattern {
            PatternName::Isotropic => EmissionPattern::isotropic(self.order),
            PatternName::DipoleZ => EmissionPattern::dipole_z(self.order),
        }
    }
}

/// One pulse; beams run along the trap axes with amplitudes `1, 1, amplitude_z`
/// in 3D and `amplitude_z` along the axis in 1D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// `δ/ω`.
    pub detuning: f64,
    /// `Ω/ω`.
    pub rabi: f64,
    /// `γ/ω`.
    pub gamma: f64,
    #[serde(default = "unit")]
    pub amplitude_z: f64,
    /// Length in `1/ω`; defaults to `2γ/Ω²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionConfig {
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// Microcanonical Bose–Einstein populations rounded to integers.
    Bed,
    /// Independent Boltzmann draws.
    Boltzmann,
    /// Everything in the ground shell.
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub atoms: u64,
    /// Mean energy per atom in `ħω`.
    #[serde(default)]
    pub mean_energy: f64,
    #[serde(default = "bed")]
    pub kind: InitialKind,
}

fn bed() -> InitialKind {
    InitialKind::Bed
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcConfig {
    pub kappa: f64,
    pub rows: usize,
    pub cols: usize,
}

/// Collision-only relaxation of Boltzmann samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalizeConfig {
    pub strength: f64,
    #[serde(default = "hundred")]
    pub trajectories: usize,
    /// Snapshot times in `1/ω`, increasing.
    pub times: Vec<f64>,
}

fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "kmc")]
    pub mode: Mode,
    pub cycles: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "one")]
    pub refresh_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_fraction: Option<f64>,
    #[serde(default = "one")]
    pub trajectories: usize,
    /// Also run every seed without collisions.
    #[serde(default)]
    pub compare_ideal: bool,
}

fn kmc() -> Mode {
    Mode::Kmc
}

fn one() -> usize {
    1
}

/// Rapid-thermalization temperature flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoConfig {
    #[serde(default)]
    pub perfectly_dark: bool,
    /// Atom numbers for the stationary-temperature sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub atoms: f64,
    /// Starting temperature as a fraction of `T_c`.
    pub start: f64,
    /// In `1/ω`.
    pub horizon: f64,
    #[serde(default = "fifty")]
    pub samples: usize,
}

fn fifty() -> usize {
    50
}

/// 1D condensate, Bogoliubov modes and quasiparticle rates for each pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BdgConfig {
    pub condensate: f64,
    /// Scattering length in axial oscillator lengths.
    pub scattering_length: f64,
    /// Transverse to axial frequency ratio.
    #[serde(default = "unit")]
    pub aspect: f64,
    #[serde(default = "twelve")]
    pub n_modes: usize,
    #[serde(default = "gpe")]
    pub profile: CondensateMode,
    #[serde(default)]
    pub solver: CondensateOptions,
    #[serde(default)]
    pub quasi: QuasiRateConfig,
    /// Quasiparticle temperature in `ħω`.
    #[serde(default)]
    pub temperature: f64,
}

fn twelve() -> usize {
    12
}

fn gpe() -> CondensateMode {
    CondensateMode::Gpe
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "AtomSpecies::magnesium")]
    pub species: AtomSpecies,
    #[serde(default)]
    pub params: EstimateParams,
    #[serde(default = "table_etas")]
    pub etas: Vec<f64>,
}

fn table_etas() -> Vec<f64> {
    vec![2.0, 4.0, 6.0, 8.0]
}

fn bad(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {why}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be non-negative, got {v}")))
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses and validates configuration text.
pub fn parse_str(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(bad("output.prefix", "must be a non-empty file name"));
        }
        if let Some(t) = &self.trap {
            if !matches!(t.dimension, 1 | 3) {
                return Err(bad("trap.dimension", format!("must be 1 or 3, got {}", t.dimension)));
            }
            positive("trap.eta", t.eta)?;
            positive("trap.frequency_hz", t.frequency_hz)?;
            if t.n_shells == 0 {
                return Err(bad("trap.n_shells", "must be at least 1"));
            }
        }
        if self.emission.order == 0 {
            return Err(bad("emission.order", "must be at least 1"));
        }
        for (i, p) in self.pulses.iter().enumerate() {
            let f = |k: &str| format!("pulses[{i}].{k}");
            if !p.detuning.is_finite() {
                return Err(bad(&f("detuning"), "must be finite"));
            }
            non_negative(&f("rabi"), p.rabi)?;
            positive(&f("gamma"), p.gamma)?;
            if !p.amplitude_z.is_finite() {
                return Err(bad(&f("amplitude_z"), "must be finite"));
            }
            match p.duration {
                Some(d) => positive(&f("duration"), d)?,
                None if p.rabi == 0.0 => return Err(bad(&f("duration"), "required when rabi = 0")),
                None => {}
            }
        }
        if let Some(c) = &self.collisions {
            non_negative("collisions.strength", c.strength)?;
        }
        if let Some(i) = &self.initial {
            non_negative("initial.mean_energy", i.mean_energy)?;
        }
        if let Some(fc) = &self.fc {
            non_negative("fc.kappa", fc.kappa)?;
            if fc.rows == 0 || fc.cols == 0 {
                return Err(bad("fc.rows", "table needs at least one row and column"));
            }
        }
        if let Some(th) = &self.thermalize {
            non_negative("thermalize.strength", th.strength)?;
            if th.trajectories == 0 {
                return Err(bad("thermalize.trajectories", "must be at least 1"));
            }
            if th.times.is_empty() || th.times.windows(2).any(|w| w[1] <= w[0]) || th.times[0] < 0.0 {
                return Err(bad("thermalize.times", "need non-negative, strictly increasing times"));
            }
        }
        if let Some(s) = &self.simulate {
            for (k, v) in [("cycles", s.cycles), ("record_every", s.record_every), ("refresh_every", s.refresh_every), ("trajectories", s.trajectories)] {
                if v == 0 {
                    return Err(bad(&format!("simulate.{k}"), "must be at least 1"));
                }
            }
            if let Some(x) = s.stop_at_fraction {
                if !(0.0..=1.0).contains(&x) {
                    return Err(bad("simulate.stop_at_fraction", "must lie in [0, 1]"));
                }
            }
        }
        if let Some(th) = &self.thermo {
            for (i, &n) in th.sweep.iter().enumerate() {
                positive(&format!("thermo.sweep[{i}]"), n)?;
            }
            if let Some(f) = &th.flow {
                positive("thermo.flow.atoms", f.atoms)?;
                non_negative("thermo.flow.start", f.start)?;
                positive("thermo.flow.horizon", f.horizon)?;
                if f.samples == 0 {
                    return Err(bad("thermo.flow.samples", "must be at least 1"));
                }
            }
        }
        if let Some(b) = &self.bdg {
            positive("bdg.condensate", b.condensate)?;
            non_negative("bdg.scattering_length", b.scattering_length)?;
            positive("bdg.aspect", b.aspect)?;
            non_negative("bdg.temperature", b.temperature)?;
            non_negative("bdg.quasi.gamma_l", b.quasi.gamma_l)?;
            if b.n_modes == 0 || b.n_modes > b.solver.n_basis {
                return Err(bad("bdg.n_modes", format!("must lie in 1..={}", b.solver.n_basis)));
            }
        }
        if let Some(e) = &self.estimate {
            e.species.validate().map_err(|err| bad("estimate.species", err))?;
            e.params.validate().map_err(|err| bad("estimate.params", err))?;
            for (i, &eta) in e.etas.iter().enumerate() {
                positive(&format!("estimate.etas[{i}]"), eta)?;
            }
        }
        Ok(())
    }

    /// The configuration as embedded in output headers. Output location is
    /// left out so that moving a run does not change its bytes.
    pub fn resolved(&self) -> RunConfig {
        RunConfig { output: OutputConfig::default(), ..self.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn trap(&self) -> Result<&TrapConfig, CliError> {
        self.trap.as_ref().ok_or_else(|| bad("trap", "section is required"))
    }

    pub fn trap_spec(&self) -> Result<TrapSpec, CliError> {
        let t = self.trap()?;
        let dim = Dimension::from_int(t.dimension)?;
        Ok(TrapSpec::new(dim, 1.0, t.eta, t.n_shells)?)
    }

    pub fn cycle(&self) -> Result<CoolingCycle, CliError> {
        let t = self.trap()?;
        if self.pulses.is_empty() {
            return Err(bad("pulses", "at least one [[pulses]] entry is required"));
        }
        let pulses = self
            .pulses
            .iter()
            .map(|p| {
                let beams = match t.dimension {
                    1 => BeamSet::axial(t.eta, p.amplitude_z),
                    _ => BeamSet::xyz(t.eta, p.amplitude_z),
                };
                let spec = PulseSpec {
                    detuning: p.detuning,
                    beams,
                    rabi: p.rabi,
                    gamma: p.gamma,
                    duration: p.duration.unwrap_or(2.0 * p.gamma / (p.rabi * p.rabi)),
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(CoolingCycle::new(pulses, 1)?)
    }

    pub fn section<'a, T>(&self, name: &str, value: &'a Option<T>) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| bad(name, "section is required for this subcommand"))
    }
}
