//! Kinetic theory of collective laser cooling of trapped Bose gases.
//!
//! Units are `ħ = ω = 1` throughout: energies in trap quanta, times in
//! `1/ω`, wavevectors through Lamb–Dicke parameters. SI values appear only
//! in [`estimator`] and at the command-line boundary.
//!
//! The building blocks are generic over the scalar ([`scalar::Real`]); the
//! aliases below fix it to `f64`, which is what the integrators,
//! thermodynamics and quasiparticle code use.
//!
//! * [`trap`], [`fc`]: shell bases, beams, emission quadrature, Franck–Condon factors.
//! * [`rates`]: occupation-dependent laser rates with collective widths.
//! * [`collisions`]: Bose-enhanced energy-conserving two-body kernel and the
//!   microcanonical equilibrium it relaxes to.
//! * [`dynamics`]: kinetic Monte Carlo and mean-field trajectories over pulse cycles.
//! * [`thermo`]: temperature flow when collisions are much faster than the laser.
//! * [`bogoliubov`]: 1D condensate, Bogoliubov modes and quasiparticle rates.
//! * [`estimator`]: density-capped atom numbers and cooling times in SI units.

pub mod bogoliubov;
pub mod collisions;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod fc;
pub mod ode;
pub mod rates;
pub mod scalar;
pub mod special;
pub mod thermo;
pub mod trap;

pub use error::{Error, Result};

pub type TrapSpec = trap::TrapSpec<f64>;
pub type Beam = trap::Beam<f64>;
pub type BeamSet = trap::BeamSet<f64>;
pub type EmissionPattern = trap::EmissionPattern<f64>;
pub type FcTable = fc::FcTable<f64>;
pub type PulseSpec = rates::PulseSpec<f64>;
pub type CoolingCycle = rates::CoolingCycle<f64>;
pub type OccupationState = rates::OccupationState<f64>;
pub type RateMatrix = rates::RateMatrix<f64>;
pub type FrozenRates = rates::FrozenRates<f64>;
pub type RateEngine = rates::RateEngine<f64>;
pub type CollisionKernel = collisions::CollisionKernel<f64>;
pub type ThermalState = collisions::ThermalState<f64>;
