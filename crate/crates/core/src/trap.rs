//! Harmonic trap level structure, laser beam geometry and the angular
//! quadrature of the fluorescence pattern.
//!
//! Internal units are trap units: `ħ = ω = 1`, lengths in the zero-point
//! amplitude `x_zp = sqrt(ħ / 2mω)`. A beam of Lamb–Dicke parameter `η`
//! propagating along a trap axis then enters the Franck–Condon factors with
//! `κ = η`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::special::gauss_legendre;

/// Trap dimensionality. In one dimension the trap axis is `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "3")]
    Three,
}

impl Dimension {
    pub fn from_int(d: u32) -> Result<Self> {
        match d {
            1 => Ok(Self::One),
            3 => Ok(Self::Three),
            other => Err(invalid("dimension", format!("must be 1 or 3, got {other}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::One => 1,
            Self::Three => 3,
        }
    }
}

/// Geometry of the isotropic harmonic trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec<T> {
    pub dimension: Dimension,
    /// Trap frequency in rad/s, only used when converting to SI time.
    pub omega: T,
    /// Lamb–Dicke parameter `η = sqrt(E_R / ħω)`.
    pub eta: T,
    /// Number of energy shells kept, `n = 0..n_shells`.
    pub n_shells: usize,
}

impl<T: Real> TrapSpec<T> {
    pub fn new(dimension: Dimension, omega: T, eta: T, n_shells: usize) -> Result<Self> {
        let spec = Self { dimension, omega, eta, n_shells };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(invalid("eta", format!("must be positive and finite, got {}", self.eta)));
        }
        if self.n_shells == 0 {
            return Err(invalid("n_shells", "must be at least 1"));
        }
        if !(self.omega > T::zero()) {
            return Err(invalid("omega", format!("must be positive, got {}", self.omega)));
        }
        Ok(())
    }

    /// Recoil energy in units of `ħω`; equal to `η²`.
    pub fn recoil_energy(&self) -> T {
        self.eta * self.eta
    }
}

/// Energy shells of the isotropic oscillator with their degeneracies and,
/// in three dimensions, the Cartesian levels that make up each shell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellBasis {
    pub dimension: Dimension,
    /// Degeneracy of each shell.
    pub degeneracy: Vec<usize>,
    /// All levels, ordered shell by shell. In 1D each level is `[0, 0, n]`.
    pub levels: Vec<[usize; 3]>,
    /// `levels[shell_offset[n]..shell_offset[n + 1]]` belong to shell `n`.
    pub shell_offset: Vec<usize>,
}

impl ShellBasis {
    pub fn n_shells(&self) -> usize {
        self.degeneracy.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Energy of shell `n` in units of `ħω` (zero-point energy dropped).
    pub fn shell_energy(&self, n: usize) -> f64 {
        n as f64
    }

    pub fn shell_levels(&self, n: usize) -> &[[usize; 3]] {
        &self.levels[self.shell_offset[n]..self.shell_offset[n + 1]]
    }

    /// Shell index of a level.
    pub fn shell_of(level: &[usize; 3]) -> usize {
        level[0] + level[1] + level[2]
    }

    /// Position of a level in [`Self::levels`], if it lies inside the basis.
    pub fn level_index(&self, level: &[usize; 3]) -> Option<usize> {
        let shell = Self::shell_of(level);
        if shell >= self.n_shells() {
            return None;
        }
        match self.dimension {
            Dimension::One => (level[0] == 0 && level[1] == 0).then_some(shell),
            Dimension::Three => {
                // Within a shell, levels are ordered by descending nx, then descending ny.
                let nx = level[0];
                let before: usize = (nx + 1..=shell).map(|a| shell - a + 1).sum();
                Some(self.shell_offset[shell] + before + (shell - nx - level[1]))
            }
        }
    }
}

/// Shell degeneracy of the isotropic oscillator.
pub fn shell_degeneracy(dimension: Dimension, n: usize) -> usize {
    match dimension {
        Dimension::One => 1,
        Dimension::Three => (n + 1) * (n + 2) / 2,
    }
}

/// Enumerates shells, degeneracies and the level index.
pub fn build_shells<T: Real>(spec: &TrapSpec<T>) -> Result<ShellBasis> {
    spec.validate()?;
    Ok(shells(spec.dimension, spec.n_shells))
}

pub(crate) fn shells(dimension: Dimension, n_shells: usize) -> ShellBasis {
    let mut degeneracy = Vec::with_capacity(n_shells);
    let mut levels = Vec::new();
    let mut shell_offset = vec![0];
    for n in 0..n_shells {
        degeneracy.push(shell_degeneracy(dimension, n));
        match dimension {
            Dimension::One => levels.push([0, 0, n]),
            Dimension::Three => {
                for nx in (0..=n).rev() {
                    for ny in (0..=n - nx).rev() {
                        levels.push([nx, ny, n - nx - ny]);
                    }
                }
            }
        }
        shell_offset.push(levels.len());
    }
    ShellBasis { dimension, degeneracy, levels, shell_offset }
}

/// A single laser beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam<T> {
    /// Unit propagation direction.
    pub direction: [T; 3],
    /// Relative Rabi amplitude `A_d` (may be negative).
    pub amplitude: T,
    /// `k_L · x_zp`, i.e. the Lamb–Dicke parameter of the beam.
    pub kappa: T,
}

impl<T: Real> Beam<T> {
    /// Beam along Cartesian axis `axis` (0 = x, 1 = y, 2 = z).
    pub fn along_axis(axis: usize, amplitude: T, kappa: T) -> Self {
        let mut direction = [T::zero(); 3];
        direction[axis] = T::one();
        Self { direction, amplitude, kappa }
    }

    /// Component of the wavevector along each axis.
    pub fn kappa_vector(&self) -> [T; 3] {
        [self.direction[0] * self.kappa, self.direction[1] * self.kappa, self.direction[2] * self.kappa]
    }

    /// Axis index and sign if the beam is aligned with a coordinate axis.
    pub fn axis(&self) -> Option<(usize, T)> {
        let tol = T::of(1e-12);
        (0..3).find_map(|u| {
            let others_zero = (0..3).filter(|&v| v != u).all(|v| self.direction[v].abs() < tol);
            (others_zero && (self.direction[u].abs() - T::one()).abs() < tol)
                .then(|| (u, self.direction[u].signum()))
        })
    }
}

/// Set of phase-coherent absorption beams acting during one pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSet<T> {
    pub beams: Vec<Beam<T>>,
}

impl<T: Real> BeamSet<T> {
    pub fn new(beams: Vec<Beam<T>>) -> Result<Self> {
        let set = Self { beams };
        set.validate()?;
        Ok(set)
    }

    /// Three orthogonal beams along `x`, `y`, `z` with amplitudes `1, 1, a_z`.
    pub fn xyz(eta: T, a_z: T) -> Self {
        Self {
            beams: vec![
                Beam::along_axis(0, T::one(), eta),
                Beam::along_axis(1, T::one(), eta),
                Beam::along_axis(2, a_z, eta),
            ],
        }
    }

    /// Single beam along the 1D trap axis.
    pub fn axial(eta: T, amplitude: T) -> Self {
        Self { beams: vec![Beam::along_axis(2, amplitude, eta)] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beams.is_empty() {
            return Err(invalid("beams", "at least one beam is required"));
        }
        for b in &self.beams {
            let norm = b.direction.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt();
            if (norm - T::one()).abs() > T::of(1e-9) {
                return Err(invalid("beams.direction", format!("must be a unit vector, norm {norm}")));
            }
            if !b.amplitude.is_finite() || !b.kappa.is_finite() || b.kappa < T::zero() {
                return Err(invalid("beams", "amplitude and kappa must be finite, kappa >= 0"));
            }
        }
        Ok(())
    }
}

/// Angular distribution `W(θ, φ)` of spontaneously emitted photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PatternKind<T> {
    Isotropic,
    /// `W = 3/(8π) (1 - (n·axis)²)` for a dipole oscillating along `axis`.
    Dipole { axis: [T; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionPattern<T> {
    pub kind: PatternKind<T>,
    /// Number of Gauss–Legendre nodes in `cos θ`; the `φ` grid uses the same count.
    pub quadrature_order: usize,
}

impl<T: Real> EmissionPattern<T> {
    pub fn isotropic(order: usize) -> Self {
        Self { kind: PatternKind::Isotropic, quadrature_order: order }
    }

    pub fn dipole_z(order: usize) -> Self {
        Self { kind: PatternKind::Dipole { axis: [T::zero(), T::zero(), T::one()] }, quadrature_order: order }
    }

    /// Pattern density at unit direction `n`.
    pub fn density(&self, n: [T; 3]) -> T {
        let four_pi = T::of(4.0) * T::PI();
        match self.kind {
            PatternKind::Isotropic => T::one() / four_pi,
            PatternKind::Dipole { axis } => {
                let c = n[0] * axis[0] + n[1] * axis[1] + n[2] * axis[2];
                T::of(3.0) / (T::of(2.0) * four_pi) * (T::one() - c * c)
            }
        }
    }
}

impl<T: Real> Default for EmissionPattern<T> {
    fn default() -> Self {
        Self::isotropic(16)
    }
}

/// One quadrature node on the unit sphere. `weight` already includes `W(θ,φ) sinθ dθ dφ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode<T> {
    pub direction: [T; 3],
    pub weight: T,
}

/// Product rule: Gauss–Legendre in `cos θ` times the uniform midpoint rule in `φ`.
pub fn emission_quadrature<T: Real>(pattern: &EmissionPattern<T>) -> Result<Vec<SphereNode<T>>> {
    let order = pattern.quadrature_order;
    if order < 4 {
        return Err(invalid("quadrature_order", format!("must be >= 4, got {order}")));
    }
    if let PatternKind::Dipole { axis } = pattern.kind {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if (norm - T::one()).abs() > T::of(1e-9) {
            return Err(invalid("pattern.axis", "dipole axis must be a unit vector"));
        }
    }
    let gl = gauss_legendre::<T>(order);
    let two_pi = T::of(2.0) * T::PI();
    let dphi = two_pi / T::of_usize(order);
    let mut nodes = Vec::with_capacity(order * order);
    for &(c, w) in &gl {
        let s = (T::one() - c * c).max(T::zero()).sqrt();
        for j in 0..order {
            let phi = (T::of_usize(j) + T::of(0.5)) * dphi;
            let dir = [s * phi.cos(), s * phi.sin(), c];
            nodes.push(SphereNode { direction: dir, weight: w * dphi * pattern.density(dir) });
        }
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shell_and_level_counts() {
        // energies 0..=20 hold 1771 levels; 20 shells (0..=19) hold 1540
        let spec = TrapSpec::new(Dimension::Three, 1.0, 2.0, 21).unwrap();
        assert_eq!(build_shells(&spec).unwrap().n_levels(), 1771);
        assert_eq!(shells(Dimension::Three, 20).n_levels(), 1540);
        let spec = TrapSpec::new(Dimension::Three, 1.0, 4.0, 33).unwrap();
        assert_eq!(build_shells(&spec).unwrap().n_levels(), 6545);
    }

    #[test]
    fn one_dimensional_shells_are_non_degenerate() {
        let spec = TrapSpec::new(Dimension::One, 1.0, 1.0, 5).unwrap();
        let basis = build_shells(&spec).unwrap();
        assert_eq!(basis.degeneracy, vec![1; 5]);
        assert_eq!((0..5).map(|n| basis.shell_energy(n)).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn level_index_is_a_bijection() {
        let basis = shells(Dimension::Three, 9);
        for (i, l) in basis.levels.iter().enumerate() {
            assert_eq!(basis.level_index(l), Some(i));
            assert_eq!(ShellBasis::shell_of(l), basis.shell_levels(ShellBasis::shell_of(l))[0].iter().sum());
        }
        assert_eq!(basis.level_index(&[9, 0, 0]), None);
    }

    #[test]
    fn recoil_energy_is_eta_squared() {
        let spec = TrapSpec::new(Dimension::Three, 1.0, 2.5_f64, 3).unwrap();
        assert_eq!(spec.recoil_energy(), 6.25);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(TrapSpec::new(Dimension::One, 1.0, 0.0_f64, 3).is_err());
        assert!(TrapSpec::new(Dimension::One, 1.0, 1.0_f64, 0).is_err());
        assert!(Dimension::from_int(2).is_err());
        assert!(BeamSet::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn quadrature_normalization() {
        for pattern in [EmissionPattern::<f64>::isotropic(16), EmissionPattern::dipole_z(16)] {
            let nodes = emission_quadrature(&pattern).unwrap();
            let total: f64 = nodes.iter().map(|n| n.weight).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-10);
            assert!(nodes.iter().all(|n| n.weight >= 0.0));
        }
        assert!(emission_quadrature(&EmissionPattern::<f64>::isotropic(3)).is_err());
    }

    #[test]
    fn isotropic_weights_depend_only_on_theta() {
        let nodes = emission_quadrature(&EmissionPattern::<f64>::isotropic(8)).unwrap();
        for row in nodes.chunks(8) {
            assert!(row.iter().all(|n| (n.weight - row[0].weight).abs() < 1e-16));
        }
    }

    #[test]
    fn dipole_second_moment() {
        // ∫ (3/8π) sin²θ cos²θ dΩ = (3/8π)·2π·∫(1-c²)c² dc = (3/4)(2/3 - 2/5) = 1/5
        let nodes = emission_quadrature(&EmissionPattern::<f64>::dipole_z(16)).unwrap();
        let m: f64 = nodes.iter().map(|n| n.weight * n.direction[2].powi(2)).sum();
        assert_relative_eq!(m, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn beam_axis_detection() {
        let b = Beam::along_axis(1, 1.0_f64, 2.0);
        assert_eq!(b.axis(), Some((1, 1.0)));
        let s = 0.5_f64.sqrt();
        let diag = Beam { direction: [s, s, 0.0], amplitude: 1.0, kappa: 1.0 };
        assert_eq!(diag.axis(), None);
    }
}
