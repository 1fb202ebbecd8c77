//! Quasiparticle picture beyond weak condensation, in one dimension.
//!
//! The condensate `φ₀` solves the 1D Gross–Pitaevskii equation
//! `(-½∂² + ½x² + g|φ₀|²) φ₀ = μ φ₀` with `∫|φ₀|² = N₀`. Everything is
//! expanded in the first `n_basis` oscillator eigenfunctions; nonlinear
//! matrix elements use a Gauss–Hermite rule that is exact for the products
//! involved, so the `g = 0` limit reproduces the bare oscillator to rounding.
//!
//! Bogoliubov–de Gennes modes follow from the symmetric reduction
//! `S (H - μ + 2gφ²) S w = ω̃² w` with `S = (H - μ)^{1/2}`. Mode 0 is the
//! condensate orbital itself (`u = φ₀/√N₀`, `v = 0`, `ω̃ = 0`); modes
//! `k ≥ 1` carry `Σ_n (|u_kn|² - |v_kn|²) = 1`.
//!
//! Laser couplings become `η̃_ls = Σ_s' η_ls' u_ss'` and `ζ̃_ls = Σ_s' η_ls' v_ss'`,
//! and the quasiparticle rates are
//!
//! ```text
//! Γ_{n←m} = Ω²/(2γ) ∫W { |Σ_l γ η̃*_ln(k) η̃_lm(k_L) / (δ - l + ω̃_m + i(γR_ml + γ_L))|² (N_n + 1 - δ_nm)
//!                       + |Σ_l γ ζ̃_ln(k) ζ̃*_lm(k_L) / (δ - l - ω̃_m + i(γR_ml + γ_L))|² (N_n - δ_nm) }
//! R_ml     = ∫W [ Σ_n' |η̃_ln'|² (N_n' + 1 - δ_n'm) + Σ_n' |ζ̃_ln'|² (N_n' - δ_n'm) ]
//! ```
//!
//! The vacuum part of `R` is closed with Bogoliubov completeness,
//! `Σ_n' (|η̃_ln'|² - |ζ̃_ln'|²) = 1`, so modes beyond the kept set count as free
//! particles exactly as in the bare rates.
//!
//! Modes are computed at zero temperature and reused at every occupation.

pub mod reference;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fc::FcTable;
use crate::rates::{PulseSpec, RateMatrix, RateOptions};
use crate::trap::{emission_quadrature, EmissionPattern};

type C64 = Complex<f64>;

/// Interaction constant of a tightly confined 1D gas, `g = 2 λ a` in units
/// of `ħω a_ho`, with `a` in axial oscillator lengths and `λ = ω_⊥/ω`.
pub fn coupling_1d(scattering_length: f64, transverse_ratio: f64) -> f64 {
    2.0 * transverse_ratio * scattering_length
}

/// Chemical potential of the 1D Thomas–Fermi profile, `μ = (3 g N₀ / 4√2)^{2/3}`.
pub fn thomas_fermi_mu(n0: f64, g: f64) -> f64 {
    (3.0 * g * n0 / (4.0 * std::f64::consts::SQRT_2)).powf(2.0 / 3.0)
}

/// Oscillator eigenfunctions `ψ_0(x) … ψ_{n-1}(x)` by the stable three-term recurrence.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
    out
}

/// Gauss–Hermite nodes with weights for `∫ f(x) dx`, i.e. the classical
/// weights times `e^{x²}`. Exact when `f` is a polynomial of degree
/// `< 2n` times `e^{-x²}`.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes
        .into_iter()
        .map(|x| {
            // Christoffel weight: 1 / Σ_k ψ_k(x)²
            let s: f64 = hermite_functions(n, x).iter().map(|v| v * v).sum();
            (x, 1.0 / s)
        })
        .collect()
}

/// Quadrature for `∫ ψ_i ψ_j φ² dx` with `φ` in the span of `n_basis` functions.
struct Quartic {
    /// `psi[(q, n)]`.
    psi: DMatrix<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quartic {
    fn new(n_basis: usize) -> Self {
        // x = y/√2 turns e^{-2x²} into the Gauss–Hermite weight
        let rule = gauss_hermite(2 * n_basis);
        let mut psi = DMatrix::zeros(rule.len(), n_basis);
        let mut weights = Vec::with_capacity(rule.len());
        let mut nodes = Vec::with_capacity(rule.len());
        for (q, &(y, w)) in rule.iter().enumerate() {
            let x = y / std::f64::consts::SQRT_2;
            nodes.push(x);
            for (n, v) in hermite_functions(n_basis, x).into_iter().enumerate() {
                psi[(q, n)] = v;
            }
            weights.push(w / std::f64::consts::SQRT_2);
        }
        Self { psi, nodes, weights }
    }

    /// `V_ij = ∫ ψ_i ψ_j φ²` for `φ = Σ_n c_n ψ_n`.
    fn density_matrix(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let phi = &self.psi * c;
        let mut weighted = self.psi.clone();
        for q in 0..weighted.nrows() {
            let f = self.weights[q] * phi[q] * phi[q];
            weighted.row_mut(q).scale_mut(f);
        }
        self.psi.transpose() * weighted
    }

    /// `∫ ψ_n f dx` for a function sampled at the nodes.
    fn project(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let n = self.psi.ncols();
        let mut out = DVector::zeros(n);
        for (q, &x) in self.nodes.iter().enumerate() {
            let fx = self.weights[q] * f(x);
            for k in 0..n {
                out[k] += fx * self.psi[(q, k)];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CondensateMode {
    /// Imaginary-time relaxation of the full Gross–Pitaevskii equation.
    Gpe,
    /// Closed-form inverted parabola, kinetic energy neglected.
    ThomasFermi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondensateOptions {
    /// Oscillator functions in the expansion.
    pub n_basis: usize,
    /// Spacing of the uniform output grid.
    pub grid_step: f64,
    /// Target for `‖(H_GP - μ) φ₀‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CondensateOptions {
    fn default() -> Self {
        Self { n_basis: 64, grid_step: 0.02, tolerance: 1e-7, max_iterations: 5_000 }
    }
}

/// Condensate ground state on a uniform grid and in the oscillator basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensateProfile {
    pub mode: CondensateMode,
    pub n0: f64,
    pub g: f64,
    pub mu: f64,
    /// Uniform grid in oscillator lengths.
    pub grid: Vec<f64>,
    /// `φ₀` on `grid`, normalized to `N₀`.
    pub phi0: Vec<f64>,
    /// `φ₀ = Σ_n c_n ψ_n`; `Σ c_n² = N₀` in GPE mode.
    pub coefficients: Vec<f64>,
    /// `‖(H_GP - μ) φ₀‖` in the basis.
    pub residual: f64,
}

impl CondensateProfile {
    pub fn n_basis(&self) -> usize {
        self.coefficients.len()
    }

    /// Trapezoid integral of `|φ₀|²` over the grid.
    pub fn grid_norm(&self) -> f64 {
        let h = self.grid[1] - self.grid[0];
        h * self.phi0.iter().map(|v| v * v).sum::<f64>()
    }
}

fn uniform_grid(half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).ceil() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

fn gp_hamiltonian(quad: &Quartic, c: &DVector<f64>, g: f64) -> DMatrix<f64> {
    let n = c.len();
    let mut h = quad.density_matrix(c) * g;
    for k in 0..n {
        h[(k, k)] += k as f64 + 0.5;
    }
    h
}

/// Flips `c` so its largest component is positive.
fn fix_sign(c: &mut DVector<f64>) {
    let big = c.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    if big < 0.0 {
        c.neg_mut();
    }
}

/// Ground state of `N₀` atoms with 1D coupling `g ≥ 0`.
pub fn solve_condensate(n0: f64, g: f64, mode: CondensateMode, options: &CondensateOptions) -> Result<CondensateProfile> {
    if !(n0 > 0.0) {
        return Err(invalid("n0", "condensate number must be positive"));
    }
    if !(g >= 0.0) || !g.is_finite() {
        return Err(invalid("g", format!("must be finite and non-negative, got {g}")));
    }
    if options.n_basis < 2 {
        return Err(invalid("n_basis", "need at least two oscillator functions"));
    }
    if !(options.grid_step > 0.0) {
        return Err(invalid("grid_step", "must be positive"));
    }
    let nb = options.n_basis;
    let quad = Quartic::new(nb);
    let reach = (2.0 * nb as f64 + 1.0).sqrt();
    match mode {
        CondensateMode::ThomasFermi => {
            if g == 0.0 {
                return Err(invalid("g", "Thomas–Fermi profile needs a positive coupling"));
            }
            let mu = thomas_fermi_mu(n0, g);
            let density = |x: f64| ((mu - 0.5 * x * x) / g).max(0.0);
            let grid = uniform_grid(reach.max((2.0 * mu).sqrt()) + 6.0, options.grid_step);
            let mut phi0: Vec<f64> = grid.iter().map(|&x| density(x).sqrt()).collect();
            // the kink limits trapezoid accuracy; renormalize on the grid
            let norm = options.grid_step * phi0.iter().map(|v| v * v).sum::<f64>();
            let s = (n0 / norm).sqrt();
            phi0.iter_mut().for_each(|v| *v *= s);
            let coefficients = quad.project(|x| density(x).sqrt()).iter().copied().collect();
            Ok(CondensateProfile { mode, n0, g, mu, grid, phi0, coefficients, residual: f64::NAN })
        }
        CondensateMode::Gpe => {
            let mut c = if g == 0.0 {
                let mut c = DVector::zeros(nb);
                c[0] = 1.0;
                c
            } else {
                let mu = thomas_fermi_mu(n0, g);
                quad.project(|x| ((mu - 0.5 * x * x) / g).max(0.0).sqrt() + 1e-3 * (-0.5 * x * x).exp())
            };
            c *= n0.sqrt() / c.norm();
            // relax until the residual stops improving, keep the best iterate
            let mut tau = 1.0;
            let mut best = (f64::INFINITY, 0.0, c.clone());
            let mut since = 0;
            for _ in 0..options.max_iterations {
                let h = gp_hamiltonian(&quad, &c, g);
                let hc = &h * &c;
                let mu = c.dot(&hc) / n0;
                let residual = (&hc - &c * mu).norm();
                if residual < 0.99 * best.0 {
                    best = (residual, mu, c.clone());
                    since = 0;
                } else {
                    since += 1;
                }
                if since >= 30 {
                    if best.0 < options.tolerance || tau < 1e-3 {
                        break;
                    }
                    tau *= 0.5;
                    since = 0;
                }
                let eig = SymmetricEigen::new(h);
                let lo = eig.eigenvalues.min();
                let coords = eig.eigenvectors.transpose() * &c;
                let damped = DVector::from_iterator(
                    nb,
                    coords.iter().zip(eig.eigenvalues.iter()).map(|(a, &e)| a * (-tau * (e - lo)).exp()),
                );
                c = &eig.eigenvectors * damped;
                c *= n0.sqrt() / c.norm();
            }
            let (residual, mu, mut c) = best;
            if !(residual < options.tolerance) {
                return Err(Error::NoConvergence(format!(
                    "GPE relaxation for N0 = {n0}, g = {g} stalled at residual {residual:e}"
                )));
            }
            fix_sign(&mut c);
            let tail = c[nb - 1].abs().max(c[nb - 2].abs()) / n0.sqrt();
            if tail > 1e-6 {
                return Err(Error::NoConvergence(format!(
                    "condensate not resolved by {nb} oscillator functions (tail amplitude {tail:e})"
                )));
            }
            let grid = uniform_grid(reach + 6.0, options.grid_step);
            let phi0 = grid
                .iter()
                .map(|&x| hermite_functions(nb, x).iter().zip(c.iter()).map(|(p, a)| p * a).sum())
                .collect();
            Ok(CondensateProfile { mode, n0, g, mu, grid, phi0, coefficients: c.iter().copied().collect(), residual })
        }
    }
}

/// Quasiparticle modes in the bare oscillator basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdgModeSet {
    pub n0: f64,
    pub g: f64,
    pub mu: f64,
    /// `ω̃_k` in units of `ω`; `ω̃_0 = 0` is the condensate.
    pub omega_tilde: Vec<f64>,
    /// `u[k][n] = ⟨ψ_n|u_k⟩`.
    pub u: Vec<Vec<C64>>,
    pub v: Vec<Vec<C64>>,
}

impl BdgModeSet {
    pub fn n_modes(&self) -> usize {
        self.omega_tilde.len()
    }

    pub fn n_basis(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    /// `Σ_n (|u_kn|² - |v_kn|²)`.
    pub fn norm(&self, k: usize) -> f64 {
        self.u[k].iter().map(|z| z.norm_sqr()).sum::<f64>() - self.v[k].iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Free-particle modes `u = δ`, `v = 0`, `ω̃_k = k`.
    pub fn bare(n_modes: usize, n_basis: usize) -> Self {
        let unit = |k: usize| (0..n_basis).map(|n| C64::new(if n == k { 1.0 } else { 0.0 }, 0.0)).collect();
        Self {
            n0: 0.0,
            g: 0.0,
            mu: 0.5,
            omega_tilde: (0..n_modes).map(|k| k as f64).collect(),
            u: (0..n_modes).map(unit).collect(),
            v: vec![vec![C64::new(0.0, 0.0); n_basis]; n_modes],
        }
    }
}

/// Lowest `n_modes` Bogoliubov–de Gennes modes of a GPE ground state.
pub fn solve_bdg(profile: &CondensateProfile, n_modes: usize) -> Result<BdgModeSet> {
    if profile.mode != CondensateMode::Gpe {
        return Err(Error::Unsupported(
            "Bogoliubov modes need a stationary GPE profile; the Thomas–Fermi parabola is not one".into(),
        ));
    }
    let nb = profile.n_basis();
    if n_modes == 0 || n_modes > nb {
        return Err(invalid("n_modes", format!("must be in 1..={nb}, got {n_modes}")));
    }
    let c = DVector::from_column_slice(&profile.coefficients);
    let quad = Quartic::new(nb);
    let g = profile.g;
    let dens = quad.density_matrix(&c) * g;
    let mut l_minus = dens.clone();
    for k in 0..nb {
        l_minus[(k, k)] += k as f64 + 0.5 - profile.mu;
    }
    let l_plus = &l_minus + &dens * 2.0;

    let eig = SymmetricEigen::new(l_minus.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let lowest = eig.eigenvalues.min();
    if lowest < -1e-8 * scale {
        return Err(Error::Eigen(format!(
            "H - μ has eigenvalue {lowest:e}; the profile is not the ground state"
        )));
    }
    let sqrt_vals = DVector::from_iterator(nb, eig.eigenvalues.iter().map(|&e| e.max(0.0).sqrt()));
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let m = &s * &l_plus * &s;
    let m = (&m + m.transpose()) * 0.5;
    let modes = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| modes.eigenvalues[a].total_cmp(&modes.eigenvalues[b]));
    let mscale = modes.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if modes.eigenvalues[order[0]].abs() > 1e-8 * mscale {
        return Err(Error::Eigen(format!(
            "missing zero mode: lowest ω̃² = {:e}",
            modes.eigenvalues[order[0]]
        )));
    }

    let zero = C64::new(0.0, 0.0);
    let mut omega_tilde = vec![0.0];
    let mut u = vec![c.iter().map(|&x| C64::new(x / profile.n0.sqrt(), 0.0)).collect::<Vec<_>>()];
    let mut v = vec![vec![zero; nb]];
    for &idx in order.iter().skip(1).take(n_modes - 1) {
        let w2 = modes.eigenvalues[idx];
        if !(w2 > 0.0) {
            return Err(Error::Eigen(format!("non-positive mode energy squared {w2:e}")));
        }
        let w = w2.sqrt();
        let vec = modes.eigenvectors.column(idx).into_owned();
        // f = u + v = S w / √ω̃, h = u - v = (L + 2gφ²) f / ω̃
        let f = &s * &vec / w.sqrt();
        let h = &l_plus * &f / w;
        let mut uk: DVector<f64> = (&f + &h) * 0.5;
        let mut vk: DVector<f64> = (&f - &h) * 0.5;
        let big = uk.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if big < 0.0 {
            uk.neg_mut();
            vk.neg_mut();
        }
        let norm = uk.norm_squared() - vk.norm_squared();
        if !(norm > 0.0) {
            return Err(Error::Eigen(format!("mode with ω̃ = {w} has non-positive norm {norm:e}")));
        }
        omega_tilde.push(w);
        u.push(uk.iter().map(|&x| C64::new(x, 0.0)).collect());
        v.push(vk.iter().map(|&x| C64::new(x, 0.0)).collect());
    }
    Ok(BdgModeSet { n0: profile.n0, g, mu: profile.mu, omega_tilde, u, v })
}

/// Quasiparticle Franck–Condon coefficients for one wavevector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiFcTable {
    pub kappa: f64,
    pub rows: usize,
    pub n_modes: usize,
    eta: Vec<C64>,
    zeta: Vec<C64>,
}

impl QuasiFcTable {
    /// `η̃_ls`.
    #[inline]
    pub fn eta_tilde(&self, l: usize, s: usize) -> C64 {
        self.eta[l * self.n_modes + s]
    }

    /// `ζ̃_ls`.
    #[inline]
    pub fn zeta_tilde(&self, l: usize, s: usize) -> C64 {
        self.zeta[l * self.n_modes + s]
    }

    /// `self + a·other`, for coherent sums over beams.
    fn add_scaled(&mut self, other: &Self, a: f64) {
        self.eta.iter_mut().zip(&other.eta).for_each(|(x, y)| *x += y * a);
        self.zeta.iter_mut().zip(&other.zeta).for_each(|(x, y)| *x += y * a);
    }
}

/// Transforms a bare table `η_ls'` (columns = oscillator basis) to quasiparticle modes.
pub fn quasi_fc(modes: &BdgModeSet, table: &FcTable<f64>) -> Result<QuasiFcTable> {
    let nb = modes.n_basis();
    if table.cols != nb {
        return Err(invalid("table", format!("has {} columns, modes use {nb} basis functions", table.cols)));
    }
    let nm = modes.n_modes();
    let mut eta = vec![C64::new(0.0, 0.0); table.rows * nm];
    let mut zeta = eta.clone();
    for l in 0..table.rows {
        let row: Vec<C64> = (0..nb).map(|n| table.get(l, n)).collect();
        for s in 0..nm {
            let (mut a, mut b) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for n in 0..nb {
                a += row[n] * modes.u[s][n];
                b += row[n] * modes.v[s][n];
            }
            eta[l * nm + s] = a;
            zeta[l * nm + s] = b;
        }
    }
    Ok(QuasiFcTable { kappa: table.kappa, rows: table.rows, n_modes: nm, eta, zeta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiRateConfig {
    /// Laser bandwidth `γ_L` in units of `ω`.
    pub gamma_l: f64,
}

impl Default for QuasiRateConfig {
    fn default() -> Self {
        Self { gamma_l: 1.0 }
    }
}

/// Rates split into the normal (`η̃`) and anomalous (`ζ̃`) branches.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRates {
    pub normal: RateMatrix<f64>,
    pub anomalous: RateMatrix<f64>,
}

impl BranchRates {
    pub fn total(&self) -> RateMatrix<f64> {
        let mut out = self.normal.clone();
        out.gamma_rate.iter_mut().zip(&self.anomalous.gamma_rate).for_each(|(a, b)| *a += b);
        out
    }
}

/// Precomputed quasiparticle couplings for one pulse on a 1D trap.
#[derive(Debug, Clone)]
pub struct QuasiRateEngine {
    modes: BdgModeSet,
    pulse: PulseSpec<f64>,
    config: QuasiRateConfig,
    lcap: usize,
    /// Coherent beam sum `Σ_b A_b η̃(κ_b)`.
    absorption: QuasiFcTable,
    /// Emission directions grouped by `κ = η cos θ`, with summed weights.
    nodes: Vec<(f64, QuasiFcTable)>,
}

impl QuasiRateEngine {
    /// Beams enter through their projection on the trap axis `z`.
    pub fn new(
        modes: &BdgModeSet,
        eta: f64,
        pulse: &PulseSpec<f64>,
        pattern: &EmissionPattern<f64>,
        options: RateOptions,
        config: QuasiRateConfig,
    ) -> Result<Self> {
        pulse.validate()?;
        if !(eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(config.gamma_l >= 0.0) {
            return Err(invalid("gamma_l", "must be non-negative"));
        }
        let nm = modes.n_modes();
        let nb = modes.n_basis();
        let margin = options.excited_margin.unwrap_or_else(|| (4.0 * eta * eta).ceil() as usize);
        let lcap = nm - 1 + margin;
        let rows = lcap + 1;
        let mut absorption: Option<QuasiFcTable> = None;
        for beam in &pulse.beams.beams {
            let t = quasi_fc(modes, &FcTable::new(rows, nb, beam.kappa * beam.direction[2]))?;
            match absorption.as_mut() {
                None => {
                    let mut z = t.clone();
                    z.eta.iter_mut().for_each(|x| *x *= beam.amplitude);
                    z.zeta.iter_mut().for_each(|x| *x *= beam.amplitude);
                    absorption = Some(z);
                }
                Some(acc) => acc.add_scaled(&t, beam.amplitude),
            }
        }
        let absorption = absorption.ok_or_else(|| invalid("beams", "pulse has no beams"))?;
        let mut grouped: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for node in emission_quadrature(pattern)? {
            let k = eta * node.direction[2];
            let e = grouped.entry((k * 1e11).round() as i64).or_insert((0.0, k));
            e.0 += node.weight;
        }
        let nodes = grouped
            .into_values()
            .map(|(w, k)| Ok((w, quasi_fc(modes, &FcTable::new(rows, nb, k))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { modes: modes.clone(), pulse: pulse.clone(), config, lcap, absorption, nodes })
    }

    pub fn modes(&self) -> &BdgModeSet {
        &self.modes
    }

    pub fn excited_cap(&self) -> usize {
        self.lcap
    }

    fn check(&self, occ: &[f64]) -> Result<()> {
        if occ.len() != self.modes.n_modes() {
            return Err(invalid("occupation", format!("{} modes given, expected {}", occ.len(), self.modes.n_modes())));
        }
        if occ.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("occupation", "must be non-negative"));
        }
        Ok(())
    }

    /// `R_ml` as `widths[m][l]`.
    pub fn widths(&self, occ: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check(occ)?;
        let nm = self.modes.n_modes();
        let rows = self.lcap + 1;
        let mut base = vec![0.0; rows];
        let mut own = vec![0.0; rows * nm];
        for (w, t) in &self.nodes {
            for l in 0..rows {
                let mut acc = 1.0;
                for s in 0..nm {
                    let a = t.eta_tilde(l, s).norm_sqr();
                    let b = t.zeta_tilde(l, s).norm_sqr();
                    acc += b + (a + b) * occ[s];
                    own[l * nm + s] += w * (a + b);
                }
                base[l] += w * acc;
            }
        }
        Ok((0..nm).map(|m| (0..rows).map(|l| base[l] - own[l * nm + m]).collect()).collect())
    }

    /// Branch-resolved `Γ_{n←m}` at quasiparticle occupations `occ`.
    pub fn branch_rates(&self, occ: &[f64]) -> Result<BranchRates> {
        let widths = self.widths(occ)?;
        let nm = self.modes.n_modes();
        let rows = self.lcap + 1;
        let p = &self.pulse;
        let prefactor = p.rabi * p.rabi / (2.0 * p.gamma);
        let mut normal = vec![0.0; nm * nm];
        let mut anomalous = vec![0.0; nm * nm];
        let zero = C64::new(0.0, 0.0);
        for m in 0..nm {
            let wm = self.modes.omega_tilde[m];
            let mut ce = vec![zero; rows];
            let mut cz = vec![zero; rows];
            for l in 0..rows {
                let width = p.gamma * widths[m][l] + self.config.gamma_l;
                let lf = l as f64;
                ce[l] = self.absorption.eta_tilde(l, m) * p.gamma / C64::new(p.detuning - lf + wm, width);
                cz[l] = self.absorption.zeta_tilde(l, m).conj() * p.gamma / C64::new(p.detuning - lf - wm, width);
            }
            for (w, t) in &self.nodes {
                for n in 0..nm {
                    let (mut a, mut b) = (zero, zero);
                    for l in 0..rows {
                        a += ce[l] * t.eta_tilde(l, n).conj();
                        b += cz[l] * t.zeta_tilde(l, n);
                    }
                    normal[n * nm + m] += w * a.norm_sqr();
                    anomalous[n * nm + m] += w * b.norm_sqr();
                }
            }
        }
        for n in 0..nm {
            for m in 0..nm {
                let d = if n == m { 1.0 } else { 0.0 };
                normal[n * nm + m] *= prefactor * (occ[n] + 1.0 - d);
                // N_n - 1 < 0 on the diagonal would be a negative rate
                anomalous[n * nm + m] *= prefactor * (occ[n] - d).max(0.0);
            }
        }
        let wrap = |gamma_rate| RateMatrix { n: nm, gamma_rate, occupation: occ.to_vec() };
        Ok(BranchRates { normal: wrap(normal), anomalous: wrap(anomalous) })
    }

    /// `Γ_{n←m}` summed over both branches.
    pub fn rates(&self, occ: &[f64]) -> Result<RateMatrix<f64>> {
        Ok(self.branch_rates(occ)?.total())
    }
}

/// Quasiparticle Bose–Einstein occupations at temperature `t`; mode 0 holds the condensate.
pub fn quasi_thermal_occupations(modes: &BdgModeSet, t: f64) -> Vec<f64> {
    modes
        .omega_tilde
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            if k == 0 {
                modes.n0
            } else if t <= 0.0 {
                0.0
            } else {
                1.0 / (w / t).exp_m1()
            }
        })
        .collect()
}

/// `F(T) = Σ_n ω̃_n Ṅ_n / E'(T)` with `E = Σ_n ω̃_n N_n` on the thermal
/// quasiparticle state. With `dark_vacuum` nothing leaves the condensate mode.
pub fn quasi_temperature_flow(engine: &QuasiRateEngine, t: f64, dark_vacuum: bool) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("temperature", "must be non-negative"));
    }
    let modes = engine.modes();
    let occ = quasi_thermal_occupations(modes, t);
    let mut rates = engine.rates(&occ)?;
    if dark_vacuum {
        for d in 0..rates.n {
            rates.gamma_rate[d * rates.n] = 0.0;
        }
    }
    let flux = rates.population_flux(&occ);
    let power: f64 = flux.iter().zip(&modes.omega_tilde).map(|(f, w)| f * w).sum();
    if power == 0.0 {
        return Ok(0.0);
    }
    let slope: f64 = occ
        .iter()
        .zip(&modes.omega_tilde)
        .skip(1)
        .map(|(n, w)| w * w * n * (n + 1.0) / (t * t))
        .sum();
    Ok(if slope > 0.0 { power / slope } else { power.signum() * f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_functions_are_orthonormal() {
        let rule = gauss_hermite(40);
        for i in 0..20 {
            for j in 0..20 {
                let s: f64 = rule.iter().map(|&(x, w)| {
                    let h = hermite_functions(20, x);
                    w * h[i] * h[j]
                }).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "({i},{j}) {s}");
            }
        }
    }

    #[test]
    fn quartic_rule_is_exact_for_ground_state() {
        // ∫ψ_0⁴ = 1/√(2π)
        let q = Quartic::new(8);
        let mut c = DVector::zeros(8);
        c[0] = 1.0;
        let v = q.density_matrix(&c);
        assert!((v[(0, 0)] - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn thomas_fermi_closed_form() {
        let (n0, g) = (1e3, 0.1);
        let mu = thomas_fermi_mu(n0, g);
        let r = (2.0 * mu).sqrt();
        assert!(((4.0 / 3.0) * mu * r / g - n0).abs() < 1e-9 * n0);
    }
}
