//! Occupation-dependent laser-cooling rates.
//!
//! After adiabatic elimination of the excited state, a weak pulse of detuning
//! `δ` moves one atom from ground level `m` to level `n` at rate
//!
//! ```text
//! Γ_{n←m} = Ω²/(2γ) ∫dΩ_k W(k) |Σ_l γ η*_ln(k) η_lm(k_L) / ([δ - (l - m)] + iγ R_ml)|² (N_n + 1 - δ_nm)
//! R_ml    = ∫dΩ_k W(k) Σ_n' |η_ln'(k)|² (N_n' + 1 - δ_n'm)
//! ```
//!
//! with `η_lm(k_L)` the coherent sum over beams and the sum over excited
//! levels `l` kept inside the modulus. Energies are in units of `ħω`.
//!
//! The expensive part depends on the occupations only through `R`, so
//! [`RateEngine::freeze`] evaluates it once and returns [`FrozenRates`], from
//! which rates at any occupation with the same widths follow in `O(n²)`.
//! Under the ergodic approximation levels in one shell share the shell's
//! occupation equally, and the level-resolved rates are averaged over
//! source levels and summed over destination levels within each shell.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fc::FcTable;
use crate::scalar::Real;
use crate::trap::{emission_quadrature, shells, BeamSet, Dimension, EmissionPattern, PatternKind, ShellBasis};

/// One laser pulse of a cooling cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec<T> {
    /// Detuning in units of the trap frequency, `δ = s·ω`.
    pub detuning: T,
    pub beams: BeamSet<T>,
    /// Rabi frequency `Ω` in units of `ω`.
    pub rabi: T,
    /// Half the single-atom spontaneous emission rate, in units of `ω`.
    pub gamma: T,
    /// Pulse length in units of `1/ω`.
    pub duration: T,
}

impl<T: Real> PulseSpec<T> {
    /// Pulse with the standard duration `2γ/Ω²`.
    pub fn new(detuning: T, beams: BeamSet<T>, rabi: T, gamma: T) -> Result<Self> {
        let duration = standard_duration(rabi, gamma);
        let p = Self { detuning, beams, rabi, gamma, duration };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.beams.validate()?;
        if !(self.gamma > T::zero()) {
            return Err(invalid("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if self.rabi < T::zero() || !self.rabi.is_finite() {
            return Err(invalid("rabi", format!("must be finite and non-negative, got {}", self.rabi)));
        }
        if !(self.duration > T::zero()) || !self.duration.is_finite() {
            return Err(invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        if !self.detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        Ok(())
    }

    /// `true` when `γ < ω` and `Ω < ω`; violating this is allowed but the
    /// rate description loses its justification.
    pub fn festina_lente(&self) -> bool {
        self.gamma < T::one() && self.rabi < T::one()
    }
}

/// `2γ/Ω²`, the pulse length giving on average one excitation per resonant atom.
pub fn standard_duration<T: Real>(rabi: T, gamma: T) -> T {
    T::of(2.0) * gamma / (rabi * rabi)
}

/// Ordered pulse sequence repeated every cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingCycle<T> {
    pub pulses: Vec<PulseSpec<T>>,
    pub repeats: usize,
}

impl<T: Real> CoolingCycle<T> {
    pub fn new(pulses: Vec<PulseSpec<T>>, repeats: usize) -> Result<Self> {
        let c = Self { pulses, repeats };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses.is_empty() {
            return Err(invalid("cycle.pulses", "a cooling cycle needs at least one pulse"));
        }
        self.pulses.iter().try_for_each(PulseSpec::validate)
    }

    /// Duration of one cycle in units of `1/ω`.
    pub fn duration(&self) -> T {
        self.pulses.iter().fold(T::zero(), |acc, p| acc + p.duration)
    }
}

/// Atoms per energy shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationState<T> {
    pub counts: Vec<T>,
}

impl<T: Real> OccupationState<T> {
    pub fn new(counts: Vec<T>) -> Result<Self> {
        if counts.iter().any(|c| !(*c >= T::zero()) || !c.is_finite()) {
            return Err(invalid("counts", "occupations must be finite and non-negative"));
        }
        Ok(Self { counts })
    }

    pub fn empty(n_shells: usize) -> Self {
        Self { counts: vec![T::zero(); n_shells] }
    }

    /// All `n` atoms in shell `shell`.
    pub fn concentrated(n_shells: usize, shell: usize, n: T) -> Self {
        let mut counts = vec![T::zero(); n_shells];
        counts[shell] = n;
        Self { counts }
    }

    pub fn from_integers(counts: &[u64]) -> Self {
        Self { counts: counts.iter().map(|&c| T::of(c as f64)).collect() }
    }

    pub fn total(&self) -> T {
        self.counts.iter().copied().sum()
    }

    /// Bare energy `Σ n N_n` in units of `ħω`.
    pub fn energy(&self) -> T {
        self.counts.iter().enumerate().map(|(n, &c)| T::of_usize(n) * c).sum()
    }

    pub fn condensate_fraction(&self) -> T {
        let total = self.total();
        if total > T::zero() {
            self.counts[0] / total
        } else {
            T::zero()
        }
    }

    /// Per-level occupation of each shell under the ergodic approximation.
    pub fn per_level(&self, basis: &ShellBasis) -> Vec<T> {
        self.counts.iter().zip(&basis.degeneracy).map(|(&c, &g)| c / T::of_usize(g)).collect()
    }
}

/// Shell-indexed transition rates `Γ_{n←m}` (units of `ω`) for one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix<T> {
    pub n: usize,
    /// Row-major, `gamma_rate[dest * n + src]`.
    pub gamma_rate: Vec<T>,
    /// Occupations the rates were evaluated at.
    pub occupation: Vec<T>,
}

impl<T: Real> RateMatrix<T> {
    #[inline]
    pub fn get(&self, dest: usize, src: usize) -> T {
        self.gamma_rate[dest * self.n + src]
    }

    /// Total rate at which an atom in shell `src` is moved to another shell.
    pub fn departure(&self, src: usize) -> T {
        (0..self.n).filter(|&d| d != src).map(|d| self.get(d, src)).sum()
    }

    /// Net rate of change of each shell population, `Σ_m Γ_{n←m}N_m - Σ_m Γ_{m←n}N_n`.
    pub fn population_flux(&self, occ: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for m in 0..self.n {
            for d in 0..self.n {
                if d == m {
                    continue;
                }
                let f = self.get(d, m) * occ[m];
                out[d] = out[d] + f;
                out[m] = out[m] - f;
            }
        }
        out
    }

    /// Rate of change of the bare energy.
    pub fn energy_flux(&self, occ: &[T]) -> T {
        self.population_flux(occ).iter().enumerate().map(|(n, &f)| T::of_usize(n) * f).sum()
    }
}

/// Shell rates with the widths frozen and the Bose factor left open:
/// `Γ_{S←M}(N) = (N_S/g_S + 1)·total[S,M] - δ_SM·diag[M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRates<T> {
    pub n: usize,
    pub degeneracy: Vec<usize>,
    /// Degeneracy-averaged bare rate, `total[dest * n + src]`.
    pub total: Vec<T>,
    /// Level-diagonal part of `total[M, M]`.
    pub diag: Vec<T>,
    /// Occupation-weighted fraction of spontaneous emission that lands outside the basis.
    pub emission_tail: T,
}

impl<T: Real> FrozenRates<T> {
    pub fn zero(basis: &ShellBasis) -> Self {
        let n = basis.n_shells();
        Self {
            n,
            degeneracy: basis.degeneracy.clone(),
            total: vec![T::zero(); n * n],
            diag: vec![T::zero(); n],
            emission_tail: T::zero(),
        }
    }

    /// Bose-enhanced rate `Γ_{dest←src}` at shell occupations `occ`.
    #[inline]
    pub fn rate(&self, dest: usize, src: usize, occ: &[T]) -> T {
        let bose = occ[dest] / T::of_usize(self.degeneracy[dest]) + T::one();
        let r = bose * self.total[dest * self.n + src];
        if dest == src {
            (r - self.diag[src]).max(T::zero())
        } else {
            r
        }
    }

    pub fn to_matrix(&self, occ: &[T]) -> RateMatrix<T> {
        let mut gamma_rate = vec![T::zero(); self.n * self.n];
        for d in 0..self.n {
            for s in 0..self.n {
                gamma_rate[d * self.n + s] = self.rate(d, s, occ);
            }
        }
        RateMatrix { n: self.n, gamma_rate, occupation: occ.to_vec() }
    }

    /// Removes every transition out of the ground shell.
    pub fn make_ground_dark(&mut self) {
        for d in 0..self.n {
            self.total[d * self.n] = T::zero();
        }
        self.diag[0] = T::zero();
    }

    /// Multiplies every rate by `factor`.
    pub fn scaled(mut self, factor: T) -> Self {
        self.total.iter_mut().for_each(|v| *v = *v * factor);
        self.diag.iter_mut().for_each(|v| *v = *v * factor);
        self
    }
}

/// Collective widths `R_ml` for every basis level `m` and every excited level
/// `l` it couples to.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthTable<T> {
    /// `entries[m]` lists `(l, R_ml)` for basis level `m`.
    pub entries: Vec<Vec<([usize; 3], T)>>,
}

impl<T: Real> WidthTable<T> {
    pub fn get(&self, m: usize, l: &[usize; 3]) -> Option<T> {
        self.entries[m].iter().find(|(k, _)| k == l).map(|&(_, r)| r)
    }
}

/// Tuning knobs of the rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateOptions {
    /// Excited levels up to shell `n_shells - 1 + margin` enter the coherent
    /// sum. `None` uses `ceil(4η²)`.
    pub excited_margin: Option<usize>,
    /// Use reflection and x↔y symmetries of the pattern and beams when they hold.
    pub exploit_symmetry: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { excited_margin: None, exploit_symmetry: true }
    }
}

/// Emission direction after folding, with per-axis `κ` components.
#[derive(Debug, Clone)]
struct EmissionNode<T> {
    weight: T,
    tables: Vec<FcTable<T>>,
}

/// Precomputed, occupation-independent data for one pulse on one basis.
#[derive(Debug, Clone)]
pub struct RateEngine<T> {
    basis: ShellBasis,
    pulse: PulseSpec<T>,
    /// Highest excited shell (3D) or level (1D) kept.
    lcap: usize,
    /// Folded emission quadrature; when `folded`, nodes cover one octant
    /// (3D) or `cos θ ≥ 0` (1D) and integrands are symmetrized over reflections.
    nodes: Vec<EmissionNode<T>>,
    folded: bool,
    /// Sources related by x↔y exchange give identical rates.
    swap_xy: bool,
    /// Real part of the combined absorption amplitude per axis, rows `0..=lcap`.
    absorption: [Option<FcTable<T>>; 3],
    /// Excited levels indexed like a shell basis up to `lcap`.
    excited: ShellBasis,
    /// `q_table[l * n_shells + S] = ∫W Σ_{n∈S} |η_ln(k)|²`.
    q_table: Vec<T>,
    pattern: EmissionPattern<T>,
    eta: T,
}

#[inline]
fn mul_neg_i_pow<T: Real>(z: Complex<T>, p: usize) -> Complex<T> {
    // z * (-i)^p
    match p % 4 {
        0 => z,
        1 => Complex::new(z.im, -z.re),
        2 => Complex::new(-z.re, -z.im),
        _ => Complex::new(-z.im, z.re),
    }
}

/// `Σ_{i+j+k=S} a_i b_j c_k` for `S < n`.
fn conv3<T: Real>(a: &[Complex<T>], b: &[Complex<T>], c: &[Complex<T>], tmp: &mut [Complex<T>], out: &mut [Complex<T>]) {
    let n = out.len();
    for s in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..=s {
            acc = acc + a[i] * b[s - i];
        }
        tmp[s] = acc;
    }
    for s in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        for k in 0..=s {
            acc = acc + tmp[s - k] * c[k];
        }
        out[s] = acc;
    }
}

fn conv3_real<T: Real>(a: &[T], b: &[T], c: &[T], tmp: &mut [T], out: &mut [T]) {
    let n = out.len();
    for s in 0..n {
        let mut acc = T::zero();
        for i in 0..=s {
            acc = acc + a[i] * b[s - i];
        }
        tmp[s] = acc;
    }
    for s in 0..n {
        let mut acc = T::zero();
        for k in 0..=s {
            acc = acc + tmp[s - k] * c[k];
        }
        out[s] = acc;
    }
}

fn pattern_reflection_symmetric<T: Real>(pattern: &EmissionPattern<T>) -> bool {
    match pattern.kind {
        PatternKind::Isotropic => true,
        PatternKind::Dipole { axis } => axis.iter().filter(|c| c.abs() > T::zero()).count() == 1,
    }
}

fn pattern_swap_symmetric<T: Real>(pattern: &EmissionPattern<T>) -> bool {
    match pattern.kind {
        PatternKind::Isotropic => true,
        PatternKind::Dipole { axis } => axis[0] == axis[1],
    }
}

impl<T: Real> RateEngine<T> {
    /// Precomputes Franck–Condon tables, the folded quadrature and the
    /// occupation-independent part of the widths.
    ///
    /// In 3D every beam must propagate along a trap axis; in 1D the trap axis
    /// is `z` and beams enter through their `z` projection.
    pub fn new(
        basis: &ShellBasis,
        eta: T,
        pulse: &PulseSpec<T>,
        pattern: &EmissionPattern<T>,
        options: RateOptions,
    ) -> Result<Self> {
        pulse.validate()?;
        if !(eta > T::zero()) {
            return Err(invalid("eta", "must be positive"));
        }
        let n_shells = basis.n_shells();
        let margin = options.excited_margin.unwrap_or_else(|| (T::of(4.0) * eta * eta).ceil().to_usize().unwrap_or(0));
        let lcap = n_shells - 1 + margin;
        let rows = lcap + 1;

        // combined absorption tables per axis
        let mut absorption: [Option<FcTable<T>>; 3] = [None, None, None];
        for beam in &pulse.beams.beams {
            let (axis, kappa) = match basis.dimension {
                Dimension::One => (2, beam.kappa * beam.direction[2]),
                Dimension::Three => {
                    let (axis, sign) = beam.axis().ok_or_else(|| {
                        Error::Unsupported("3D rate evaluation requires beams along trap axes".into())
                    })?;
                    (axis, beam.kappa * sign)
                }
            };
            let table = FcTable::new(rows, n_shells, kappa);
            absorption[axis] = Some(match absorption[axis].take() {
                None => scale_table(table, beam.amplitude),
                Some(acc) => add_tables(acc, &table, beam.amplitude),
            });
        }

        let raw = emission_quadrature(pattern)?;
        let even_order = pattern.quadrature_order % 4 == 0;
        let folded = options.exploit_symmetry
            && match basis.dimension {
                Dimension::One => pattern.quadrature_order % 2 == 0,
                Dimension::Three => even_order && pattern_reflection_symmetric(pattern),
            };
        let swap_xy = options.exploit_symmetry
            && folded
            && basis.dimension == Dimension::Three
            && pattern_swap_symmetric(pattern)
            && axis_beams_equal(&pulse.beams, 0, 1);

        let active_axes: &[usize] = match basis.dimension {
            Dimension::One => &[2],
            Dimension::Three => &[0, 1, 2],
        };
        let mut grouped: BTreeMap<[i64; 3], (T, [T; 3])> = BTreeMap::new();
        for node in &raw {
            let mut k = [T::zero(); 3];
            for &u in active_axes {
                k[u] = eta * node.direction[u];
                if folded {
                    k[u] = k[u].abs();
                }
            }
            let key = [0, 1, 2].map(|u| (k[u].to_f64_lossy() * 1e11).round() as i64);
            let entry = grouped.entry(key).or_insert((T::zero(), k));
            entry.0 = entry.0 + node.weight;
        }
        let nodes: Vec<EmissionNode<T>> = grouped
            .into_values()
            .map(|(weight, k)| EmissionNode {
                weight,
                tables: active_axes.iter().map(|&u| FcTable::new(rows, n_shells, k[u])).collect(),
            })
            .collect();

        let excited = match basis.dimension {
            Dimension::One => shells(Dimension::One, rows),
            Dimension::Three => shells(Dimension::Three, rows),
        };
        let q_table = compute_q_table(&excited, &nodes, basis.dimension, n_shells);

        Ok(Self {
            basis: basis.clone(),
            pulse: pulse.clone(),
            lcap,
            nodes,
            folded,
            swap_xy,
            absorption,
            excited,
            q_table,
            pattern: pattern.clone(),
            eta,
        })
    }

    pub fn basis(&self) -> &ShellBasis {
        &self.basis
    }

    pub fn pulse(&self) -> &PulseSpec<T> {
        &self.pulse
    }

    /// Number of emission directions actually evaluated.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn excited_cap(&self) -> usize {
        self.lcap
    }

    fn q_row(&self, l: &[usize; 3]) -> &[T] {
        let n = self.basis.n_shells();
        let idx = self.excited.level_index(l).expect("excited level inside cap");
        &self.q_table[idx * n..(idx + 1) * n]
    }

    /// Excited levels coupled to basis level `m` with their absorption amplitude.
    fn couplings(&self, m: &[usize; 3]) -> Vec<([usize; 3], Complex<T>)> {
        let mut out = Vec::new();
        let m_shell = ShellBasis::shell_of(m);
        // l = m
        let mut diag = T::zero();
        for table in self.absorption.iter().enumerate().filter_map(|(u, t)| t.as_ref().map(|t| (u, t))) {
            diag = diag + table.1.real(m[table.0], m[table.0]);
        }
        out.push((*m, Complex::new(diag, T::zero())));
        for (u, table) in self.absorption.iter().enumerate() {
            let Some(table) = table else { continue };
            let room = self.lcap - m_shell;
            for a in 0..=(m[u] + room) {
                if a == m[u] {
                    continue;
                }
                let mut l = *m;
                l[u] = a;
                let amp = crate::fc::i_pow::<T>(a.abs_diff(m[u])) * table.real(a, m[u]);
                out.push((l, amp));
            }
        }
        out
    }

    /// `∫W |η_lm(k)|²` for the listed excited levels.
    fn self_overlap(&self, m: &[usize; 3], ls: &[([usize; 3], Complex<T>)]) -> Vec<T> {
        let axes = self.axes();
        ls.iter()
            .map(|(l, _)| {
                self.nodes
                    .iter()
                    .map(|node| {
                        let p = axes.iter().enumerate().fold(T::one(), |acc, (i, &u)| {
                            let v = node.tables[i].real(l[u], m[u]);
                            acc * v * v
                        });
                        node.weight * p
                    })
                    .sum()
            })
            .collect()
    }

    fn axes(&self) -> &'static [usize] {
        match self.basis.dimension {
            Dimension::One => &[2],
            Dimension::Three => &[0, 1, 2],
        }
    }

    /// `R_ml` for every excited level coupled to `m`.
    fn widths_for(&self, m: &[usize; 3], per_level: &[T], couplings: &[([usize; 3], Complex<T>)]) -> Vec<T> {
        let p_self = self.self_overlap(m, couplings);
        couplings
            .iter()
            .zip(p_self)
            .map(|((l, _), p)| {
                let q = self.q_row(l);
                let occ: T = q.iter().zip(per_level).map(|(&qv, &x)| qv * x).sum();
                T::one() + occ - p
            })
            .collect()
    }

    /// Collective widths for every basis level at the given occupations.
    pub fn widths(&self, occ: &OccupationState<T>) -> Result<WidthTable<T>> {
        let per_level = self.per_level(occ)?;
        let entries = self
            .basis
            .levels
            .iter()
            .map(|m| {
                let c = self.couplings(m);
                let r = self.widths_for(m, &per_level, &c);
                c.into_iter().map(|(l, _)| l).zip(r).collect()
            })
            .collect();
        Ok(WidthTable { entries })
    }

    fn per_level(&self, occ: &OccupationState<T>) -> Result<Vec<T>> {
        if occ.counts.len() != self.basis.n_shells() {
            return Err(invalid(
                "occupation",
                format!("{} shells given, basis has {}", occ.counts.len(), self.basis.n_shells()),
            ));
        }
        Ok(occ.per_level(&self.basis))
    }

    /// Coefficients `c_l = γ η_lm(k_L) / ((δ - (l - m)) + iγR_ml)`.
    /// Also returns `(Σ_l |c_l|² (1 - kept_l), Σ_l |c_l|²)` with `kept_l` the
    /// emission probability into the basis.
    fn coefficients(&self, m: &[usize; 3], per_level: &[T]) -> (Vec<([usize; 3], Complex<T>)>, (T, T)) {
        let couplings = self.couplings(m);
        let widths = self.widths_for(m, per_level, &couplings);
        let gamma = self.pulse.gamma;
        let m_shell = T::of_usize(ShellBasis::shell_of(m));
        let (mut lost, mut excited) = (T::zero(), T::zero());
        let coeffs = couplings
            .into_iter()
            .zip(widths)
            .map(|((l, amp), r)| {
                let detuning = self.pulse.detuning - (T::of_usize(ShellBasis::shell_of(&l)) - m_shell);
                let denom = Complex::new(detuning, gamma * r);
                let c = amp * gamma / denom;
                let kept: T = self.q_row(&l).iter().copied().sum();
                lost = lost + c.norm_sqr() * (T::one() - kept).max(T::zero());
                excited = excited + c.norm_sqr();
                (l, c)
            })
            .collect();
        (coeffs, (lost, excited))
    }

    /// Evaluates the widths at `occ` and returns the shell rates with the
    /// Bose factor left open.
    pub fn freeze(&self, occ: &OccupationState<T>) -> Result<FrozenRates<T>> {
        let per_level = self.per_level(occ)?;
        let n = self.basis.n_shells();
        let mut out = FrozenRates::zero(&self.basis);
        let prefactor = self.pulse.rabi * self.pulse.rabi / (T::of(2.0) * self.pulse.gamma);
        if prefactor == T::zero() {
            return Ok(out);
        }
        let mut scratch = Scratch::new(n, self.lcap + 1);
        let mut shell_sum = vec![T::zero(); n];
        let (mut lost, mut excited) = (T::zero(), T::zero());
        for m in &self.basis.levels {
            let multiplicity = if self.swap_xy {
                match m[0].cmp(&m[1]) {
                    std::cmp::Ordering::Greater => continue,
                    std::cmp::Ordering::Less => T::of(2.0),
                    std::cmp::Ordering::Equal => T::one(),
                }
            } else {
                T::one()
            };
            let (coeffs, (l_lost, l_excited)) = self.coefficients(m, &per_level);
            let x = per_level[ShellBasis::shell_of(m)] * multiplicity;
            lost = lost + x * l_lost;
            excited = excited + x * l_excited;
            shell_sum.iter_mut().for_each(|v| *v = T::zero());
            let diag = match self.basis.dimension {
                Dimension::One => self.source_sums_1d(m[2], &coeffs, &mut scratch, &mut shell_sum),
                Dimension::Three => self.source_sums_3d(m, &coeffs, &mut scratch, &mut shell_sum),
            };
            let src = ShellBasis::shell_of(m);
            let g = T::of_usize(self.basis.degeneracy[src]);
            let w = multiplicity * prefactor / g;
            for (d, &v) in shell_sum.iter().enumerate() {
                out.total[d * n + src] = out.total[d * n + src] + w * v;
            }
            out.diag[src] = out.diag[src] + w * diag;
        }
        if excited > T::zero() {
            out.emission_tail = lost / excited;
        }
        Ok(out)
    }

    /// Rates at the occupations they were evaluated at.
    pub fn pulse_rates(&self, occ: &OccupationState<T>) -> Result<RateMatrix<T>> {
        Ok(self.freeze(occ)?.to_matrix(&occ.counts))
    }

    fn source_sums_1d(
        &self,
        m: usize,
        coeffs: &[([usize; 3], Complex<T>)],
        s: &mut Scratch<T>,
        shell_sum: &mut [T],
    ) -> T {
        let n = shell_sum.len();
        let mut diag = T::zero();
        for node in &self.nodes {
            let table = &node.tables[0];
            for j in 0..n {
                let mut even = Complex::new(T::zero(), T::zero());
                let mut odd = Complex::new(T::zero(), T::zero());
                for (l, c) in coeffs {
                    let a = l[2];
                    let v = mul_neg_i_pow(*c * table.real(a, j), a.abs_diff(j));
                    if self.folded && a.abs_diff(m) % 2 == 1 {
                        odd = odd + v;
                    } else {
                        even = even + v;
                    }
                }
                let val = even.norm_sqr() + odd.norm_sqr();
                shell_sum[j] = shell_sum[j] + node.weight * val;
                if j == m {
                    diag = diag + node.weight * val;
                }
            }
        }
        let _ = s;
        diag
    }

    fn source_sums_3d(
        &self,
        m: &[usize; 3],
        coeffs: &[([usize; 3], Complex<T>)],
        s: &mut Scratch<T>,
        shell_sum: &mut [T],
    ) -> T {
        let n = shell_sum.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut diag = T::zero();
        for node in &self.nodes {
            // F_v[j] = conj η along axis v for l_v = m_v
            for v in 0..3 {
                let t = &node.tables[v];
                for j in 0..n {
                    s.f[v][j] = mul_neg_i_pow(Complex::new(t.real(m[v], j), T::zero()), m[v].abs_diff(j));
                }
                s.be[v].iter_mut().for_each(|z| *z = zero);
                s.bo[v].iter_mut().for_each(|z| *z = zero);
            }
            let mut has = [false; 3];
            for (l, c) in coeffs {
                // axis along which l differs from m; l == m goes to x
                let u = (0..3).find(|&u| l[u] != m[u]).unwrap_or(0);
                has[u] = true;
                let t = &node.tables[u];
                let a = l[u];
                let odd = self.folded && a.abs_diff(m[u]) % 2 == 1;
                let target = if odd { &mut s.bo[u] } else { &mut s.be[u] };
                for j in 0..n {
                    target[j] = target[j] + mul_neg_i_pow(*c * t.real(a, j), a.abs_diff(j));
                }
            }
            // even part: |Σ_u Be_u Π F|² summed over shells
            for u in 0..3 {
                if !has[u] {
                    continue;
                }
                for u2 in u..3 {
                    if !has[u2] {
                        continue;
                    }
                    for v in 0..3 {
                        let g1 = if v == u { &s.be[v] } else { &s.f[v] };
                        let g2 = if v == u2 { &s.be[v] } else { &s.f[v] };
                        for j in 0..n {
                            s.y[v][j] = g1[j] * g2[j].conj();
                        }
                    }
                    let (y0, rest) = s.y.split_at(1);
                    conv3(&y0[0], &rest[0], &rest[1], &mut s.tmp, &mut s.out);
                    let factor = if u == u2 { T::one() } else { T::of(2.0) };
                    for d in 0..n {
                        shell_sum[d] = shell_sum[d] + node.weight * factor * s.out[d].re;
                    }
                }
            }
            if self.folded {
                for u in 0..3 {
                    if !has[u] {
                        continue;
                    }
                    for v in 0..3 {
                        for j in 0..n {
                            s.yr[v][j] = if v == u { s.bo[v][j].norm_sqr() } else { s.f[v][j].norm_sqr() };
                        }
                    }
                    let (y0, rest) = s.yr.split_at(1);
                    conv3_real(&y0[0], &rest[0], &rest[1], &mut s.tmp_r, &mut s.out_r);
                    for d in 0..n {
                        shell_sum[d] = shell_sum[d] + node.weight * s.out_r[d];
                    }
                }
            }
            // destination n = m
            let mut amp = zero;
            let mut odd_part = T::zero();
            for u in 0..3 {
                let others = (0..3).filter(|&v| v != u).fold(Complex::new(T::one(), T::zero()), |acc, v| acc * s.f[v][m[v]]);
                amp = amp + s.be[u][m[u]] * others;
                odd_part = odd_part + s.bo[u][m[u]].norm_sqr() * others.norm_sqr();
            }
            diag = diag + node.weight * (amp.norm_sqr() + odd_part);
        }
        diag
    }

    /// Level-resolved rates by direct summation over destination levels and
    /// the unfolded quadrature. Quadratic in the number of levels; meant for
    /// small bases and as a cross-check of [`Self::freeze`].
    pub fn level_rates(&self, occ: &OccupationState<T>) -> Result<LevelRates<T>> {
        let per_level = self.per_level(occ)?;
        let raw = emission_quadrature(&self.pattern)?;
        let eta = self.eta;
        let nl = self.basis.n_levels();
        let prefactor = self.pulse.rabi * self.pulse.rabi / (T::of(2.0) * self.pulse.gamma);
        let mut rates = vec![T::zero(); nl * nl];
        let axes = self.axes();
        for (mi, m) in self.basis.levels.iter().enumerate() {
            let couplings = self.couplings(m);
            // widths evaluated without any folding
            let mut widths = Vec::with_capacity(couplings.len());
            for (l, _) in &couplings {
                let mut r = T::one();
                for node in &raw {
                    let k = node.direction.map(|c| c * eta);
                    let eta_ln = |n: &[usize; 3]| {
                        axes.iter().fold(Complex::new(T::one(), T::zero()), |acc, &u| acc * crate::fc::fc_1d(l[u], n[u], k[u]))
                    };
                    let mut s = -eta_ln(m).norm_sqr();
                    for (ni, n) in self.basis.levels.iter().enumerate() {
                        let _ = ni;
                        let shell = ShellBasis::shell_of(n);
                        s = s + eta_ln(n).norm_sqr() * per_level[shell];
                    }
                    r = r + node.weight * s;
                }
                widths.push(r);
            }
            let m_shell = ShellBasis::shell_of(m);
            let coeffs: Vec<_> = couplings
                .iter()
                .zip(&widths)
                .map(|((l, amp), &r)| {
                    let det = self.pulse.detuning - (T::of_usize(ShellBasis::shell_of(l)) - T::of_usize(m_shell));
                    (*l, *amp * self.pulse.gamma / Complex::new(det, self.pulse.gamma * r))
                })
                .collect();
            for (ni, n) in self.basis.levels.iter().enumerate() {
                let mut acc = T::zero();
                for node in &raw {
                    let k = node.direction.map(|c| c * eta);
                    let mut a = Complex::new(T::zero(), T::zero());
                    for (l, c) in &coeffs {
                        let e = axes.iter().fold(Complex::new(T::one(), T::zero()), |acc, &u| acc * crate::fc::fc_1d(l[u], n[u], k[u]));
                        a = a + *c * e.conj();
                    }
                    acc = acc + node.weight * a.norm_sqr();
                }
                let bose = per_level[ShellBasis::shell_of(n)] + T::one() - if ni == mi { T::one() } else { T::zero() };
                rates[ni * nl + mi] = prefactor * acc * bose.max(T::zero());
            }
        }
        Ok(LevelRates { n_levels: nl, rates })
    }
}

/// Dense level-resolved rates, `rates[dest * n_levels + src]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRates<T> {
    pub n_levels: usize,
    pub rates: Vec<T>,
}

/// Averages level rates over source levels and sums over destination levels
/// within each shell. In 1D this is the identity.
pub fn ergodic_compress<T: Real>(level: &LevelRates<T>, basis: &ShellBasis, occupation: &[T]) -> RateMatrix<T> {
    let n = basis.n_shells();
    let mut gamma_rate = vec![T::zero(); n * n];
    for (mi, m) in basis.levels.iter().enumerate() {
        let src = ShellBasis::shell_of(m);
        let g = T::of_usize(basis.degeneracy[src]);
        for (ni, dest_level) in basis.levels.iter().enumerate() {
            let dest = ShellBasis::shell_of(dest_level);
            gamma_rate[dest * n + src] = gamma_rate[dest * n + src] + level.rates[ni * level.n_levels + mi] / g;
        }
    }
    RateMatrix { n, gamma_rate, occupation: occupation.to_vec() }
}

/// Departure rate `Σ_{m≠n} Γ_{m←n}` of every shell for a single pulse.
pub fn darkness_report<T: Real>(engine: &RateEngine<T>, occ: &OccupationState<T>) -> Result<Vec<T>> {
    let rates = engine.pulse_rates(occ)?;
    Ok((0..rates.n).map(|s| rates.departure(s)).collect())
}

fn scale_table<T: Real>(mut t: FcTable<T>, a: T) -> FcTable<T> {
    t.map_in_place(|v| v * a);
    t
}

fn add_tables<T: Real>(mut acc: FcTable<T>, other: &FcTable<T>, a: T) -> FcTable<T> {
    acc.zip_in_place(other, |x, y| x + a * y);
    acc
}

fn axis_beams_equal<T: Real>(beams: &BeamSet<T>, u: usize, v: usize) -> bool {
    let on = |axis: usize| -> Vec<(T, T)> {
        let mut list: Vec<(T, T)> = beams
            .beams
            .iter()
            .filter_map(|b| b.axis().filter(|(a, _)| *a == axis).map(|(_, s)| (b.amplitude, b.kappa * s)))
            .collect();
        list.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        list
    };
    on(u) == on(v)
}

fn compute_q_table<T: Real>(
    excited: &ShellBasis,
    nodes: &[EmissionNode<T>],
    dimension: Dimension,
    n_shells: usize,
) -> Vec<T> {
    let mut q = vec![T::zero(); excited.n_levels() * n_shells];
    match dimension {
        Dimension::One => {
            for node in nodes {
                let t = &node.tables[0];
                for l in 0..excited.n_levels() {
                    for s in 0..n_shells {
                        let v = t.real(l, s);
                        q[l * n_shells + s] = q[l * n_shells + s] + node.weight * v * v;
                    }
                }
            }
        }
        Dimension::Three => {
            let rows = excited.n_shells();
            let mut tmp = vec![T::zero(); n_shells];
            let mut out = vec![T::zero(); n_shells];
            let mut xy = vec![T::zero(); n_shells];
            for node in nodes {
                let p: Vec<Vec<Vec<T>>> = (0..3)
                    .map(|v| (0..rows).map(|a| (0..n_shells).map(|j| node.tables[v].real(a, j).powi(2)).collect()).collect())
                    .collect();
                for lx in 0..rows {
                    for ly in 0..rows - lx {
                        for s in 0..n_shells {
                            let mut acc = T::zero();
                            for i in 0..=s {
                                acc = acc + p[0][lx][i] * p[1][ly][s - i];
                            }
                            xy[s] = acc;
                        }
                        for lz in 0..rows - lx - ly {
                            let pz = &p[2][lz];
                            for s in 0..n_shells {
                                let mut acc = T::zero();
                                for k in 0..=s {
                                    acc = acc + xy[s - k] * pz[k];
                                }
                                out[s] = acc;
                            }
                            let idx = excited.level_index(&[lx, ly, lz]).expect("inside cap");
                            for s in 0..n_shells {
                                q[idx * n_shells + s] = q[idx * n_shells + s] + node.weight * out[s];
                            }
                        }
                    }
                }
                let _ = &mut tmp;
            }
        }
    }
    q
}

struct Scratch<T> {
    f: [Vec<Complex<T>>; 3],
    be: [Vec<Complex<T>>; 3],
    bo: [Vec<Complex<T>>; 3],
    y: [Vec<Complex<T>>; 3],
    yr: [Vec<T>; 3],
    tmp: Vec<Complex<T>>,
    out: Vec<Complex<T>>,
    tmp_r: Vec<T>,
    out_r: Vec<T>,
}

impl<T: Real> Scratch<T> {
    fn new(n: usize, _rows: usize) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        let cv = || vec![z; n];
        let rv = || vec![T::zero(); n];
        Self {
            f: [cv(), cv(), cv()],
            be: [cv(), cv(), cv()],
            bo: [cv(), cv(), cv()],
            y: [cv(), cv(), cv()],
            yr: [rv(), rv(), rv()],
            tmp: cv(),
            out: cv(),
            tmp_r: rv(),
            out_r: rv(),
        }
    }
}
