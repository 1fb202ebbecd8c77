//! Ergodic quantum Boltzmann collision kernel and Bose–Einstein equilibria.
//!
//! A channel moves one atom from each of shells `(M, N)` to shells `(P, Q)`
//! with `M + N = P + Q`. Channels with the same total energy form a block
//! sharing one weight `w_E`, so the event rate factorizes as
//!
//! ```text
//! rate(M,N→P,Q) = w_E · N_M (N_N - δ_MN) · (g_P + N_P)(g_Q + N_Q + δ_PQ)
//! ```
//!
//! which is microreversible and satisfies detailed balance with respect to
//! the microcanonical Bose distribution `π(N) ∝ Π_S C(N_S + g_S - 1, N_S)`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::special::{brent_root, ZETA_3};
use crate::trap::{Dimension, ShellBasis};

/// Unordered pair of shells `(a, b)` with `a ≤ b`.
pub type ShellPair = (usize, usize);

/// One collision channel `(m, n) → (p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel {
    pub from: ShellPair,
    pub to: ShellPair,
}

/// Pairs of one total energy, with their common weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBlock<T> {
    pub energy: usize,
    pub weight: T,
    pub pairs: Vec<ShellPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel<T> {
    pub dimension: Dimension,
    pub degeneracy: Vec<usize>,
    pub strength: T,
    /// Blocks with at least two pairs; single-pair energies admit no channel.
    pub blocks: Vec<EnergyBlock<T>>,
}

impl<T: Real> CollisionKernel<T> {
    /// Kernel with uniform weight in 1D and `strength / Σ_{p'+q'=E} g_p' g_q'` in 3D.
    pub fn new(basis: &ShellBasis, strength: T) -> Result<Self> {
        if !(strength >= T::zero()) || !strength.is_finite() {
            return Err(invalid("strength", "must be finite and non-negative"));
        }
        let n = basis.n_shells();
        let g = &basis.degeneracy;
        let mut blocks = Vec::new();
        for energy in 0..(2 * n).saturating_sub(1) {
            let pairs: Vec<ShellPair> =
                (0..=energy / 2).filter(|&a| energy - a < n).map(|a| (a, energy - a)).collect();
            if pairs.len() < 2 {
                continue;
            }
            let weight = match basis.dimension {
                Dimension::One => strength,
                Dimension::Three => {
                    let z: usize = pairs.iter().map(|&(a, b)| g[a] * g[b]).sum();
                    strength / T::of_usize(z)
                }
            };
            blocks.push(EnergyBlock { energy, weight, pairs });
        }
        Ok(Self { dimension: basis.dimension, degeneracy: g.clone(), strength, blocks })
    }

    pub fn n_shells(&self) -> usize {
        self.degeneracy.len()
    }

    /// Every channel with its weight.
    pub fn channels(&self) -> Vec<(Channel, T)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for &from in &b.pairs {
                for &to in &b.pairs {
                    if from != to {
                        out.push((Channel { from, to }, b.weight));
                    }
                }
            }
        }
        out
    }

    #[inline]
    fn source_factor(counts: &[T], (a, b): ShellPair) -> T {
        if a == b {
            counts[a] * (counts[a] - T::one()).max(T::zero())
        } else {
            counts[a] * counts[b]
        }
    }

    #[inline]
    fn sink_factor(&self, counts: &[T], (a, b): ShellPair) -> T {
        let ga = T::of_usize(self.degeneracy[a]);
        let gb = T::of_usize(self.degeneracy[b]);
        if a == b {
            (ga + counts[a]) * (ga + counts[a] + T::one())
        } else {
            (ga + counts[a]) * (gb + counts[b])
        }
    }

    /// Event rate of one channel at integer-valued occupations.
    pub fn channel_rate(&self, counts: &[T], weight: T, ch: &Channel) -> T {
        weight * Self::source_factor(counts, ch.from) * self.sink_factor(counts, ch.to)
    }

    /// Sum of all channel rates, evaluated block by block.
    pub fn total_rate(&self, counts: &[T]) -> T {
        self.blocks.iter().map(|b| self.block_rate(counts, b)).sum()
    }

    fn block_rate(&self, counts: &[T], b: &EnergyBlock<T>) -> T {
        let (mut sa, mut sb, mut diag) = (T::zero(), T::zero(), T::zero());
        for &p in &b.pairs {
            let a = Self::source_factor(counts, p);
            let s = self.sink_factor(counts, p);
            sa = sa + a;
            sb = sb + s;
            diag = diag + a * s;
        }
        (b.weight * (sa * sb - diag)).max(T::zero())
    }

    /// Net population change per unit time under mean-field kinetics, using
    /// `N_M N_N (g_P + N_P)(g_Q + N_Q)` so that every Bose–Einstein
    /// distribution is an exact fixed point.
    pub fn meanfield_derivative(&self, counts: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for b in &self.blocks {
            let src: Vec<T> = b.pairs.iter().map(|&(p, q)| counts[p] * counts[q]).collect();
            let snk: Vec<T> = b
                .pairs
                .iter()
                .map(|&(p, q)| {
                    (T::of_usize(self.degeneracy[p]) + counts[p]) * (T::of_usize(self.degeneracy[q]) + counts[q])
                })
                .collect();
            let sa: T = src.iter().copied().sum();
            let sb: T = snk.iter().copied().sum();
            for (k, &(p, q)) in b.pairs.iter().enumerate() {
                let leave = b.weight * src[k] * (sb - snk[k]);
                let arrive = b.weight * snk[k] * (sa - src[k]);
                let net = arrive - leave;
                out[p] = out[p] + net;
                out[q] = out[q] + net;
            }
        }
    }

    /// Draws one channel with probability proportional to its rate.
    /// Returns `None` when no channel is possible.
    pub fn sample_channel<R: Rng + ?Sized>(&self, counts: &[T], rng: &mut R) -> Option<Channel> {
        let block_rates: Vec<f64> = self.blocks.iter().map(|b| self.block_rate(counts, b).to_f64_lossy()).collect();
        let total: f64 = block_rates.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let block = &self.blocks[pick(&block_rates, rng.gen::<f64>() * total)];
        let src: Vec<f64> = block.pairs.iter().map(|&p| Self::source_factor(counts, p).to_f64_lossy()).collect();
        let snk: Vec<f64> = block.pairs.iter().map(|&p| self.sink_factor(counts, p).to_f64_lossy()).collect();
        let sb: f64 = snk.iter().sum();
        let from_w: Vec<f64> = src.iter().zip(&snk).map(|(a, s)| a * (sb - s)).collect();
        let from_total: f64 = from_w.iter().sum();
        let i = pick(&from_w, rng.gen::<f64>() * from_total);
        let to_w: Vec<f64> = snk.iter().enumerate().map(|(k, &s)| if k == i { 0.0 } else { s }).collect();
        let to_total: f64 = to_w.iter().sum();
        let j = pick(&to_w, rng.gen::<f64>() * to_total);
        Some(Channel { from: block.pairs[i], to: block.pairs[j] })
    }
}

/// Index `k` with `Σ_{i<k} w_i ≤ target < Σ_{i≤k} w_i`, skipping zero weights.
fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if target < acc {
                return k;
            }
        }
    }
    last
}

/// Per-channel event rates at the given occupations.
pub fn collision_event_rates<T: Real>(counts: &[T], kernel: &CollisionKernel<T>) -> Vec<(Channel, T)> {
    kernel
        .channels()
        .into_iter()
        .map(|(ch, w)| (ch, kernel.channel_rate(counts, w, &ch)))
        .collect()
}

/// Applies a channel to integer occupations.
pub fn apply_channel(counts: &mut [u64], ch: &Channel) {
    counts[ch.from.0] -= 1;
    counts[ch.from.1] -= 1;
    counts[ch.to.0] += 1;
    counts[ch.to.1] += 1;
}

/// Temperature, chemical potential and condensate of a Bose–Einstein distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState<T> {
    /// `k_B T / ħω`.
    pub temperature: T,
    /// Chemical potential relative to the ground shell, `≤ 0`.
    pub mu: T,
    pub condensate: T,
    /// Ideal-gas critical temperature for the same atom number.
    pub critical_temperature: T,
}

/// Ideal-gas critical temperature: `(N/ζ(3))^{1/3}` in 3D, `N/ln(2N)` in 1D.
pub fn critical_temperature<T: Real>(dimension: Dimension, n: T) -> T {
    match dimension {
        Dimension::Three => (n / T::of(ZETA_3)).cbrt(),
        Dimension::One => n / (T::of(2.0) * n).ln().max(T::one()),
    }
}

/// `N_S = g_S / (e^{βS + ζ} - 1)` with `ζ = -βμ > 0`.
fn bed_counts<T: Real>(degeneracy: &[usize], beta: T, zeta: T) -> Vec<T> {
    degeneracy
        .iter()
        .enumerate()
        .map(|(s, &g)| T::of_usize(g) / (beta * T::of_usize(s) + zeta).exp_m1())
        .collect()
}

/// Solves `Σ N_S = n` for `ζ` at fixed `β`.
fn solve_zeta<T: Real>(degeneracy: &[usize], beta: T, n: T) -> Result<T> {
    let f = |ln_z: T| bed_counts(degeneracy, beta, ln_z.exp()).iter().copied().sum::<T>().ln() - n.ln();
    // N(ζ) ≈ 1/ζ for small ζ and decays as e^{-ζ} for large ζ
    let lo = (T::one() / (T::of(4.0) * n)).ln() - T::of(2.0);
    let hi = T::of(60.0).max((T::of_usize(degeneracy.iter().sum()) / n).ln() + T::of(5.0)).ln();
    brent_root(f, lo, hi, T::of(1e-13), 300)
        .map(T::exp)
        .ok_or_else(|| Error::NoConvergence(format!("chemical potential at beta = {beta}, bracket ln zeta in [{lo}, {hi}]")))
}

/// Bose–Einstein occupations with given atom number and total energy.
///
/// Solves for `(T, μ)` with the condensate treated through the ground-shell
/// term `1/(e^{-βμ} - 1)`, which remains well conditioned deep below `T_c`.
pub fn equilibrium_bed<T: Real>(n: T, energy: T, basis: &ShellBasis) -> Result<(Vec<T>, ThermalState<T>)> {
    if !(n > T::zero()) {
        return Err(invalid("n", "atom number must be positive"));
    }
    if !(energy >= T::zero()) {
        return Err(invalid("energy", "must be non-negative"));
    }
    let tc = critical_temperature(basis.dimension, n);
    let g = &basis.degeneracy;
    if energy == T::zero() || basis.n_shells() == 1 {
        let mut counts = vec![T::zero(); basis.n_shells()];
        counts[0] = n;
        return Ok((counts, ThermalState { temperature: T::zero(), mu: T::zero(), condensate: n, critical_temperature: tc }));
    }
    let energy_at = |ln_beta: T| -> Result<T> {
        let beta = ln_beta.exp();
        let zeta = solve_zeta(g, beta, n)?;
        Ok(bed_counts(g, beta, zeta).iter().enumerate().map(|(s, &c)| T::of_usize(s) * c).sum())
    };
    // E decreases with β; bracket in ln β
    let (mut lo, mut hi) = (T::of(-12.0), T::of(6.0));
    let e_hot = energy_at(lo)?;
    if energy >= e_hot {
        return Err(Error::NoConvergence(format!(
            "energy {energy} exceeds what {} shells hold at high temperature ({e_hot})",
            basis.n_shells()
        )));
    }
    while energy_at(hi)? > energy {
        hi = hi + T::of(4.0);
        if hi > T::of(60.0) {
            return Err(Error::NoConvergence(format!("energy {energy} too small to bracket beta")));
        }
    }
    let mut failure = None;
    let root = brent_root(
        |lb| match energy_at(lb) {
            Ok(e) => (e / energy).ln(),
            Err(err) => {
                failure = Some(err);
                T::zero()
            }
        },
        lo,
        hi,
        T::of(1e-13),
        300,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    lo = root.ok_or_else(|| Error::NoConvergence(format!("temperature solve in ln beta bracket [{lo}, {hi}]")))?;
    let beta = lo.exp();
    let zeta = solve_zeta(g, beta, n)?;
    let counts = bed_counts(g, beta, zeta);
    let state = ThermalState { temperature: T::one() / beta, mu: -zeta / beta, condensate: counts[0], critical_temperature: tc };
    Ok((counts, state))
}

/// Request for a thermal initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSample {
    /// Mean energy per atom in units of `ħω`.
    pub target_mean_energy: f64,
    pub n: u64,
    pub seed: u64,
}

/// Boltzmann shell weights `g_S e^{-βS}` whose mean energy is `mean`.
pub fn boltzmann_weights(basis: &ShellBasis, mean: f64) -> Result<Vec<f64>> {
    let n = basis.n_shells();
    if mean <= 0.0 {
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        return Ok(w);
    }
    let weights = |beta: f64| -> Vec<f64> {
        let raw: Vec<f64> = basis.degeneracy.iter().enumerate().map(|(s, &g)| g as f64 * (-beta * s as f64).exp()).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    };
    let mean_at = |beta: f64| weights(beta).iter().enumerate().map(|(s, p)| s as f64 * p).sum::<f64>();
    let ln_beta = brent_root(|lb: f64| mean_at(lb.exp()) - mean, -12.0, 8.0, 1e-14, 300)
        .ok_or_else(|| invalid("target_mean_energy", format!("{mean} not reachable within {n} shells")))?;
    Ok(weights(ln_beta.exp()))
}

/// Draws `n` atoms independently from the Boltzmann shell distribution.
pub fn sample_initial<R: Rng + ?Sized>(sample: &ThermalSample, basis: &ShellBasis, rng: &mut R) -> Result<Vec<u64>> {
    if !(sample.target_mean_energy >= 0.0) {
        return Err(invalid("target_mean_energy", "must be non-negative"));
    }
    let w = boltzmann_weights(basis, sample.target_mean_energy)?;
    let dist = WeightedIndex::new(&w).map_err(|e| invalid("target_mean_energy", e.to_string()))?;
    let mut counts = vec![0u64; basis.n_shells()];
    for _ in 0..sample.n {
        counts[dist.sample(rng)] += 1;
    }
    Ok(counts)
}

/// `Σ p ln(p/q)` between the normalized shell distributions.
pub fn relative_entropy<T: Real>(p: &[T], q: &[T]) -> T {
    let sp: T = p.iter().copied().sum();
    let sq: T = q.iter().copied().sum();
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > T::zero())
        .map(|(&a, &b)| {
            let (a, b) = (a / sp, b / sq);
            a * (a / b).ln()
        })
        .sum()
}
