//! Slow, direct evaluation of the quasiparticle rates for cross-checking.
//!
//! `η̃_ls(k) = ∫ψ_l(x) e^{ikx} u_s(x) dx` and `ζ̃_ls(k)` are integrated on a
//! uniform grid with the trapezoid rule (spectrally accurate for these
//! rapidly decaying smooth integrands), with `k = √2 κ` in oscillator
//! lengths. The rate is then summed term by term over every raw emission
//! node. Nothing is shared with the production path beyond the
//! oscillator functions and the emission quadrature.

use std::collections::HashMap;

use num_complex::Complex;

use super::{hermite_functions, BdgModeSet, QuasiRateConfig};
use crate::error::Result;
use crate::rates::PulseSpec;
use crate::trap::{emission_quadrature, EmissionPattern, SphereNode};

type C64 = Complex<f64>;

/// Grid tables `η̃[l][s]`, `ζ̃[l][s]` for one wavevector.
struct Tables {
    eta: Vec<Vec<C64>>,
    zeta: Vec<Vec<C64>>,
}

pub struct ReferenceRates {
    modes: BdgModeSet,
    pulse: PulseSpec<f64>,
    config: QuasiRateConfig,
    eta: f64,
    rows: usize,
    nodes: Vec<SphereNode<f64>>,
    step: f64,
    /// `psi[l][i]` on the grid.
    psi: Vec<Vec<f64>>,
    grid: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    cache: HashMap<u64, Tables>,
}

impl ReferenceRates {
    /// `lcap` is the highest excited level kept in the coherent sum.
    pub fn new(
        modes: &BdgModeSet,
        eta: f64,
        pulse: &PulseSpec<f64>,
        pattern: &EmissionPattern<f64>,
        lcap: usize,
        config: QuasiRateConfig,
    ) -> Result<Self> {
        let rows = lcap + 1;
        let nb = modes.n_basis();
        let top = rows.max(nb);
        let half = (2.0 * top as f64 + 1.0).sqrt() + 10.0;
        let step = 0.01;
        let n = (half / step).ceil() as i64;
        let grid: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
        let table: Vec<Vec<f64>> = grid.iter().map(|&x| hermite_functions(top, x)).collect();
        let psi: Vec<Vec<f64>> = (0..rows).map(|l| table.iter().map(|h| h[l]).collect()).collect();
        let expand = |coef: &Vec<C64>| -> Vec<f64> {
            table.iter().map(|h| coef.iter().enumerate().map(|(k, c)| c.re * h[k]).sum()).collect()
        };
        let u = modes.u.iter().map(expand).collect();
        let v = modes.v.iter().map(expand).collect();
        Ok(Self {
            modes: modes.clone(),
            pulse: pulse.clone(),
            config,
            eta,
            rows,
            nodes: emission_quadrature(pattern)?,
            step,
            psi,
            grid,
            u,
            v,
            cache: HashMap::new(),
        })
    }

    fn tables(&mut self, kappa: f64) -> &Tables {
        let key = kappa.to_bits();
        if !self.cache.contains_key(&key) {
            let k = std::f64::consts::SQRT_2 * kappa;
            let phase: Vec<C64> = self.grid.iter().map(|&x| C64::from_polar(1.0, k * x)).collect();
            let integral = |l: usize, f: &[f64]| -> C64 {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..self.grid.len() {
                    acc += phase[i] * (self.psi[l][i] * f[i]);
                }
                acc * self.step
            };
            let nm = self.modes.n_modes();
            let eta = (0..self.rows).map(|l| (0..nm).map(|s| integral(l, &self.u[s])).collect()).collect();
            let zeta = (0..self.rows).map(|l| (0..nm).map(|s| integral(l, &self.v[s])).collect()).collect();
            self.cache.insert(key, Tables { eta, zeta });
        }
        &self.cache[&key]
    }

    /// `Γ_{n←m}` at quasiparticle occupations `occ`.
    pub fn rate(&mut self, n: usize, m: usize, occ: &[f64]) -> BranchPair {
        let nm = self.modes.n_modes();
        let p = self.pulse.clone();
        let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

        // absorption amplitudes, coherent over beams
        let mut abs_eta = vec![C64::new(0.0, 0.0); self.rows];
        let mut abs_zeta = abs_eta.clone();
        for beam in &p.beams.beams {
            let t = self.tables(beam.kappa * beam.direction[2]);
            for l in 0..abs_eta.len() {
                abs_eta[l] += t.eta[l][m] * beam.amplitude;
                abs_zeta[l] += t.zeta[l][m] * beam.amplitude;
            }
        }

        // widths R_ml, every node and every tracked mode
        let mut r = vec![0.0; self.rows];
        let nodes = self.nodes.clone();
        for node in &nodes {
            let t = self.tables(self.eta * node.direction[2]);
            for (l, rl) in r.iter_mut().enumerate() {
                let mut printed = 0.0;
                let mut tracked = 0.0;
                for s in 0..nm {
                    let a = t.eta[l][s].norm_sqr();
                    let b = t.zeta[l][s].norm_sqr();
                    printed += a * (occ[s] + 1.0 - kd(s, m)) + b * (occ[s] - kd(s, m));
                    tracked += a - b;
                }
                // modes beyond the kept set: free particles, vacuum only
                *rl += node.weight * (printed + 1.0 - tracked);
            }
        }

        let mut normal = 0.0;
        let mut anomalous = 0.0;
        let wm = self.modes.omega_tilde[m];
        let gamma_l = self.config.gamma_l;
        for node in &nodes {
            let t = self.tables(self.eta * node.direction[2]);
            let mut a = C64::new(0.0, 0.0);
            let mut b = C64::new(0.0, 0.0);
            for l in 0..r.len() {
                let width = p.gamma * r[l] + gamma_l;
                let de = C64::new(p.detuning - l as f64 + wm, width);
                let dz = C64::new(p.detuning - l as f64 - wm, width);
                a += p.gamma * t.eta[l][n].conj() * abs_eta[l] / de;
                b += p.gamma * t.zeta[l][n] * abs_zeta[l].conj() / dz;
            }
            normal += node.weight * a.norm_sqr();
            anomalous += node.weight * b.norm_sqr();
        }
        let pref = p.rabi * p.rabi / (2.0 * p.gamma);
        BranchPair {
            normal: pref * normal * (occ[n] + 1.0 - kd(n, m)),
            anomalous: pref * anomalous * (occ[n] - kd(n, m)).max(0.0),
        }
    }
}

/// Branch contributions to one rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub normal: f64,
    pub anomalous: f64,
}

impl BranchPair {
    pub fn total(&self) -> f64 {
        self.normal + self.anomalous
    }
}
