//! Franck–Condon factors `⟨l| e^{i k·r} |m⟩` of the harmonic oscillator.
//!
//! In one dimension `e^{iκ(a + a†)}` is a displacement operator with
//! imaginary argument, giving for `l ≥ m`
//!
//! ```text
//! ⟨l|e^{iκ(a+a†)}|m⟩ = e^{-κ²/2} sqrt(m!/l!) (iκ)^{l-m} L_m^{(l-m)}(κ²)
//! ```
//!
//! and the matrix is symmetric in `(l, m)`. Factorials are handled in log
//! space and the Laguerre recurrence is rescaled, so indices of several
//! hundred are fine.

use num_complex::Complex;

use crate::scalar::Real;
use crate::special::{laguerre, ln_factorial, ln_factorial_table};
use crate::trap::BeamSet;

/// `i^p` for a non-negative power.
#[inline]
pub(crate) fn i_pow<T: Real>(p: usize) -> Complex<T> {
    match p % 4 {
        0 => Complex::new(T::one(), T::zero()),
        1 => Complex::new(T::zero(), T::one()),
        2 => Complex::new(-T::one(), T::zero()),
        _ => Complex::new(T::zero(), -T::one()),
    }
}

/// Real part of the factor, i.e. the amplitude with the `i^{|l-m|}` phase removed.
fn fc_1d_real<T: Real>(l: usize, m: usize, kappa: T) -> T {
    let (lo, d) = if l >= m { (m, l - m) } else { (l, m - l) };
    if kappa == T::zero() {
        return if d == 0 { T::one() } else { T::zero() };
    }
    let x = kappa * kappa;
    let lag = laguerre(lo, T::of_usize(d), x);
    if lag.mantissa == T::zero() {
        return T::zero();
    }
    let half = T::of(0.5);
    let ln_pref = half * (ln_factorial::<T>(lo) - ln_factorial::<T>(lo + d)) + T::of_usize(d) * kappa.abs().ln()
        - half * x;
    let sign = if kappa < T::zero() && d % 2 == 1 { -T::one() } else { T::one() };
    sign * lag.signum() * (ln_pref + lag.ln_abs()).exp()
}

/// One-dimensional Franck–Condon factor for dimensionless wavevector `kappa = k·x_zp`.
pub fn fc_1d<T: Real>(l: usize, m: usize, kappa: T) -> Complex<T> {
    let d = l.abs_diff(m);
    i_pow::<T>(d) * fc_1d_real(l, m, kappa)
}

/// Three-dimensional factor: product of the per-axis factors.
pub fn fc_3d<T: Real>(l: &[usize; 3], m: &[usize; 3], kappa: [T; 3]) -> Complex<T> {
    (0..3).fold(Complex::new(T::one(), T::zero()), |acc, u| acc * fc_1d(l[u], m[u], kappa[u]))
}

/// Coherent superposition `Σ_d A_d η_lm(k_d)` of the per-beam absorption amplitudes.
pub fn beam_coupling<T: Real>(l: &[usize; 3], m: &[usize; 3], beams: &BeamSet<T>) -> Complex<T> {
    beams
        .beams
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, b| acc + fc_3d(l, m, b.kappa_vector()) * b.amplitude)
}

/// Dense table of one-dimensional factors for fixed `kappa`, stored as the
/// real amplitude; the phase is `i^{|l-m|}`.
#[derive(Debug, Clone)]
pub struct FcTable<T> {
    pub kappa: T,
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: Real> FcTable<T> {
    /// Table for `l < rows`, `m < cols`, built diagonal by diagonal with one
    /// Laguerre recurrence per diagonal.
    pub fn new(rows: usize, cols: usize, kappa: T) -> Self {
        let mut data = vec![T::zero(); rows * cols];
        let n = rows.max(cols);
        let lnf = ln_factorial_table::<T>(n + 1);
        let half = T::of(0.5);
        let x = kappa * kappa;
        if kappa == T::zero() {
            for k in 0..rows.min(cols) {
                data[k * cols + k] = T::one();
            }
            return Self { kappa, rows, cols, data };
        }
        let ln_k = kappa.abs().ln();
        // diagonal offset d = l - m from -(cols-1) to rows-1
        for d_signed in -(cols as isize - 1)..(rows as isize) {
            let d = d_signed.unsigned_abs();
            let (l0, m0) = if d_signed >= 0 { (d, 0) } else { (0, d) };
            let len = (rows - l0).min(cols - m0);
            if len == 0 {
                continue;
            }
            let lag = crate::special::laguerre_sequence(len - 1, T::of_usize(d), x);
            let sign = if kappa < T::zero() && d % 2 == 1 { -T::one() } else { T::one() };
            for (lo, lv) in lag.iter().enumerate() {
                if lv.mantissa == T::zero() {
                    continue;
                }
                let ln_pref = half * (lnf[lo] - lnf[lo + d]) + T::of_usize(d) * ln_k - half * x;
                let v = sign * lv.signum() * (ln_pref + lv.ln_abs()).exp();
                data[(l0 + lo) * cols + (m0 + lo)] = v;
            }
        }
        Self { kappa, rows, cols, data }
    }

    /// Real amplitude (phase stripped).
    #[inline]
    pub fn real(&self, l: usize, m: usize) -> T {
        self.data[l * self.cols + m]
    }

    #[inline]
    pub fn get(&self, l: usize, m: usize) -> Complex<T> {
        i_pow::<T>(l.abs_diff(m)) * self.real(l, m)
    }

    /// Applies `f` to every real amplitude.
    pub(crate) fn map_in_place(&mut self, f: impl Fn(T) -> T) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    /// Combines with a table of the same shape entry by entry.
    pub(crate) fn zip_in_place(&mut self, other: &Self, f: impl Fn(T, T) -> T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = f(*a, b));
    }
}
