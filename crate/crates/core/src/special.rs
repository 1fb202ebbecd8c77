//! Special functions and quadrature rules used across the crate.
//!
//! Everything here is generic over [`Real`] and avoids raw factorials: the
//! Franck–Condon factors need `n!` for `n` in the hundreds, which overflows
//! `f64` long before the physics becomes uninteresting.

use crate::scalar::Real;

/// Riemann zeta values `g_3(1) = ζ(3)` and `g_4(1) = ζ(4)` of the Bose functions at unit fugacity.
pub const ZETA_3: f64 = 1.202_056_903_159_594_2;
pub const ZETA_4: f64 = 1.082_323_233_711_138_2;

/// `ln(n!)` by direct summation.
pub fn ln_factorial<T: Real>(n: usize) -> T {
    (2..=n).map(|k| T::of_usize(k).ln()).sum()
}

/// Table of `ln(k!)` for `k = 0..=n`.
pub fn ln_factorial_table<T: Real>(n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = T::zero();
    out.push(acc);
    for k in 1..=n {
        acc = acc + T::of_usize(k).ln();
        out.push(acc);
    }
    out
}

/// Value stored as `mantissa · exp(log_scale)` so that large intermediate
/// polynomial values never overflow.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<T> {
    pub mantissa: T,
    pub log_scale: T,
}

impl<T: Real> Scaled<T> {
    /// `ln|value|`, or `-inf` for zero.
    pub fn ln_abs(&self) -> T {
        self.mantissa.abs().ln() + self.log_scale
    }

    pub fn signum(&self) -> T {
        if self.mantissa == T::zero() {
            T::zero()
        } else {
            self.mantissa.signum()
        }
    }
}

fn rescale_threshold<T: Real>() -> T {
    T::max_value().sqrt().sqrt()
}

/// Generalized Laguerre polynomials `L_k^{(alpha)}(x)` for `k = 0..=n`, via the
/// three-term upward recurrence with running rescaling.
///
/// All returned values share one log scale per entry.
pub fn laguerre_sequence<T: Real>(n: usize, alpha: T, x: T) -> Vec<Scaled<T>> {
    let big = rescale_threshold::<T>();
    let ln_big = big.ln();
    let mut out = Vec::with_capacity(n + 1);
    let mut prev = T::one();
    let mut scale = T::zero();
    out.push(Scaled { mantissa: prev, log_scale: scale });
    if n == 0 {
        return out;
    }
    let mut cur = T::one() + alpha - x;
    out.push(Scaled { mantissa: cur, log_scale: scale });
    for k in 1..n {
        let kf = T::of_usize(k);
        let next = ((kf + kf + T::one() + alpha - x) * cur - (kf + alpha) * prev) / (kf + T::one());
        prev = cur;
        cur = next;
        if cur.abs() > big {
            cur = cur / big;
            prev = prev / big;
            scale = scale + ln_big;
        }
        out.push(Scaled { mantissa: cur, log_scale: scale });
    }
    out
}

/// Single generalized Laguerre value `L_n^{(alpha)}(x)` in scaled form.
pub fn laguerre<T: Real>(n: usize, alpha: T, x: T) -> Scaled<T> {
    *laguerre_sequence(n, alpha, x).last().expect("non-empty")
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration
/// on the Legendre recurrence. Nodes are returned in ascending order.
pub fn gauss_legendre<T: Real>(n: usize) -> Vec<(T, T)> {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![(T::zero(), T::zero()); n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    for i in 0..half {
        // Chebyshev-like initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = (T::of(x), T::of(w));
        nodes[i] = (T::of(-x), T::of(w));
    }
    nodes
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Brent's method on a sign-changing bracket `[a, b]`.
pub fn brent_root<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    mut a: T,
    mut b: T,
    tol: T,
    max_iter: usize,
) -> Option<T> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Some(a);
    }
    if fb == T::zero() {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let two = T::of(2.0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::epsilon() * b.abs() + tol / two;
        let xm = (c - b) / two;
        if xm.abs() <= tol1 || fb == T::zero() {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = T::of(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 { b + d } else { b + tol1 * xm.signum() };
        fb = f(b);
    }
    Some(b)
}
