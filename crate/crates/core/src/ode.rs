//! Adaptive Dormand–Prince 5(4) integrator for non-stiff systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; `None` picks one from the derivative scale.
    pub first_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 1_000_000, first_step: None }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `y' = f(t, y)` from `t0` to `t1` in place. `post` runs after
/// every accepted step and may project the state (e.g. clamp negatives).
/// Returns the number of accepted steps.
pub fn integrate<F, P>(mut f: F, mut post: P, t0: f64, t1: f64, y: &mut [f64], opts: &OdeOptions) -> Result<usize>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = y.len();
    if t1 <= t0 || n == 0 {
        return Ok(0);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t0, y, &mut k[0]);
    let scale = |y: &[f64], i: usize| opts.atol + opts.rtol * y[i].abs();
    let mut h = opts.first_step.unwrap_or_else(|| {
        let d0 = (0..n).map(|i| (y[i] / scale(y, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
        let d1 = (0..n).map(|i| (k[0][i] / scale(y, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(t1 - t0)
    });
    let mut t = t0;
    let mut steps = 0;
    let mut attempts = 0;
    while t < t1 {
        if attempts >= opts.max_steps {
            return Err(Error::StepSizeCollapse { time: t, reason: format!("exceeded {} steps", opts.max_steps) });
        }
        attempts += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * k[j][i];
                }
                stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(t + C[s] * h, &stage, &mut tail[0]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += h * B5[s] * k[s][i];
                lo += h * B4[s] * k[s][i];
            }
            y5[i] = hi;
            let sc = opts.atol + opts.rtol * y[i].abs().max(hi.abs());
            err = err.max(((hi - lo) / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
        } else if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y5);
            post(y);
            steps += 1;
            // FSAL: the last stage is the derivative at the new point unless projected
            f(t, y, &mut k[0]);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 1e-14 * t1.abs().max(1.0) {
            return Err(Error::StepSizeCollapse { time: t, reason: format!("step {h:e} below resolution") });
        }
    }
    Ok(steps)
}
