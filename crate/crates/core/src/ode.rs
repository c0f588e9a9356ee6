//! Dormand–Prince 5(4) embedded Runge–Kutta integration with step-size control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, max_steps: 100_000 }
    }

    /// Advances `y` from `t0` to `t1`. `h` carries the step-size suggestion
    /// between calls; pass `0.0` to let the integrator choose.
    pub fn integrate<const N: usize, F>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        h: &mut f64,
    ) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(y0);
        }
        assert!(span > 0.0, "integration must run forward in time");
        let mut t = t0;
        let mut y = y0;
        let mut step = if *h > 0.0 { h.min(span) } else { (span * 0.1).min(1e-2 * span.max(1.0)) };
        let mut k1 = f(t, &y);
        let mut steps = 0;
        loop {
            if steps >= self.max_steps {
                return Err(Error::IntegratorFailure {
                    sample: None,
                    reason: format!("step budget exhausted at t = {t}"),
                });
            }
            steps += 1;
            let planned = step;
            let last = t + step >= t1 - 1e-14 * t1.abs().max(1.0);
            if last {
                step = t1 - t;
            }
            let stage = |k: &[[f64; N]], coef: &[f64]| {
                let mut out = y;
                for i in 0..N {
                    let mut acc = 0.0;
                    for (kj, c) in k.iter().zip(coef) {
                        acc += c * kj[i];
                    }
                    out[i] += step * acc;
                }
                out
            };
            let k2 = f(t + C2 * step, &stage(&[k1], &[A21]));
            let k3 = f(t + C3 * step, &stage(&[k1, k2], &[A31, A32]));
            let k4 = f(t + C4 * step, &stage(&[k1, k2, k3], &[A41, A42, A43]));
            let k5 = f(t + C5 * step, &stage(&[k1, k2, k3, k4], &[A51, A52, A53, A54]));
            let k6 = f(t + step, &stage(&[k1, k2, k3, k4, k5], &[A61, A62, A63, A64, A65]));
            let y_new = stage(&[k1, k3, k4, k5, k6], &[B1, B3, B4, B5, B6]);
            let t_new = if last { t1 } else { t + step };
            let k7 = f(t_new, &y_new);

            let mut err = 0.0;
            for i in 0..N {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                step *= 0.2;
                if step < 1e-14 * span {
                    return Err(Error::IntegratorFailure {
                        sample: None,
                        reason: format!("non-finite state near t = {t}"),
                    });
                }
                continue;
            }
            if err <= 1.0 {
                t = t_new;
                y = y_new;
                k1 = k7;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if last {
                    // Keep the unclipped suggestion for the next call.
                    *h = if planned > step { planned } else { step * fac };
                    return Ok(y);
                }
                step *= fac;
                *h = step;
            } else {
                step *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if step < 1e-14 * span {
                    return Err(Error::IntegratorFailure {
                        sample: None,
                        reason: format!("step size underflow at t = {t}"),
                    });
                }
            }
        }
    }
}

/// One classical fourth-order Runge–Kutta step for a scalar equation whose
/// forcing is known at the start, midpoint, and end of the step.
#[inline]
pub fn rk4_step<F: Fn(f64, f64) -> f64>(f: F, x: f64, h: f64, y_start: f64, y_mid: f64, y_end: f64) -> f64 {
    let k1 = f(x, y_start);
    let k2 = f(x + 0.5 * h * k1, y_mid);
    let k3 = f(x + 0.5 * h * k2, y_mid);
    let k4 = f(x + h * k3, y_end);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}
