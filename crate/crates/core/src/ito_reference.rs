//! Localized one-time system for a centered OU input.
//!
//! When `C_yy(τ,t) = σ²e^{−a|t−τ|}` the cross-covariance obeys its own local ODE,
//! so the causal system collapses to three coupled equations with no history:
//!
//! ```text
//! ṁ_x   = (μ₁ + μ₃m² + 3μ₃C_xx)·m_x
//! Ċ_xy  = (A_x − a)·C_xy + B_y·σ²
//! Ċ_xx  = 2·A_x·C_xx + 2·B_y·C_xy
//! ```
//!
//! The system is integrated with a stock Dormand–Prince integrator so that it
//! shares no numerical code with the causal solver.

use ode_solvers::{Dopri5, System, Vector3};

use crate::causal_solver::{DiagonalTrajectory, SolverConfig};
use crate::error::{Error, Result};
use crate::excitation::{Kernel, KernelFamily};
use crate::oscillator::{InitialMoments, OscillatorParams};

/// Dense-output samples per unit of the integration span.
const OUTPUT_POINTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrajectory {
    pub times: Vec<f64>,
    pub m_x: Vec<f64>,
    pub c_xy_diag: Vec<f64>,
    pub c_xx_diag: Vec<f64>,
    /// Variance intensity of the white noise driving the equivalent Itô SDE, `2aσ²`.
    pub noise_intensity: f64,
}

impl LocalTrajectory {
    /// Linear interpolation of all three moments at `t`.
    pub fn sample(&self, t: f64) -> [f64; 3] {
        let n = self.times.len();
        let j = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => return [self.m_x[j], self.c_xy_diag[j], self.c_xx_diag[j]],
            Err(j) => j.clamp(1, n - 1),
        };
        let w = (t - self.times[j - 1]) / (self.times[j] - self.times[j - 1]);
        let lerp = |v: &[f64]| v[j - 1] + w * (v[j] - v[j - 1]);
        [lerp(&self.m_x), lerp(&self.c_xy_diag), lerp(&self.c_xx_diag)]
    }
}

struct LocalSystem {
    params: OscillatorParams,
    decay: f64,
    sigma2: f64,
    b_y: f64,
}

impl System<f64, Vector3<f64>> for LocalSystem {
    fn system(&self, _t: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        let p = &self.params;
        let (m, cxy, cxx) = (y[0], y[1], y[2]);
        let a = p.drift(m, cxx);
        dy[0] = (p.mu1 + p.mu3 * m * m + 3.0 * p.mu3 * cxx) * m;
        dy[1] = (a - self.decay) * cxy + self.b_y * self.sigma2;
        dy[2] = 2.0 * a * cxx + 2.0 * self.b_y * cxy;
    }
}

fn require_centered_ou(kernel: &Kernel) -> Result<()> {
    if kernel.family() != KernelFamily::Ou {
        return Err(Error::NotLocalizable(format!(
            "{} input has no Markovian (Itô) realization",
            kernel.family().name()
        )));
    }
    if kernel.mean() != 0.0 {
        return Err(Error::NotLocalizable(format!("OU input must be centered, mean = {}", kernel.mean())));
    }
    Ok(())
}

/// Integrates the localized system from `t0 = 0` to `t_end`.
pub fn solve_ou_local(
    params: &OscillatorParams,
    kernel: &Kernel,
    init: &InitialMoments,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<LocalTrajectory> {
    solve_ou_local_from(params, kernel, init, 0.0, t_end, cfg)
}

pub fn solve_ou_local_from(
    params: &OscillatorParams,
    kernel: &Kernel,
    init: &InitialMoments,
    t0: f64,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<LocalTrajectory> {
    require_centered_ou(kernel)?;
    params.require_admissible()?;
    init.validate()?;
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(Error::invalid("t_end", format!("must exceed t0 ({t_end} <= {t0})")));
    }
    let sys = LocalSystem {
        params: *params,
        decay: kernel.a(),
        sigma2: kernel.sigma2(),
        b_y: params.forcing_gain(kernel),
    };
    let span = t_end - t0;
    let dx = span / ((OUTPUT_POINTS as f64 * span).ceil().max(100.0));
    let y0 = Vector3::new(init.m_x0, 0.0, init.c_x0x0);
    let mut solver = Dopri5::new(sys, t0, t_end, dx, y0, cfg.ode_rel_tol, cfg.ode_abs_tol);
    solver
        .integrate()
        .map_err(|e| Error::IntegratorFailure { sample: None, reason: e.to_string() })?;

    let mut out = LocalTrajectory {
        times: Vec::with_capacity(solver.x_out().len()),
        m_x: Vec::new(),
        c_xy_diag: Vec::new(),
        c_xx_diag: Vec::new(),
        noise_intensity: 2.0 * kernel.a() * kernel.sigma2(),
    };
    for (&t, y) in solver.x_out().iter().zip(solver.y_out()) {
        // Dense output may repeat the end point.
        if out.times.last().is_some_and(|&last| t <= last) {
            continue;
        }
        out.times.push(t);
        out.m_x.push(y[0]);
        out.c_xy_diag.push(y[1]);
        out.c_xx_diag.push(y[2]);
    }
    let last = *out.times.last().unwrap();
    if (last - t_end).abs() > 1e-9 * span {
        return Err(Error::IntegratorFailure {
            sample: None,
            reason: format!("dense output stopped at {last}, expected {t_end}"),
        });
    }
    Ok(out)
}

/// Largest absolute differences between the causal and local solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationResidual {
    pub m_x: f64,
    pub c_xy: f64,
    pub c_xx: f64,
}

impl LocalizationResidual {
    pub fn max(&self) -> f64 {
        self.m_x.max(self.c_xy).max(self.c_xx)
    }
}

/// Compares on the causal solver's own grid, the local solution being
/// linearly resampled there.
pub fn localization_residual(causal: &DiagonalTrajectory, local: &LocalTrajectory) -> Result<LocalizationResidual> {
    let (a0, a1) = (causal.t0(), causal.t_end());
    let (b0, b1) = (local.times[0], *local.times.last().unwrap());
    let tol = 1e-9 * (a1 - a0).abs().max(1.0);
    if (a0 - b0).abs() > tol || (a1 - b1).abs() > tol {
        return Err(Error::IntervalMismatch { a0, a1, b0, b1 });
    }
    let mut r = LocalizationResidual { m_x: 0.0, c_xy: 0.0, c_xx: 0.0 };
    for (k, &t) in causal.times.iter().enumerate() {
        let [m, cxy, cxx] = local.sample(t);
        r.m_x = r.m_x.max((causal.m_x[k] - m).abs());
        r.c_xy = r.c_xy.max((causal.c_xy_diag[k] - cxy).abs());
        r.c_xx = r.c_xx.max((causal.c_xx_diag[k] - cxx).abs());
    }
    Ok(r)
}
