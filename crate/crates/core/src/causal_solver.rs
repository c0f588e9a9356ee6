//! Two-scale prediction/correction solver for the closed causal system in
//! `m_x(t)` and `C_xx(t,t)`.
//!
//! On each coarse step the drift `A_x` is first predicted (held constant on the
//! first step, linearly extrapolated afterwards), the local system
//!
//! ```text
//! ṁ   = (μ₁ + μ₃m² + 3μ₃C)·m + B̃_y·m_y
//! Ċ   = 2·A_x[m, C]·C + 2·B_y·C_xy(t,t)
//! C_xy(t,t) = ∫_{t0}^{t} B_y·C_yy(τ,t)·exp(I_A(t) − I_A(τ)) dτ
//! ```
//!
//! is integrated over the fine grid with the predicted drift inside the memory
//! term, and the drift is then corrected from the new fine-grid values. Cycles
//! repeat until successive fine-grid histories agree to `(ε₁, ε₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::Kernel;
use crate::history::{DriftHistory, DriftView};
use crate::ode::Dopri5;
use crate::oscillator::{InitialMoments, OscillatorParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub t0: f64,
    pub t_end: f64,
    /// Coarse interval length; the kernel's correlation time when absent.
    pub coarse_step: Option<f64>,
    pub fine_per_coarse: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t0: 0.0, t_end: 3.0, coarse_step: None, fine_per_coarse: 20 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !self.t_end.is_finite() || !(self.t_end > self.t0) {
            return Err(Error::invalid("t_end", format!("must exceed t0 ({} <= {})", self.t_end, self.t0)));
        }
        if let Some(c) = self.coarse_step {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid("coarse_step", format!("must be > 0, got {c}")));
            }
        }
        if self.fine_per_coarse < 2 {
            return Err(Error::invalid("fine_per_coarse", "must be >= 2"));
        }
        Ok(())
    }

    /// Coarse grid `t0 < t1 < … < T`; the final step absorbs any remainder.
    pub fn coarse_points(&self, default_step: f64) -> Vec<f64> {
        let step = self.coarse_step.unwrap_or(default_step);
        let span = self.t_end - self.t0;
        let n = ((span / step) - 1e-9).ceil().max(1.0) as usize;
        let mut pts: Vec<f64> = (0..n).map(|i| self.t0 + i as f64 * step).collect();
        pts.push(self.t_end);
        pts
    }

    /// Coarse step used when `coarse_step` is left unset.
    pub fn resolve_coarse_step(&self, kernel: &Kernel) -> Result<f64> {
        match self.coarse_step {
            Some(c) => Ok(c),
            None => kernel.correlation_time(),
        }
    }

    /// The full fine grid the solver will produce.
    pub fn fine_grid(&self, kernel: &Kernel) -> Result<Vec<f64>> {
        let coarse = self.coarse_points(self.resolve_coarse_step(kernel)?);
        let mut times = vec![coarse[0]];
        for w in coarse.windows(2) {
            times.extend(fine_nodes(w[0], w[1], self.fine_per_coarse));
        }
        Ok(times)
    }
}

fn fine_nodes(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / n as f64;
    (1..=n).map(move |j| if j == n { hi } else { lo + j as f64 * h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub max_cycles: usize,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { eps1: 1e-6, eps2: 1e-6, max_cycles: 25, ode_rel_tol: 1e-8, ode_abs_tol: 1e-10 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) {
            return Err(Error::invalid("eps1", "must be > 0"));
        }
        if !(self.eps2 > 0.0) {
            return Err(Error::invalid("eps2", "must be > 0"));
        }
        if self.max_cycles < 1 {
            return Err(Error::invalid("max_cycles", "must be >= 1"));
        }
        if !(self.ode_rel_tol > 0.0) || !(self.ode_abs_tol > 0.0) {
            return Err(Error::invalid("ode_rel_tol", "integrator tolerances must be > 0"));
        }
        Ok(())
    }

    pub fn integrator(&self) -> Dopri5 {
        Dopri5::new(self.ode_rel_tol, self.ode_abs_tol)
    }
}

/// Fine-grid diagonal moment histories produced by [`solve_diagonal`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalTrajectory {
    pub times: Vec<f64>,
    pub m_x: Vec<f64>,
    pub c_xx_diag: Vec<f64>,
    pub c_xy_diag: Vec<f64>,
    pub a_x: Vec<f64>,
    /// `dA_x/dt` at the nodes, from the state derivative.
    pub da_x: Vec<f64>,
    /// Per-segment integral correction of the drift interpolant (see [`DriftView`]).
    pub a_excess: Vec<f64>,
    /// `I_A(t) = ∫_{t0}^{t} A_x(u) du`.
    pub ia: Vec<f64>,
    /// Number of local system solves on each coarse step.
    pub cycles_per_step: Vec<usize>,
    /// Index into `times` where each coarse step ends.
    pub coarse_ends: Vec<usize>,
}

impl DiagonalTrajectory {
    pub fn drift_view(&self) -> DriftView<'_> {
        DriftView { times: &self.times, a: &self.a_x, da: &self.da_x, excess: &self.a_excess, ia: &self.ia }
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Coarse step index that owns fine node `k` (node 0 belongs to step 0).
    pub fn coarse_step_of(&self, k: usize) -> usize {
        self.coarse_ends.iter().position(|&end| k <= end).unwrap_or(self.coarse_ends.len() - 1)
    }
}

/// Successive-cycle snapshot of the fine-grid values on one coarse step.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleHistory {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub c: Vec<f64>,
}

/// Convergence test between two correction cycles: strict `max|Δm| < ε₁` and `max|ΔC| < ε₂`.
pub fn cycle_converged(prev: &CycleHistory, curr: &CycleHistory, cfg: &SolverConfig) -> Result<bool> {
    let n = prev.times.len();
    if curr.times.len() != n || prev.m.len() != n || prev.c.len() != n || curr.m.len() != n || curr.c.len() != n {
        return Err(Error::GridMismatch(format!(
            "cycle histories hold {} and {} nodes",
            prev.times.len(),
            curr.times.len()
        )));
    }
    if prev.times.iter().zip(&curr.times).any(|(a, b)| a != b) {
        return Err(Error::GridMismatch("cycle histories sampled on different nodes".into()));
    }
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(max_diff(&prev.m, &curr.m) < cfg.eps1 && max_diff(&prev.c, &curr.c) < cfg.eps2)
}

/// Diagonal cross-covariance `C_xy(t,t)` from the memory integral over a drift history.
pub(crate) fn memory_cross_covariance(view: &DriftView<'_>, kernel: &Kernel, b_y: f64, t: f64) -> f64 {
    if kernel.sigma2() == 0.0 || b_y == 0.0 {
        return 0.0;
    }
    b_y * view.memory_integral(t, None, |tau| kernel.covariance(t - tau))
}

/// Evaluates `C_xy(t,t)` on a finished trajectory.
pub fn diagonal_cross_covariance(
    traj: &DiagonalTrajectory,
    kernel: &Kernel,
    params: &OscillatorParams,
    t: f64,
) -> Result<f64> {
    let (start, end) = (traj.t0(), traj.t_end());
    if t > end + 1e-12 * end.abs().max(1.0) || t < start {
        return Err(Error::HistoryTooShort { t, end });
    }
    Ok(memory_cross_covariance(&traj.drift_view(), kernel, params.forcing_gain(kernel), t.min(end)))
}

struct LocalSystem<'p> {
    params: &'p OscillatorParams,
    kernel: &'p Kernel,
    b_y: f64,
    b_tilde: f64,
}

impl LocalSystem<'_> {
    /// Right-hand side for `(m_x, C_xx, ∫A_x)`.
    fn rhs(&self, view: &DriftView<'_>, t: f64, y: &[f64; 3]) -> [f64; 3] {
        let (m, c) = (y[0], y[1]);
        let p = self.params;
        let a = p.drift(m, c);
        let cxy = memory_cross_covariance(view, self.kernel, self.b_y, t);
        [
            (p.mu1 + p.mu3 * m * m + 3.0 * p.mu3 * c) * m + self.b_tilde * self.kernel.mean(),
            2.0 * a * c + 2.0 * self.b_y * cxy,
            a,
        ]
    }

    /// `(A_x, dA_x/dt)` at a state, the rate taken along the local system.
    fn drift_and_rate(&self, view: &DriftView<'_>, t: f64, y: &[f64; 3]) -> (f64, f64) {
        let d = self.rhs(view, t, y);
        let p = self.params;
        (p.drift(y[0], y[1]), 3.0 * p.mu3 * (2.0 * y[0] * d[0] + d[1]))
    }
}

/// Solves the causal one-time system over `grid` by the two-scale iteration.
///
/// The drift at each fine node is corrected as soon as the node is reached, so
/// later nodes of the same cycle already see the corrected history.
pub fn solve_diagonal(
    params: &OscillatorParams,
    kernel: &Kernel,
    init: &InitialMoments,
    grid: &GridSpec,
    cfg: &SolverConfig,
) -> Result<DiagonalTrajectory> {
    params.require_admissible()?;
    init.validate()?;
    grid.validate()?;
    cfg.validate()?;

    let coarse = grid.coarse_points(grid.resolve_coarse_step(kernel)?);
    let coef = params.coefficients(kernel, init.m_x0, init.c_x0x0);
    let sys = LocalSystem { params, kernel, b_y: coef.b_y, b_tilde: coef.b_tilde_y };
    let ode = cfg.integrator();

    let y0 = [init.m_x0, init.c_x0x0, 0.0];
    let mut hist = DriftHistory::new(grid.t0, coef.a_x, 0.0);
    let (_, da0) = sys.drift_and_rate(&hist.view(), grid.t0, &y0);
    hist.da[0] = da0;
    let mut m_x = vec![init.m_x0];
    let mut c_xx = vec![init.c_x0x0];
    let mut cycles_per_step = Vec::with_capacity(coarse.len() - 1);
    let mut coarse_ends = Vec::with_capacity(coarse.len() - 1);
    let mut h_suggest = 0.0;

    for (step, w) in coarse.windows(2).enumerate() {
        let nodes: Vec<f64> = fine_nodes(w[0], w[1], grid.fine_per_coarse).collect();
        let n = nodes.len();
        let base = hist.len();
        let (t_last, a_last) = (hist.times[base - 1], hist.a[base - 1]);
        let (mut pred_a, mut pred_da) = if base < 2 {
            (vec![a_last; n], vec![0.0; n])
        } else {
            let slope = (a_last - hist.a[base - 2]) / (t_last - hist.times[base - 2]);
            (nodes.iter().map(|&t| a_last + slope * (t - t_last)).collect(), vec![slope; n])
        };
        let start = [*m_x.last().unwrap(), *c_xx.last().unwrap()];

        let mut prev: Option<CycleHistory> = None;
        let mut accepted = None;
        for cycle in 1..=cfg.max_cycles {
            hist.truncate(base);
            for k in 0..n {
                hist.push(nodes[k], pred_a[k], pred_da[k]);
            }
            let mut state = start;
            let mut t_prev = w[0];
            let mut curr = CycleHistory { times: nodes.clone(), m: Vec::with_capacity(n), c: Vec::with_capacity(n) };
            for (j, &t) in nodes.iter().enumerate() {
                let view = hist.view();
                let y = ode.integrate(
                    |t, y: &[f64; 3]| sys.rhs(&view, t, y),
                    t_prev,
                    [state[0], state[1], 0.0],
                    t,
                    &mut h_suggest,
                )?;
                if !(y[1] >= 0.0) || !y[0].is_finite() {
                    return Err(Error::InstabilityDetected { t, value: y[1] });
                }
                (pred_a[j], pred_da[j]) = sys.drift_and_rate(&view, t, &y);
                hist.truncate(base + j);
                hist.push_with_integral(t, pred_a[j], pred_da[j], y[2]);
                for k in j + 1..n {
                    hist.push(nodes[k], pred_a[k], pred_da[k]);
                }
                state = [y[0], y[1]];
                curr.m.push(y[0]);
                curr.c.push(y[1]);
                t_prev = t;
            }
            let done = match &prev {
                Some(p) => cycle_converged(p, &curr, cfg)?,
                None => false,
            };
            if done {
                accepted = Some((cycle, curr));
                break;
            }
            prev = Some(curr);
        }
        let Some((cycles, curr)) = accepted else {
            return Err(Error::NoConvergence { step, max_cycles: cfg.max_cycles });
        };
        m_x.extend_from_slice(&curr.m);
        c_xx.extend_from_slice(&curr.c);
        cycles_per_step.push(cycles);
        coarse_ends.push(hist.len() - 1);
    }

    let view = hist.view();
    let c_xy_diag = hist.times.iter().map(|&t| memory_cross_covariance(&view, kernel, coef.b_y, t)).collect();
    let DriftHistory { times, a, da, excess, ia } = hist;
    Ok(DiagonalTrajectory {
        times,
        m_x,
        c_xx_diag: c_xx,
        c_xy_diag,
        a_x: a,
        da_x: da,
        a_excess: excess,
        ia,
        cycles_per_step,
        coarse_ends,
    })
}
