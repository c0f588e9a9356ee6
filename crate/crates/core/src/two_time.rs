//! Off-diagonal covariance surfaces `C_xy(t,s)` and `C_xx(t,s)` rebuilt from a
//! finished diagonal trajectory, either by the integral representations or by
//! integrating the linear ODEs in `t` for every fixed `s`.
//!
//! Both surfaces are sampled on the solver's fine grid. Rows index the response
//! time `t`, columns the excitation (or second response) time `s`.

use rayon::prelude::*;

use crate::causal_solver::{memory_cross_covariance, DiagonalTrajectory, SolverConfig};
use crate::error::{Error, Result};
use crate::excitation::Kernel;
use crate::history::DriftView;
use crate::oscillator::{InitialMoments, OscillatorParams};
use crate::quadrature::gauss_legendre5_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMethod {
    Integral,
    Ode,
}

impl std::str::FromStr for FieldMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integral" | "Integral" => Ok(FieldMethod::Integral),
            "ode" | "Ode" | "ODE" => Ok(FieldMethod::Ode),
            other => Err(Error::invalid("method", format!("unknown field method {other:?}"))),
        }
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    fn from_columns(cols: Vec<Vec<f64>>) -> Self {
        let n = cols.len();
        let mut m = Self::zeros(n);
        for (j, col) in cols.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                m.data[i * n + j] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeField {
    pub times: Vec<f64>,
    pub c_xy: SquareMatrix,
    pub c_xx: SquareMatrix,
    pub c_x0x: Vec<f64>,
    pub method: FieldMethod,
}

impl TwoTimeField {
    /// Largest violation of the Cauchy–Schwarz bounds on either surface (0 when all hold).
    pub fn cauchy_schwarz_excess(&self, sigma2: f64) -> f64 {
        let n = self.times.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let vi = self.c_xx.get(i, i).max(0.0);
            for j in 0..n {
                let vj = self.c_xx.get(j, j).max(0.0);
                worst = worst.max(self.c_xy.get(i, j).abs() - (vi * sigma2).sqrt());
                worst = worst.max(self.c_xx.get(i, j).abs() - (vi * vj).sqrt());
            }
        }
        worst.max(0.0)
    }
}

/// `C_x0x(s) = C_x0x0 · exp(I_A(s) − I_A(t0))`.
pub fn initial_cross_section(traj: &DiagonalTrajectory, init: &InitialMoments, s: f64) -> Result<f64> {
    let end = traj.t_end();
    if s > end + 1e-12 * end.abs().max(1.0) || s < traj.t0() {
        return Err(Error::HistoryTooShort { t: s, end });
    }
    let view = traj.drift_view();
    Ok(init.c_x0x0 * (view.ia_at(s.min(end)) - view.ia_at(traj.t0())).exp())
}

/// `C_xy(t,s) = ∫_{t0}^{t} B_y·C_yy(τ,s)·exp(I_A(t) − I_A(τ)) dτ` at an arbitrary point.
pub fn cross_covariance_at(view: &DriftView<'_>, kernel: &Kernel, b_y: f64, t: f64, s: f64) -> f64 {
    if kernel.sigma2() == 0.0 || b_y == 0.0 {
        return 0.0;
    }
    b_y * view.memory_integral(t, Some(s), |tau| kernel.covariance(tau - s))
}

fn integrator(cfg: Option<&SolverConfig>) -> crate::ode::Dopri5 {
    cfg.copied().unwrap_or_default().integrator()
}

/// Cross-covariance surface on the trajectory's fine grid.
pub fn cross_covariance_field(
    traj: &DiagonalTrajectory,
    kernel: &Kernel,
    params: &OscillatorParams,
    method: FieldMethod,
) -> Result<SquareMatrix> {
    cross_covariance_field_with(traj, kernel, params, method, None)
}

pub fn cross_covariance_field_with(
    traj: &DiagonalTrajectory,
    kernel: &Kernel,
    params: &OscillatorParams,
    method: FieldMethod,
    cfg: Option<&SolverConfig>,
) -> Result<SquareMatrix> {
    let view = traj.drift_view();
    let times = &traj.times;
    let n = times.len();
    let b_y = params.forcing_gain(kernel);
    let ode = integrator(cfg);

    let column = |l: usize| -> Result<Vec<f64>> {
        let s = times[l];
        let mut col = vec![0.0; n];
        match method {
            FieldMethod::Integral => {
                let mut acc = 0.0;
                for k in 0..n - 1 {
                    let (lo, hi) = (times[k], times[k + 1]);
                    let i_hi = view.ia[k + 1];
                    let mut local = 0.0;
                    for (tau, w) in gauss_legendre5_points(lo, hi) {
                        local += w * kernel.covariance(tau - s) * (i_hi - view.ia_at(tau)).exp();
                    }
                    acc = (i_hi - view.ia[k]).exp() * acc + b_y * local;
                    col[k + 1] = acc;
                }
            }
            FieldMethod::Ode => {
                let mut h = 0.0;
                let mut y = [0.0];
                for k in 0..n - 1 {
                    let (lo, hi) = (times[k], times[k + 1]);
                    let rhs = |t: f64, y: &[f64; 1]| {
                        [view.a_in_segment(k, t) * y[0] + b_y * kernel.covariance(t - s)]
                    };
                    y = ode.integrate(rhs, lo, y, hi, &mut h)?;
                    col[k + 1] = y[0];
                }
            }
        }
        Ok(col)
    };
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(column).collect::<Result<_>>()?;
    Ok(SquareMatrix::from_columns(cols))
}

/// Lagrange interpolation through the points `xs[p..p+m]` (m ≤ 4) at `t`.
fn lagrange(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if i != j {
                w *= (t - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

/// Cubic interpolation of a row sampled on `times`, using stencils that stay
/// inside `[lo, hi]` so the corner at the row's own diagonal is never straddled.
fn piecewise_cubic(times: &[f64], values: &[f64], lo: usize, hi: usize, k: usize, t: f64) -> f64 {
    let len = hi - lo + 1;
    if len <= 4 {
        return lagrange(&times[lo..=hi], &values[lo..=hi], t);
    }
    let start = k.saturating_sub(1).clamp(lo, hi - 3);
    lagrange(&times[start..start + 4], &values[start..start + 4], t)
}

/// Response auto-covariance surface; the lower triangle `t ≥ s` is computed and mirrored.
pub fn auto_covariance_field(
    traj: &DiagonalTrajectory,
    cxy: &SquareMatrix,
    kernel: &Kernel,
    params: &OscillatorParams,
    init: &InitialMoments,
    method: FieldMethod,
) -> Result<SquareMatrix> {
    auto_covariance_field_with(traj, cxy, kernel, params, init, method, None)
}

pub fn auto_covariance_field_with(
    traj: &DiagonalTrajectory,
    cxy: &SquareMatrix,
    kernel: &Kernel,
    params: &OscillatorParams,
    init: &InitialMoments,
    method: FieldMethod,
    cfg: Option<&SolverConfig>,
) -> Result<SquareMatrix> {
    let view = traj.drift_view();
    let times = &traj.times;
    let n = times.len();
    if cxy.dim() != n {
        return Err(Error::GridMismatch(format!(
            "C_xy surface is {}x{} but the trajectory has {n} nodes",
            cxy.dim(),
            cxy.dim()
        )));
    }
    let b_y = params.forcing_gain(kernel);
    let c0 = init.c_x0x0;
    let ode = integrator(cfg);

    let cols: Vec<Vec<f64>> = match method {
        FieldMethod::Integral => {
            // Diagonal double integral D(t) = C_xx(t,t) − C0·e^{2I(t)}, accumulated along t = s.
            let mut diag = vec![0.0; n];
            for k in 0..n - 1 {
                let (lo, hi) = (times[k], times[k + 1]);
                let i_hi = view.ia[k + 1];
                let mut local = 0.0;
                for (tau, w) in gauss_legendre5_points(lo, hi) {
                    let cxy_tt = memory_cross_covariance(&view, kernel, b_y, tau);
                    local += w * 2.0 * b_y * cxy_tt * (2.0 * (i_hi - view.ia_at(tau))).exp();
                }
                diag[k + 1] = (2.0 * (i_hi - view.ia[k])).exp() * diag[k] + local;
            }
            (0..n)
                .into_par_iter()
                .map(|l| {
                    let s = times[l];
                    let i_s = view.ia[l];
                    let mut col = vec![0.0; n];
                    let mut acc = diag[l];
                    col[l] = c0 * (view.ia[l] + i_s).exp() + acc;
                    for k in l..n - 1 {
                        let (lo, hi) = (times[k], times[k + 1]);
                        let i_hi = view.ia[k + 1];
                        let mut local = 0.0;
                        for (tau, w) in gauss_legendre5_points(lo, hi) {
                            let f = b_y * cross_covariance_at(&view, kernel, b_y, s, tau);
                            local += w * f * (i_hi - view.ia_at(tau)).exp();
                        }
                        acc = (i_hi - view.ia[k]).exp() * acc + local;
                        col[k + 1] = c0 * (i_hi + i_s).exp() + acc;
                    }
                    col
                })
                .collect()
        }
        FieldMethod::Ode => (0..n)
            .into_par_iter()
            .map(|l| -> Result<Vec<f64>> {
                // F(t, s) = B_y · C_xy(s, t): row `l` of the cross-covariance surface.
                let row = cxy.row(l);
                let mut col = vec![0.0; n];
                let mut y = [c0 * view.ia[l].exp()];
                col[0] = y[0];
                let mut h = 0.0;
                for k in 0..n - 1 {
                    let (lo, hi) = (times[k], times[k + 1]);
                    let (seg_lo, seg_hi) = if k < l { (0, l) } else { (l, n - 1) };
                    // Too few nodes on this side of the corner for a cubic: evaluate exactly.
                    let exact = seg_hi - seg_lo < 3;
                    let rhs = |t: f64, y: &[f64; 1]| {
                        let a = view.a_in_segment(k, t);
                        let f = if exact {
                            b_y * cross_covariance_at(&view, kernel, b_y, times[l], t)
                        } else {
                            b_y * piecewise_cubic(times, row, seg_lo, seg_hi, k, t)
                        };
                        [a * y[0] + f]
                    };
                    y = ode.integrate(rhs, lo, y, hi, &mut h)?;
                    col[k + 1] = y[0];
                }
                Ok(col)
            })
            .collect::<Result<_>>()?,
    };

    let mut out = SquareMatrix::zeros(n);
    for (l, col) in cols.iter().enumerate() {
        for k in l..n {
            out.set(k, l, col[k]);
            out.set(l, k, col[k]);
        }
    }
    Ok(out)
}

/// Builds both surfaces and the initial cross-section with one method.
pub fn build_field(
    traj: &DiagonalTrajectory,
    kernel: &Kernel,
    params: &OscillatorParams,
    init: &InitialMoments,
    method: FieldMethod,
    cfg: Option<&SolverConfig>,
) -> Result<TwoTimeField> {
    let c_xy = cross_covariance_field_with(traj, kernel, params, method, cfg)?;
    let c_xx = auto_covariance_field_with(traj, &c_xy, kernel, params, init, method, cfg)?;
    let c_x0x = traj
        .times
        .iter()
        .map(|&s| initial_cross_section(traj, init, s))
        .collect::<Result<_>>()?;
    Ok(TwoTimeField { times: traj.times.clone(), c_xy, c_xx, c_x0x, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal_solver::{solve_diagonal, GridSpec};
    use crate::excitation::{KernelFamily, KernelSpec};

    fn ou(sigma2: f64) -> Kernel {
        Kernel::deterministic_limit(KernelSpec { family: KernelFamily::Ou, sigma2, a: 1.0, omega0: 0.0, mean: 0.0 })
            .unwrap()
    }

    fn linear() -> OscillatorParams {
        OscillatorParams { mu1: -1.0, mu3: 0.0, kappa1: 1.0, kappa3: 0.0 }
    }

    fn solve(params: &OscillatorParams, kernel: &Kernel, t_end: f64) -> DiagonalTrajectory {
        let grid = GridSpec { t_end, ..Default::default() };
        solve_diagonal(params, kernel, &InitialMoments::default(), &grid, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn initial_cross_section_examples() {
        let traj = solve(&linear(), &ou(1.0), 2.0);
        let init = InitialMoments::default();
        assert!((initial_cross_section(&traj, &init, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let at1 = initial_cross_section(&traj, &init, 1.0).unwrap();
        assert!((at1 - (-1f64).exp()).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for &s in &traj.times {
            let v = initial_cross_section(&traj, &init, s).unwrap().abs();
            assert!(v < last || s == 0.0);
            last = v;
        }
        assert!(matches!(initial_cross_section(&traj, &init, 2.5), Err(Error::HistoryTooShort { .. })));
    }

    #[test]
    fn linear_diagonal_matches_duhamel() {
        let traj = solve(&linear(), &ou(1.0), 2.0);
        for method in [FieldMethod::Integral, FieldMethod::Ode] {
            let cxy = cross_covariance_field(&traj, &ou(1.0), &linear(), method).unwrap();
            for (k, &t) in traj.times.iter().enumerate() {
                let expected = (1.0 - (-2.0 * t).exp()) / 2.0;
                assert!((cxy.get(k, k) - expected).abs() < 1e-7, "{method:?} t={t}");
                assert_eq!(cxy.get(0, k), 0.0);
            }
        }
    }

    #[test]
    fn noise_free_auto_covariance_is_separable() {
        let kernel = ou(0.0);
        let traj = solve(&linear(), &kernel, 1.5);
        let init = InitialMoments::default();
        for method in [FieldMethod::Integral, FieldMethod::Ode] {
            let f = build_field(&traj, &kernel, &linear(), &init, method, None).unwrap();
            assert_eq!(f.c_xx.get(0, 0), 1.0);
            for (i, &t) in traj.times.iter().enumerate() {
                for (j, &s) in traj.times.iter().enumerate() {
                    let expected = (-(t + s)).exp();
                    assert!((f.c_xx.get(i, j) - expected).abs() < 1e-8, "{method:?} ({t},{s})");
                }
            }
        }
    }

    #[test]
    fn routes_agree_on_cubic_case() {
        let p = OscillatorParams { mu1: -1.0, mu3: -0.7, kappa1: 1.0, kappa3: 0.4 };
        let kernel = Kernel::new(KernelSpec { family: KernelFamily::GaussianFilter, sigma2: 1.0, a: 0.785, omega0: 0.0, mean: 0.0 }).unwrap();
        // J = 40 resolves the fast initial drift transient well enough for the diagonal check.
        let grid = GridSpec { t_end: 2.0, fine_per_coarse: 40, ..Default::default() };
        let traj = solve_diagonal(&p, &kernel, &InitialMoments::default(), &grid, &SolverConfig::default()).unwrap();
        let init = InitialMoments::default();
        let fi = build_field(&traj, &kernel, &p, &init, FieldMethod::Integral, None).unwrap();
        let fo = build_field(&traj, &kernel, &p, &init, FieldMethod::Ode, None).unwrap();
        assert!(fi.c_xy.max_abs_diff(&fo.c_xy) < 1e-5, "{}", fi.c_xy.max_abs_diff(&fo.c_xy));
        assert!(fi.c_xx.max_abs_diff(&fo.c_xx) < 1e-5, "{}", fi.c_xx.max_abs_diff(&fo.c_xx));
        assert_eq!(fi.c_xx.max_asymmetry(), 0.0);
        for k in 0..traj.len() {
            assert!((fi.c_xx.get(k, k) - traj.c_xx_diag[k]).abs() < 1e-6, "{}", fi.c_xx.get(k, k) - traj.c_xx_diag[k]);
        }
        assert_eq!(fi.cauchy_schwarz_excess(1.0), 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let traj = solve(&linear(), &ou(1.0), 1.0);
        let wrong = SquareMatrix::zeros(3);
        let r = auto_covariance_field(&traj, &wrong, &ou(1.0), &linear(), &InitialMoments::default(), FieldMethod::Ode);
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }
}
