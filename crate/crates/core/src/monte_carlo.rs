//! Random-phase Monte Carlo ensembles for the cubic half-oscillator.
//!
//! Excitation paths are cosine sums `y(t) = m_y + Σ A_n cos(ω_n t + φ_n)` on
//! midpoint frequencies `ω_n = (n + ½)Δω` with `A_n = sqrt(4·S(ω_n)·Δω)` for the
//! two-sided density `S`. For ensembles the sum is evaluated on a uniform time
//! lattice with one inverse FFT per path and the response is advanced by RK4
//! whose stages land exactly on lattice nodes; [`integrate_sample`] instead
//! evaluates the sum in closed form at whatever times an adaptive integrator asks for.
//!
//! Every sample owns a ChaCha stream selected by its index, and all reductions
//! run sequentially in sample order, so results do not depend on the number of
//! worker threads.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::causal_solver::SolverConfig;
use crate::error::{Error, Result};
use crate::excitation::Kernel;
use crate::ode::rk4_step;
use crate::oscillator::{central_from_raw, InitialMoments, MomentSet, OscillatorParams};

/// Uniform output grid `t0, t0 + δ, …, t_end` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl Default for OutputGrid {
    fn default() -> Self {
        Self { t0: 0.0, t_end: 3.0, steps: 60 }
    }
}

impl OutputGrid {
    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !self.t_end.is_finite() || !(self.t_end > self.t0) {
            return Err(Error::invalid("grid", format!("t_end must exceed t0 ({} <= {})", self.t_end, self.t0)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("grid", "steps must be >= 1"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.steps).map(|k| if k == self.steps { self.t_end } else { self.t0 + k as f64 * h }).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// `x0 ~ N(m_x0, C_x0x0)`.
    #[default]
    Gaussian,
    /// `x0 = m_x0` for every sample; `C_x0x0` is ignored.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub x_bins: usize,
    pub y_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_samples: usize,
    /// Lower bound on the number of spectral components per path.
    pub n_components: usize,
    pub seed: u64,
    pub grid: OutputGrid,
    pub x0_law: InitialLaw,
    /// Fraction of the excitation variance the frequency cutoff must capture.
    pub mass_fraction: f64,
    /// Upper bound on the lattice spacing; the RK4 step is twice the spacing.
    pub max_lattice_step: f64,
    /// Second time arguments `s` at which two-time slices are estimated.
    pub slices: Vec<f64>,
    pub ratio_time: Option<f64>,
    pub histogram_time: Option<f64>,
    pub histogram: Option<HistogramSpec>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_components: 1024,
            seed: 0,
            grid: OutputGrid::default(),
            x0_law: InitialLaw::Gaussian,
            mass_fraction: 0.999,
            max_lattice_step: 0.005,
            slices: Vec::new(),
            ratio_time: None,
            histogram_time: None,
            histogram: None,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples", "must be >= 2"));
        }
        if self.n_components < 1 {
            return Err(Error::invalid("n_components", "must be >= 1"));
        }
        if !(self.mass_fraction > 0.0 && self.mass_fraction < 1.0) {
            return Err(Error::invalid("mass_fraction", "must lie in (0, 1)"));
        }
        if !(self.max_lattice_step > 0.0) {
            return Err(Error::invalid("max_lattice_step", "must be > 0"));
        }
        self.grid.validate()
    }
}

/// Frequency and time lattices shared by all paths of an ensemble.
///
/// Random phases are carried as unit phasors `e^{iφ_n}`.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    pub mean: f64,
    pub d_omega: f64,
    pub dt: f64,
    pub fft_len: usize,
    /// Lattice spacings per output step (always even).
    pub stride: usize,
    pub t0: f64,
    amplitudes: Vec<f64>,
    /// `A_n·e^{i·n·Δω·t0}`: FFT input before the random phasor is applied.
    coefficients: Vec<Complex64>,
    /// `e^{iΔω·t_j/2}` on the lattice nodes.
    shifts: Vec<Complex64>,
}

impl SpectralPlan {
    /// Chooses `Δω ≤ 2π/(10·T)`, a cutoff holding `mass_fraction` of the variance,
    /// and a lattice spacing that divides the output step into an even count.
    pub fn new(kernel: &Kernel, grid: &OutputGrid, min_components: usize, mass_fraction: f64, max_dt: f64) -> Result<Self> {
        grid.validate()?;
        let span = grid.t_end - grid.t0;
        let cutoff = if kernel.sigma2() > 0.0 { kernel.cutoff_for_mass(mass_fraction) } else { 0.0 };
        let mut dt_cap = max_dt;
        if cutoff > 0.0 {
            dt_cap = dt_cap.min(PI / cutoff);
        }
        let out_step = grid.step();
        let half = ((out_step / (2.0 * dt_cap)) - 1e-9).ceil().max(1.0) as usize;
        let stride = 2 * half;
        let dt = out_step / stride as f64;
        let needed = ((10.0 * span / dt).ceil() as usize).max(2 * min_components);
        let fft_len = needed.next_power_of_two();
        let d_omega = 2.0 * PI / (fft_len as f64 * dt);
        let n = if kernel.sigma2() > 0.0 {
            (((cutoff / d_omega).ceil() as usize).max(min_components)).min(fft_len / 2)
        } else {
            0
        };
        let amplitudes: Vec<f64> = (0..n)
            .map(|k| (4.0 * kernel.spectral_density((k as f64 + 0.5) * d_omega) * d_omega).sqrt())
            .collect();
        let coefficients = amplitudes
            .iter()
            .enumerate()
            .map(|(k, &amp)| Complex64::from_polar(amp, k as f64 * d_omega * grid.t0))
            .collect();
        let shifts = (0..=grid.steps * stride)
            .map(|j| Complex64::from_polar(1.0, 0.5 * d_omega * (grid.t0 + j as f64 * dt)))
            .collect();
        Ok(Self { mean: kernel.mean(), d_omega, dt, fft_len, stride, t0: grid.t0, amplitudes, coefficients, shifts })
    }

    pub fn n_components(&self) -> usize {
        self.amplitudes.len()
    }

    /// Lattice nodes covering the plan's output grid.
    pub fn lattice_len(&self) -> usize {
        self.shifts.len()
    }

    pub fn frequency(&self, n: usize) -> f64 {
        (n as f64 + 0.5) * self.d_omega
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Closed-form cosine sum at an arbitrary time.
    pub fn evaluate(&self, phasors: &[Complex64], t: f64) -> f64 {
        let mut acc = self.mean;
        for (n, (&amp, p)) in self.amplitudes.iter().zip(phasors).enumerate() {
            let (s, c) = (self.frequency(n) * t).sin_cos();
            acc += amp * (c * p.re - s * p.im);
        }
        acc
    }

    /// Independent phases uniform on `[0, 2π)`, drawn as unit phasors by rejection from the disc.
    pub fn draw_phasors<R: Rng>(&self, rng: &mut R) -> Vec<Complex64> {
        (0..self.n_components())
            .map(|_| loop {
                let u = 2.0 * rng.random::<f64>() - 1.0;
                let v = 2.0 * rng.random::<f64>() - 1.0;
                let r2 = u * u + v * v;
                if r2 > 1e-12 && r2 <= 1.0 {
                    let r = r2.sqrt();
                    break Complex64::new(u / r, v / r);
                }
            })
            .collect()
    }

    /// Path values on the lattice `t0 + j·dt`, `j = 0..len`.
    pub fn synthesize(&self, phasors: &[Complex64], len: usize, fft: &dyn Fft<f64>, buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) -> Vec<f64> {
        assert!(len <= self.lattice_len());
        if self.amplitudes.is_empty() {
            return vec![self.mean; len];
        }
        buf.clear();
        buf.extend(self.coefficients.iter().zip(phasors).map(|(c, p)| c * p));
        buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
        scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        fft.process_with_scratch(buf, scratch);
        self.shifts[..len].iter().zip(buf.iter()).map(|(w, z)| self.mean + (w * z).re).collect()
    }

    pub fn inverse_fft(&self) -> Arc<dyn Fft<f64>> {
        FftPlanner::new().plan_fft_inverse(self.fft_len)
    }
}

/// Random stream of sample `index` under master `seed`.
pub fn sample_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One excitation path on the output grid of `plan` (lattice values thinned to the grid).
pub fn sample_path<R: Rng>(plan: &SpectralPlan, grid: &OutputGrid, rng: &mut R) -> Vec<f64> {
    let phasors = plan.draw_phasors(rng);
    let len = grid.steps * plan.stride + 1;
    let fft = plan.inverse_fft();
    let (mut buf, mut scratch) = (Vec::new(), Vec::new());
    let lattice = plan.synthesize(&phasors, len, fft.as_ref(), &mut buf, &mut scratch);
    lattice.into_iter().step_by(plan.stride).collect()
}

/// Pathwise response on `times` by adaptive integration, the excitation
/// evaluated exactly at every stage time.
pub fn integrate_sample<Y: Fn(f64) -> f64>(
    params: &OscillatorParams,
    y: Y,
    x0: f64,
    cfg: &SolverConfig,
    times: &[f64],
) -> Result<Vec<f64>> {
    let ode = cfg.integrator();
    let mut out = Vec::with_capacity(times.len());
    let mut x = [x0];
    let mut h = 0.0;
    let mut t_prev = times[0];
    for &t in times {
        x = ode.integrate(|s, x: &[f64; 1]| [params.rhs(x[0], y(s))], t_prev, x, t, &mut h)?;
        out.push(x[0]);
        t_prev = t;
    }
    Ok(out)
}

/// RK4 on the lattice; stages sit on nodes `2i`, `2i+1`, `2i+2`.
fn integrate_lattice(params: &OscillatorParams, y: &[f64], x0: f64, dt: f64, stride: usize, sample: usize) -> Result<Vec<f64>> {
    let h = 2.0 * dt;
    let f = |x: f64, y: f64| params.rhs(x, y);
    let mut out = Vec::with_capacity((y.len() - 1) / stride + 1);
    let mut x = x0;
    out.push(x);
    let mut i = 0;
    while i + 2 < y.len() {
        x = rk4_step(f, x, h, y[i], y[i + 1], y[i + 2]);
        i += 2;
        if !x.is_finite() || x.abs() > 1e12 {
            return Err(Error::IntegratorFailure {
                sample: Some(sample),
                reason: format!("response diverged near lattice node {i}"),
            });
        }
        if i % stride == 0 {
            out.push(x);
        }
    }
    Ok(out)
}

/// Per-sample snapshots `x(t_k)`, `y(t_k)`, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub n_samples: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// Simulates the ensemble; identical for any number of worker threads.
pub fn simulate(params: &OscillatorParams, kernel: &Kernel, init: &InitialMoments, cfg: &McConfig) -> Result<Ensemble> {
    cfg.validate()?;
    params.require_admissible()?;
    init.validate()?;
    let plan = SpectralPlan::new(kernel, &cfg.grid, cfg.n_components, cfg.mass_fraction, cfg.max_lattice_step)?;
    let fft = plan.inverse_fft();
    let len = cfg.grid.steps * plan.stride + 1;
    let sd0 = init.c_x0x0.sqrt();
    log::debug!(
        "random-phase plan: {} components, dω = {:.4e}, dt = {:.4e}, fft length {}",
        plan.n_components(),
        plan.d_omega,
        plan.dt,
        plan.fft_len
    );

    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_samples)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, scratch), i| {
                let mut rng = sample_stream(cfg.seed, i);
                let z: f64 = rng.sample(StandardNormal);
                let x0 = match cfg.x0_law {
                    InitialLaw::Gaussian => init.m_x0 + sd0 * z,
                    InitialLaw::Deterministic => init.m_x0,
                };
                let phasors = plan.draw_phasors(&mut rng);
                let y = plan.synthesize(&phasors, len, fft.as_ref(), buf, scratch);
                let x = integrate_lattice(params, &y, x0, plan.dt, plan.stride, i)?;
                let y_out: Vec<f64> = y.into_iter().step_by(plan.stride).collect();
                Ok((x, y_out))
            },
        )
        .collect::<Result<_>>()?;

    let nt = cfg.grid.steps + 1;
    let mut x = Vec::with_capacity(cfg.n_samples * nt);
    let mut y = Vec::with_capacity(cfg.n_samples * nt);
    for (xs, ys) in samples {
        debug_assert_eq!(xs.len(), nt);
        x.extend_from_slice(&xs);
        y.extend_from_slice(&ys);
    }
    Ok(Ensemble { times: cfg.grid.times(), n_samples: cfg.n_samples, x, y })
}

/// Jackknife estimate and standard error of smooth functions of sample means.
fn jackknife<const D: usize, const K: usize>(
    n: usize,
    feature: impl Fn(usize) -> [f64; D],
    theta: impl Fn(&[f64; D]) -> [f64; K],
) -> ([f64; K], [f64; K]) {
    let mut sum = [0.0; D];
    for i in 0..n {
        let f = feature(i);
        for d in 0..D {
            sum[d] += f[d];
        }
    }
    let nf = n as f64;
    let full = theta(&sum.map(|s| s / nf));
    let mut loo = Vec::with_capacity(n);
    let mut mean = [0.0; K];
    for i in 0..n {
        let f = feature(i);
        let mut m = [0.0; D];
        for d in 0..D {
            m[d] = (sum[d] - f[d]) / (nf - 1.0);
        }
        let v = theta(&m);
        for k in 0..K {
            mean[k] += v[k] / nf;
        }
        loo.push(v);
    }
    let mut var = [0.0; K];
    for v in &loo {
        for k in 0..K {
            var[k] += (v[k] - mean[k]).powi(2);
        }
    }
    (full, var.map(|s| (s * (nf - 1.0) / nf).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeSlice {
    pub s: f64,
    pub c_xy: Vec<f64>,
    pub se_c_xy: Vec<f64>,
    pub c_xx: Vec<f64>,
    pub se_c_xx: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRatios {
    pub t: f64,
    pub r13: f64,
    pub r31: f64,
    pub se_r13: f64,
    pub se_r31: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReHistogram {
    pub t: f64,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Probability mass per bin, row-major in `x`; sums to 1.
    pub mass: Vec<f64>,
    /// Samples that fell inside the range.
    pub counted: usize,
}

impl ReHistogram {
    pub fn density(&self, ix: usize, iy: usize) -> f64 {
        let dx = self.x_edges[ix + 1] - self.x_edges[ix];
        let dy = self.y_edges[iy + 1] - self.y_edges[iy];
        self.mass[ix * (self.y_edges.len() - 1) + iy] / (dx * dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub m_x: Vec<f64>,
    pub se_m_x: Vec<f64>,
    pub c_xx: Vec<f64>,
    pub se_c_xx: Vec<f64>,
    pub c_xy: Vec<f64>,
    pub se_c_xy: Vec<f64>,
    pub slices: Vec<TwoTimeSlice>,
    pub ratios: Option<MomentRatios>,
    pub histogram: Option<ReHistogram>,
    pub n_samples: usize,
}

fn raw_index(j1: usize, j2: usize) -> usize {
    // (j1, j2) with j1 + j2 <= 4, enumerated row by row.
    (0..j1).map(|r| 5 - r).sum::<usize>() + j2
}

impl Ensemble {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Concatenates ensembles simulated on the same output grid, in the given order.
    pub fn merge(parts: Vec<Ensemble>) -> Result<Ensemble> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or_else(|| Error::invalid("ensembles", "nothing to merge"))?;
        for part in iter {
            if part.times != out.times {
                return Err(Error::GridMismatch("ensembles sampled on different output grids".into()));
            }
            out.x.extend_from_slice(&part.x);
            out.y.extend_from_slice(&part.y);
            out.n_samples += part.n_samples;
        }
        Ok(out)
    }

    #[inline]
    pub fn x(&self, sample: usize, k: usize) -> f64 {
        self.x[sample * self.times.len() + k]
    }

    #[inline]
    pub fn y(&self, sample: usize, k: usize) -> f64 {
        self.y[sample * self.times.len() + k]
    }

    /// Output index of time `t` (must be a grid time up to rounding).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .unwrap();
        let h = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        if (self.times[k] - t).abs() > 1e-6 * h {
            return Err(Error::GridMismatch(format!("time {t} is not on the ensemble grid")));
        }
        Ok(k)
    }

    fn covariance(&self, a: impl Fn(usize) -> f64, b: impl Fn(usize) -> f64) -> (f64, f64) {
        let (v, se) = jackknife(self.n_samples, |i| [a(i), b(i), a(i) * b(i)], |m| [m[2] - m[0] * m[1]]);
        (v[0], se[0])
    }

    /// One-time moments with jackknife standard errors.
    pub fn diagonal_moments(&self) -> EnsembleMoments {
        let nt = self.n_times();
        let mut out = EnsembleMoments {
            times: self.times.clone(),
            m_x: Vec::with_capacity(nt),
            se_m_x: Vec::with_capacity(nt),
            c_xx: Vec::with_capacity(nt),
            se_c_xx: Vec::with_capacity(nt),
            c_xy: Vec::with_capacity(nt),
            se_c_xy: Vec::with_capacity(nt),
            slices: Vec::new(),
            ratios: None,
            histogram: None,
            n_samples: self.n_samples,
        };
        for k in 0..nt {
            let (m, se) = jackknife(self.n_samples, |i| [self.x(i, k)], |m| [m[0]]);
            out.m_x.push(m[0]);
            out.se_m_x.push(se[0]);
            let (c, se) = self.covariance(|i| self.x(i, k), |i| self.x(i, k));
            out.c_xx.push(c.max(0.0));
            out.se_c_xx.push(se);
            let (c, se) = self.covariance(|i| self.x(i, k), |i| self.y(i, k));
            out.c_xy.push(c);
            out.se_c_xy.push(se);
        }
        out
    }

    /// `C_xy(t, s)` and `C_xx(t, s)` for every grid `t` at fixed `s`.
    pub fn two_time_slice(&self, s: f64) -> Result<TwoTimeSlice> {
        let ls = self.index_of(s)?;
        let nt = self.n_times();
        let mut slice = TwoTimeSlice {
            s: self.times[ls],
            c_xy: Vec::with_capacity(nt),
            se_c_xy: Vec::with_capacity(nt),
            c_xx: Vec::with_capacity(nt),
            se_c_xx: Vec::with_capacity(nt),
        };
        for k in 0..nt {
            let (c, se) = self.covariance(|i| self.x(i, k), |i| self.y(i, ls));
            slice.c_xy.push(c);
            slice.se_c_xy.push(se);
            let (c, se) = self.covariance(|i| self.x(i, k), |i| self.x(i, ls));
            slice.c_xx.push(c);
            slice.se_c_xx.push(se);
        }
        Ok(slice)
    }

    /// Fourth-order closure ratios
    /// `r13 = C¹³_xy / (3·C_yy·C_xy)` and `r31 = C³¹_xy / (3·C_xx·C_xy)` at `t`.
    pub fn moment_ratios(&self, t: f64) -> Result<MomentRatios> {
        let k = self.index_of(t)?;
        let (c, se) = self.covariance(|i| self.x(i, k), |i| self.y(i, k));
        if !(c.abs() > 10.0 * se) {
            return Err(Error::DegenerateDenominator { value: c, ratio: c.abs() / se });
        }
        let features = |i: usize| {
            let (x, y) = (self.x(i, k), self.y(i, k));
            let mut f = [0.0; 15];
            let mut xp = 1.0;
            for j1 in 0..=4 {
                let mut yq = xp;
                for j2 in 0..=(4 - j1) {
                    f[raw_index(j1, j2)] = yq;
                    yq *= y;
                }
                xp *= x;
            }
            f
        };
        let theta = |m: &[f64; 15]| {
            let mut raw = MomentSet::new(4);
            for j1 in 0..=4 {
                for j2 in 0..=(4 - j1) {
                    raw.set(j1, j2, m[raw_index(j1, j2)]);
                }
            }
            let c = central_from_raw(&raw, m[raw_index(1, 0)], m[raw_index(0, 1)]).expect("complete moment set");
            let get = |a, b| c.get(a, b).unwrap_or(f64::NAN);
            let cxy = get(1, 1);
            [get(1, 3) / (3.0 * get(0, 2) * cxy), get(3, 1) / (3.0 * get(2, 0) * cxy)]
        };
        let (r, se) = jackknife(self.n_samples, features, theta);
        Ok(MomentRatios { t: self.times[k], r13: r[0], r31: r[1], se_r13: se[0], se_r31: se[1] })
    }

    /// Normalized joint histogram of `(x(t), y(t))`; out-of-range samples are dropped.
    pub fn re_pdf_histogram(&self, t: f64, spec: &HistogramSpec) -> Result<ReHistogram> {
        let k = self.index_of(t)?;
        let (nx, ny) = (spec.x_bins, spec.y_bins);
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("histogram", "bin counts must be >= 1"));
        }
        let ((x0, x1), (y0, y1)) = (spec.x_range, spec.y_range);
        if !(x1 > x0) || !(y1 > y0) {
            return Err(Error::invalid("histogram", "ranges must be increasing"));
        }
        let edges = |lo: f64, hi: f64, n: usize| (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect::<Vec<_>>();
        let mut counts = vec![0usize; nx * ny];
        let mut counted = 0;
        for i in 0..self.n_samples {
            let (x, y) = (self.x(i, k), self.y(i, k));
            if !(x >= x0 && x <= x1 && y >= y0 && y <= y1) {
                continue;
            }
            let ix = (((x - x0) / (x1 - x0) * nx as f64) as usize).min(nx - 1);
            let iy = (((y - y0) / (y1 - y0) * ny as f64) as usize).min(ny - 1);
            counts[ix * ny + iy] += 1;
            counted += 1;
        }
        if counted == 0 {
            return Err(Error::EmptyBins);
        }
        Ok(ReHistogram {
            t: self.times[k],
            x_edges: edges(x0, x1, nx),
            y_edges: edges(y0, y1, ny),
            mass: counts.iter().map(|&c| c as f64 / counted as f64).collect(),
            counted,
        })
    }
}

/// Simulates and reduces everything requested in `cfg`.
pub fn run_ensemble(params: &OscillatorParams, kernel: &Kernel, init: &InitialMoments, cfg: &McConfig) -> Result<EnsembleMoments> {
    let ens = simulate(params, kernel, init, cfg)?;
    let mut out = ens.diagonal_moments();
    out.slices = cfg.slices.iter().map(|&s| ens.two_time_slice(s)).collect::<Result<_>>()?;
    if let Some(t) = cfg.ratio_time {
        out.ratios = Some(ens.moment_ratios(t)?);
    }
    if let Some(spec) = &cfg.histogram {
        let t = cfg.histogram_time.unwrap_or(cfg.grid.t_end);
        out.histogram = Some(ens.re_pdf_histogram(t, spec)?);
    }
    Ok(out)
}
