//! Test-only numerics kept separate from the crate under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use causal_moments::excitation::{Kernel, KernelFamily, KernelSpec};
use causal_moments::oscillator::OscillatorParams;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 12-point Gauss–Legendre over `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(12);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in &rule {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    acc * 0.5 * h
}

/// Integral over the whole real line through `ω = tan θ`.
pub fn integrate_real_line(f: impl Fn(f64) -> f64) -> f64 {
    let lim = 0.5 * PI;
    integrate(
        |th: f64| {
            let c = th.cos();
            f(th.tan()) / (c * c)
        },
        -lim,
        lim,
        4000,
    )
}

/// Integral over `[0, ∞)` through `u = tan θ`.
pub fn integrate_half_line(f: impl Fn(f64) -> f64) -> f64 {
    integrate(
        |th: f64| {
            let c = th.cos();
            f(th.tan()) / (c * c)
        },
        0.0,
        0.5 * PI,
        4000,
    )
}

pub fn kernel(family: KernelFamily, sigma2: f64, a: f64, omega0: f64) -> Kernel {
    Kernel::new(KernelSpec { family, sigma2, a, omega0, mean: 0.0 }).unwrap()
}

pub fn ou(sigma2: f64, a: f64) -> Kernel {
    kernel(KernelFamily::Ou, sigma2, a, 0.0)
}

pub fn linear() -> OscillatorParams {
    OscillatorParams { mu1: -1.0, mu3: 0.0, kappa1: 1.0, kappa3: 0.0 }
}

pub fn cubic_case(kappa3: f64) -> OscillatorParams {
    OscillatorParams { mu1: -1.0, mu3: -0.7, kappa1: 1.0, kappa3 }
}

/// Stationary variance of the linear half-oscillator `ẋ = μ₁x + κ₁y`
/// by the frequency-domain formula `κ₁² ∫ S(ω) / (μ₁² + ω²) dω`.
pub fn linear_stationary_variance(mu1: f64, kappa1: f64, kernel: &Kernel) -> f64 {
    kappa1 * kappa1 * integrate_real_line(|w| kernel.spectral_density(w) / (mu1 * mu1 + w * w))
}

/// Stationary `E[x y]` of the same system: `κ₁ ∫ S(ω) · Re[1/(|μ₁| − iω)] dω`.
pub fn linear_stationary_cross(mu1: f64, kappa1: f64, kernel: &Kernel) -> f64 {
    let m = mu1.abs();
    kappa1 * integrate_real_line(|w| kernel.spectral_density(w) * m / (m * m + w * w))
}
