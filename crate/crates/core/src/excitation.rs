//! Stationary excitation kernels: the exponential (OU) and squared-exponential
//! (Gaussian filter) covariance families, with and without a cosine shift.
//!
//! Spectral densities are two-sided, normalized so that
//! `∫ S(ω) dω = σ²` over the whole real line and `C(u) = ∫ S(ω) e^{iωu} dω`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "OU")]
    Ou,
    #[serde(rename = "ShiftedOU")]
    ShiftedOu,
    #[serde(rename = "GaussianFilter", alias = "Gf")]
    GaussianFilter,
    #[serde(rename = "ShiftedGaussianFilter", alias = "ShiftedGf")]
    ShiftedGaussianFilter,
}

impl KernelFamily {
    pub fn is_shifted(self) -> bool {
        matches!(self, KernelFamily::ShiftedOu | KernelFamily::ShiftedGaussianFilter)
    }

    pub fn is_exponential(self) -> bool {
        matches!(self, KernelFamily::Ou | KernelFamily::ShiftedOu)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Ou => "OU",
            KernelFamily::ShiftedOu => "ShiftedOU",
            KernelFamily::GaussianFilter => "GaussianFilter",
            KernelFamily::ShiftedGaussianFilter => "ShiftedGaussianFilter",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OU" => Ok(KernelFamily::Ou),
            "ShiftedOU" => Ok(KernelFamily::ShiftedOu),
            "GaussianFilter" | "Gf" => Ok(KernelFamily::GaussianFilter),
            "ShiftedGaussianFilter" | "ShiftedGf" => Ok(KernelFamily::ShiftedGaussianFilter),
            other => Err(Error::invalid("family", format!("unknown kernel family {other:?}"))),
        }
    }
}

/// Raw, unvalidated description of an excitation covariance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma2: f64,
    pub a: f64,
    #[serde(default)]
    pub omega0: f64,
    #[serde(default)]
    pub mean: f64,
}

/// A validated stationary covariance model. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    spec: KernelSpec,
}

// Envelope truncation for the numerically integrated correlation time.
const ENVELOPE_CUTOFF: f64 = 1e-12;

impl Kernel {
    /// Validates a spec. Rejects non-positive variance or decay, negative
    /// central frequency, and a nonzero central frequency on an unshifted family.
    pub fn new(spec: KernelSpec) -> Result<Self> {
        if !(spec.sigma2 > 0.0) || !spec.sigma2.is_finite() {
            return Err(Error::invalid("sigma2", format!("must be > 0, got {}", spec.sigma2)));
        }
        Self::validate_shape(&spec)?;
        Ok(Self { spec })
    }

    /// Like [`Kernel::new`] but also admits `sigma2 = 0`, the noise-free limit.
    pub fn deterministic_limit(spec: KernelSpec) -> Result<Self> {
        if spec.sigma2 == 0.0 {
            Self::validate_shape(&spec)?;
            Ok(Self { spec })
        } else {
            Self::new(spec)
        }
    }

    fn validate_shape(spec: &KernelSpec) -> Result<()> {
        if !(spec.a > 0.0) || !spec.a.is_finite() {
            return Err(Error::invalid("a", format!("must be > 0, got {}", spec.a)));
        }
        if !(spec.omega0 >= 0.0) || !spec.omega0.is_finite() {
            return Err(Error::invalid("omega0", format!("must be >= 0, got {}", spec.omega0)));
        }
        if !spec.family.is_shifted() && spec.omega0 != 0.0 {
            return Err(Error::invalid(
                "omega0",
                format!("must be 0 for the unshifted {} family", spec.family.name()),
            ));
        }
        if !spec.mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        Ok(())
    }

    /// Builds a kernel whose decay parameter reproduces the requested correlation time.
    pub fn with_correlation_time(
        family: KernelFamily,
        sigma2: f64,
        tau: f64,
        omega0: f64,
        mean: f64,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau_corr", format!("must be > 0, got {tau}")));
        }
        let build = |a: f64| Kernel::new(KernelSpec { family, sigma2, a, omega0, mean });
        match family {
            KernelFamily::Ou => build(1.0 / tau),
            KernelFamily::GaussianFilter => build(PI / (4.0 * tau * tau)),
            _ if omega0 == 0.0 => {
                let a = if family.is_exponential() { 1.0 / tau } else { PI / (4.0 * tau * tau) };
                build(a)
            }
            _ => {
                // Bisection in log(a); tau is decreasing in a over the bracket used here.
                let (mut lo, mut hi) = (-20.0f64, 20.0f64);
                let tau_at = |ln_a: f64| -> Result<f64> { build(ln_a.exp())?.correlation_time() };
                let (f_lo, f_hi) = (tau_at(lo)? - tau, tau_at(hi)? - tau);
                if f_lo.signum() == f_hi.signum() {
                    return Err(Error::invalid(
                        "tau_corr",
                        format!("no decay parameter yields correlation time {tau} at omega0 = {omega0}"),
                    ));
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (tau_at(mid)? - tau).signum() == f_lo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-13 {
                        break;
                    }
                }
                build((0.5 * (lo + hi)).exp())
            }
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn family(&self) -> KernelFamily {
        self.spec.family
    }

    pub fn sigma2(&self) -> f64 {
        self.spec.sigma2
    }

    pub fn mean(&self) -> f64 {
        self.spec.mean
    }

    pub fn a(&self) -> f64 {
        self.spec.a
    }

    pub fn omega0(&self) -> f64 {
        self.spec.omega0
    }

    /// Stationary covariance `C(u)`; even in `u`.
    pub fn covariance(&self, u: f64) -> f64 {
        let KernelSpec { family, sigma2, a, omega0, .. } = self.spec;
        let u = u.abs();
        match family {
            KernelFamily::Ou => sigma2 * (-a * u).exp(),
            KernelFamily::ShiftedOu => sigma2 * (-a * u).exp() * (omega0 * u).cos(),
            KernelFamily::GaussianFilter => sigma2 * (-a * u * u).exp(),
            KernelFamily::ShiftedGaussianFilter => {
                sigma2 * (-a * u * u).exp() * (omega0 * u).cos()
            }
        }
    }

    /// Two-sided spectral density `S(ω)`.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let KernelSpec { family, sigma2, a, omega0, .. } = self.spec;
        let w = omega.abs();
        // Shifted forms average the two side lobes, which reproduces the
        // unshifted value bit for bit at ω₀ = 0.
        let lor = |d: f64| a / (a * a + d * d);
        let gauss = |d: f64| (-d * d / (4.0 * a)).exp();
        match family {
            KernelFamily::Ou => sigma2 / PI * lor(w),
            KernelFamily::ShiftedOu => sigma2 / PI * (0.5 * (lor(omega0 + w) + lor(omega0 - w))),
            KernelFamily::GaussianFilter => sigma2 / (2.0 * (PI * a).sqrt()) * gauss(w),
            KernelFamily::ShiftedGaussianFilter => {
                sigma2 / (2.0 * (PI * a).sqrt()) * (0.5 * (gauss(w - omega0) + gauss(w + omega0)))
            }
        }
    }

    /// Fraction of the spectral mass inside `[-cutoff, cutoff]`.
    pub fn mass_fraction(&self, cutoff: f64) -> f64 {
        let KernelSpec { family, a, omega0, .. } = self.spec;
        if family.is_exponential() {
            (((cutoff - omega0) / a).atan() + ((cutoff + omega0) / a).atan()) / PI
        } else {
            let s = 2.0 * a.sqrt();
            0.5 * (libm::erf((cutoff - omega0) / s) + libm::erf((cutoff + omega0) / s))
        }
    }

    /// Smallest cutoff frequency holding at least `fraction` of the spectral mass.
    pub fn cutoff_for_mass(&self, fraction: f64) -> f64 {
        assert!(fraction > 0.0 && fraction < 1.0, "mass fraction must lie in (0, 1)");
        let mut hi = self.spec.omega0 + self.spec.a.max(self.spec.a.sqrt());
        while self.mass_fraction(hi) < fraction {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mass_fraction(mid) < fraction {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    }

    /// Stratonovich correlation time `(1/σ²) ∫₀^∞ |C(u)| du`.
    ///
    /// Closed forms cover every family except the shifted Gaussian filter with
    /// `ω₀ > 0`, whose integral is summed over the half-period windows of `cos(ω₀u)` until the
    /// envelope falls below `1e-12`.
    pub fn correlation_time(&self) -> Result<f64> {
        let KernelSpec { family, a, omega0, .. } = self.spec;
        match family {
            KernelFamily::Ou => Ok(1.0 / a),
            KernelFamily::GaussianFilter => Ok(PI.sqrt() / (2.0 * a.sqrt())),
            KernelFamily::ShiftedGaussianFilter if omega0 == 0.0 => Ok(PI.sqrt() / (2.0 * a.sqrt())),
            KernelFamily::ShiftedOu if omega0 == 0.0 => Ok(1.0 / a),
            KernelFamily::ShiftedOu => {
                let d = a * a + omega0 * omega0;
                let ratio = (-a * PI / (2.0 * omega0)).exp() / (-(-a * PI / omega0).exp_m1());
                Ok(a / d + ratio * 2.0 * omega0 / d)
            }
            KernelFamily::ShiftedGaussianFilter => {
                let horizon = (-ENVELOPE_CUTOFF.ln() / a).sqrt();
                let shape = |u: f64| (-a * u * u).exp() * (omega0 * u).cos().abs();
                windowed_integral(omega0, horizon, 1e-10, shape)
            }
        }
    }
}

/// Integrates `f` over `[0, horizon]` in windows split at the zeros of `cos(ω₀u)`.
pub(crate) fn windowed_integral<F: Fn(f64) -> f64>(
    omega0: f64,
    horizon: f64,
    rel_tol: f64,
    f: F,
) -> Result<f64> {
    let opts = AdaptiveOptions { rel_tol, abs_tol: 1e-16, ..Default::default() };
    let mut edges = vec![0.0];
    if omega0 > 0.0 {
        let mut k = 0.0;
        loop {
            let z = (k + 0.5) * PI / omega0;
            if z >= horizon {
                break;
            }
            edges.push(z);
            k += 1.0;
        }
    }
    edges.push(horizon);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate_adaptive(w[0], w[1], opts, &f)?;
    }
    // The window sum must itself satisfy the looser public tolerance.
    if !total.is_finite() {
        return Err(Error::QuadratureFailure("non-finite correlation-time integral".into()));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(family: KernelFamily, sigma2: f64, a: f64, omega0: f64) -> Result<Kernel> {
        Kernel::new(KernelSpec { family, sigma2, a, omega0, mean: 0.0 })
    }

    #[test]
    fn make_kernel_examples() {
        assert!(kernel(KernelFamily::Ou, 1.0, 1.0, 0.0).is_ok());
        assert!(kernel(KernelFamily::ShiftedGaussianFilter, 1.0, 1.0, 2.0).is_ok());
        match kernel(KernelFamily::Ou, 1.0, 0.0, 0.0) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "a"),
            other => panic!("expected InvalidParameter(a), got {other:?}"),
        }
    }

    #[test]
    fn each_invalid_field_is_named() {
        let named = |r: Result<Kernel>| match r {
            Err(Error::InvalidParameter { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(named(kernel(KernelFamily::Ou, 0.0, 1.0, 0.0)), "sigma2");
        assert_eq!(named(kernel(KernelFamily::Ou, -1.0, 1.0, 0.0)), "sigma2");
        assert_eq!(named(kernel(KernelFamily::ShiftedOu, 1.0, 1.0, -0.5)), "omega0");
        assert_eq!(named(kernel(KernelFamily::GaussianFilter, 1.0, 1.0, 0.5)), "omega0");
    }

    #[test]
    fn deterministic_limit_admits_zero_variance_only() {
        let spec = KernelSpec { family: KernelFamily::Ou, sigma2: 0.0, a: 1.0, omega0: 0.0, mean: 0.0 };
        assert!(Kernel::deterministic_limit(spec).is_ok());
        let bad = KernelSpec { sigma2: -1.0, ..spec };
        assert!(Kernel::deterministic_limit(bad).is_err());
    }

    #[test]
    fn covariance_examples() {
        let ou = kernel(KernelFamily::Ou, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(ou.covariance(0.0), 1.0);
        assert!((ou.covariance(1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        let sgf = kernel(KernelFamily::ShiftedGaussianFilter, 1.0, 1.0, PI).unwrap();
        assert!((sgf.covariance(1.0) + 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn spectral_density_examples() {
        let ou = kernel(KernelFamily::Ou, 1.0, 1.0, 0.0).unwrap();
        assert!((ou.spectral_density(0.0) - 1.0 / PI).abs() < 1e-15);
        let gf = kernel(KernelFamily::GaussianFilter, 1.0, 1.0, 0.0).unwrap();
        assert!((gf.spectral_density(0.0) - 0.282_094_791_773_878_1).abs() < 1e-15);
    }

    #[test]
    fn correlation_time_examples() {
        let ou = kernel(KernelFamily::Ou, 1.0, 2.0, 0.0).unwrap();
        assert_eq!(ou.correlation_time().unwrap(), 0.5);
        let gf = kernel(KernelFamily::GaussianFilter, 1.0, 1.0, 0.0).unwrap();
        assert!((gf.correlation_time().unwrap() - 0.886_226_925_452_758).abs() < 1e-12);
        let sou = kernel(KernelFamily::ShiftedOu, 1.0, 1.0, 1.0).unwrap();
        assert!((sou.correlation_time().unwrap() - 0.71727).abs() < 1e-5);
    }

    #[test]
    fn shifted_ou_closed_form_matches_windowed_quadrature() {
        for &(a, w0) in &[(1.0, 1.0), (0.5, 3.0), (2.0, 0.3), (1.0, 10.0)] {
            let k = kernel(KernelFamily::ShiftedOu, 1.0, a, w0).unwrap();
            let horizon = -ENVELOPE_CUTOFF.ln() / a;
            let q = windowed_integral(w0, horizon, 1e-12, |u| (-a * u).exp() * (w0 * u).cos().abs())
                .unwrap();
            let closed = k.correlation_time().unwrap();
            assert!((q - closed).abs() < 1e-6, "a={a} w0={w0}: {q} vs {closed}");
        }
    }

    #[test]
    fn shifted_families_reduce_to_unshifted_at_zero_frequency() {
        let pairs = [
            (KernelFamily::Ou, KernelFamily::ShiftedOu),
            (KernelFamily::GaussianFilter, KernelFamily::ShiftedGaussianFilter),
        ];
        for (plain, shifted) in pairs {
            let p = kernel(plain, 1.3, 0.7, 0.0).unwrap();
            let s = kernel(shifted, 1.3, 0.7, 0.0).unwrap();
            for i in 0..50 {
                let x = i as f64 * 0.173;
                assert!((p.covariance(x) - s.covariance(x)).abs() <= 1e-15);
                let (sp, ss) = (p.spectral_density(x), s.spectral_density(x));
                assert!((sp - ss).abs() <= 4.0 * f64::EPSILON * sp);
            }
            let (tp, ts) = (p.correlation_time().unwrap(), s.correlation_time().unwrap());
            assert!((tp - ts).abs() < 1e-9, "{tp} vs {ts}");
        }
    }

    #[test]
    fn shifted_gf_tau_is_continuous_in_omega0() {
        for &w0 in &[0.3, 1.0, 2.0, 5.0] {
            let t1 = kernel(KernelFamily::ShiftedGaussianFilter, 1.0, 1.0, w0).unwrap();
            let t2 = kernel(KernelFamily::ShiftedGaussianFilter, 1.0, 1.0, w0 + 1e-6).unwrap();
            let d = (t1.correlation_time().unwrap() - t2.correlation_time().unwrap()).abs();
            assert!(d < 1e-4, "w0={w0}: jump {d}");
        }
    }

    #[test]
    fn mass_fraction_inverts() {
        for fam in [KernelFamily::Ou, KernelFamily::ShiftedOu, KernelFamily::GaussianFilter, KernelFamily::ShiftedGaussianFilter] {
            let w0 = if fam.is_shifted() { 1.5 } else { 0.0 };
            let k = kernel(fam, 1.0, 0.8, w0).unwrap();
            let c = k.cutoff_for_mass(0.999);
            assert!((k.mass_fraction(c) - 0.999).abs() < 1e-9);
        }
    }

    #[test]
    fn correlation_time_inverse_construction() {
        for fam in [KernelFamily::Ou, KernelFamily::GaussianFilter, KernelFamily::ShiftedOu] {
            let w0 = if fam.is_shifted() { 0.7 } else { 0.0 };
            let k = Kernel::with_correlation_time(fam, 1.0, 0.8, w0, 0.0).unwrap();
            assert!((k.correlation_time().unwrap() - 0.8).abs() < 1e-9);
        }
    }
}
