//! Cubic half-oscillator `ẋ = μ₁x + μ₃x³ + κ₁y + κ₃y³` and the Gaussian-closure
//! algebra shared by the moment solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub mu1: f64,
    pub mu3: f64,
    pub kappa1: f64,
    pub kappa3: f64,
}

/// Shape of the potential `U(x) = -μ₁x²/2 - μ₃x⁴/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Monostable,
    Bistable,
    LocallyStable,
    GloballyUnstable,
    Linear,
}

impl OscillatorParams {
    pub fn new(mu1: f64, mu3: f64, kappa1: f64, kappa3: f64) -> Result<Self> {
        let p = Self { mu1, mu3, kappa1, kappa3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("mu1", self.mu1), ("mu3", self.mu3), ("kappa1", self.kappa1), ("kappa3", self.kappa3)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if !(self.kappa1 > 0.0) {
            return Err(Error::invalid("kappa1", format!("must be > 0, got {}", self.kappa1)));
        }
        Ok(())
    }

    pub fn classify_potential(&self) -> Result<StabilityClass> {
        let (m1, m3) = (self.mu1, self.mu3);
        let class = if m1 < 0.0 && m3 < 0.0 {
            StabilityClass::Monostable
        } else if m1 > 0.0 && m3 < 0.0 {
            StabilityClass::Bistable
        } else if m1 < 0.0 && m3 > 0.0 {
            StabilityClass::LocallyStable
        } else if m1 > 0.0 && m3 > 0.0 {
            StabilityClass::GloballyUnstable
        } else if m3 == 0.0 && m1 < 0.0 {
            StabilityClass::Linear
        } else {
            return Err(Error::Unclassifiable { mu1: m1, mu3: m3 });
        };
        Ok(class)
    }

    /// Fails unless the system is monostable or linear, the regime where `A_x < 0`.
    pub fn require_admissible(&self) -> Result<StabilityClass> {
        self.validate()?;
        match self.classify_potential()? {
            c @ (StabilityClass::Monostable | StabilityClass::Linear) => Ok(c),
            other => Err(Error::NotAdmissible(other)),
        }
    }

    /// Drift coefficient `A_x = μ₁ + 3μ₃m_x² + 3μ₃C_xx`.
    #[inline]
    pub fn drift(&self, m_x: f64, c_xx: f64) -> f64 {
        self.mu1 + 3.0 * self.mu3 * (m_x * m_x + c_xx)
    }

    /// Right side of the pathwise equation.
    #[inline]
    pub fn rhs(&self, x: f64, y: f64) -> f64 {
        self.mu1 * x + self.mu3 * x * x * x + self.kappa1 * y + self.kappa3 * y * y * y
    }

    pub fn coefficients(&self, kernel: &Kernel, m_x: f64, c_xx: f64) -> CoefficientSet {
        let (my, s2) = (kernel.mean(), kernel.sigma2());
        CoefficientSet {
            a_x: self.drift(m_x, c_xx),
            b_y: self.kappa1 + 3.0 * self.kappa3 * (my * my + s2),
            b_tilde_y: self.kappa1 + self.kappa3 * (my * my + 3.0 * s2),
        }
    }

    /// Covariance forcing gain `B_y`; constant in time for a stationary input.
    pub fn forcing_gain(&self, kernel: &Kernel) -> f64 {
        self.coefficients(kernel, 0.0, 0.0).b_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub a_x: f64,
    pub b_y: f64,
    pub b_tilde_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialMoments {
    pub m_x0: f64,
    pub c_x0x0: f64,
}

impl InitialMoments {
    pub fn new(m_x0: f64, c_x0x0: f64) -> Result<Self> {
        let m = Self { m_x0, c_x0x0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m_x0.is_finite() {
            return Err(Error::invalid("m_x0", "must be finite"));
        }
        if !(self.c_x0x0 >= 0.0) || !self.c_x0x0.is_finite() {
            return Err(Error::invalid("c_x0x0", format!("must be >= 0, got {}", self.c_x0x0)));
        }
        Ok(())
    }
}

impl Default for InitialMoments {
    fn default() -> Self {
        Self { m_x0: 2.0, c_x0x0: 1.0 }
    }
}

/// Gaussian value of a mixed fourth central moment `E[p'³q'] = 3·Var(p)·Cov(p,q)`.
#[inline]
pub fn isserlis_fourth(c_pp: f64, c_pq: f64) -> f64 {
    3.0 * c_pp * c_pq
}

pub const MAX_MOMENT_ORDER: usize = 4;

/// Mixed moments `M^{j₁j₂}` of a pair `(p, q)` for `j₁ + j₂ ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    order: usize,
    values: [[Option<f64>; MAX_MOMENT_ORDER + 1]; MAX_MOMENT_ORDER + 1],
}

impl MomentSet {
    pub fn new(order: usize) -> Self {
        assert!(order <= MAX_MOMENT_ORDER, "moment order above {MAX_MOMENT_ORDER}");
        Self { order, values: [[None; MAX_MOMENT_ORDER + 1]; MAX_MOMENT_ORDER + 1] }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn set(&mut self, j1: usize, j2: usize, v: f64) {
        assert!(j1 + j2 <= self.order, "({j1}, {j2}) exceeds order {}", self.order);
        self.values[j1][j2] = Some(v);
    }

    pub fn get(&self, j1: usize, j2: usize) -> Option<f64> {
        if j1 + j2 > self.order {
            return None;
        }
        self.values[j1][j2]
    }

    fn require(&self, j1: usize, j2: usize) -> Result<f64> {
        if j1 == 0 && j2 == 0 {
            return Ok(self.values[0][0].unwrap_or(1.0));
        }
        self.get(j1, j2).ok_or(Error::IncompleteMomentSet(j1, j2))
    }

    /// Raw sample moments `(1/n) Σ pⁱqʲ`.
    pub fn raw_from_samples(p: &[f64], q: &[f64], order: usize) -> Self {
        assert_eq!(p.len(), q.len());
        let mut sums = [[0.0; MAX_MOMENT_ORDER + 1]; MAX_MOMENT_ORDER + 1];
        for (&a, &b) in p.iter().zip(q) {
            let mut pa = 1.0;
            for row in sums.iter_mut().take(order + 1) {
                let mut qb = pa;
                for (j2, cell) in row.iter_mut().enumerate() {
                    if j2 > order {
                        break;
                    }
                    *cell += qb;
                    qb *= b;
                }
                pa *= a;
            }
        }
        let n = p.len() as f64;
        let mut out = Self::new(order);
        for j1 in 0..=order {
            for j2 in 0..=(order - j1) {
                out.set(j1, j2, sums[j1][j2] / n);
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn shift_moments(src: &MomentSet, dp: f64, dq: f64) -> Result<MomentSet> {
    let order = src.order;
    let mut out = MomentSet::new(order);
    for j1 in 0..=order {
        for j2 in 0..=(order - j1) {
            let mut acc = 0.0;
            for k1 in 0..=j1 {
                for k2 in 0..=j2 {
                    acc += binomial(j1, k1)
                        * binomial(j2, k2)
                        * dp.powi((j1 - k1) as i32)
                        * dq.powi((j2 - k2) as i32)
                        * src.require(k1, k2)?;
                }
            }
            out.set(j1, j2, acc);
        }
    }
    Ok(out)
}

/// Central moments from raw moments by the inverse binomial expansion.
pub fn central_from_raw(raw: &MomentSet, m_p: f64, m_q: f64) -> Result<MomentSet> {
    shift_moments(raw, -m_p, -m_q)
}

/// Raw moments from central moments by the binomial expansion.
pub fn raw_from_central(central: &MomentSet, m_p: f64, m_q: f64) -> Result<MomentSet> {
    shift_moments(central, m_p, m_q)
}
