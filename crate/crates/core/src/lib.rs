//! Causal (non-local in time) response–excitation moment equations for the cubic
//! half-oscillator `ẋ = μ₁x + μ₃x³ + κ₁y + κ₃y³` driven by a stationary colored
//! Gaussian process `y`, with Gaussian moment closure.
//!
//! The crate solves the closed one-time system for `m_x(t)` and `C_xx(t,t)`,
//! rebuilds the two-time covariance surfaces `C_xy(t,s)` and `C_xx(t,s)`, and
//! checks both against an Itô-localized oracle (OU input) and Monte Carlo ensembles.

pub mod causal_solver;
pub mod cli;
pub mod error;
pub mod excitation;
pub mod history;
pub mod ito_reference;
pub mod monte_carlo;
pub mod ode;
pub mod oscillator;
pub mod quadrature;
pub mod two_time;

pub use error::{Error, Result};
