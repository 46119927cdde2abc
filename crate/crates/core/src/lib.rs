//! Numerical tools for stochastic equations driven by a pair of fractional
//! Brownian sheets.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`]: Gamma, Gauss hypergeometric function, Wendel ratios, `erf`.
//! * [`quad`]: Gauss-Legendre and tanh-sinh rules used by the other modules.
//! * [`fraccalc`]: grid Riemann-Liouville integrals and derivatives on `[0,T]^2`.
//! * [`kernels`]: Volterra kernels, covariance and mixed variance of the noise.
//! * [`simulate`]: Brownian sheet increments and the correlated sheet pair.
//! * [`girsanov`]: the operators between drifts and shifts, drift pairs and densities.
//! * [`bounds`]: constant sequences and the inequalities they control.
//! * [`sde_solver`]: Picard solver, comparison runs and occupation estimates.
//! * [`stats`]: sample summaries and the two-sample Kolmogorov-Smirnov test.
//! * [`report`]: named pass/fail records used by the verification routines.

mod error;

pub mod bounds;
pub mod fraccalc;
pub mod girsanov;
pub mod kernels;
pub mod quad;
pub mod report;
pub mod sde_solver;
pub mod simulate;
pub mod specfun;
pub mod stats;

pub use error::{Error, Result};
