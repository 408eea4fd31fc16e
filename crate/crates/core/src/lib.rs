//! Numerical toolkit for minimizing expected `|u|^p` costs under the
//! stochastic target constraint `X_T >= 1{W_T > c}`.
//!
//! The pieces:
//!
//! * [`gaussian`]: standard-normal primitives and the conditional-probability
//!   martingale `M_t = Φ((c - W_t)/√(T - t))`.
//! * [`gsolver`]: shooting solver for the singular boundary-value ODE
//!   `h(y) g'' + (p-1)(g - g^{p/(p-1)}) = 0`, `g(0+) = 1`, `g(1-) = 0`, and
//!   the value function `v(T,x,c) = (1-x)^p T^{1-p} g(Φ(c/√T))`.
//! * [`oracle`]: dynamic programming on a scaled random walk, an independent
//!   ground truth for `v`.
//! * [`sim`]: Brownian path simulation, the optimal feedback control and the
//!   BSDE residual check.
//! * [`expcase`]: the exponential-cost problem and its duality witnesses.
//! * [`verify`]: the invariant suites behind `targetcost verify`.
//!
//! Monte Carlo and lattice sweeps run on rayon when the `parallel` feature
//! is enabled (the default); see [`exec`].

pub mod error;
pub mod exec;
pub mod expcase;
pub mod gaussian;
pub mod gsolver;
pub mod ode;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;

pub use gsolver::{GCurve, ShootConfig, ShootingResult, StepControl};
pub use params::Params;
