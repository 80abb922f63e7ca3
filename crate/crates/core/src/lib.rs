//! Numerical core for mean-variance optimal control of PDE models with
//! Gaussian random-field coefficients.
//!
//! The crate is `no_std` (with `alloc`). Enabling the `parallel` feature pulls
//! in `std` and dispatches independent PDE solves (per sample, per random
//! direction) through rayon; results are identical with or without it.
//!
//! Layering, bottom to top:
//!
//! * [`fem`]: structured P1 triangles, sparse matrices, envelope Cholesky,
//!   dense symmetric eigensolver, counter-based normal variates.
//! * [`prior`]: discretized Matérn field `C = (α₁(-∇·Θ∇) + α₂)⁻²`.
//! * [`model`]: the derivative-form interface plus the elliptic subsurface
//!   flow model and an exactly quadratic test model.
//! * [`hessact`]: gradient and Hessian actions of the objective in the
//!   uncertain parameter.
//! * [`randeig`]: double-pass randomized generalized eigensolver and the two
//!   trace estimators.
//! * [`estimators`]: Monte Carlo, Taylor, and control-variate moment estimates.
//! * [`optctrl`]: the five cost functionals, their control gradients, and a
//!   projected L-BFGS driver.
#![cfg_attr(not(test), no_std)]

extern crate alloc;
#[cfg(all(feature = "std", not(test)))]
extern crate std;

pub mod error;
pub mod estimators;
pub mod fem;
pub mod hessact;
pub mod ledger;
pub mod linalg;
pub mod model;
pub mod optctrl;
pub mod par;
pub mod prior;
pub mod randeig;

mod float;

pub use error::{Error, Result};
pub use ledger::SolveLedger;
