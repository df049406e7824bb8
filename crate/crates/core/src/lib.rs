//! Numerical laboratory for the periodic weakly dissipative
//! μ-Degasperis-Procesi equation
//!
//! ```text
//! y_t + u y_x + 3 u_x y + λ y = 0,   y = μ(u) − u_xx,   x ∈ ℝ/ℤ
//! ```
//!
//! Two independent solvers (pseudospectral Eulerian and Lagrangian
//! particles) plus diagnostics for the mean-decay law, the blow-up
//! criterion and logistic blow-up time, the H¹ balance of the momentum,
//! the momentum transport law, and the global-existence bound.

pub mod diagnostics;
pub mod error;
pub mod eulerian;
pub mod harness;
pub mod integrator;
pub mod lagrangian;
pub mod spectral;

pub use error::{MudpError, Result};
