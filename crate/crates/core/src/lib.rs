//! Controller synthesis for scalar integral delay equations
//!
//! ```text
//! x(t) = a x(t-τ0) + ∫_0^τ0 N(ν) x(t-ν) dν + b U(t-τ1) + ∫_0^τ1 M(ν) U(t-ν) dν
//! ```
//!
//! The feedback kernels `f`, `g` are obtained by a Nyström discretization of
//! the block Fredholm system that cancels the distributed state term, leaving
//! the closed-loop characteristic equation `1 = a e^{-τ0 s}`.
//!
//! Modules, bottom-up:
//!
//! - [`expr`]: kernel formulas (parse, evaluate, differentiate).
//! - [`quadrature`]: uniform grids and composite trapezoid sums.
//! - [`linalg`]: dense LU with partial pivoting and a 1-norm condition estimate.
//! - [`model`]: plant data and algebraic assumption checks.
//! - [`fredholm`]: assembly and solution of the kernel equations, residuals.
//! - [`spectral`]: characteristic functions, zero location, controllability.
//! - [`simulator`]: time marching of open and closed loops.

pub mod expr;
pub mod fredholm;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod simulator;
pub mod spectral;

pub use expr::{Kernel, KernelExpr};
pub use fredholm::{ControllerKernels, FredholmDiscretization, KernelCase, ResidualReport};
pub use model::{DelayDecomposition, PlantModel, ValidationReport};
pub use simulator::Trajectory;
pub use spectral::SpectrumReport;
