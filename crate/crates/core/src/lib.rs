//! Monolithic solver library for incompressible Navier-Stokes systems with
//! defective flow-rate boundary conditions enforced by Lagrange multipliers.
//!
//! The monolithic velocity/pressure/multiplier system is solved with
//! right-preconditioned GMRES; the preconditioners are inexact block LU
//! factorizations: standard SIMPLE for the 2x2 case, its augmented extension
//! for the 3x3 flow-rate case (`aug-aS`), the trivial identity-block
//! extension (`aug-aS-I`) and an exact block LU reference.
//!
//! Crate layout:
//! - [`sparse`]: CSR/dense matrices, banded LU, block vectors;
//! - [`mesh`]: structured 2-D triangulations with tagged boundary sections;
//! - [`assembly`]: stabilized P1-P1 finite element operators and the per-step
//!   monolithic system;
//! - [`precond`]: the preconditioner family and inner approximate solvers;
//! - [`krylov`]: GMRES with restart and its flexible variant;
//! - [`oracle`]: analytic channel-flow solutions and error norms;
//! - [`harness`]: time stepping, shipped experiments, CSV/VTK output.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod krylov;
pub mod mesh;
pub mod oracle;
pub mod precond;
pub mod sparse;

pub use error::{Error, Result};
