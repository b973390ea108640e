//! Optimal control of the stationary nonlocal Kirchhoff equation.
//!
//! The state equation is an elliptic PDE whose diffusion coefficient
//! `u + b ||grad y||^2` couples every point of the domain through the total
//! Dirichlet energy. This crate discretizes the control problem with P1
//! finite elements on triangular meshes, replaces the bound constraints
//! `u_a <= u <= u_b` by a Moreau-Yosida penalty, and solves the resulting
//! optimality system with a damped semismooth Newton method that performs a
//! nonlinear state update in every iteration.
//!
//! Module map:
//! - [`mesh`]: structured rectangle triangulations, uniform refinement, file i/o
//! - [`fem`]: P1 mass/stiffness assembly, lumped mass, boundary projectors
//! - [`sparse`]: sparse storage, direct solves with residual checks,
//!   sparse-plus-low-rank composite operators
//! - [`forward`]: the nonlinear state solve via its scalar-root reduction
//! - [`optsys`]: objective, Lagrangian derivatives, Newton blocks, active sets
//! - [`ssn`]: the damped semismooth Newton loop with residual bookkeeping

// Index loops over several parallel nodal arrays and NaN-rejecting `!(x > 0)`
// guards are used throughout.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fem;
pub mod forward;
pub mod mesh;
pub mod optsys;
pub mod sparse;
pub mod ssn;

pub use error::{Error, Result};
pub use fem::FemOperators;
pub use forward::{ForwardConfig, ForwardSolver};
pub use mesh::Mesh;
pub use optsys::{ActiveSets, CutoffFamily, Iterate, ProblemData};
pub use ssn::{Init, NewtonReport, SsnConfig, SsnContext};
