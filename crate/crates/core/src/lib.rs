//! Second-order exact-penalization solver for steady Bingham flow.
//!
//! Velocities are P2 Lagrange fields on structured triangulations. The
//! incompressibility constraint is handled by an L1 penalty on the
//! divergence, Huber-regularized inside the generalized Newton systems.

pub mod analysis;
pub mod cli;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod model;
pub mod solvers;
