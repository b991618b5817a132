//! Forward-pass solvers.
//!
//! None of these participate in differentiation: the backward pass of an
//! implicit layer only needs the point they return.

mod interior_point;
mod newton;
mod sinkhorn;
mod spectral;

pub use interior_point::{ip_qp_solve, IpConfig};
pub use newton::{newton_solve, NewtonConfig, NewtonSolver};
pub use sinkhorn::sinkhorn;
pub use spectral::{
    leading_eigvec, rayleigh_grad, second_gen_eigpair, smac_kkt_residual, smac_solve, SmacSolution, GAP_TOL,
};
