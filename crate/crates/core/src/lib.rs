//! Implicitly defined neural-network layers.
//!
//! A layer is specified by a residual system `F(x, y) = 0`: its forward pass
//! is delegated to a solver, and its backward pass follows mechanically from
//! the implicit function theorem, `∂y/∂x = −J_{F,y}⁻¹ J_{F,x}`, with both
//! partial Jacobians supplied by the reverse-mode tape in [`autodiff`].
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod implicit;
pub mod layers;
pub mod linalg;
pub mod mat;
pub mod solvers;
pub mod train;

pub use error::{Error, Result};
pub use mat::Mat;
