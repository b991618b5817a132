//! Concrete layers: explicit building blocks and implicit layers given by
//! residual systems.

pub mod dense;
pub mod levelset;
pub mod matching;
pub mod ncut;
pub mod qp;

pub use dense::{dense, log_softmax, softmax};
pub use levelset::{levelset_forward, levelset_residual, Contour, ContourVertex, EdgeDir, EdgeId, LevelSetGrid2D};
pub use matching::{sm_residual, smac_residual, MatchingInstance};
pub use ncut::{ncut_residual, ncut_segment, GraphAffinity};
pub use qp::{qp_layer_backward_param_grads, qp_residual, KktPoint, QpProblem};
