//! Batched dense linear algebra on small matrices.
//!
//! Matrices of equal shape are stored interleaved, `vlen` at a time, so that
//! the same element of every matrix in a group is contiguous and kernels can
//! process a whole group with lane-innermost loops.

mod batch;
pub mod flops;
mod hyh;
pub mod kernels;
mod layout;
pub mod par;
mod view;

pub use batch::{
    gemm_batch, hyh_transform_batch, lane_rotate, pack, pack_kind, potrf_batch, syrk_batch, trmm_batch, trsm_batch,
    trsyrk_batch, trtri_batch, unpack,
};
pub use hyh::{downdate_min_ratio, hyh_apply, hyh_transform, HyhHandle};
pub use kernels::{LaneFailure, Side, Tri, TrsmMode};
pub use layout::{compact_offset, BatchMatrix, Kind, Mat};
pub use view::{MatMut, MatRef};

/// Scalar type accepted by the kernels.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + Default + Send + Sync + core::fmt::Debug + core::fmt::Display + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BatlaError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("vector length must be positive, got {0}")]
    InvalidVlen(usize),
    #[error("non-positive pivot {pivot} in matrix {batch_index}")]
    Pivot { batch_index: usize, pivot: usize },
    #[error("zero diagonal entry {index} in matrix {batch_index}")]
    ZeroDiagonal { batch_index: usize, index: usize },
    #[error("hyperbolic update breakdown at column {column} of matrix {batch_index}")]
    Breakdown { batch_index: usize, column: usize },
}

pub type MatF64 = Mat<f64>;
pub type BatchMatrixF64 = BatchMatrix<f64>;
pub type MatF32 = Mat<f32>;
pub type BatchMatrixF32 = BatchMatrix<f32>;
