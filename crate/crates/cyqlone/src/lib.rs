//! Parallel structured factorization of optimal control KKT systems.
//!
//! The horizon is split into `P` block columns. Each column runs a modified
//! Riccati recursion independently, the columns' contributions form a block
//! tridiagonal Schur complement in the multipliers of the column boundaries,
//! and that Schur complement is factored by cyclic reduction. Low-rank
//! changes of the stage Hessians are absorbed by hyperbolic factor updates.

mod blocks;
mod factor;
mod flop_model;
mod partition;
mod riccati;
mod schur_update;
mod update;

pub use blocktri::{nu2, TailKind};
pub use factor::{compute_schur, factor, factor_block_column_riccati, factor_schur, ColumnBlocks, CyqloneFactor, DenseFactor, FactorStats};
pub use flop_model::{flops_critical_path, FlopModel};
pub use partition::{pad_problem, Partition};
pub use schur_update::SchurPath;
pub use update::{StageUpdate, UpdateReport};

use blocktri::BlockTriError;
use ocp_model::OcpError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CyqloneOptions {
    /// Number of block columns, a power of two.
    pub partitions: usize,
    /// Lanes per group: 1, 2, 4 or 8.
    pub vlen: usize,
    pub workers: usize,
    pub tail: TailKind,
    /// A column or Schur level is refactored instead of updated once the
    /// accumulated update rank reaches `refactor_ratio * nx`.
    pub refactor_ratio: f64,
}

impl Default for CyqloneOptions {
    fn default() -> Self {
        CyqloneOptions { partitions: 1, vlen: 1, workers: 1, tail: TailKind::Cr1, refactor_ratio: 0.5 }
    }
}

impl CyqloneOptions {
    pub fn with_partitions(partitions: usize) -> Self {
        CyqloneOptions { partitions, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), CyqloneError> {
        if self.partitions == 0 || !self.partitions.is_power_of_two() {
            return Err(CyqloneError::Options(format!("partition count {} is not a power of two", self.partitions)));
        }
        if ![1, 2, 4, 8].contains(&self.vlen) {
            return Err(CyqloneError::Options(format!("vector length {} not in {{1, 2, 4, 8}}", self.vlen)));
        }
        if self.workers == 0 {
            return Err(CyqloneError::Options("worker count must be positive".into()));
        }
        if !(self.refactor_ratio >= 0.0) {
            return Err(CyqloneError::Options("refactor ratio must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CyqloneError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("Riccati factorization failed in column {column} at stage {stage}")]
    Riccati { column: usize, stage: usize },
    #[error("Schur complement factorization failed: {0}")]
    Schur(BlockTriError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("problem data: {0}")]
    Model(String),
}

impl From<BlockTriError> for CyqloneError {
    fn from(e: BlockTriError) -> Self {
        CyqloneError::Schur(e)
    }
}

impl From<OcpError> for CyqloneError {
    fn from(e: OcpError) -> Self {
        match e {
            OcpError::Shape(s) => CyqloneError::Shape(s),
            other => CyqloneError::Model(other.to_string()),
        }
    }
}
