//! Optimal control problem data, reference oracles, benchmark generators and
//! serialization.
//!
//! Dynamics follow `x^{j+1} = A_j x^j + B_j u^j + f^j`; the stage cost is
//! `½ [u;x]ᵀ [[R, S], [Sᵀ, Q]] [u;x] + rᵀu + qᵀx` with `S` of shape `nu × nx`.
//! Multipliers `λ^j` belong to the dynamics of stage `j`, so the stationarity
//! row of `x^{j+1}` reads `Q x + Sᵀ u + q + Aᵀ λ^{j+1} − λ^j = 0`.

mod eq;
mod json;
mod mass_spring;
mod oracle;
mod qp;
mod random;

pub use eq::{kkt_matrix_dense, kkt_residual_eq, EqOCP, EqResidual, EqSolution, EqStage, KktRhs};
pub use json::{from_json, to_json, SCHEMA};
pub use mass_spring::{mass_spring_generate, mass_spring_with_state, mass_spring_v, mass_spring_w, sample_x_init, zoh_discretize, MassSpringConfig};
pub use oracle::{dense_kkt_oracle, riccati_oracle};
pub use qp::{kkt_residual_qp, OCPProblem, QpResidual, QpStage, Solution, SolveStatus, Terminal};
pub use random::{random_eq_ocp, random_ocp, random_spd, RandomDims};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

#[derive(Debug, thiserror::Error)]
pub enum OcpError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
