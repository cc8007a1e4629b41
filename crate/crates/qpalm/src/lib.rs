//! Proximal augmented Lagrangian solver for inequality constrained optimal
//! control problems.
//!
//! Inequality constraints are relaxed by a Γ-proximal, Σ-weighted augmented
//! Lagrangian. Each inner problem is minimized by a semismooth Newton method
//! whose Newton systems are KKT systems with optimal control structure,
//! factored by `cyqlone` and updated in place when only a few constraints
//! change activity. Step sizes come from an exact line search.

mod al;
mod linesearch;
mod oracle;
mod solver;

pub use al::{
    active_set_delta, al_value, assemble_newton, eval_al_gradients, line_search_data, line_search_terms, rollout, stationarity, ALGradients,
    ALMState, NewtonStep,
};
pub use linesearch::{partition_breakpoints, psi_naive, IncrementalPsi, psi_prime_naive, Breakpoint, LineSearchData, LineSearchResult, PartitionSums, MERGE_BELOW, SCAN_BELOW};
pub use oracle::{dense_qp_oracle, DenseQpSolution};
pub use solver::{alm_outer_loop, inner_newton_loop, shift_solution, InnerStats, NewtonSolver, QpalmReport, SolveStats};

use cyqlone::{CyqloneError, CyqloneOptions};
use ocp_model::OcpError;

/// Linear solver for the Newton systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolver {
    Cyqlone,
    /// Dense LU of the full KKT matrix, for cross-checks.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QPALMSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub sigma_init: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    /// A stage's penalties grow unless its violation shrank below this
    /// fraction of the previous one.
    pub violation_decrease: f64,
    pub gamma: f64,
    pub inner_tol_init: f64,
    pub inner_tol_factor: f64,
    pub max_outer: usize,
    /// Newton steps per inner problem.
    pub max_inner: usize,
    /// Factorization updates on active-set changes instead of refactoring.
    pub use_updates: bool,
    /// Whether a supplied initial guess is used.
    pub warm_start: bool,
    pub linear: LinearSolver,
    pub cyqlone: CyqloneOptions,
}

impl Default for QPALMSettings {
    fn default() -> Self {
        QPALMSettings {
            eps_primal: 1e-8,
            eps_dual: 1e-8,
            sigma_init: 1e1,
            sigma_growth: 10.0,
            sigma_max: 1e9,
            violation_decrease: 0.25,
            gamma: 1e7,
            inner_tol_init: 1e-2,
            inner_tol_factor: 0.1,
            max_outer: 100,
            max_inner: 100,
            use_updates: true,
            warm_start: true,
            linear: LinearSolver::Cyqlone,
            cyqlone: CyqloneOptions::default(),
        }
    }
}

impl QPALMSettings {
    pub fn validate(&self) -> Result<(), QpalmError> {
        let bad = |m: &str| Err(QpalmError::Settings(m.into()));
        if !(self.eps_primal > 0.0 && self.eps_dual > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.sigma_growth > 1.0) {
            return bad("penalty growth factor must exceed one");
        }
        if !(self.sigma_init > 0.0 && self.sigma_max >= self.sigma_init) {
            return bad("penalties must be positive with sigma_max >= sigma_init");
        }
        if !(self.gamma > 0.0) {
            return bad("proximal weight must be positive");
        }
        if !(self.inner_tol_init > 0.0 && self.inner_tol_factor > 0.0 && self.inner_tol_factor <= 1.0) {
            return bad("inner tolerance schedule must be positive and nonincreasing");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        self.cyqlone.validate()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QpalmError {
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Model(#[from] OcpError),
    #[error(transparent)]
    Linear(#[from] CyqloneError),
    #[error("search direction is not a descent direction (slope {slope:e})")]
    NotDescent { slope: f64 },
    #[error("merit function has nonpositive curvature {curvature:e} along the direction")]
    NotConvex { curvature: f64 },
    #[error("inner Newton loop did not converge in {iterations} iterations")]
    InnerIterations { iterations: usize },
    #[error("warm start does not match the problem dimensions")]
    WarmStart,
    #[error("dense oracle: {0}")]
    Oracle(String),
}
