use crate::al::{active_set_delta, rollout, assemble_newton, eval_al_gradients, line_search_data, stationarity, ALGradients, ALMState, NewtonStep};
use crate::{LinearSolver, QPALMSettings, QpalmError};
use cyqlone::{factor, CyqloneFactor, StageUpdate};
use ocp_model::{dense_kkt_oracle, kkt_residual_qp, Matrix, OCPProblem, Solution, SolveStatus, Vector};
use std::time::{Duration, Instant};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub line_search_iterations: usize,
    pub factorizations: usize,
    pub updates: usize,
    /// Columns refactored or updated over all factorization updates.
    pub refactored_columns: usize,
    pub updated_columns: usize,
    pub total_time: Duration,
    pub factor_time: Duration,
    pub update_time: Duration,
    pub solve_time: Duration,
    pub line_search_time: Duration,
    /// Phases of the full factorizations.
    pub riccati_time: Duration,
    pub schur_time: Duration,
    pub cr_time: Duration,
    pub tail_time: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerStats {
    pub iterations: usize,
    pub stationarity: f64,
}

#[derive(Clone, Debug)]
pub struct QpalmReport {
    pub solution: Solution,
    pub stats: SolveStats,
}

/// Newton system solver that keeps a factorization between inner
/// iterations and updates it when the active set changes.
#[derive(Default)]
pub struct NewtonSolver {
    factor: Option<CyqloneFactor>,
    /// Active set the stored factor represents.
    active: Vec<Vec<bool>>,
}

impl NewtonSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forces the next step to factor from scratch, e.g. after the
    /// penalties changed.
    pub fn invalidate(&mut self) {
        self.factor = None;
    }

    fn refactor(&mut self, eq: &ocp_model::EqOCP, settings: &QPALMSettings, stats: &mut SolveStats) -> Result<(), QpalmError> {
        let t0 = Instant::now();
        let f = factor(eq, settings.cyqlone)?;
        stats.factor_time += t0.elapsed();
        stats.factorizations += 1;
        stats.riccati_time += f.stats.riccati_time;
        stats.schur_time += f.stats.schur_time;
        stats.cr_time += f.stats.cr_time;
        stats.tail_time += f.stats.tail_time;
        self.factor = Some(f);
        Ok(())
    }

    pub fn step(&mut self, state: &ALMState, p: &OCPProblem, g: &ALGradients, settings: &QPALMSettings, stats: &mut SolveStats) -> Result<NewtonStep, QpalmError> {
        let (eq, rhs) = assemble_newton(state, p, g);
        if settings.linear == LinearSolver::Dense {
            let t0 = Instant::now();
            let sol = dense_kkt_oracle(&eq, &rhs)?;
            stats.solve_time += t0.elapsed();
            return Ok(feasible_step(p, NewtonStep::from_eq(sol)));
        }
        match &mut self.factor {
            Some(f) if settings.use_updates => {
                let delta = active_set_delta(&self.active, &g.active, &state.sigma);
                if delta.iter().any(|d| d.iter().any(|&v| v != 0.0)) {
                    let n = p.horizon();
                    let mods: Vec<StageUpdate> = delta
                        .into_iter()
                        .enumerate()
                        .map(|(j, delta)| {
                            let (c, d) = if j < n {
                                (p.stages[j].c.clone(), p.stages[j].d.clone())
                            } else {
                                (p.terminal.c.clone(), Matrix::zeros(p.terminal.c.nrows(), p.nu))
                            };
                            StageUpdate { c, d, delta }
                        })
                        .collect();
                    let t0 = Instant::now();
                    let res = f.update(&mods);
                    stats.update_time += t0.elapsed();
                    match res {
                        Ok(rep) => {
                            stats.updates += 1;
                            stats.updated_columns += rep.updated_columns;
                            stats.refactored_columns += rep.refactored_columns;
                        }
                        Err(_) => self.refactor(&eq, settings, stats)?,
                    }
                }
            }
            _ => self.refactor(&eq, settings, stats)?,
        }
        self.active = g.active.clone();
        let t0 = Instant::now();
        let sol = self.factor.as_ref().expect("factor is present").solve(&rhs)?;
        stats.solve_time += t0.elapsed();
        Ok(feasible_step(p, NewtonStep::from_eq(sol)))
    }
}

/// Recomputes `Δx` from `Δu` through the linearized dynamics. The solve
/// leaves errors of the order of the full gradient in `Δx`, which would
/// otherwise swamp the slope of the merit function near a solution.
fn feasible_step(p: &OCPProblem, mut step: NewtonStep) -> NewtonStep {
    step.dx[0].fill(0.0);
    for (j, s) in p.stages.iter().enumerate() {
        step.dx[j + 1] = &s.a * &step.dx[j] + &s.b * &step.du[j];
    }
    step
}

fn axpy(y: &mut [Vector], x: &[Vector], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.axpy(a, xi, 1.0);
    }
}

const STEP_FLOOR: f64 = 1e-10;

fn state_norm(state: &ALMState) -> f64 {
    state.u.iter().chain(&state.x).map(|v| v.amax()).fold(0.0, f64::max)
}

/// Semismooth Newton method on the current augmented Lagrangian until its
/// stationarity residual drops to `tol`. The dynamics multipliers are taken
/// from every Newton solve.
pub fn inner_newton_loop(
    state: &mut ALMState,
    p: &OCPProblem,
    settings: &QPALMSettings,
    tol: f64,
    newton: &mut NewtonSolver,
    stats: &mut SolveStats,
) -> Result<InnerStats, QpalmError> {
    let workers = settings.cyqlone.workers;
    for it in 0..=settings.max_inner {
        let g = eval_al_gradients(state, p, workers);
        state.active = g.active.clone();
        let stat = stationarity(p, &g, &state.lam);
        if stat <= tol {
            return Ok(InnerStats { iterations: it, stationarity: stat });
        }
        if it == settings.max_inner {
            break;
        }
        let step = newton.step(state, p, &g, settings, stats)?;
        stats.inner_iterations += 1;
        let t0 = Instant::now();
        let ls = line_search_data(state, p, &step, workers);
        let res = ls.solve(workers);
        stats.line_search_time += t0.elapsed();
        // The Newton system makes the slope at zero equal to minus the
        // curvature there. Once they disagree on a tiny step, the slope is
        // rounding noise and the iterate is as stationary as it gets.
        let noisy = !(ls.beta < 0.0) || (ls.beta + ls.eta).abs() > 0.1 * ls.eta.abs();
        if noisy && step.inf_norm() <= STEP_FLOOR * (1.0 + state_norm(state)) {
            return Ok(InnerStats { iterations: it, stationarity: stat });
        }
        let tau = match res {
            Ok(r) => {
                stats.line_search_iterations += r.iterations;
                r.tau
            }
            Err(e) => return Err(e),
        };
        axpy(&mut state.u, &step.du, tau);
        state.x = rollout(p, &state.u);
        state.lam = step.lam;
    }
    Err(QpalmError::InnerIterations { iterations: settings.max_inner })
}

/// Initial guess for the next MPC problem: every stage takes the values of
/// its successor and the last stage is repeated.
pub fn shift_solution(sol: &Solution) -> Solution {
    fn shift(v: &[Vector]) -> Vec<Vector> {
        let mut out: Vec<Vector> = v.iter().skip(1).cloned().collect();
        if let Some(last) = v.last() {
            out.push(last.clone());
        }
        out
    }
    let n = sol.u.len();
    let mut y = shift(&sol.y[..n]);
    y.push(sol.y[n].clone());
    Solution { u: shift(&sol.u), x: shift(&sol.x), lam: shift(&sol.lam), y, ..sol.clone() }
}

fn warm_fits(p: &OCPProblem, w: &Solution) -> bool {
    let n = p.horizon();
    w.u.len() == n
        && w.lam.len() == n
        && w.y.len() == n + 1
        && w.u.iter().all(|v| v.len() == p.nu)
        && w.lam.iter().all(|v| v.len() == p.nx)
        && (0..=n).all(|j| w.y[j].len() == p.ny(j))
}

/// Constraint violation `‖z − Π(z + Σ⁻¹y)‖_∞` per stage.
fn violations(state: &ALMState, g: &ALGradients) -> Vec<f64> {
    g.y_hat
        .iter()
        .zip(&state.y)
        .zip(&state.sigma)
        .map(|((yh, y), s)| (yh - y).component_div(s).amax())
        .collect()
}

/// Maps dynamics multipliers of the normalized problem back to the original
/// `E` scaling.
fn restore_lam(problem: &OCPProblem, lam: &mut [Vector]) -> Result<(), QpalmError> {
    if let Some(e) = &problem.e {
        for (j, l) in lam.iter_mut().enumerate() {
            let lu = e[j + 1].transpose().lu();
            *l = lu.solve(l).ok_or_else(|| ocp_model::OcpError::Singular(format!("E_{}", j + 1)))?;
        }
    }
    Ok(())
}

/// Outer augmented Lagrangian loop: inner minimization, multiplier update,
/// penalty increase on stages whose violation stagnates, proximal anchor
/// reset and a geometrically tightened inner tolerance.
pub fn alm_outer_loop(problem: &OCPProblem, settings: &QPALMSettings, warm: Option<&Solution>) -> Result<QpalmReport, QpalmError> {
    let start = Instant::now();
    settings.validate()?;
    let p = problem.normalize_e()?;
    let n = p.horizon();
    let mut state = match warm.filter(|_| settings.warm_start) {
        Some(w) if !warm_fits(&p, w) => return Err(QpalmError::WarmStart),
        Some(w) => ALMState::warm(&p, settings, w),
        None => ALMState::cold(&p, settings),
    };
    let workers = settings.cyqlone.workers;
    let mut stats = SolveStats::default();
    let mut newton = NewtonSolver::new();
    let floor = 0.1 * settings.eps_primal.min(settings.eps_dual);
    let mut eps_in = settings.inner_tol_init;
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut status = SolveStatus::MaxIterations;
    let mut sol = state.to_solution(&state.y);
    for _ in 0..settings.max_outer {
        stats.outer_iterations += 1;
        if let Err(e) = inner_newton_loop(&mut state, &p, settings, eps_in.max(floor), &mut newton, &mut stats) {
            match e {
                QpalmError::InnerIterations { .. } | QpalmError::NotDescent { .. } => {
                    sol = state.to_solution(&state.y);
                    status = SolveStatus::Failed;
                    break;
                }
                e => return Err(e),
            }
        }
        let g = eval_al_gradients(&state, &p, workers);
        let viol = violations(&state, &g);
        state.y = g.y_hat;
        sol = state.to_solution(&state.y);
        let res = kkt_residual_qp(&p, &sol);
        if res.primal <= settings.eps_primal && res.dual.max(res.complementarity) <= settings.eps_dual {
            status = SolveStatus::Converged;
            break;
        }
        let mut grown = false;
        for j in 0..=n {
            if viol[j] > settings.eps_primal && viol[j] > settings.violation_decrease * prev[j] {
                for s in state.sigma[j].iter_mut() {
                    let next = (*s * settings.sigma_growth).min(settings.sigma_max);
                    grown |= next != *s;
                    *s = next;
                }
            }
        }
        if grown {
            newton.invalidate();
        }
        prev = viol;
        state.reset_anchors();
        eps_in *= settings.inner_tol_factor;
    }
    restore_lam(problem, &mut sol.lam)?;
    sol.status = status;
    sol.outer_iterations = stats.outer_iterations;
    sol.inner_iterations = stats.inner_iterations;
    sol.residual = kkt_residual_qp(problem, &sol);
    stats.total_time = start.elapsed();
    Ok(QpalmReport { solution: sol, stats })
}
