//! Proximal augmented Lagrangian of the inequality constrained OCP and its
//! semismooth Newton systems.
//!
//! All functions expect a problem without `E` matrices (see
//! [`OCPProblem::normalize_e`]). The initial state is fixed to `x_init`.

use crate::linesearch::LineSearchData;
use crate::QPALMSettings;
use ocp_model::{EqOCP, EqSolution, EqStage, KktRhs, Matrix, OCPProblem, Solution, Vector};

/// Iterate, multipliers, penalties and proximal anchors of the method.
#[derive(Clone, Debug, PartialEq)]
pub struct ALMState {
    pub u: Vec<Vector>,
    pub x: Vec<Vector>,
    /// Dynamics multipliers, one per stage.
    pub lam: Vec<Vector>,
    /// Inequality multipliers, terminal last.
    pub y: Vec<Vector>,
    /// Diagonal penalties `Σ_j`.
    pub sigma: Vec<Vector>,
    /// Diagonals of `Γ_x` and `Γ_u`.
    pub gamma_x: Vector,
    pub gamma_u: Vector,
    pub x_bar: Vec<Vector>,
    pub u_bar: Vec<Vector>,
    /// Active set at the last gradient evaluation.
    pub active: Vec<Vec<bool>>,
}

/// Negative-free gradients `r^j, q^j` of the stage functions, the
/// multiplier estimates `ŷ^j`, the dynamics residuals `c^j` and the active
/// sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ALGradients {
    pub r: Vec<Vector>,
    /// `q^0 … q^N`; `q^0` is unused since `x^0` is fixed.
    pub q: Vec<Vector>,
    pub y_hat: Vec<Vector>,
    pub c: Vec<Vector>,
    pub active: Vec<Vec<bool>>,
}

/// Newton step on `(u, x)` and the dynamics multipliers that come with it.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonStep {
    pub du: Vec<Vector>,
    pub dx: Vec<Vector>,
    pub lam: Vec<Vector>,
}

impl NewtonStep {
    pub fn from_eq(sol: EqSolution) -> Self {
        NewtonStep { du: sol.u, dx: sol.x, lam: sol.lam }
    }

    pub fn inf_norm(&self) -> f64 {
        self.du.iter().chain(&self.dx).fold(0.0_f64, |m, v| m.max(v.amax()))
    }
}

pub(crate) fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Constraint rows and values of stage `j` (terminal at `j = N`).
fn rows(p: &OCPProblem, u: &[Vector], x: &[Vector], j: usize) -> Vector {
    if j < p.horizon() {
        let s = &p.stages[j];
        &s.c * &x[j] + &s.d * &u[j]
    } else {
        &p.terminal.c * &x[j]
    }
}

/// `x^{j+1} = A x^j + B u^j + f` from `x_init`.
pub fn rollout(p: &OCPProblem, u: &[Vector]) -> Vec<Vector> {
    let mut x = Vec::with_capacity(u.len() + 1);
    x.push(p.x_init.clone());
    for (j, s) in p.stages.iter().enumerate() {
        let next = &s.a * &x[j] + &s.b * &u[j] + &s.f;
        x.push(next);
    }
    x
}

impl ALMState {
    /// Zero controls rolled out from the initial state, zero multipliers.
    pub fn cold(p: &OCPProblem, settings: &QPALMSettings) -> Self {
        let u = vec![Vector::zeros(p.nu); p.horizon()];
        Self::from_parts(p, settings, u, None, None)
    }

    /// Starts from a previous solution: its controls are rolled out from
    /// this problem's initial state and its multipliers are reused.
    pub fn warm(p: &OCPProblem, settings: &QPALMSettings, from: &Solution) -> Self {
        Self::from_parts(p, settings, from.u.clone(), Some(from.lam.clone()), Some(from.y.clone()))
    }

    fn from_parts(p: &OCPProblem, settings: &QPALMSettings, u: Vec<Vector>, lam: Option<Vec<Vector>>, y: Option<Vec<Vector>>) -> Self {
        let n = p.horizon();
        let x = rollout(p, &u);
        let ny: Vec<usize> = (0..=n).map(|j| p.ny(j)).collect();
        ALMState {
            lam: lam.unwrap_or_else(|| vec![Vector::zeros(p.nx); n]),
            y: y.unwrap_or_else(|| ny.iter().map(|&m| Vector::zeros(m)).collect()),
            sigma: ny.iter().map(|&m| Vector::from_element(m, settings.sigma_init)).collect(),
            gamma_x: Vector::from_element(p.nx, settings.gamma),
            gamma_u: Vector::from_element(p.nu, settings.gamma),
            x_bar: x.clone(),
            u_bar: u.clone(),
            active: ny.iter().map(|&m| vec![false; m]).collect(),
            u,
            x,
        }
    }

    /// Moves the proximal anchors to the current iterate.
    pub fn reset_anchors(&mut self) {
        self.x_bar = self.x.clone();
        self.u_bar = self.u.clone();
    }

    pub fn to_solution(&self, y: &[Vector]) -> Solution {
        Solution {
            u: self.u.clone(),
            x: self.x.clone(),
            lam: self.lam.clone(),
            y: y.to_vec(),
            status: ocp_model::SolveStatus::Failed,
            outer_iterations: 0,
            inner_iterations: 0,
            residual: Default::default(),
        }
    }
}

/// Value of the augmented Lagrangian `Σ_j ℓ^Σ_j + ℓ^Σ_N`.
pub fn al_value(state: &ALMState, p: &OCPProblem) -> f64 {
    let n = p.horizon();
    let mut v = p.objective(&state.u, &state.x);
    for j in 0..=n {
        let z = rows(p, &state.u, &state.x, j);
        let (bl, bu) = p.bounds(j);
        for i in 0..z.len() {
            let s = state.sigma[j][i];
            let w = z[i] + state.y[j][i] / s;
            let d = w - clamp(w, bl[i], bu[i]);
            v += 0.5 * s * d * d;
        }
        let dx = &state.x[j] - &state.x_bar[j];
        v += 0.5 * dx.component_div(&state.gamma_x).dot(&dx);
        if j < n {
            let du = &state.u[j] - &state.u_bar[j];
            v += 0.5 * du.component_div(&state.gamma_u).dot(&du);
        }
    }
    v
}

struct StageGrad {
    r: Option<Vector>,
    q: Vector,
    y_hat: Vector,
    c: Option<Vector>,
    active: Vec<bool>,
}

fn stage_grad(state: &ALMState, p: &OCPProblem, j: usize) -> StageGrad {
    let n = p.horizon();
    let z = rows(p, &state.u, &state.x, j);
    let (bl, bu) = p.bounds(j);
    let (sig, y) = (&state.sigma[j], &state.y[j]);
    let mut yh = Vector::zeros(z.len());
    let mut active = vec![false; z.len()];
    for i in 0..z.len() {
        let w = z[i] + y[i] / sig[i];
        let pw = clamp(w, bl[i], bu[i]);
        active[i] = w != pw;
        yh[i] = sig[i] * (w - pw);
    }
    let x = &state.x[j];
    let gx_prox = (x - &state.x_bar[j]).component_div(&state.gamma_x);
    if j < n {
        let s = &p.stages[j];
        let u = &state.u[j];
        let gu_prox = (u - &state.u_bar[j]).component_div(&state.gamma_u);
        StageGrad {
            r: Some(&s.r * u + &s.s * x + &s.r_lin + s.d.tr_mul(&yh) + gu_prox),
            q: s.s.tr_mul(u) + &s.q * x + &s.q_lin + s.c.tr_mul(&yh) + gx_prox,
            c: Some(&s.a * x + &s.b * u + &s.f - &state.x[j + 1]),
            y_hat: yh,
            active,
        }
    } else {
        let t = &p.terminal;
        StageGrad { r: None, q: &t.q * x + &t.q_lin + t.c.tr_mul(&yh) + gx_prox, c: None, y_hat: yh, active }
    }
}

/// Runs `f(j)` for every stage `0..=N` on `workers` threads, in stage order.
fn per_stage<T: Send, F: Fn(usize) -> T + Sync>(n: usize, workers: usize, f: F) -> Vec<T> {
    let mut out: Vec<Option<T>> = (0..=n).map(|_| None).collect();
    batla::par::for_each_round_robin(&mut out, workers, |j, o| *o = Some(f(j)));
    out.into_iter().map(|o| o.expect("every stage is visited")).collect()
}

/// Gradients of the stage functions, multiplier estimates and active sets.
pub fn eval_al_gradients(state: &ALMState, p: &OCPProblem, workers: usize) -> ALGradients {
    let n = p.horizon();
    let mut out = ALGradients {
        r: Vec::with_capacity(n),
        q: Vec::with_capacity(n + 1),
        y_hat: Vec::with_capacity(n + 1),
        c: Vec::with_capacity(n),
        active: Vec::with_capacity(n + 1),
    };
    for sg in per_stage(n, workers, |j| stage_grad(state, p, j)) {
        out.r.extend(sg.r);
        out.c.extend(sg.c);
        out.q.push(sg.q);
        out.y_hat.push(sg.y_hat);
        out.active.push(sg.active);
    }
    out
}

/// `‖∇ℓ^Σ + (dynamics Jacobian)ᵀ λ‖_∞` over all free variables.
pub fn stationarity(p: &OCPProblem, g: &ALGradients, lam: &[Vector]) -> f64 {
    let n = p.horizon();
    let mut m = 0.0_f64;
    for j in 0..n {
        let s = &p.stages[j];
        m = m.max((&g.r[j] + s.b.tr_mul(&lam[j])).amax());
        if j > 0 {
            m = m.max((&g.q[j] + s.a.tr_mul(&lam[j]) - &lam[j - 1]).amax());
        }
    }
    m.max((&g.q[n] - &lam[n - 1]).amax())
}

fn penalty(c: &Matrix, sigma: &Vector, active: &[bool]) -> Matrix {
    let s = Vector::from_fn(sigma.len(), |i, _| if active[i] { sigma[i] } else { 0.0 });
    c.transpose() * Matrix::from_diagonal(&s)
}

/// Newton system at the current iterate: generalized Hessians plus
/// proximal terms, and the negative gradients and residuals as data.
pub fn assemble_newton(state: &ALMState, p: &OCPProblem, g: &ALGradients) -> (EqOCP, KktRhs) {
    let n = p.horizon();
    let gx = Matrix::from_diagonal(&state.gamma_x.map(|v| 1.0 / v));
    let gu = Matrix::from_diagonal(&state.gamma_u.map(|v| 1.0 / v));
    let stages = p
        .stages
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let dts = penalty(&s.d, &state.sigma[j], &g.active[j]);
            let cts = penalty(&s.c, &state.sigma[j], &g.active[j]);
            EqStage {
                a: s.a.clone(),
                b: s.b.clone(),
                f: Vector::zeros(p.nx),
                r: &s.r + &dts * &s.d + &gu,
                s: &s.s + &dts * &s.c,
                q: &s.q + &cts * &s.c + &gx,
                r_lin: Vector::zeros(p.nu),
                q_lin: Vector::zeros(p.nx),
            }
        })
        .collect();
    let t = &p.terminal;
    let qn = &t.q + penalty(&t.c, &state.sigma[n], &g.active[n]) * &t.c + &gx;
    let eq = EqOCP { nx: p.nx, nu: p.nu, stages, qn, qn_lin: Vector::zeros(p.nx), x_init: Vector::zeros(p.nx) };
    // iterates are dynamically feasible, so the step keeps the dynamics
    let rhs = KktRhs { r: g.r.clone(), q: g.q.clone(), f: vec![Vector::zeros(p.nx); n], x_init: Vector::zeros(p.nx) };
    (eq, rhs)
}

/// Change of the active penalty diagonal between two active sets:
/// `+Σ_ii` for newly active, `−Σ_ii` for newly inactive constraints.
pub fn active_set_delta(prev: &[Vec<bool>], new: &[Vec<bool>], sigma: &[Vector]) -> Vec<Vector> {
    prev.iter()
        .zip(new)
        .zip(sigma)
        .map(|((a, b), s)| {
            Vector::from_fn(s.len(), |i, _| match (a[i], b[i]) {
                (false, true) => s[i],
                (true, false) => -s[i],
                _ => 0.0,
            })
        })
        .collect()
}

struct StageLs {
    eta: f64,
    beta: f64,
    alpha: Vec<f64>,
    delta: Vec<f64>,
}

fn stage_ls(state: &ALMState, p: &OCPProblem, step: &NewtonStep, j: usize) -> StageLs {
    let n = p.horizon();
    let (x, dx) = (&state.x[j], &step.dx[j]);
    let gdx = dx.component_div(&state.gamma_x);
    let mut eta = gdx.dot(dx);
    let mut beta = gdx.dot(&(x - &state.x_bar[j]));
    if j < n {
        let s = &p.stages[j];
        let (u, du) = (&state.u[j], &step.du[j]);
        let hu = &s.r * du + &s.s * dx;
        let hx = s.s.tr_mul(du) + &s.q * dx;
        let gdu = du.component_div(&state.gamma_u);
        eta += hu.dot(du) + hx.dot(dx) + gdu.dot(du);
        beta += hu.dot(u) + hx.dot(x) + s.r_lin.dot(du) + s.q_lin.dot(dx) + gdu.dot(&(u - &state.u_bar[j]));
    } else {
        let t = &p.terminal;
        let hx = &t.q * dx;
        eta += hx.dot(dx);
        beta += hx.dot(x) + t.q_lin.dot(dx);
    }
    let z = rows(p, &state.u, &state.x, j);
    let gd = rows(p, &step.du, &step.dx, j);
    let (bl, bu) = p.bounds(j);
    let mut alpha = Vec::with_capacity(2 * z.len());
    let mut delta = Vec::with_capacity(2 * z.len());
    for i in 0..z.len() {
        let (s, y) = (state.sigma[j][i], state.y[j][i]);
        let rs = s.sqrt();
        alpha.push((y + s * (z[i] - bl[i])) / rs);
        delta.push(-rs * gd[i]);
        alpha.push(-(y + s * (z[i] - bu[i])) / rs);
        delta.push(rs * gd[i]);
    }
    StageLs { eta, beta, alpha, delta }
}

/// Raw `η, β, α, δ` of `ψ(τ) = ℓ^Σ(z + τd)`, stage by stage.
pub fn line_search_terms(state: &ALMState, p: &OCPProblem, step: &NewtonStep, workers: usize) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let parts = per_stage(p.horizon(), workers, |j| stage_ls(state, p, step, j));
    let (mut eta, mut beta) = (0.0, 0.0);
    let (mut alpha, mut delta) = (Vec::new(), Vec::new());
    for s in parts {
        eta += s.eta;
        beta += s.beta;
        alpha.extend(s.alpha);
        delta.extend(s.delta);
    }
    (eta, beta, alpha, delta)
}

/// Curvature, slope and breakpoints of the merit function along `d`.
pub fn line_search_data(state: &ALMState, p: &OCPProblem, step: &NewtonStep, workers: usize) -> LineSearchData {
    let (eta, beta, alpha, delta) = line_search_terms(state, p, step, workers);
    LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta)
}
