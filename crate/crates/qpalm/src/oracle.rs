//! Reference solver: the states are eliminated through the dynamics and the
//! resulting dense QP in the controls is solved by a Mehrotra
//! predictor-corrector interior point method.

use crate::QpalmError;
use ocp_model::{kkt_residual_qp, Matrix, OCPProblem, QpResidual, Solution, SolveStatus, Vector};

#[derive(Clone, Debug)]
pub struct DenseQpSolution {
    pub solution: Solution,
    pub objective: f64,
    pub iterations: usize,
}

/// `X = W U + w0` over the stacked `(u^0…u^{N−1}, x^0…x^N)`.
struct Condensed {
    w: Matrix,
    w0: Vector,
    nu_tot: usize,
}

fn condense(p: &OCPProblem) -> Condensed {
    let (nx, nu, n) = (p.nx, p.nu, p.horizon());
    let nu_tot = n * nu;
    let dim = nu_tot + (n + 1) * nx;
    let mut w = Matrix::zeros(dim, nu_tot);
    let mut w0 = Vector::zeros(dim);
    w.view_mut((0, 0), (nu_tot, nu_tot)).fill_with_identity();
    let xo = |j: usize| nu_tot + j * nx;
    w0.rows_mut(xo(0), nx).copy_from(&p.x_init);
    for (j, s) in p.stages.iter().enumerate() {
        let prev = w.rows(xo(j), nx).into_owned();
        let mut next = &s.a * prev;
        next.view_mut((0, j * nu), (nx, nu)).add_assign(&s.b);
        w.rows_mut(xo(j + 1), nx).copy_from(&next);
        let x0 = &s.a * w0.rows(xo(j), nx) + &s.f;
        w0.rows_mut(xo(j + 1), nx).copy_from(&x0);
    }
    Condensed { w, w0, nu_tot }
}

trait AddAssign {
    fn add_assign(&mut self, m: &Matrix);
}

impl AddAssign for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, m: &Matrix) {
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                self[(r, c)] += m[(r, c)];
            }
        }
    }
}

/// Stacked Hessian, gradient and constraint rows over `(u, x)`.
fn stacked(p: &OCPProblem, nu_tot: usize) -> (Matrix, Vector, Matrix, Vector, Vector) {
    let (nx, nu, n) = (p.nx, p.nu, p.horizon());
    let dim = nu_tot + (n + 1) * nx;
    let ny: usize = (0..=n).map(|j| p.ny(j)).sum();
    let mut h = Matrix::zeros(dim, dim);
    let mut g = Vector::zeros(dim);
    let mut c = Matrix::zeros(ny, dim);
    let (mut bl, mut bu) = (Vector::zeros(ny), Vector::zeros(ny));
    let xo = |j: usize| nu_tot + j * nx;
    let mut row = 0;
    for (j, s) in p.stages.iter().enumerate() {
        let (uo, xj) = (j * nu, xo(j));
        h.view_mut((uo, uo), (nu, nu)).copy_from(&s.r);
        h.view_mut((uo, xj), (nu, nx)).copy_from(&s.s);
        h.view_mut((xj, uo), (nx, nu)).copy_from(&s.s.transpose());
        h.view_mut((xj, xj), (nx, nx)).copy_from(&s.q);
        g.rows_mut(uo, nu).copy_from(&s.r_lin);
        g.rows_mut(xj, nx).copy_from(&s.q_lin);
        let m = s.c.nrows();
        c.view_mut((row, xj), (m, nx)).copy_from(&s.c);
        c.view_mut((row, uo), (m, nu)).copy_from(&s.d);
        bl.rows_mut(row, m).copy_from(&s.bl);
        bu.rows_mut(row, m).copy_from(&s.bu);
        row += m;
    }
    let t = &p.terminal;
    let xn = xo(n);
    h.view_mut((xn, xn), (nx, nx)).copy_from(&t.q);
    g.rows_mut(xn, nx).copy_from(&t.q_lin);
    let m = t.c.nrows();
    c.view_mut((row, xn), (m, nx)).copy_from(&t.c);
    bl.rows_mut(row, m).copy_from(&t.bl);
    bu.rows_mut(row, m).copy_from(&t.bu);
    (h, g, c, bl, bu)
}

/// Solves `min ½UᵀHU + gᵀU s.t. A U ≤ b`. Returns the primal solution, the
/// inequality multipliers and the iteration count.
fn mehrotra(h: &Matrix, g: &Vector, a: &Matrix, b: &Vector, tol: f64, max_iter: usize) -> Result<(Vector, Vector, usize), QpalmError> {
    let (n, m) = (h.nrows(), a.nrows());
    let mut x = Vector::zeros(n);
    let mut s = (b - a * &x).map(|v| v.max(1.0));
    let mut z = Vector::from_element(m, 1.0);
    let scale = 1.0 + g.amax().max(b.amax()).max(h.amax());
    let step_len = |v: &Vector, dv: &Vector| {
        let mut t = 1.0_f64;
        for i in 0..v.len() {
            if dv[i] < 0.0 {
                t = t.min(-v[i] / dv[i]);
            }
        }
        t
    };
    for it in 0..max_iter {
        let rd = h * &x + g + a.tr_mul(&z);
        let rp = a * &x + &s - b;
        let mu = if m > 0 { s.dot(&z) / m as f64 } else { 0.0 };
        if rd.amax() <= tol * scale && rp.amax() <= tol * scale && mu <= 1e-4 * tol * scale {
            return Ok((x, z, it));
        }
        let d = z.component_div(&s);
        let mut k = h.clone();
        k += a.transpose() * Matrix::from_diagonal(&d) * a;
        let Some(chol) = k.cholesky() else {
            // the barrier Hessian degenerates only once the iterate is accurate
            if rd.amax() <= 1e2 * tol * scale && rp.amax() <= 1e2 * tol * scale && mu <= tol * scale {
                return Ok((x, z, it));
            }
            return Err(QpalmError::Oracle("reduced Hessian is not positive definite".into()));
        };
        let solve_dir = |rc: &Vector| {
            // (H + AᵀDA) dx = −rd − Aᵀ S⁻¹ (Z rp − rc)
            let t = (z.component_mul(&rp) - rc).component_div(&s);
            let dx = chol.solve(&(-&rd - a.tr_mul(&t)));
            let ds = -&rp - a * &dx;
            let dz = (-rc - z.component_mul(&ds)).component_div(&s);
            (dx, ds, dz)
        };
        let (_, ds_a, dz_a) = solve_dir(&s.component_mul(&z));
        let alpha_a = step_len(&s, &ds_a).min(step_len(&z, &dz_a));
        let mu_a = if m > 0 { (&s + alpha_a * &ds_a).dot(&(&z + alpha_a * &dz_a)) / m as f64 } else { 0.0 };
        let sigma = if mu > 0.0 { (mu_a / mu).powi(3) } else { 0.0 };
        let rc = s.component_mul(&z) + ds_a.component_mul(&dz_a) - Vector::from_element(m, sigma * mu);
        let (dx, ds, dz) = solve_dir(&rc);
        let alpha = (0.99 * step_len(&s, &ds).min(step_len(&z, &dz))).min(1.0);
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }
    Err(QpalmError::Oracle(format!("interior point method did not converge in {max_iter} iterations")))
}

/// Solves the QP densely. Multipliers follow the conventions of
/// [`kkt_residual_qp`]: `y > 0` at upper bounds and `y < 0` at lower bounds.
pub fn dense_qp_oracle(problem: &OCPProblem) -> Result<DenseQpSolution, QpalmError> {
    let p = problem.normalize_e()?;
    let (nx, nu, n) = (p.nx, p.nu, p.horizon());
    let cd = condense(&p);
    let (h, g, c, bl, bu) = stacked(&p, cd.nu_tot);
    let hu = cd.w.transpose() * &h * &cd.w;
    let gu = cd.w.transpose() * (&h * &cd.w0 + &g);
    let cu = &c * &cd.w;
    let c0 = &c * &cd.w0;
    // one inequality per finite bound side
    let mut sides: Vec<(usize, f64)> = Vec::new();
    for i in 0..c.nrows() {
        if bu[i].is_finite() {
            sides.push((i, 1.0));
        }
        if bl[i].is_finite() {
            sides.push((i, -1.0));
        }
    }
    let a = Matrix::from_fn(sides.len(), cd.nu_tot, |r, col| sides[r].1 * cu[(sides[r].0, col)]);
    let b = Vector::from_fn(sides.len(), |r, _| {
        let (i, sg) = sides[r];
        if sg > 0.0 {
            bu[i] - c0[i]
        } else {
            c0[i] - bl[i]
        }
    });
    let (uvec, zi, iterations) = mehrotra(&hu, &gu, &a, &b, 1e-12, 200)?;
    let mut yall = Vector::zeros(c.nrows());
    for (r, &(i, sg)) in sides.iter().enumerate() {
        yall[i] += sg * zi[r];
    }
    let full = &cd.w * &uvec + &cd.w0;
    let u: Vec<Vector> = (0..n).map(|j| full.rows(j * nu, nu).into_owned()).collect();
    let x: Vec<Vector> = (0..=n).map(|j| full.rows(cd.nu_tot + j * nx, nx).into_owned()).collect();
    let mut y = Vec::with_capacity(n + 1);
    let mut row = 0;
    for j in 0..=n {
        let m = p.ny(j);
        y.push(yall.rows(row, m).into_owned());
        row += m;
    }
    // stationarity in x^N, …, x^1 determines the dynamics multipliers
    let mut lam = vec![Vector::zeros(nx); n];
    let t = &p.terminal;
    lam[n - 1] = &t.q * &x[n] + &t.q_lin + t.c.tr_mul(&y[n]);
    for j in (1..n).rev() {
        let s = &p.stages[j];
        lam[j - 1] = &s.q * &x[j] + s.s.tr_mul(&u[j]) + &s.q_lin + s.a.tr_mul(&lam[j]) + s.c.tr_mul(&y[j]);
    }
    if let Some(e) = &problem.e {
        for (j, l) in lam.iter_mut().enumerate() {
            *l = e[j + 1].transpose().lu().solve(l).ok_or_else(|| QpalmError::Oracle("singular E".into()))?;
        }
    }
    let mut solution = Solution {
        u,
        x,
        lam,
        y,
        status: SolveStatus::Converged,
        outer_iterations: 1,
        inner_iterations: iterations,
        residual: QpResidual::default(),
    };
    solution.residual = kkt_residual_qp(problem, &solution);
    let objective = problem.objective(&solution.u, &solution.x);
    Ok(DenseQpSolution { solution, objective, iterations })
}
