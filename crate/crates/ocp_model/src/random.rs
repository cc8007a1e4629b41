use crate::{EqOCP, EqStage, Matrix, OCPProblem, QpStage, Terminal, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomDims {
    pub nx: usize,
    pub nu: usize,
    pub n: usize,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0))
}

fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

/// `Q diag(λ) Qᵀ` with a random orthogonal `Q` and eigenvalues in `[1/cond, 1]`;
/// both extremes are attained when `dim >= 2`.
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize, cond: f64) -> Matrix {
    let g = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let lo = cond.max(1.0).recip().ln();
    let eig: Vec<f64> = (0..dim)
        .map(|i| match i {
            0 => 1.0,
            1 => lo.exp(),
            _ => rng.gen_range(lo..=0.0).exp(),
        })
        .collect();
    let d = Matrix::from_diagonal(&Vector::from_vec(eig));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn random_stage(rng: &mut ChaCha8Rng, nx: usize, nu: usize, cond: f64) -> EqStage {
    let h = random_spd(rng, nx + nu, cond);
    EqStage {
        a: uniform_matrix(rng, nx, nx, 1.0 / (nx as f64).sqrt()),
        b: uniform_matrix(rng, nx, nu, 1.0),
        f: uniform_vector(rng, nx, 1.0),
        r: h.view((0, 0), (nu, nu)).into_owned(),
        s: h.view((0, nu), (nu, nx)).into_owned(),
        q: h.view((nu, nu), (nx, nx)).into_owned(),
        r_lin: uniform_vector(rng, nu, 1.0),
        q_lin: uniform_vector(rng, nx, 1.0),
    }
}

/// Reproducible random equality constrained problem with strongly convex stage costs.
pub fn random_eq_ocp(dims: RandomDims, seed: u64, cond: f64) -> EqOCP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu) = (dims.nx, dims.nu);
    let stages = (0..dims.n).map(|_| random_stage(&mut rng, nx, nu, cond)).collect();
    let qn = random_spd(&mut rng, nx, cond);
    let qn_lin = uniform_vector(&mut rng, nx, 1.0);
    let x_init = uniform_vector(&mut rng, nx, 1.0);
    EqOCP { nx, nu, stages, qn, qn_lin, x_init }
}

/// Random problem with box constraints on every state and control. The
/// boxes are placed around a simulated trajectory, so the problem is always
/// feasible, while their random widths make some of them active at the optimum.
pub fn random_ocp(dims: RandomDims, seed: u64, cond: f64) -> OCPProblem {
    let eq = random_eq_ocp(dims, seed, cond);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (nx, nu, n) = (dims.nx, dims.nu, dims.n);
    let ny = nx + nu;
    let mut c = Matrix::zeros(ny, nx);
    c.view_mut((0, 0), (nx, nx)).fill_with_identity();
    let mut d = Matrix::zeros(ny, nu);
    d.view_mut((nx, 0), (nu, nu)).fill_with_identity();
    let mut x = vec![eq.x_init.clone()];
    let mut u = Vec::with_capacity(n);
    for s in &eq.stages {
        let uj = uniform_vector(&mut rng, nu, 0.3);
        x.push(&s.a * x.last().unwrap() + &s.b * &uj + &s.f);
        u.push(uj);
    }
    let boxed = |rng: &mut ChaCha8Rng, z: Vector| {
        let bl = Vector::from_fn(z.len(), |i, _| z[i] - rng.gen_range(0.05..1.0));
        let bu = Vector::from_fn(z.len(), |i, _| z[i] + rng.gen_range(0.05..1.0));
        (bl, bu)
    };
    let stages = eq
        .stages
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut z = Vector::zeros(ny);
            z.rows_mut(0, nx).copy_from(&x[j]);
            z.rows_mut(nx, nu).copy_from(&u[j]);
            let (bl, bu) = boxed(&mut rng, z);
            QpStage {
                a: s.a.clone(),
                b: s.b.clone(),
                f: s.f.clone(),
                r: s.r.clone(),
                s: s.s.clone(),
                q: s.q.clone(),
                r_lin: s.r_lin.clone(),
                q_lin: s.q_lin.clone(),
                c: c.clone(),
                d: d.clone(),
                bl,
                bu,
            }
        })
        .collect();
    let (bl, bu) = boxed(&mut rng, x[n].clone());
    OCPProblem {
        nx,
        nu,
        stages,
        terminal: Terminal { q: eq.qn, q_lin: eq.qn_lin, c: Matrix::identity(nx, nx), bl, bu },
        x_init: eq.x_init,
        e: None,
    }
}
