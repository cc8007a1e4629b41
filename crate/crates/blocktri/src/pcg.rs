use crate::dense::{chol, frob2, lsolve, ltsolve};
use crate::{join_blocks, split_blocks, BlockTriError, BlockTridiag};
use batla::{Mat, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    Jacobi,
    Stair,
}

/// Block-diagonal based preconditioner. The stair variant applies
/// `D^{-1} (I - K D^{-1})`, where `D` is the block diagonal and `K` the
/// off-diagonal part of the matrix.
#[derive(Clone, Debug)]
pub struct Precond<T> {
    pub kind: PrecondKind,
    pub chol: Vec<Mat<T>>,
    off: Option<BlockTridiag<T>>,
}

fn diag_factors<T: Real>(m: &BlockTridiag<T>) -> Result<Vec<Mat<T>>, BlockTriError> {
    m.diag
        .iter()
        .enumerate()
        .map(|(k, d)| chol(d).map_err(|_| BlockTriError::Pivot { level: 0, index: k }))
        .collect()
}

pub fn jacobi_precond_build<T: Real>(m: &BlockTridiag<T>) -> Result<Precond<T>, BlockTriError> {
    Ok(Precond { kind: PrecondKind::Jacobi, chol: diag_factors(m)?, off: None })
}

pub fn stair_precond_build<T: Real>(m: &BlockTridiag<T>) -> Result<Precond<T>, BlockTriError> {
    let n = m.block_dim();
    let zero = vec![Mat::zeros(n, n); m.n_blocks()];
    let off = BlockTridiag { diag: zero, sub: m.sub.clone(), circular: m.circular };
    Ok(Precond { kind: PrecondKind::Stair, chol: diag_factors(m)?, off: Some(off) })
}

/// Block-Jacobi when the off-diagonal blocks carry less than a tenth of the
/// diagonal Frobenius mass, stair otherwise.
pub fn default_precond<T: Real>(m: &BlockTridiag<T>) -> Result<Precond<T>, BlockTriError> {
    let d: T = m.diag.iter().map(frob2).fold(T::zero(), |a, b| a + b);
    let o: T = m.sub.iter().map(frob2).fold(T::zero(), |a, b| a + b);
    if o.sqrt() < T::from_f64(0.1).unwrap() * d.sqrt() {
        jacobi_precond_build(m)
    } else {
        stair_precond_build(m)
    }
}

impl<T: Real> Precond<T> {
    fn dinv(&self, r: &[T]) -> Vec<T> {
        let n = self.chol[0].rows();
        let blocks = split_blocks(r, self.chol.len(), n).expect("shapes match");
        let z: Vec<Mat<T>> = blocks.iter().zip(&self.chol).map(|(b, l)| ltsolve(l, &lsolve(l, b))).collect();
        join_blocks(&z)
    }

    pub fn apply(&self, r: &[T]) -> Vec<T> {
        let y = self.dinv(r);
        match &self.off {
            None => y,
            Some(off) => {
                let ky = off.matvec(&y);
                let t: Vec<T> = r.iter().zip(&ky).map(|(&a, &b)| a - b).collect();
                self.dinv(&t)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Preconditioned conjugate gradients from a zero initial guess. Stops when
/// `||M x - b|| / ||b|| <= tol` or after `max_iter` iterations.
pub fn pcg_solve<T: Real>(
    m: &BlockTridiag<T>,
    b: &[T],
    precond: &Precond<T>,
    tol: T,
    max_iter: usize,
) -> Result<PcgResult<T>, BlockTriError> {
    let nrm_b = dot(b, b).sqrt();
    let mut x = vec![T::zero(); b.len()];
    if nrm_b == T::zero() {
        return Ok(PcgResult { x, iterations: 0, residual: T::zero(), converged: true });
    }
    let mut r = b.to_vec();
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = T::one();
    for it in 1..=max_iter {
        let q = m.matvec(&p);
        let curv = dot(&p, &q);
        if !(curv > T::zero()) {
            return Err(BlockTriError::Breakdown(it));
        }
        let alpha = rz / curv;
        for i in 0..x.len() {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * q[i];
        }
        rel = dot(&r, &r).sqrt() / nrm_b;
        if rel <= tol {
            return Ok(PcgResult { x, iterations: it, residual: rel, converged: true });
        }
        z = precond.apply(&r);
        let rz_new = dot(&r, &z);
        if !(rz_new > T::zero()) {
            return Err(BlockTriError::Breakdown(it));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgResult { x, iterations: max_iter, residual: rel, converged: false })
}
