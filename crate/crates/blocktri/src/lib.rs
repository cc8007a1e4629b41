//! Solvers for symmetric positive definite block tridiagonal systems:
//! serial block Cholesky, cyclic reduction, parallel cyclic reduction and
//! preconditioned conjugate gradients.

mod cr;
pub mod dense;
mod pcg;
mod pcr;
mod serial;

pub use cr::{cr_factor, cr_factor_solve, cr_resolve, nu2, CrFactor, CrLevel, CrOptions, TailFactor, TailKind};
pub use pcg::{jacobi_precond_build, pcg_solve, stair_precond_build, PcgResult, Precond, PrecondKind};
pub use pcr::{pcr_factor, pcr_solve, PcrFactor};
pub use serial::{chol_factor_serial, SerialCholFactor};

use batla::{Mat, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlockTriError {
    #[error("block count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("pivot failure at level {level}, block {index}")]
    Pivot { level: usize, index: usize },
    #[error("conjugate gradient breakdown at iteration {0}")]
    Breakdown(usize),
    #[error("circular coupling is not supported by {0}")]
    Circular(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Symmetric block tridiagonal matrix with `N` diagonal blocks of size `n`.
///
/// `sub[k]` is the block in block row `k + 1`, block column `k`. With
/// circular coupling there is one extra block `sub[N-1]` in block row 0,
/// block column `N - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiag<T> {
    pub diag: Vec<Mat<T>>,
    pub sub: Vec<Mat<T>>,
    pub circular: bool,
}

impl<T: Real> BlockTridiag<T> {
    pub fn new(diag: Vec<Mat<T>>, sub: Vec<Mat<T>>, circular: bool) -> Result<Self, BlockTriError> {
        let nb = diag.len();
        if nb == 0 {
            return Err(BlockTriError::Shape("no diagonal blocks".into()));
        }
        let n = diag[0].rows();
        let want = if circular { nb } else { nb - 1 };
        if sub.len() != want {
            return Err(BlockTriError::Shape(format!("expected {want} off-diagonal blocks, got {}", sub.len())));
        }
        if diag.iter().chain(&sub).any(|b| b.rows() != n || b.cols() != n) {
            return Err(BlockTriError::Shape(format!("all blocks must be {n}x{n}")));
        }
        Ok(BlockTridiag { diag, sub, circular })
    }

    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_dim(&self) -> usize {
        self.diag[0].rows()
    }

    /// Off-diagonal block `(k+1, k)` with implicit wrap-around; zero where absent.
    pub fn coupling(&self, k: usize) -> Mat<T> {
        let n = self.n_blocks();
        if k + 1 < n || (self.circular && k == n - 1) {
            self.sub[k].clone()
        } else {
            Mat::zeros(self.block_dim(), self.block_dim())
        }
    }

    pub fn to_dense(&self) -> Mat<T> {
        let (nb, n) = (self.n_blocks(), self.block_dim());
        let mut a = Mat::zeros(nb * n, nb * n);
        let mut put = |bi: usize, bj: usize, m: &Mat<T>, trans: bool| {
            for r in 0..n {
                for c in 0..n {
                    let x = if trans { m[(c, r)] } else { m[(r, c)] };
                    a[(bi * n + r, bj * n + c)] = a[(bi * n + r, bj * n + c)] + x;
                }
            }
        };
        for k in 0..nb {
            put(k, k, &self.diag[k], false);
        }
        for (k, s) in self.sub.iter().enumerate() {
            let k1 = (k + 1) % nb;
            put(k1, k, s, false);
            put(k, k1, s, true);
        }
        a
    }

    /// `M x` for a stacked vector `x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let (nb, n) = (self.n_blocks(), self.block_dim());
        assert_eq!(x.len(), nb * n);
        let mut y = vec![T::zero(); nb * n];
        let mut acc = |bi: usize, bj: usize, m: &Mat<T>, trans: bool| {
            for r in 0..n {
                let mut s = T::zero();
                for c in 0..n {
                    let a = if trans { m[(c, r)] } else { m[(r, c)] };
                    s = s + a * x[bj * n + c];
                }
                y[bi * n + r] = y[bi * n + r] + s;
            }
        };
        for k in 0..nb {
            acc(k, k, &self.diag[k], false);
        }
        for (k, s) in self.sub.iter().enumerate() {
            let k1 = (k + 1) % nb;
            acc(k1, k, s, false);
            acc(k, k1, s, true);
        }
        y
    }
}

pub(crate) fn check_pow2(n: usize) -> Result<(), BlockTriError> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(BlockTriError::NotPowerOfTwo(n))
    }
}

pub(crate) fn split_blocks<T: Real>(b: &[T], nb: usize, n: usize) -> Result<Vec<Mat<T>>, BlockTriError> {
    if b.len() != nb * n {
        return Err(BlockTriError::Shape(format!("right-hand side has length {}, expected {}", b.len(), nb * n)));
    }
    Ok((0..nb).map(|k| dense::col(&b[k * n..(k + 1) * n])).collect())
}

pub(crate) fn join_blocks<T: Real>(x: &[Mat<T>]) -> Vec<T> {
    x.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
}

pub type BlockTridiagF64 = BlockTridiag<f64>;
pub type CrFactorF64 = CrFactor<f64>;
