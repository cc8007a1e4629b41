use crate::dense::{chol, gemm_acc, lsolve, ltsolve, right_solve_t};
use crate::{join_blocks, split_blocks, BlockTriError, BlockTridiag};
use batla::{Mat, Real};

/// Block Cholesky factor: `diag[k]` lower triangular, `sub[k]` the block in row `k+1`, column `k`.
#[derive(Clone, Debug)]
pub struct SerialCholFactor<T> {
    pub diag: Vec<Mat<T>>,
    pub sub: Vec<Mat<T>>,
}

pub fn chol_factor_serial<T: Real>(m: &BlockTridiag<T>) -> Result<SerialCholFactor<T>, BlockTriError> {
    if m.circular {
        return Err(BlockTriError::Circular("serial block Cholesky"));
    }
    let nb = m.n_blocks();
    let mut diag = Vec::with_capacity(nb);
    let mut sub = Vec::with_capacity(nb.saturating_sub(1));
    let mut cur = m.diag[0].clone();
    for k in 0..nb {
        let l = chol(&cur).map_err(|_| BlockTriError::Pivot { level: 0, index: k })?;
        if k + 1 < nb {
            let c = right_solve_t(&l, &m.sub[k]);
            cur = m.diag[k + 1].clone();
            gemm_acc(&mut cur, &c, false, &c, true, -T::one());
            sub.push(c);
        }
        diag.push(l);
    }
    Ok(SerialCholFactor { diag, sub })
}

impl<T: Real> SerialCholFactor<T> {
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, BlockTriError> {
        let nb = self.diag.len();
        let n = self.diag[0].rows();
        let mut y = split_blocks(b, nb, n)?;
        for k in 0..nb {
            if k > 0 {
                let prev = y[k - 1].clone();
                gemm_acc(&mut y[k], &self.sub[k - 1], false, &prev, false, -T::one());
            }
            y[k] = lsolve(&self.diag[k], &y[k]);
        }
        for k in (0..nb).rev() {
            if k + 1 < nb {
                let next = y[k + 1].clone();
                gemm_acc(&mut y[k], &self.sub[k], true, &next, false, -T::one());
            }
            y[k] = ltsolve(&self.diag[k], &y[k]);
        }
        Ok(join_blocks(&y))
    }

    /// Assembled dense lower triangular factor.
    pub fn to_dense(&self) -> Mat<T> {
        let nb = self.diag.len();
        let n = self.diag[0].rows();
        let mut l = Mat::zeros(nb * n, nb * n);
        for k in 0..nb {
            for r in 0..n {
                for c in 0..n {
                    l[(k * n + r, k * n + c)] = self.diag[k][(r, c)];
                    if k + 1 < nb {
                        l[((k + 1) * n + r, k * n + c)] = self.sub[k][(r, c)];
                    }
                }
            }
        }
        l
    }
}
