//! Parallel cyclic reduction: every level eliminates the neighbours of every
//! row at once, so all `N` rows are factored on every level.

use crate::dense::{chol, gemm_acc, lsolve, ltsolve, right_solve_t};
use crate::{check_pow2, join_blocks, split_blocks, BlockTriError, BlockTridiag};
use batla::{Mat, Real};

#[derive(Clone, Debug)]
pub struct PcrLevel<T> {
    pub stride: usize,
    pub l: Vec<Mat<T>>,
    /// `y[k] = K_k L_k^{-T}` couples row `k` to `k + stride` (zero past the end).
    pub y: Vec<Mat<T>>,
    /// `u[k] = K_{k-stride}^T L_k^{-T}` couples row `k` to `k - stride`.
    pub u: Vec<Mat<T>>,
}

#[derive(Clone, Debug)]
pub struct PcrFactor<T> {
    pub levels: Vec<PcrLevel<T>>,
    /// Cholesky factors of the fully decoupled final diagonal.
    pub root: Vec<Mat<T>>,
    /// Block factorizations per level, including the final one.
    pub factorizations: Vec<usize>,
}

pub fn pcr_factor<T: Real>(m: &BlockTridiag<T>) -> Result<PcrFactor<T>, BlockTriError> {
    if m.circular {
        return Err(BlockTriError::Circular("parallel cyclic reduction"));
    }
    let nb = m.n_blocks();
    check_pow2(nb)?;
    let n = m.block_dim();
    let mut diag = m.diag.clone();
    // sub[k] couples k + s and k; zero when k + s is out of range
    let mut sub: Vec<Mat<T>> = (0..nb).map(|k| if k + 1 < nb { m.sub[k].clone() } else { Mat::zeros(n, n) }).collect();
    let mut levels = Vec::new();
    let mut factorizations = Vec::new();
    let mut s = 1;
    let mut level = 0;
    while s < nb {
        let l: Vec<Mat<T>> = diag
            .iter()
            .enumerate()
            .map(|(k, d)| chol(d).map_err(|_| BlockTriError::Pivot { level, index: k }))
            .collect::<Result<_, _>>()?;
        let y: Vec<Mat<T>> = (0..nb)
            .map(|k| if k + s < nb { right_solve_t(&l[k], &sub[k]) } else { Mat::zeros(n, n) })
            .collect();
        let u: Vec<Mat<T>> = (0..nb)
            .map(|k| if k >= s { right_solve_t(&l[k], &sub[k - s].transpose()) } else { Mat::zeros(n, n) })
            .collect();
        let mut d2 = Vec::with_capacity(nb);
        let mut s2 = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut dk = diag[k].clone();
            if k >= s {
                gemm_acc(&mut dk, &y[k - s], false, &y[k - s], true, -T::one());
            }
            if k + s < nb {
                gemm_acc(&mut dk, &u[k + s], false, &u[k + s], true, -T::one());
            }
            d2.push(dk);
            let mut sk = Mat::zeros(n, n);
            if k + 2 * s < nb {
                gemm_acc(&mut sk, &y[k + s], false, &u[k + s], true, -T::one());
            }
            s2.push(sk);
        }
        factorizations.push(nb);
        levels.push(PcrLevel { stride: s, l, y, u });
        diag = d2;
        sub = s2;
        s *= 2;
        level += 1;
    }
    let root: Vec<Mat<T>> = diag
        .iter()
        .enumerate()
        .map(|(k, d)| chol(d).map_err(|_| BlockTriError::Pivot { level, index: k }))
        .collect::<Result<_, _>>()?;
    factorizations.push(nb);
    Ok(PcrFactor { levels, root, factorizations })
}

/// Factors and solves in one go.
pub fn pcr_solve<T: Real>(m: &BlockTridiag<T>, b: &[T]) -> Result<(Vec<T>, PcrFactor<T>), BlockTriError> {
    let f = pcr_factor(m)?;
    let x = f.solve(b)?;
    Ok((x, f))
}

impl<T: Real> PcrFactor<T> {
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, BlockTriError> {
        let nb = self.root.len();
        let n = self.root[0].rows();
        let bl = split_blocks(b, nb, n)?;
        Ok(join_blocks(&self.solve_blocks(bl)))
    }

    pub fn solve_blocks(&self, mut b: Vec<Mat<T>>) -> Vec<Mat<T>> {
        let nb = b.len();
        for lev in &self.levels {
            let s = lev.stride;
            let bt: Vec<Mat<T>> = (0..nb).map(|k| lsolve(&lev.l[k], &b[k])).collect();
            b = (0..nb)
                .map(|k| {
                    let mut x = b[k].clone();
                    if k >= s {
                        gemm_acc(&mut x, &lev.y[k - s], false, &bt[k - s], false, -T::one());
                    }
                    if k + s < nb {
                        gemm_acc(&mut x, &lev.u[k + s], false, &bt[k + s], false, -T::one());
                    }
                    x
                })
                .collect();
        }
        b.iter().zip(&self.root).map(|(x, l)| ltsolve(l, &lsolve(l, x))).collect()
    }
}
