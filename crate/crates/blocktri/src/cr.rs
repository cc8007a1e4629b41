//! Cyclic reduction.
//!
//! Level `l` works on the active rows `0, s, 2s, ...` with `s = 2^l`, indexed
//! compactly by `j`. The odd `j` are eliminated: `L_j = chol(M_j)`,
//! `Y_j = K_j L_j^{-T}` (coupling to `j+1`) and `U_j = K_{j-1}^T L_j^{-T}`
//! (coupling to `j-1`). The even rows form the next level.

use std::time::{Duration, Instant};
use crate::dense::{add, chol, gemm_acc, lsolve, ltsolve, right_solve_t, syrk_acc};
use crate::pcg::{default_precond, pcg_solve, Precond};
use crate::pcr::{pcr_factor, PcrFactor};
use crate::{check_pow2, join_blocks, split_blocks, BlockTriError, BlockTridiag};
use batla::{flops, par, Mat, Real};

/// How the last levels are solved once at most `vlen` blocks remain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailKind {
    /// Keep reducing down to a single block.
    Cr1,
    /// Parallel cyclic reduction on the remaining blocks.
    Pcr,
    /// Preconditioned conjugate gradients, with a cyclic reduction fallback.
    Pcg,
}

#[derive(Clone, Copy, Debug)]
pub struct CrOptions {
    pub tail: TailKind,
    pub vlen: usize,
    pub workers: usize,
}

impl Default for CrOptions {
    fn default() -> Self {
        CrOptions { tail: TailKind::Cr1, vlen: 1, workers: 1 }
    }
}

/// One elimination level.
#[derive(Clone, Debug)]
pub struct CrLevel<T> {
    pub stride: usize,
    /// Diagonal blocks of the active rows.
    pub m: Vec<Mat<T>>,
    /// `k[j]` couples active rows `j+1` and `j`; `k[r-1]` is the wrap-around block.
    pub k: Vec<Mat<T>>,
    pub circular: bool,
    /// Factors of the eliminated row `j = 2t + 1`, stored at index `t`.
    pub l: Vec<Mat<T>>,
    pub u: Vec<Mat<T>>,
    pub y: Vec<Mat<T>>,
    /// Operation counts per task: Cholesky of each eliminated row, the
    /// larger of its two triangular solves, and the larger of the diagonal
    /// update and fill-in of each surviving row.
    pub chol_flops: Vec<u64>,
    pub solve_flops: Vec<u64>,
    pub update_flops: Vec<u64>,
}

impl<T> CrLevel<T> {
    /// Whether eliminated row `j` couples to the row after it.
    pub fn has_y(&self, j: usize) -> bool {
        j + 1 < self.m.len() || self.circular
    }
}

#[derive(Clone, Debug)]
pub enum TailFactor<T> {
    Root(Mat<T>),
    Pcr(PcrFactor<T>),
    Pcg { system: BlockTridiag<T>, precond: Precond<T> },
}

#[derive(Clone, Debug)]
pub struct CrFactor<T> {
    pub n_blocks: usize,
    pub dim: usize,
    pub options: CrOptions,
    pub levels: Vec<CrLevel<T>>,
    /// Reduced system handed to the tail solver.
    pub tail_m: Vec<Mat<T>>,
    pub tail_k: Vec<Mat<T>>,
    pub tail: TailFactor<T>,
    pub tail_flops: u64,
    pub tail_time: Duration,
}

pub const PCG_TOL: f64 = 1e-12;
pub const PCG_MAX_ITER: usize = 50;

/// 2-adic valuation of `i`, with `nu2(0, p) = log2(p)`.
pub fn nu2(i: usize, p: usize) -> u32 {
    if i == 0 {
        p.trailing_zeros()
    } else {
        i.trailing_zeros()
    }
}

pub fn cr_factor<T: Real>(m: &BlockTridiag<T>, opts: CrOptions) -> Result<CrFactor<T>, BlockTriError> {
    let nb = m.n_blocks();
    check_pow2(nb)?;
    let n = m.block_dim();
    let mut k = m.sub.clone();
    if !m.circular {
        k.push(Mat::zeros(n, n));
    }
    let mut f = CrFactor {
        n_blocks: nb,
        dim: n,
        options: opts,
        levels: Vec::new(),
        tail_m: Vec::new(),
        tail_k: Vec::new(),
        tail: TailFactor::Root(Mat::zeros(0, 0)),
        tail_flops: 0,
        tail_time: Duration::ZERO,
    };
    f.run_from(0, m.diag.clone(), k, m.circular)?;
    Ok(f)
}

pub fn cr_factor_solve<T: Real>(
    m: &BlockTridiag<T>,
    b: &[T],
    opts: CrOptions,
) -> Result<(Vec<T>, CrFactor<T>), BlockTriError> {
    let f = cr_factor(m, opts)?;
    let x = f.solve(b)?;
    Ok((x, f))
}

pub fn cr_resolve<T: Real>(f: &CrFactor<T>, b: &[T]) -> Result<Vec<T>, BlockTriError> {
    f.solve(b)
}

struct FactorTask<T> {
    j: usize,
    out: Option<Result<(Mat<T>, Mat<T>, Mat<T>), BlockTriError>>,
    chol_flops: u64,
    solve_flops: u64,
}

struct UpdateTask<T> {
    i: usize,
    out: Option<(Mat<T>, Mat<T>)>,
    flops: u64,
}

impl<T: Real> CrFactor<T> {
    /// Re-runs the reduction from `level` with the given active diagonal and
    /// coupling blocks, discarding all deeper levels and the tail.
    pub fn refactor_from_level(&mut self, level: usize, m: Vec<Mat<T>>, k: Vec<Mat<T>>) -> Result<(), BlockTriError> {
        self.levels.truncate(level);
        self.run_from(level, m, k, false)
    }

    fn run_from(&mut self, level0: usize, mut m: Vec<Mat<T>>, mut k: Vec<Mat<T>>, mut circular: bool) -> Result<(), BlockTriError> {
        let n = self.dim;
        let opts = self.options;
        let mut level = level0;
        loop {
            let r = m.len();
            if circular && r == 2 {
                // both couplings join rows 0 and 1
                k[0] = add(&k[0], &k[1].transpose());
                k[1] = Mat::zeros(n, n);
                circular = false;
            }
            if circular && r == 1 {
                m[0] = add(&add(&m[0], &k[0]), &k[0].transpose());
                k[0] = Mat::zeros(n, n);
                circular = false;
            }
            let stop = r == 1 || (opts.tail != TailKind::Cr1 && r <= opts.vlen.max(1));
            if stop {
                return self.build_tail(level, m, k, circular);
            }
            let (lev, m2, k2) = eliminate(level, m, k, circular, opts.workers)?;
            self.levels.push(lev);
            m = m2;
            k = k2;
            level += 1;
        }
    }

    fn build_tail(&mut self, level: usize, m: Vec<Mat<T>>, k: Vec<Mat<T>>, circular: bool) -> Result<(), BlockTriError> {
        let r = m.len();
        let t0 = Instant::now();
        let (tail, fl) = flops::measure(|| -> Result<TailFactor<T>, BlockTriError> {
            if r == 1 {
                let l = chol(&m[0]).map_err(|_| BlockTriError::Pivot { level, index: 0 })?;
                return Ok(TailFactor::Root(l));
            }
            if circular {
                return Err(BlockTriError::Circular("the reduced tail solver"));
            }
            let system = BlockTridiag::new(m.clone(), k[..r - 1].to_vec(), false)?;
            match self.options.tail {
                TailKind::Pcr => {
                    let f = pcr_factor(&system).map_err(|e| match e {
                        BlockTriError::Pivot { index, .. } => BlockTriError::Pivot { level, index: index << level },
                        other => other,
                    })?;
                    Ok(TailFactor::Pcr(f))
                }
                _ => {
                    let precond = default_precond(&system).map_err(|e| match e {
                        BlockTriError::Pivot { index, .. } => BlockTriError::Pivot { level, index: index << level },
                        other => other,
                    })?;
                    Ok(TailFactor::Pcg { system, precond })
                }
            }
        });
        self.tail = tail?;
        self.tail_flops = fl;
        self.tail_time = t0.elapsed();
        self.tail_m = m;
        self.tail_k = k;
        Ok(())
    }

    /// Solves `M x = b` with the stored factorization.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, BlockTriError> {
        let bl = split_blocks(b, self.n_blocks, self.dim)?;
        Ok(join_blocks(&self.solve_blocks(bl)))
    }

    pub fn solve_blocks(&self, b: Vec<Mat<T>>) -> Vec<Mat<T>> {
        let mut cur = b;
        let mut saved: Vec<Vec<Mat<T>>> = Vec::with_capacity(self.levels.len());
        for lev in &self.levels {
            let r = cur.len();
            let bt: Vec<Mat<T>> = (0..r / 2).map(|t| lsolve(&lev.l[t], &cur[2 * t + 1])).collect();
            let next: Vec<Mat<T>> = (0..r / 2)
                .map(|t| {
                    let i = 2 * t;
                    let mut x = cur[i].clone();
                    let jp = (i + r - 1) % r;
                    if lev.has_y(jp) {
                        gemm_acc(&mut x, &lev.y[jp / 2], false, &bt[jp / 2], false, -T::one());
                    }
                    gemm_acc(&mut x, &lev.u[t], false, &bt[t], false, -T::one());
                    x
                })
                .collect();
            saved.push(bt);
            cur = next;
        }
        let mut x = self.solve_tail(cur);
        for (lev, bt) in self.levels.iter().zip(saved).rev() {
            let r = 2 * x.len();
            let mut full = Vec::with_capacity(r);
            for t in 0..r / 2 {
                let j = 2 * t + 1;
                let mut z = bt[t].clone();
                if lev.has_y(j) {
                    gemm_acc(&mut z, &lev.y[t], true, &x[((j + 1) % r) / 2], false, -T::one());
                }
                gemm_acc(&mut z, &lev.u[t], true, &x[t], false, -T::one());
                full.push(x[t].clone());
                full.push(ltsolve(&lev.l[t], &z));
            }
            x = full;
        }
        x
    }

    fn solve_tail(&self, b: Vec<Mat<T>>) -> Vec<Mat<T>> {
        match &self.tail {
            TailFactor::Root(l) => vec![ltsolve(l, &lsolve(l, &b[0]))],
            TailFactor::Pcr(f) => f.solve_blocks(b),
            TailFactor::Pcg { system, precond } => {
                let n = self.dim;
                let flat = join_blocks(&b);
                let tol = T::from_f64(PCG_TOL).unwrap();
                let x = match pcg_solve(system, &flat, precond, tol, PCG_MAX_ITER) {
                    Ok(res) if res.converged => res.x,
                    _ => {
                        let f = cr_factor(system, CrOptions { tail: TailKind::Cr1, vlen: 1, workers: 1 })
                            .expect("reduced system admits a factorization");
                        f.solve(&flat).expect("shapes match")
                    }
                };
                split_blocks(&x, b.len(), n).expect("shapes match")
            }
        }
    }

    /// Operations on the longest chain of dependent tasks.
    pub fn critical_path_flops(&self) -> u64 {
        let lv: u64 = self
            .levels
            .iter()
            .map(|l| [&l.chol_flops, &l.solve_flops, &l.update_flops].iter().map(|f| f.iter().max().copied().unwrap_or(0)).sum::<u64>())
            .sum();
        lv + self.tail_flops
    }

    /// Elimination order of the original block rows: increasing 2-adic
    /// valuation, with row 0 last.
    pub fn elimination_order(&self) -> Vec<usize> {
        let p = self.n_blocks;
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by_key(|&i| (nu2(i, p), i));
        idx
    }

    /// Dense lower triangular factor of the permuted matrix `P M P^T`, with
    /// rows ordered by [`Self::elimination_order`]. Only available when the
    /// reduction ran down to a single block.
    pub fn permuted_dense_factor(&self) -> Option<Mat<T>> {
        let TailFactor::Root(root) = &self.tail else { return None };
        let (p, n) = (self.n_blocks, self.dim);
        let order = self.elimination_order();
        let mut pos = vec![0; p];
        for (q, &i) in order.iter().enumerate() {
            pos[i] = q;
        }
        let mut l = Mat::zeros(p * n, p * n);
        let mut put = |bi: usize, bj: usize, m: &Mat<T>| {
            for r in 0..n {
                for c in 0..n {
                    l[(pos[bi] * n + r, pos[bj] * n + c)] = m[(r, c)];
                }
            }
        };
        for lev in &self.levels {
            let (s, r) = (lev.stride, lev.m.len());
            for t in 0..r / 2 {
                let j = 2 * t + 1;
                put(j * s, j * s, &lev.l[t]);
                put((j - 1) * s, j * s, &lev.u[t]);
                if lev.has_y(j) {
                    put(((j + 1) % r) * s, j * s, &lev.y[t]);
                }
            }
        }
        put(0, 0, root);
        Some(l)
    }
}

#[allow(clippy::type_complexity)]
fn eliminate<T: Real>(
    level: usize,
    m: Vec<Mat<T>>,
    k: Vec<Mat<T>>,
    circular: bool,
    workers: usize,
) -> Result<(CrLevel<T>, Vec<Mat<T>>, Vec<Mat<T>>), BlockTriError> {
    let r = m.len();
    let s = 1usize << level;
    let n = m[0].rows();
    let has_y = |j: usize| j + 1 < r || circular;
    let mut ft: Vec<FactorTask<T>> = (0..r / 2).map(|t| FactorTask { j: 2 * t + 1, out: None, chol_flops: 0, solve_flops: 0 }).collect();
    par::for_each_round_robin(&mut ft, workers, |_, task| {
        let j = task.j;
        let (l, fc) = flops::measure(|| chol(&m[j]));
        task.chol_flops = fc;
        let Ok(l) = l else {
            task.out = Some(Err(BlockTriError::Pivot { level, index: j * s }));
            return;
        };
        // U and Y are independent solves; the slower one is on the critical path
        let (y, fy) = flops::measure(|| if has_y(j) { right_solve_t(&l, &k[j]) } else { Mat::zeros(n, n) });
        let (u, fu) = flops::measure(|| right_solve_t(&l, &k[j - 1].transpose()));
        task.solve_flops = fy.max(fu);
        task.out = Some(Ok((l, u, y)));
    });
    let mut lv = CrLevel {
        stride: s,
        m: Vec::new(),
        k: Vec::new(),
        circular,
        l: Vec::with_capacity(r / 2),
        u: Vec::with_capacity(r / 2),
        y: Vec::with_capacity(r / 2),
        chol_flops: Vec::with_capacity(r / 2),
        solve_flops: Vec::with_capacity(r / 2),
        update_flops: Vec::new(),
    };
    for task in ft {
        let (l, u, y) = task.out.unwrap()?;
        lv.l.push(l);
        lv.u.push(u);
        lv.y.push(y);
        lv.chol_flops.push(task.chol_flops);
        lv.solve_flops.push(task.solve_flops);
    }
    let mut ut: Vec<UpdateTask<T>> = (0..r / 2).map(|t| UpdateTask { i: 2 * t, out: None, flops: 0 }).collect();
    {
        let lv = &lv;
        par::for_each_round_robin(&mut ut, workers, |_, task| {
            let i = task.i;
            let jn = i + 1;
            let (mi, fm) = flops::measure(|| {
                let mut mi = m[i].clone();
                let jp = (i + r - 1) % r;
                if has_y(jp) {
                    syrk_acc(&mut mi, &lv.y[jp / 2], -T::one());
                }
                syrk_acc(&mut mi, &lv.u[jn / 2], -T::one());
                mi
            });
            // the fill-in runs alongside the diagonal update
            let (ki, fk) = flops::measure(|| {
                let mut ki = Mat::zeros(n, n);
                if has_y(jn) {
                    gemm_acc(&mut ki, &lv.y[jn / 2], false, &lv.u[jn / 2], true, -T::one());
                }
                ki
            });
            task.out = Some((mi, ki));
            task.flops = fm.max(fk);
        });
    }
    let mut m2 = Vec::with_capacity(r / 2);
    let mut k2 = Vec::with_capacity(r / 2);
    for task in ut {
        let (mi, ki) = task.out.unwrap();
        m2.push(mi);
        k2.push(ki);
        lv.update_flops.push(task.flops);
    }
    lv.m = m;
    lv.k = k;
    Ok((lv, m2, k2))
}
