//! Hyperbolic Householder-type factorization updates.
//!
//! Given a lower triangular `L` (with column signature `D_F`) and a block `G`
//! with signature `S_G`, computes `L~` such that
//! `L~ D_F L~^T = L D_F L^T + G S_G G^T`, one rank-one hyperbolic rotation per
//! column of `G`. Trailing rows of `[L | G]` below the pivot block are
//! transformed along, and the recorded rotations can be replayed on further
//! trailing rows later.

use crate::flops;
use crate::kernels::LaneFailure;
use crate::view::MatMut;
use crate::Real;

/// Rotations produced by [`hyh_transform`], replayable with [`hyh_apply`].
#[derive(Clone, Debug)]
pub struct HyhHandle<T> {
    n: usize,
    m: usize,
    v: usize,
    c: Vec<T>,
    s: Vec<T>,
    sigma: Vec<T>,
}

impl<T> HyhHandle<T> {
    pub fn pivot_dim(&self) -> usize {
        self.n
    }
    pub fn rank(&self) -> usize {
        self.m
    }
}

/// Updates the pivot block `L[0..n, 0..n]` of `l` (`n = l.cols()`) and the
/// rows below it. `g` must have as many rows as `l`. `d_f` holds one sign per
/// pivot column (all `+1` if `None`); `s_g` holds one sign per column of `g`
/// and lane, lane-inner (`s_g[q*v + lane]`). On return the pivot rows of `g`
/// are zero and the trailing rows of `g` hold the transformed block.
/// Smallest admissible ratio of the new to the old squared pivot in a
/// downdate, `ε^(1/3)`. Below it the transform reports a failure so the
/// caller can refactor instead.
pub fn downdate_min_ratio<T: Real>() -> T {
    T::epsilon().cbrt()
}

pub fn hyh_transform<T: Real>(
    mut l: MatMut<'_, T>,
    mut g: MatMut<'_, T>,
    d_f: Option<&[T]>,
    s_g: &[T],
) -> Result<HyhHandle<T>, LaneFailure> {
    let n = l.cols();
    let rows = l.rows();
    assert!(rows >= n, "pivot block must be square");
    assert_eq!(g.rows(), rows, "update block must match the factor rows");
    let m = g.cols();
    let v = l.lanes();
    assert_eq!(g.lanes(), v, "lane count mismatch");
    assert!(s_g.len() >= m * v, "one sign per update column and lane");
    let mut h = HyhHandle {
        n,
        m,
        v,
        c: vec![T::zero(); n * m * v],
        s: vec![T::zero(); n * m * v],
        sigma: vec![T::zero(); n * m * v],
    };
    let mut fma = 0u64;
    let min_ratio = downdate_min_ratio::<T>();
    for q in 0..m {
        for k in 0..n {
            let base = (q * n + k) * v;
            for ln in 0..v {
                let df = d_f.map_or(T::one(), |d| d[k]);
                let sigma = s_g[q * v + ln] * df;
                let lkk = l.at(k, k, ln);
                let gk = g.at(k, q, ln);
                let r2 = lkk * lkk + sigma * gk * gk;
                // a downdate that cancels most of the pivot loses that many digits
                let cancels = sigma < T::zero() && r2 < min_ratio * lkk * lkk;
                if !(r2 > T::zero()) || !r2.is_finite() || cancels {
                    return Err(LaneFailure { lane: ln, index: k });
                }
                let r = r2.sqrt();
                h.c[base + ln] = r / lkk;
                h.s[base + ln] = gk / lkk;
                h.sigma[base + ln] = sigma;
                l.set(k, k, ln, r);
                g.set(k, q, ln, T::zero());
            }
            for i in k + 1..rows {
                for ln in 0..v {
                    let (c, s, sigma) = (h.c[base + ln], h.s[base + ln], h.sigma[base + ln]);
                    let gi = g.at(i, q, ln);
                    let li = (l.at(i, k, ln) + sigma * s * gi) / c;
                    l.set(i, k, ln, li);
                    g.set(i, q, ln, c * gi - s * li);
                }
            }
            fma += 2 * (rows - k - 1) as u64;
        }
    }
    flops::add(fma);
    Ok(h)
}

/// Replays recorded rotations on extra trailing rows `[l | g]`.
pub fn hyh_apply<T: Real>(h: &HyhHandle<T>, mut l: MatMut<'_, T>, mut g: MatMut<'_, T>) {
    assert_eq!(l.cols(), h.n, "trailing block must have the pivot width");
    assert_eq!(g.cols(), h.m, "trailing update block must have the update rank");
    assert_eq!(l.rows(), g.rows(), "row mismatch");
    let v = h.v;
    assert!(l.lanes() == v && g.lanes() == v, "lane count mismatch");
    let rows = l.rows();
    for q in 0..h.m {
        for k in 0..h.n {
            let base = (q * h.n + k) * v;
            for i in 0..rows {
                for ln in 0..v {
                    let (c, s, sigma) = (h.c[base + ln], h.s[base + ln], h.sigma[base + ln]);
                    let gi = g.at(i, q, ln);
                    let li = (l.at(i, k, ln) + sigma * s * gi) / c;
                    l.set(i, k, ln, li);
                    g.set(i, q, ln, c * gi - s * li);
                }
            }
        }
    }
    flops::add(2 * (rows * h.n * h.m) as u64);
}
