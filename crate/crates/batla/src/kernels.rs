//! Group kernels. Each routine processes all `v` lanes of its views with the
//! lane loop innermost, so the arithmetic performed for a lane does not
//! depend on how many lanes share the group.

use crate::flops;
use crate::view::{MatMut, MatRef};
use crate::Real;

/// Failure inside a kernel: the lane and the row/column where it occurred.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneFailure {
    pub lane: usize,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrsmMode {
    /// `X = B L^{-T}`
    RightLowerTrans,
    /// `X = B L^{-1}`
    RightLower,
    /// `X = L^{-1} B`
    LeftLower,
    /// `X = L^{-T} B`
    LeftLowerTrans,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tri {
    Lower,
    Upper,
}

fn relative_floor<T: Real>() -> T {
    T::from_f64(1e-14).unwrap()
}

/// In-place Cholesky of the lower triangle of `a`.
///
/// With `signs` given, computes an indefinite `L D L^T` factor with `D = diag(signs)`
/// and `L` having a positive diagonal; `signs` receives `D` lane-inner (`signs[k*v + l]`).
/// A pivot smaller than `1e-14` times the largest input diagonal magnitude is a failure.
pub fn potrf<T: Real>(mut a: MatMut<'_, T>, mut signs: Option<&mut [T]>) -> Result<(), LaneFailure> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "potrf needs a square matrix");
    let v = a.lanes();
    if let Some(s) = signs.as_deref() {
        assert!(s.len() >= n * v);
    }
    let mut floor = vec![T::zero(); v];
    for l in 0..v {
        let mut m = T::zero();
        for k in 0..n {
            m = m.max(a.at(k, k, l).abs());
        }
        floor[l] = m * relative_floor::<T>();
    }
    let mut fma = 0u64;
    for k in 0..n {
        for p in 0..k {
            for i in k..n {
                for l in 0..v {
                    let d = match signs.as_deref() {
                        Some(s) => s[p * v + l],
                        None => T::one(),
                    };
                    let x = a.at(i, k, l) - a.at(i, p, l) * a.at(k, p, l) * d;
                    a.set(i, k, l, x);
                }
            }
        }
        fma += (k * (n - k)) as u64;
        for l in 0..v {
            let d = a.at(k, k, l);
            let (sign, mag) = match signs.as_deref() {
                Some(_) => (if d < T::zero() { -T::one() } else { T::one() }, d.abs()),
                None => (T::one(), d),
            };
            if !(mag > floor[l]) || !mag.is_finite() {
                return Err(LaneFailure { lane: l, index: k });
            }
            let r = mag.sqrt();
            a.set(k, k, l, r);
            if let Some(s) = signs.as_deref_mut() {
                s[k * v + l] = sign;
            }
            let inv = T::one() / (r * sign);
            for i in k + 1..n {
                let x = a.at(i, k, l) * inv;
                a.set(i, k, l, x);
            }
        }
    }
    flops::add(fma);
    Ok(())
}

/// Triangular solve with a lower triangular `l`, in place on `b`.
pub fn trsm<T: Real>(mode: TrsmMode, l: MatRef<'_, T>, mut b: MatMut<'_, T>) -> Result<(), LaneFailure> {
    let n = l.rows();
    assert_eq!(n, l.cols(), "trsm needs a square triangular factor");
    let v = b.lanes();
    assert_eq!(v, l.lanes(), "lane count mismatch");
    for k in 0..n {
        for ln in 0..v {
            if l.at(k, k, ln) == T::zero() {
                return Err(LaneFailure { lane: ln, index: k });
            }
        }
    }
    match mode {
        TrsmMode::RightLowerTrans => {
            // X L^T = B, column j of X depends on columns p < j.
            assert_eq!(b.cols(), n, "shape mismatch");
            let m = b.rows();
            for j in 0..n {
                for p in 0..j {
                    for i in 0..m {
                        for ln in 0..v {
                            let x = b.at(i, j, ln) - b.at(i, p, ln) * l.at(j, p, ln);
                            b.set(i, j, ln, x);
                        }
                    }
                }
                for ln in 0..v {
                    let inv = T::one() / l.at(j, j, ln);
                    for i in 0..m {
                        let x = b.at(i, j, ln) * inv;
                        b.set(i, j, ln, x);
                    }
                }
            }
            flops::add((m * n * n.saturating_sub(1) / 2) as u64);
        }
        TrsmMode::RightLower => {
            // X L = B, column j of X depends on columns p > j.
            assert_eq!(b.cols(), n, "shape mismatch");
            let m = b.rows();
            for j in (0..n).rev() {
                for p in j + 1..n {
                    for i in 0..m {
                        for ln in 0..v {
                            let x = b.at(i, j, ln) - b.at(i, p, ln) * l.at(p, j, ln);
                            b.set(i, j, ln, x);
                        }
                    }
                }
                for ln in 0..v {
                    let inv = T::one() / l.at(j, j, ln);
                    for i in 0..m {
                        let x = b.at(i, j, ln) * inv;
                        b.set(i, j, ln, x);
                    }
                }
            }
            flops::add((m * n * n.saturating_sub(1) / 2) as u64);
        }
        TrsmMode::LeftLower => {
            assert_eq!(b.rows(), n, "shape mismatch");
            let m = b.cols();
            for c in 0..m {
                for k in 0..n {
                    for ln in 0..v {
                        let x = b.at(k, c, ln) / l.at(k, k, ln);
                        b.set(k, c, ln, x);
                    }
                    for i in k + 1..n {
                        for ln in 0..v {
                            let x = b.at(i, c, ln) - l.at(i, k, ln) * b.at(k, c, ln);
                            b.set(i, c, ln, x);
                        }
                    }
                }
            }
            flops::add((m * n * n.saturating_sub(1) / 2) as u64);
        }
        TrsmMode::LeftLowerTrans => {
            assert_eq!(b.rows(), n, "shape mismatch");
            let m = b.cols();
            for c in 0..m {
                for k in (0..n).rev() {
                    for i in k + 1..n {
                        for ln in 0..v {
                            let x = b.at(k, c, ln) - l.at(i, k, ln) * b.at(i, c, ln);
                            b.set(k, c, ln, x);
                        }
                    }
                    for ln in 0..v {
                        let x = b.at(k, c, ln) / l.at(k, k, ln);
                        b.set(k, c, ln, x);
                    }
                }
            }
            flops::add((m * n * n.saturating_sub(1) / 2) as u64);
        }
    }
    Ok(())
}

/// `C += alpha A A^T` on the lower triangle of `c`.
pub fn syrk<T: Real>(mut c: MatMut<'_, T>, a: MatRef<'_, T>, alpha: T) {
    let m = c.rows();
    assert_eq!(m, c.cols());
    assert_eq!(a.rows(), m, "shape mismatch");
    let v = c.lanes();
    assert_eq!(v, a.lanes(), "lane count mismatch");
    let k = a.cols();
    for p in 0..k {
        for j in 0..m {
            for i in j..m {
                for l in 0..v {
                    let x = c.at(i, j, l) + alpha * a.at(i, p, l) * a.at(j, p, l);
                    c.set(i, j, l, x);
                }
            }
        }
    }
    flops::add((k * m * (m + 1) / 2) as u64);
}

#[inline(always)]
fn op_at<T: Copy>(a: &MatRef<'_, T>, trans: bool, i: usize, j: usize, l: usize) -> T {
    if trans {
        a.at(j, i, l)
    } else {
        a.at(i, j, l)
    }
}

/// `C += alpha op(A) op(B)`.
pub fn gemm<T: Real>(mut c: MatMut<'_, T>, a: MatRef<'_, T>, ta: bool, b: MatRef<'_, T>, tb: bool, alpha: T) {
    let (m, n) = (c.rows(), c.cols());
    let (am, ak) = if ta { (a.cols(), a.rows()) } else { (a.rows(), a.cols()) };
    let (bk, bn) = if tb { (b.cols(), b.rows()) } else { (b.rows(), b.cols()) };
    assert!(am == m && bn == n && ak == bk, "gemm shape mismatch");
    let v = c.lanes();
    assert!(a.lanes() == v && b.lanes() == v, "lane count mismatch");
    for j in 0..n {
        for p in 0..ak {
            for i in 0..m {
                for l in 0..v {
                    let x = c.at(i, j, l) + alpha * op_at(&a, ta, i, p, l) * op_at(&b, tb, p, j, l);
                    c.set(i, j, l, x);
                }
            }
        }
    }
    flops::add((m * n * ak) as u64);
}

/// `X = alpha A op(T)` (right) or `X = alpha op(T) A` (left) with triangular `T`.
/// Only the referenced triangle of `t` is read; `x` is overwritten.
pub fn trmm<T: Real>(mut x: MatMut<'_, T>, a: MatRef<'_, T>, t: MatRef<'_, T>, side: Side, tri: Tri, trans: bool, alpha: T) {
    let n = t.rows();
    assert_eq!(n, t.cols(), "trmm needs a square triangular factor");
    let v = x.lanes();
    assert!(a.lanes() == v && t.lanes() == v, "lane count mismatch");
    assert!((x.rows(), x.cols()) == (a.rows(), a.cols()), "shape mismatch");
    // op(T) is lower for an untransposed lower T or a transposed upper T.
    let op_lower = (tri == Tri::Lower) != trans;
    let top = |i: usize, j: usize, l: usize| if trans { t.at(j, i, l) } else { t.at(i, j, l) };
    match side {
        Side::Right => {
            assert_eq!(a.cols(), n, "shape mismatch");
            let m = a.rows();
            for j in 0..n {
                for i in 0..m {
                    for l in 0..v {
                        x.set(i, j, l, T::zero());
                    }
                }
                let (p0, p1) = if op_lower { (j, n) } else { (0, j + 1) };
                for p in p0..p1 {
                    for i in 0..m {
                        for l in 0..v {
                            let y = x.at(i, j, l) + alpha * a.at(i, p, l) * top(p, j, l);
                            x.set(i, j, l, y);
                        }
                    }
                }
            }
            flops::add((m * n * (n + 1) / 2) as u64);
        }
        Side::Left => {
            assert_eq!(a.rows(), n, "shape mismatch");
            let m = a.cols();
            for c in 0..m {
                for i in 0..n {
                    let (p0, p1) = if op_lower { (0, i + 1) } else { (i, n) };
                    for l in 0..v {
                        let mut s = T::zero();
                        for p in p0..p1 {
                            s = s + top(i, p, l) * a.at(p, c, l);
                        }
                        x.set(i, c, l, alpha * s);
                    }
                }
            }
            flops::add((m * n * (n + 1) / 2) as u64);
        }
    }
}

/// Inverse of a lower triangular matrix, written to `x`.
pub fn trtri<T: Real>(l: MatRef<'_, T>, mut x: MatMut<'_, T>) -> Result<(), LaneFailure> {
    let n = l.rows();
    assert_eq!(n, l.cols());
    assert_eq!((x.rows(), x.cols()), (n, n), "shape mismatch");
    let v = l.lanes();
    for k in 0..n {
        for ln in 0..v {
            if l.at(k, k, ln) == T::zero() {
                return Err(LaneFailure { lane: ln, index: k });
            }
        }
    }
    for j in 0..n {
        for i in 0..j {
            for ln in 0..v {
                x.set(i, j, ln, T::zero());
            }
        }
        for ln in 0..v {
            x.set(j, j, ln, T::one() / l.at(j, j, ln));
        }
        for i in j + 1..n {
            for ln in 0..v {
                let mut s = T::zero();
                for p in j..i {
                    s = s + l.at(i, p, ln) * x.at(p, j, ln);
                }
                x.set(i, j, ln, -s / l.at(i, i, ln));
            }
        }
    }
    flops::add((n * (n * n).saturating_sub(1) / 6) as u64);
    Ok(())
}

/// Lower triangle of `U U^T` for upper triangular `u`, written to `c`.
pub fn trsyrk<T: Real>(u: MatRef<'_, T>, mut c: MatMut<'_, T>) {
    let n = u.rows();
    assert_eq!(n, u.cols());
    assert_eq!((c.rows(), c.cols()), (n, n), "shape mismatch");
    let v = u.lanes();
    for j in 0..n {
        for i in j..n {
            for l in 0..v {
                let mut s = T::zero();
                for p in i..n {
                    s = s + u.at(i, p, l) * u.at(j, p, l);
                }
                c.set(i, j, l, s);
            }
        }
    }
    flops::add((n * (n + 1) * (n + 2) / 6) as u64);
}
