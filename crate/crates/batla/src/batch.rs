//! Whole-batch entry points built on the group kernels.

use crate::hyh::{hyh_transform, HyhHandle};
use crate::kernels::{self, Side, Tri, TrsmMode};
use crate::layout::{BatchMatrix, Kind, Mat};
use crate::{BatlaError, Real};

fn shape_err(msg: String) -> BatlaError {
    BatlaError::ShapeMismatch(msg)
}

fn same_grouping<T: Real>(a: &BatchMatrix<T>, b: &BatchMatrix<T>) -> Result<(), BatlaError> {
    if a.batch() != b.batch() || a.vlen() != b.vlen() {
        return Err(shape_err(format!(
            "batch {}x(vlen {}) vs {}x(vlen {})",
            a.batch(),
            a.vlen(),
            b.batch(),
            b.vlen()
        )));
    }
    Ok(())
}

fn square<T: Real>(a: &BatchMatrix<T>, what: &str) -> Result<usize, BatlaError> {
    if a.rows() != a.cols() {
        return Err(shape_err(format!("{what} must be square, got {}x{}", a.rows(), a.cols())));
    }
    Ok(a.rows())
}

/// Packs equally shaped matrices into a general batch.
pub fn pack<T: Real>(mats: &[Mat<T>], vlen: usize) -> Result<BatchMatrix<T>, BatlaError> {
    pack_kind(mats, vlen, Kind::General)
}

pub fn pack_kind<T: Real>(mats: &[Mat<T>], vlen: usize, kind: Kind) -> Result<BatchMatrix<T>, BatlaError> {
    let first = mats.first().ok_or_else(|| shape_err("cannot pack an empty list".into()))?;
    let (r, c) = (first.rows(), first.cols());
    if let Some(bad) = mats.iter().position(|m| (m.rows(), m.cols()) != (r, c)) {
        return Err(shape_err(format!(
            "matrix {bad} is {}x{}, expected {r}x{c}",
            mats[bad].rows(),
            mats[bad].cols()
        )));
    }
    let mut b = BatchMatrix::new(r, c, mats.len(), vlen, kind)?;
    for (j, m) in mats.iter().enumerate() {
        b.set_matrix(j, m);
    }
    Ok(b)
}

/// Stored matrices of a batch, without padding lanes.
pub fn unpack<T: Real>(b: &BatchMatrix<T>) -> Vec<Mat<T>> {
    (0..b.batch()).map(|j| b.stored(j)).collect()
}

/// Cholesky factor of every matrix. With `signed`, indefinite matrices are
/// factored as `L D L^T` and the diagonal signatures are returned.
#[allow(clippy::type_complexity)]
pub fn potrf_batch<T: Real>(
    a: &BatchMatrix<T>,
    signed: bool,
) -> Result<(BatchMatrix<T>, Option<Vec<Vec<i8>>>), BatlaError> {
    let n = square(a, "potrf input")?;
    let v = a.vlen();
    let mut out = a.clone();
    out.set_kind(Kind::Lower);
    let mut sig = if signed { Some(vec![T::zero(); out.groups() * n * v]) } else { None };
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        let s = sig.as_mut().map(|s| &mut s[g * n * v..(g + 1) * n * v]);
        kernels::potrf(view, s).map_err(|e| BatlaError::Pivot { batch_index: g * v + e.lane, pivot: e.index })?;
    }
    let sig = sig.map(|s| {
        (0..a.batch())
            .map(|j| {
                let (g, l) = (j / v, j % v);
                (0..n).map(|k| if s[g * n * v + k * v + l] < T::zero() { -1 } else { 1 }).collect()
            })
            .collect()
    });
    Ok((out, sig))
}

/// Triangular solve with lower triangular `l` applied to every matrix of `b`.
pub fn trsm_batch<T: Real>(mode: TrsmMode, l: &BatchMatrix<T>, b: &BatchMatrix<T>) -> Result<BatchMatrix<T>, BatlaError> {
    let n = square(l, "triangular factor")?;
    same_grouping(l, b)?;
    let ok = match mode {
        TrsmMode::RightLower | TrsmMode::RightLowerTrans => b.cols() == n,
        TrsmMode::LeftLower | TrsmMode::LeftLowerTrans => b.rows() == n,
    };
    if !ok {
        return Err(shape_err(format!("{mode:?} with {n}x{n} factor and {}x{} block", b.rows(), b.cols())));
    }
    let l = l.as_kind(Kind::Lower);
    let mut out = b.clone();
    let v = b.vlen();
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::trsm(mode, l.group(g), view)
            .map_err(|e| BatlaError::ZeroDiagonal { batch_index: g * v + e.lane, index: e.index })?;
    }
    Ok(out)
}

/// `C + alpha A A^T` (lower storage), optionally followed by its Cholesky factorization.
pub fn syrk_batch<T: Real>(c: &BatchMatrix<T>, a: &BatchMatrix<T>, alpha: T, fuse_potrf: bool) -> Result<BatchMatrix<T>, BatlaError> {
    let m = square(c, "syrk output")?;
    same_grouping(c, a)?;
    if a.rows() != m {
        return Err(shape_err(format!("syrk: {}x{} factor for {m}x{m} output", a.rows(), a.cols())));
    }
    let mut out = c.clone();
    out.set_kind(Kind::SymLower);
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::syrk(view, a.group(g), alpha);
    }
    if fuse_potrf {
        Ok(potrf_batch(&out, false)?.0)
    } else {
        Ok(out)
    }
}

/// `C + alpha op(A) op(B)`.
pub fn gemm_batch<T: Real>(
    c: &BatchMatrix<T>,
    a: &BatchMatrix<T>,
    ta: bool,
    b: &BatchMatrix<T>,
    tb: bool,
    alpha: T,
) -> Result<BatchMatrix<T>, BatlaError> {
    same_grouping(c, a)?;
    same_grouping(c, b)?;
    let (am, ak) = if ta { (a.cols(), a.rows()) } else { (a.rows(), a.cols()) };
    let (bk, bn) = if tb { (b.cols(), b.rows()) } else { (b.rows(), b.cols()) };
    if am != c.rows() || bn != c.cols() || ak != bk {
        return Err(shape_err(format!("gemm: ({am}x{ak})({bk}x{bn}) into {}x{}", c.rows(), c.cols())));
    }
    let mut out = c.clone();
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::gemm(view, a.group(g), ta, b.group(g), tb, alpha);
    }
    Ok(out)
}

/// Product of every matrix of `a` with the triangular matrices of `t`.
pub fn trmm_batch<T: Real>(
    a: &BatchMatrix<T>,
    t: &BatchMatrix<T>,
    side: Side,
    tri: Tri,
    trans: bool,
) -> Result<BatchMatrix<T>, BatlaError> {
    let n = square(t, "triangular factor")?;
    same_grouping(a, t)?;
    let ok = match side {
        Side::Right => a.cols() == n,
        Side::Left => a.rows() == n,
    };
    if !ok {
        return Err(shape_err(format!("trmm: {}x{} block with {n}x{n} factor", a.rows(), a.cols())));
    }
    let mut out = BatchMatrix::new(a.rows(), a.cols(), a.batch(), a.vlen(), Kind::General)?;
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::trmm(view, a.group(g), t.group(g), side, tri, trans, T::one());
    }
    Ok(out)
}

/// Inverse of every lower triangular matrix.
pub fn trtri_batch<T: Real>(l: &BatchMatrix<T>) -> Result<BatchMatrix<T>, BatlaError> {
    let n = square(l, "triangular factor")?;
    let v = l.vlen();
    let l = l.as_kind(Kind::Lower);
    let mut out = BatchMatrix::new(n, n, l.batch(), v, Kind::Lower)?;
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::trtri(l.group(g), view)
            .map_err(|e| BatlaError::ZeroDiagonal { batch_index: g * v + e.lane, index: e.index })?;
    }
    Ok(out)
}

/// `U U^T` for every upper triangular matrix, in lower symmetric storage.
pub fn trsyrk_batch<T: Real>(u: &BatchMatrix<T>) -> Result<BatchMatrix<T>, BatlaError> {
    let n = square(u, "triangular factor")?;
    let mut out = BatchMatrix::new(n, n, u.batch(), u.vlen(), Kind::SymLower)?;
    for (g, view) in out.groups_mut().into_iter().enumerate() {
        kernels::trsyrk(u.group(g), view);
    }
    Ok(out)
}

/// Hyperbolic update `F~ D_F F~^T = F D_F F^T + G S_G G^T` of every lower
/// triangular `F`, with signatures shared across the batch. Returns the
/// updated factors, the annihilated update blocks and the recorded rotations.
#[allow(clippy::type_complexity)]
pub fn hyh_transform_batch<T: Real>(
    f: &BatchMatrix<T>,
    g: &BatchMatrix<T>,
    d_f: Option<&[T]>,
    s_g: &[T],
) -> Result<(BatchMatrix<T>, BatchMatrix<T>, Vec<HyhHandle<T>>), BatlaError> {
    let n = square(f, "factor")?;
    same_grouping(f, g)?;
    if g.rows() != n || s_g.len() != g.cols() || d_f.is_some_and(|d| d.len() != n) {
        return Err(shape_err(format!("hyh: {n}x{n} factor, {}x{} update, {} signs", g.rows(), g.cols(), s_g.len())));
    }
    let v = f.vlen();
    let lanes: Vec<T> = s_g.iter().flat_map(|&s| std::iter::repeat(s).take(v)).collect();
    let mut fo = f.as_kind(Kind::Lower);
    let mut go = g.clone();
    let mut handles = Vec::new();
    for (gi, (fv, gv)) in fo.groups_mut().into_iter().zip(go.groups_mut()).enumerate() {
        let h = hyh_transform(fv, gv, d_f, &lanes)
            .map_err(|e| BatlaError::Breakdown { batch_index: gi * v + e.lane, column: e.index })?;
        handles.push(h);
    }
    Ok((fo, go, handles))
}

/// Moves the matrix in lane `l` of each group to lane `(l + shift) mod vlen`.
pub fn lane_rotate<T: Real>(b: &BatchMatrix<T>, shift: isize) -> BatchMatrix<T> {
    let v = b.vlen();
    let mut out = b.clone();
    let k = shift.rem_euclid(v as isize) as usize;
    for g in 0..b.groups() {
        for l in 0..v {
            let (src, dst) = (g * v + l, g * v + (l + k) % v);
            for c in 0..b.cols() {
                for r in 0..b.rows() {
                    let o = b.offset(r, c, dst);
                    out.raw_mut()[o] = b.raw()[b.offset(r, c, src)];
                }
            }
        }
    }
    out
}
