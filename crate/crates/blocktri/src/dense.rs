//! Small dense helpers on single matrices.

use batla::kernels::{self, LaneFailure, TrsmMode};
use batla::{Kind, Mat, Real};

/// Lower Cholesky factor with a zeroed upper triangle.
pub fn chol<T: Real>(m: &Mat<T>) -> Result<Mat<T>, LaneFailure> {
    let mut l = m.clone();
    kernels::potrf(l.as_mut(), None)?;
    Ok(l.canonical(Kind::Lower))
}

/// `B L^{-T}`
pub fn right_solve_t<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut x = b.clone();
    kernels::trsm(TrsmMode::RightLowerTrans, l.as_ref(), x.as_mut()).expect("factor has a positive diagonal");
    x
}

/// `L^{-1} b`
pub fn lsolve<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut x = b.clone();
    kernels::trsm(TrsmMode::LeftLower, l.as_ref(), x.as_mut()).expect("factor has a positive diagonal");
    x
}

/// `L^{-T} b`
pub fn ltsolve<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut x = b.clone();
    kernels::trsm(TrsmMode::LeftLowerTrans, l.as_ref(), x.as_mut()).expect("factor has a positive diagonal");
    x
}

/// `C += alpha op(A) op(B)` with both triangles computed.
pub fn gemm_acc<T: Real>(c: &mut Mat<T>, a: &Mat<T>, ta: bool, b: &Mat<T>, tb: bool, alpha: T) {
    kernels::gemm(c.as_mut(), a.as_ref(), ta, b.as_ref(), tb, alpha);
}

/// `C += alpha A Aᵀ` for a symmetric `C`: the lower triangle is computed and mirrored.
pub fn syrk_acc<T: Real>(c: &mut Mat<T>, a: &Mat<T>, alpha: T) {
    kernels::syrk(c.as_mut(), a.as_ref(), alpha);
    for j in 1..c.cols() {
        for i in 0..j {
            c[(i, j)] = c[(j, i)];
        }
    }
}

pub fn add<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    Mat::from_fn(a.rows(), a.cols(), |r, c| a[(r, c)] + b[(r, c)])
}

pub fn sub<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    Mat::from_fn(a.rows(), a.cols(), |r, c| a[(r, c)] - b[(r, c)])
}

pub fn col<T: Real>(x: &[T]) -> Mat<T> {
    Mat::from_col_major(x.len(), 1, x.to_vec())
}

pub fn frob2<T: Real>(a: &Mat<T>) -> T {
    a.as_slice().iter().fold(T::zero(), |s, &x| s + x * x)
}
