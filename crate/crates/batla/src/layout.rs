use crate::view::{MatMut, MatRef};
use crate::{BatlaError, Real};

/// Structural kind of every matrix in a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    General,
    /// Only the lower triangle is meaningful.
    Lower,
    /// Only the upper triangle is meaningful.
    Upper,
    /// Symmetric, stored in the lower triangle.
    SymLower,
}

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Mat { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self::from_fn(rows, cols, |r, c| data[r * cols + c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn as_ref(&self) -> MatRef<'_, T> {
        MatRef::from_slice(&self.data, self.rows, self.cols, 1)
    }

    pub fn as_mut(&mut self) -> MatMut<'_, T> {
        MatMut::from_slice(&mut self.data, self.rows, self.cols, 1)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            for p in 0..self.cols {
                let b = rhs[(p, j)];
                for i in 0..self.rows {
                    out[(i, j)] = out[(i, j)] + self[(i, p)] * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Logical matrix of the given kind: zeroes the unreferenced triangle or
    /// mirrors the stored one.
    pub fn canonical(&self, kind: Kind) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| match kind {
            Kind::General => self[(r, c)],
            Kind::Lower => {
                if r >= c {
                    self[(r, c)]
                } else {
                    T::zero()
                }
            }
            Kind::Upper => {
                if r <= c {
                    self[(r, c)]
                } else {
                    T::zero()
                }
            }
            Kind::SymLower => {
                if r >= c {
                    self[(r, c)]
                } else {
                    self[(c, r)]
                }
            }
        })
    }
}

impl<T> core::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r + self.rows * c]
    }
}

impl<T> core::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r + self.rows * c]
    }
}

/// A batch of equally shaped matrices in the compact interleaved layout.
///
/// Matrices are grouped `vlen` at a time; within a group element `(r, c)` of
/// every member is contiguous. Lanes past the end of the batch in the last
/// group hold neutral padding: zeros, with a unit diagonal for triangular and
/// symmetric kinds so factorizations never fail there.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMatrix<T> {
    rows: usize,
    cols: usize,
    batch: usize,
    vlen: usize,
    kind: Kind,
    data: Vec<T>,
}

impl<T: Real> BatchMatrix<T> {
    pub fn new(rows: usize, cols: usize, batch: usize, vlen: usize, kind: Kind) -> Result<Self, BatlaError> {
        if vlen == 0 {
            return Err(BatlaError::InvalidVlen(vlen));
        }
        if kind != Kind::General && rows != cols {
            return Err(BatlaError::ShapeMismatch(format!("{kind:?} matrix must be square, got {rows}x{cols}")));
        }
        let groups = batch.div_ceil(vlen);
        let mut b = BatchMatrix { rows, cols, batch, vlen, kind, data: vec![T::zero(); groups * vlen * rows * cols] };
        b.neutralize_padding();
        Ok(b)
    }

    /// Zero batch of square matrices whose every member is the identity.
    pub fn identity(n: usize, batch: usize, vlen: usize, kind: Kind) -> Result<Self, BatlaError> {
        let mut b = Self::new(n, n, batch, vlen, kind)?;
        for j in 0..b.groups() * vlen {
            for i in 0..n {
                let o = b.offset(i, i, j);
                b.data[o] = T::one();
            }
        }
        Ok(b)
    }

    fn neutralize_padding(&mut self) {
        if self.kind == Kind::General || self.rows != self.cols {
            return;
        }
        for j in self.batch..self.groups() * self.vlen {
            for i in 0..self.rows {
                let o = self.offset(i, i, j);
                self.data[o] = T::one();
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn vlen(&self) -> usize {
        self.vlen
    }
    pub fn kind(&self) -> Kind {
        self.kind
    }
    /// Changes the declared kind; padding lanes become neutral for that kind.
    pub fn set_kind(&mut self, kind: Kind) {
        self.kind = kind;
        self.neutralize_padding();
    }

    /// Copy declared as `kind`, with neutral padding lanes.
    pub fn as_kind(&self, kind: Kind) -> Self {
        let mut b = self.clone();
        b.set_kind(kind);
        b
    }
    pub fn groups(&self) -> usize {
        self.batch.div_ceil(self.vlen)
    }
    pub fn raw(&self) -> &[T] {
        &self.data
    }
    pub fn raw_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Offset of element `(r, c)` of matrix `j` in the backing buffer.
    #[inline]
    pub fn offset(&self, r: usize, c: usize, j: usize) -> usize {
        compact_offset(r, c, j, self.rows, self.cols, self.vlen)
    }

    #[inline]
    pub fn get(&self, j: usize, r: usize, c: usize) -> T {
        self.data[self.offset(r, c, j)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, r: usize, c: usize, x: T) {
        let o = self.offset(r, c, j);
        self.data[o] = x;
    }

    fn group_len(&self) -> usize {
        self.vlen * self.rows * self.cols
    }

    pub fn group(&self, g: usize) -> MatRef<'_, T> {
        let n = self.group_len();
        MatRef::from_slice(&self.data[g * n..(g + 1) * n], self.rows, self.cols, self.vlen)
    }

    pub fn group_mut(&mut self, g: usize) -> MatMut<'_, T> {
        let n = self.group_len();
        let (rows, cols, v) = (self.rows, self.cols, self.vlen);
        MatMut::from_slice(&mut self.data[g * n..(g + 1) * n], rows, cols, v)
    }

    /// Disjoint mutable views of all groups.
    pub fn groups_mut(&mut self) -> Vec<MatMut<'_, T>> {
        let n = self.group_len().max(1);
        let (rows, cols, v) = (self.rows, self.cols, self.vlen);
        if self.group_len() == 0 {
            return Vec::new();
        }
        self.data.chunks_mut(n).map(|s| MatMut::from_slice(s, rows, cols, v)).collect()
    }

    /// Raw stored values of matrix `j`.
    pub fn stored(&self, j: usize) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |r, c| self.get(j, r, c))
    }

    /// Logical value of matrix `j` according to the batch kind.
    pub fn matrix(&self, j: usize) -> Mat<T> {
        self.stored(j).canonical(self.kind)
    }

    pub fn set_matrix(&mut self, j: usize, m: &Mat<T>) {
        assert_eq!((m.rows(), m.cols()), (self.rows, self.cols), "shape mismatch");
        for c in 0..self.cols {
            for r in 0..self.rows {
                self.set(j, r, c, m[(r, c)]);
            }
        }
    }
}

/// Offset of element `(r, c)` of matrix `j` for `m x n` matrices grouped `v` at a time.
#[inline]
pub fn compact_offset(r: usize, c: usize, j: usize, m: usize, n: usize, v: usize) -> usize {
    (j % v) + v * r + v * m * c + v * m * n * (j / v)
}
