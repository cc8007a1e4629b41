//! Strided views into interleaved storage.
//!
//! Element `(r, c)` of lane `l` lives at `l + v*r + cs*c` relative to the
//! view origin. A plain column-major matrix is the `v = 1` case.

use core::marker::PhantomData;

/// Shared view over a group of `v` interleaved matrices.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    ptr: *const T,
    rows: usize,
    cols: usize,
    v: usize,
    cs: usize,
    _p: PhantomData<&'a T>,
}

/// Exclusive view over a group of `v` interleaved matrices.
pub struct MatMut<'a, T> {
    ptr: *mut T,
    rows: usize,
    cols: usize,
    v: usize,
    cs: usize,
    _p: PhantomData<&'a mut T>,
}

unsafe impl<T: Sync> Send for MatRef<'_, T> {}
unsafe impl<T: Sync> Sync for MatRef<'_, T> {}
unsafe impl<T: Send> Send for MatMut<'_, T> {}
unsafe impl<T: Sync> Sync for MatMut<'_, T> {}

fn check_slice(len: usize, rows: usize, cols: usize, v: usize, cs: usize) {
    assert!(v > 0, "lane count must be positive");
    if rows > 0 && cols > 0 {
        let last = (v - 1) + v * (rows - 1) + cs * (cols - 1);
        assert!(last < len, "view exceeds backing storage");
    }
}

impl<'a, T: Copy> MatRef<'a, T> {
    /// View over `v` interleaved `rows x cols` matrices with column stride `v*rows`.
    pub fn from_slice(data: &'a [T], rows: usize, cols: usize, v: usize) -> Self {
        Self::from_slice_strided(data, rows, cols, v, v * rows)
    }

    pub fn from_slice_strided(data: &'a [T], rows: usize, cols: usize, v: usize, cs: usize) -> Self {
        check_slice(data.len(), rows, cols, v, cs);
        MatRef { ptr: data.as_ptr(), rows, cols, v, cs, _p: PhantomData }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn lanes(&self) -> usize {
        self.v
    }

    #[inline(always)]
    pub fn at(&self, r: usize, c: usize, l: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols && l < self.v);
        unsafe { *self.ptr.add(l + self.v * r + self.cs * c) }
    }

    /// Sub-block starting at `(r0, c0)` of size `nr x nc`.
    pub fn sub(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatRef<'a, T> {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "sub-block out of range");
        MatRef {
            ptr: self.ptr.wrapping_add(self.v * r0 + self.cs * c0),
            rows: nr,
            cols: nc,
            v: self.v,
            cs: self.cs,
            _p: PhantomData,
        }
    }
}

impl<'a, T: Copy> MatMut<'a, T> {
    pub fn from_slice(data: &'a mut [T], rows: usize, cols: usize, v: usize) -> Self {
        Self::from_slice_strided(data, rows, cols, v, v * rows)
    }

    pub fn from_slice_strided(data: &'a mut [T], rows: usize, cols: usize, v: usize, cs: usize) -> Self {
        check_slice(data.len(), rows, cols, v, cs);
        MatMut { ptr: data.as_mut_ptr(), rows, cols, v, cs, _p: PhantomData }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn lanes(&self) -> usize {
        self.v
    }

    #[inline(always)]
    pub fn at(&self, r: usize, c: usize, l: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols && l < self.v);
        unsafe { *self.ptr.add(l + self.v * r + self.cs * c) }
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, l: usize, x: T) {
        debug_assert!(r < self.rows && c < self.cols && l < self.v);
        unsafe { *self.ptr.add(l + self.v * r + self.cs * c) = x }
    }

    pub fn rb(&self) -> MatRef<'_, T> {
        MatRef { ptr: self.ptr, rows: self.rows, cols: self.cols, v: self.v, cs: self.cs, _p: PhantomData }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_, T> {
        MatMut { ptr: self.ptr, rows: self.rows, cols: self.cols, v: self.v, cs: self.cs, _p: PhantomData }
    }

    pub fn into_ref(self) -> MatRef<'a, T> {
        MatRef { ptr: self.ptr, rows: self.rows, cols: self.cols, v: self.v, cs: self.cs, _p: PhantomData }
    }

    pub fn sub_mut(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatMut<'a, T> {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "sub-block out of range");
        MatMut {
            ptr: self.ptr.wrapping_add(self.v * r0 + self.cs * c0),
            rows: nr,
            cols: nc,
            v: self.v,
            cs: self.cs,
            _p: PhantomData,
        }
    }

    /// Splits into rows `[0, at)` and `[at, rows)`.
    pub fn split_rows(self, at: usize) -> (MatMut<'a, T>, MatMut<'a, T>) {
        assert!(at <= self.rows);
        let (r, c, v, cs) = (self.rows, self.cols, self.v, self.cs);
        let top = MatMut { ptr: self.ptr, rows: at, cols: c, v, cs, _p: PhantomData };
        let bot = MatMut { ptr: self.ptr.wrapping_add(v * at), rows: r - at, cols: c, v, cs, _p: PhantomData };
        (top, bot)
    }

    /// Splits into columns `[0, at)` and `[at, cols)`.
    pub fn split_cols(self, at: usize) -> (MatMut<'a, T>, MatMut<'a, T>) {
        assert!(at <= self.cols);
        let (r, c, v, cs) = (self.rows, self.cols, self.v, self.cs);
        let left = MatMut { ptr: self.ptr, rows: r, cols: at, v, cs, _p: PhantomData };
        let right = MatMut { ptr: self.ptr.wrapping_add(cs * at), rows: r, cols: c - at, v, cs, _p: PhantomData };
        (left, right)
    }

    pub fn fill(&mut self, x: T) {
        for c in 0..self.cols {
            for r in 0..self.rows {
                for l in 0..self.v {
                    self.set(r, c, l, x);
                }
            }
        }
    }

    /// Copies `src` (same shape and lane count) into this view.
    pub fn copy_from(&mut self, src: MatRef<'_, T>) {
        assert_eq!((self.rows, self.cols, self.v), (src.rows(), src.cols(), src.lanes()), "shape mismatch");
        for c in 0..self.cols {
            for r in 0..self.rows {
                for l in 0..self.v {
                    self.set(r, c, l, src.at(r, c, l));
                }
            }
        }
    }

    /// Copies the transpose of `src` into this view.
    pub fn copy_from_transposed(&mut self, src: MatRef<'_, T>) {
        assert_eq!((self.rows, self.cols, self.v), (src.cols(), src.rows(), src.lanes()), "shape mismatch");
        for c in 0..self.cols {
            for r in 0..self.rows {
                for l in 0..self.v {
                    self.set(r, c, l, src.at(c, r, l));
                }
            }
        }
    }
}
