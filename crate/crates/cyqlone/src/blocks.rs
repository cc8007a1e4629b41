//! Interleaved storage for a sequence of equally shaped matrices, one lane per
//! block column of the partition.

use batla::{Mat, MatMut, MatRef};

#[derive(Clone, Debug)]
pub(crate) struct Blocks {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    v: usize,
    count: usize,
}

impl Blocks {
    pub fn new(count: usize, rows: usize, cols: usize, v: usize) -> Self {
        Blocks { data: vec![0.0; count * rows * cols * v], rows, cols, v, count }
    }

    fn size(&self) -> usize {
        self.rows * self.cols * self.v
    }

    pub fn at(&self, i: usize) -> MatRef<'_, f64> {
        let s = self.size();
        MatRef::from_slice(&self.data[i * s..(i + 1) * s], self.rows, self.cols, self.v)
    }

    pub fn at_mut(&mut self, i: usize) -> MatMut<'_, f64> {
        let s = self.size();
        MatMut::from_slice(&mut self.data[i * s..(i + 1) * s], self.rows, self.cols, self.v)
    }

    /// Block `i` mutably and block `i + 1` shared.
    pub fn pair(&mut self, i: usize) -> (MatMut<'_, f64>, Option<MatRef<'_, f64>>) {
        let s = self.size();
        let (rows, cols, v) = (self.rows, self.cols, self.v);
        let (head, tail) = self.data.split_at_mut((i + 1) * s);
        let cur = MatMut::from_slice(&mut head[i * s..], rows, cols, v);
        let next = (i + 1 < self.count).then(|| MatRef::from_slice(&tail[..s], rows, cols, v));
        (cur, next)
    }

    pub fn lane(&self, i: usize, lane: usize) -> Mat<f64> {
        let m = self.at(i);
        Mat::from_fn(self.rows, self.cols, |r, c| m.at(r, c, lane))
    }

    pub fn set_lane(&mut self, i: usize, lane: usize, src: &Mat<f64>) {
        let (rows, cols) = (self.rows, self.cols);
        let mut m = self.at_mut(i);
        for c in 0..cols {
            for r in 0..rows {
                m.set(r, c, lane, src[(r, c)]);
            }
        }
    }
}

/// Zeroes the strict upper triangle of a square view.
pub(crate) fn zero_upper(mut m: MatMut<'_, f64>) {
    let (n, v) = (m.rows(), m.lanes());
    for c in 1..n {
        for r in 0..c {
            for l in 0..v {
                m.set(r, c, l, 0.0);
            }
        }
    }
}

/// Mirrors the lower triangle into the upper one.
pub(crate) fn symmetrize(m: &mut Mat<f64>) {
    for c in 1..m.cols() {
        for r in 0..c {
            m[(r, c)] = m[(c, r)];
        }
    }
}
