//! Row-compressed complex matrix used for the `MN x MN` channel operators.
//!
//! Every delay-Doppler channel row touches at most a few delay columns, so
//! storing rows as `(column, value)` runs keeps the default 1024 x 1024
//! operators at roughly 150k entries instead of a million.

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    /// Builds a matrix row by row. `fill(row, push)` must push the row's
    /// entries; column order within a row is not required to be sorted and
    /// duplicates are summed.
    pub fn from_rows<F>(rows: usize, cols: usize, mut fill: F) -> Self
    where
        F: FnMut(usize, &mut dyn FnMut(usize, Complex64)),
    {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, Complex64)> = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            scratch.clear();
            fill(r, &mut |c, v| {
                debug_assert!(c < cols);
                scratch.push((c, v));
            });
            scratch.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in &scratch {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, n, |r, push| push(r, Complex64::new(1.0, 0.0)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "operand length mismatch");
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `Tr{self * other^H}` = sum of `self[i,j] * conj(other[i,j])`.
    pub fn trace_with_adjoint(&self, other: &SparseMatrix) -> Complex64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..self.rows {
            let mut b = other.row(r).peekable();
            for (c, v) in self.row(r) {
                while let Some(&(cb, _)) = b.peek() {
                    if cb < c {
                        b.next();
                    } else {
                        break;
                    }
                }
                if let Some(&(cb, w)) = b.peek() {
                    if cb == c {
                        acc += v * w.conj();
                    }
                }
            }
        }
        acc
    }

    /// Scales every entry in place.
    pub fn scale(&mut self, s: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Gram matrix `self^H self` restricted to columns with at least one
    /// stored entry. Returns the retained column indices alongside.
    pub fn gram_of_columns(&self, order: &[usize]) -> DMatrix<Complex64> {
        let mut pos = vec![usize::MAX; self.cols];
        for (i, &c) in order.iter().enumerate() {
            pos[c] = i;
        }
        let n = order.len();
        let mut g = DMatrix::<Complex64>::zeros(n, n);
        let mut entries: Vec<(usize, Complex64)> = Vec::new();
        for r in 0..self.rows {
            entries.clear();
            entries.extend(self.row(r).filter(|(c, _)| pos[*c] != usize::MAX).map(|(c, v)| (pos[c], v)));
            for &(i, vi) in &entries {
                let ci = vi.conj();
                for &(j, vj) in &entries {
                    g[(i, j)] += ci * vj;
                }
            }
        }
        g
    }

    /// Columns holding at least one stored entry, ascending.
    pub fn occupied_columns(&self) -> Vec<usize> {
        let mut used = vec![false; self.cols];
        for (&c, v) in self.col_idx.iter().zip(&self.values) {
            if *v != Complex64::new(0.0, 0.0) {
                used[c] = true;
            }
        }
        (0..self.cols).filter(|&c| used[c]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::<Complex64>::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let s = SparseMatrix::from_rows(2, 3, |r, push| {
            if r == 0 {
                push(2, c(1.0, 0.0));
                push(0, c(2.0, 0.0));
                push(2, c(0.5, 1.0));
            }
        });
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 2), c(1.5, 1.0));
        assert_eq!(s.get(0, 0), c(2.0, 0.0));
        assert_eq!(s.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn gram_and_trace_match_dense() {
        let s = SparseMatrix::from_rows(3, 3, |r, push| {
            push(r, c(1.0 + r as f64, -0.5));
            push((r + 1) % 3, c(0.25, r as f64));
        });
        let d = s.to_dense();
        let g = s.gram_of_columns(&[0, 1, 2]);
        let dg = d.adjoint() * &d;
        assert!((g - dg).norm() < 1e-12);

        let t = s.trace_with_adjoint(&s);
        assert!((t.re - s.frobenius_sq()).abs() < 1e-12 && t.im.abs() < 1e-12);

        let x = vec![c(1.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)];
        let y = s.mul_vec(&x);
        let dy = &d * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(dy.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
