use alloc::vec;
use alloc::vec::Vec;

use crate::float;

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self, symmetric: bool) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    /// Set by assembly routines that produce symmetric operators.
    pub symmetric: bool,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[s..e].binary_search(&j) {
            Ok(k) => self.values[s + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `alpha * self + beta * other`; both must share dimensions.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                b.push(i, j, alpha * v);
            }
            for (j, v) in other.row(i) {
                b.push(i, j, beta * v);
            }
        }
        b.build(self.symmetric && other.symmetric)
    }

    /// Principal submatrix on the rows/columns where `keep` is true,
    /// renumbered in increasing order.
    pub fn principal_submatrix(&self, keep: &[bool]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.nrows];
        let mut n = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = n;
                n += 1;
            }
        }
        let mut b = TripletBuilder::new(n, n);
        for i in 0..self.nrows {
            if map[i] == usize::MAX {
                continue;
            }
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    b.push(map[i], map[j], v);
                }
            }
        }
        b.build(self.symmetric)
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max(float::abs(v - self.get(j, i)));
            }
        }
        worst
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> crate::linalg::DenseMat {
        let mut d = crate::linalg::DenseMat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 0, 2.0);
        b.push(0, 0, 3.0);
        b.push(1, 1, -1.0);
        let m = b.build(false);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.matvec(&[1.0, 2.0]), vec![4.0, 0.0]);
    }

    #[test]
    fn submatrix_and_combination() {
        let mut b = TripletBuilder::new(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                b.push(i, j, (i * 3 + j) as f64);
            }
        }
        let m = b.build(false);
        let s = m.principal_submatrix(&[true, false, true]);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 6.0);
        let c = m.linear_combination(2.0, &CsrMatrix::identity(3), -1.0);
        assert_eq!(c.get(1, 1), 7.0);
        assert_eq!(c.get(1, 2), 10.0);
    }
}
