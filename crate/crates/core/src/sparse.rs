//! Row-compressed sparse matrix used for the routing matrix, the jump chain
//! and the CTMC generator.

use std::io::Write;

/// Square sparse matrix in compressed-row form. Duplicate `(row, col)`
/// pairs are merged by addition and zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTransitionMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Accumulates entries row by row. Rows must be pushed in increasing order.
#[derive(Debug)]
pub struct RowBuilder {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl RowBuilder {
    pub fn new(dim: usize) -> Self {
        RowBuilder { dim, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new(), scratch: Vec::new() }
    }

    /// Adds `value` at `(current row, col)`.
    pub fn add(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.dim);
        self.scratch.push((col, value));
    }

    /// Closes the current row, merging duplicates.
    pub fn finish_row(&mut self) {
        self.scratch.sort_by_key(|&(c, _)| c);
        let mut i = 0;
        while i < self.scratch.len() {
            let col = self.scratch[i].0;
            let mut v = 0.0;
            while i < self.scratch.len() && self.scratch[i].0 == col {
                v += self.scratch[i].1;
                i += 1;
            }
            if v != 0.0 {
                self.cols.push(col);
                self.vals.push(v);
            }
        }
        self.scratch.clear();
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(self) -> SparseTransitionMatrix {
        assert_eq!(self.row_ptr.len(), self.dim + 1, "not every row was finished");
        SparseTransitionMatrix { dim: self.dim, row_ptr: self.row_ptr, cols: self.cols, vals: self.vals }
    }
}

impl SparseTransitionMatrix {
    /// Builds from `(row, col, value)` triplets in any order.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut b = RowBuilder::new(dim);
        let mut it = triplets.into_iter().peekable();
        for row in 0..dim {
            while let Some(&(r, c, v)) = it.peek() {
                if r != row {
                    break;
                }
                b.add(c, v);
                it.next();
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, value)` pairs of one row, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.row_sum(r)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Row vector times matrix: `x A`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += xr * v;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseTransitionMatrix {
        let mut t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        SparseTransitionMatrix::from_triplets(self.dim, t)
    }

    /// Sub-matrix on the given rows/columns, in the given order. Entries
    /// leading outside the subset are dropped.
    pub fn restrict(&self, keep: &[usize]) -> SparseTransitionMatrix {
        let mut local = vec![usize::MAX; self.dim];
        for (i, &g) in keep.iter().enumerate() {
            local[g] = i;
        }
        let mut b = RowBuilder::new(keep.len());
        for &g in keep {
            for (c, v) in self.row(g) {
                if local[c] != usize::MAX {
                    b.add(local[c], v);
                }
            }
            b.finish_row();
        }
        b.build()
    }

    /// Dense copy, row-major. Only for small matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Writes `row col value` per line (zero-based indices).
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(out, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}
