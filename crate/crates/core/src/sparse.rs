//! Sparse matrices: a binary CSR pattern used for relations and meta-path
//! subgraphs, and a weighted CSR used for normalized GCN propagation.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Binary sparse matrix in compressed-row form. Each row holds strictly
/// increasing column indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseBool {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl SparseBool {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
        }
    }

    /// Builds the pattern from an edge list. Duplicate edges collapse to a
    /// single entry; out-of-range endpoints are rejected.
    pub fn from_edges<I>(rows: usize, cols: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut per_row: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for (src, dst) in edges {
            if src >= rows || dst >= cols {
                return Err(Error::EdgeOutOfRange {
                    src,
                    dst,
                    rows,
                    cols,
                });
            }
            per_row[src].push(dst);
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in per_row {
            row.sort_unstable();
            row.dedup();
            indices.extend(row);
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
        })
    }

    /// Assembles a matrix from raw CSR arrays without checking them. Use
    /// [`SparseBool::check`] to find violations.
    pub fn from_raw_parts(rows: usize, cols: usize, indptr: Vec<usize>, indices: Vec<usize>) -> Self {
        Self {
            rows,
            cols,
            indptr,
            indices,
        }
    }

    /// Structural problems: bad row pointers, out-of-range columns, and
    /// unsorted or repeated entries (a repeated entry is a multi-edge, i.e.
    /// a non-binary weight).
    pub fn check(&self) -> Vec<SparseFault> {
        let mut faults = Vec::new();
        if self.indptr.len() != self.rows + 1
            || self.indptr.first() != Some(&0)
            || self.indptr.last() != Some(&self.indices.len())
            || self.indptr.windows(2).any(|w| w[0] > w[1])
        {
            faults.push(SparseFault::MalformedRowPointers);
            return faults;
        }
        for r in 0..self.rows {
            let row = self.row(r);
            if let Some(&c) = row.iter().find(|&&c| c >= self.cols) {
                faults.push(SparseFault::ColumnOutOfRange { row: r, col: c });
            }
            if let Some(w) = row.windows(2).find(|w| w[0] >= w[1]) {
                faults.push(if w[0] == w[1] {
                    SparseFault::RepeatedEntry { row: r, col: w[0] }
                } else {
                    SparseFault::Unsorted { row: r }
                });
            }
        }
        faults
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.indices.len()];
        // Rows are visited in increasing order, so every transposed row
        // comes out sorted.
        for r in 0..self.rows {
            for &c in self.row(r) {
                indices[next[c]] = r;
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
        }
    }

    /// Boolean-semiring product `self * other`: entry (i, j) is set iff some
    /// k has (i, k) in `self` and (k, j) in `other`. Each output row is the
    /// sorted union of the `other` rows selected by the `self` row.
    pub fn bool_product(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "bool_product",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        let mut acc: Vec<usize> = Vec::new();
        let mut scratch: Vec<usize> = Vec::new();
        for r in 0..self.rows {
            acc.clear();
            for &k in self.row(r) {
                merge_union(&acc, other.row(k), &mut scratch);
                core::mem::swap(&mut acc, &mut scratch);
            }
            indices.extend_from_slice(&acc);
            indptr.push(indices.len());
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
        })
    }

    /// Drops every (i, i) entry.
    pub fn without_diagonal(&self) -> Self {
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        indptr.push(0);
        for r in 0..self.rows {
            indices.extend(self.row(r).iter().copied().filter(|&c| c != r));
            indptr.push(indices.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
        }
    }

    /// Sets every (i, i) entry. Square matrices only.
    pub fn with_diagonal(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.indices.len() + self.rows);
        let mut scratch = Vec::new();
        indptr.push(0);
        for r in 0..self.rows {
            merge_union(self.row(r), &[r], &mut scratch);
            indices.extend_from_slice(&scratch);
            indptr.push(indices.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    pub fn to_mask(&self) -> DenseMask {
        let mut mask = DenseMask::new(self.rows, self.cols);
        for (r, c) in self.iter() {
            mask.set(r, c, true);
        }
        mask
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (r, c) in self.iter() {
            m.set(r, c, 1.0);
        }
        m
    }

    /// The GCN renormalized propagation matrix D̃^{-1/2}(A + I)D̃^{-1/2},
    /// where D̃ holds the row degrees of A + I.
    pub fn gcn_normalized(&self) -> CsrMatrix {
        let with_loops = self.with_diagonal();
        let inv_sqrt: Vec<f64> = (0..with_loops.rows)
            .map(|r| 1.0 / libm::sqrt(with_loops.row(r).len() as f64))
            .collect();
        let values = with_loops
            .iter()
            .map(|(r, c)| inv_sqrt[r] * inv_sqrt[c])
            .collect();
        CsrMatrix {
            rows: with_loops.rows,
            cols: with_loops.cols,
            indptr: with_loops.indptr,
            indices: with_loops.indices,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SparseFault {
    MalformedRowPointers,
    ColumnOutOfRange { row: usize, col: usize },
    RepeatedEntry { row: usize, col: usize },
    Unsorted { row: usize },
}

/// Writes the sorted union of two sorted, duplicate-free slices into `out`.
fn merge_union(a: &[usize], b: &[usize], out: &mut Vec<usize>) {
    out.clear();
    out.reserve(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Row-major dense boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl DenseMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.bits[r * self.cols + c] = on;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_count(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&b| b).count()
    }
}

/// Weighted sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// `self * dense`.
    pub fn matmul(&self, dense: &Matrix) -> Result<Matrix> {
        if self.cols != dense.rows() {
            return Err(Error::ShapeMismatch {
                op: "sparse_matmul",
                lhs: self.shape(),
                rhs: dense.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, dense.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * dense`.
    pub fn matmul_transposed(&self, dense: &Matrix) -> Result<Matrix> {
        if self.rows != dense.rows() {
            return Err(Error::ShapeMismatch {
                op: "sparse_matmul_transposed",
                lhs: self.shape(),
                rhs: dense.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, dense.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let src = dense.row(r);
                for (o, &x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}
