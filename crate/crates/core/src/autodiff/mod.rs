//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends a node holding its forward value to a [`Tape`];
//! [`Tape::backward`] walks the tape in reverse and accumulates gradients
//! into every node that (transitively) depends on a parameter. Nodes are
//! appended in evaluation order, so reverse index order is a valid reverse
//! topological order.
//!
//! Sparse graph structure enters only as constants: a weighted CSR
//! propagation matrix for [`Tape::sparse_matmul`] and boolean masks for the
//! masked reductions.

mod params;

pub use params::{glorot_init, AdamState, Bindings, ParamId, ParamStore};

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::sparse::{CsrMatrix, DenseMask};
use crate::{Error, Matrix, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Rc<CsrMatrix>, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    OuterAdd(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulScalar(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    MeanRows(Var),
    Sum(Var),
    RowSoftmax(Var),
    MaskedRowSoftmax(Var),
    MaskedLogSumExp(Var, Rc<DenseMask>),
    Elu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    L2NormalizeRows(Var),
    GatherRows(Var, Vec<usize>),
    Clamp(Var, f64, f64),
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`; zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad.clone().unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, x: Var, value: Matrix, op: Op) -> Var {
        let rg = self.needs(x);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix, op: Op) -> Var {
        let rg = self.needs(a) || self.needs(b);
        self.push(value, op, rg)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: self.shape(a),
            rhs: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    /// `propagation * x` for a constant sparse matrix.
    pub fn sparse_matmul(&mut self, propagation: Rc<CsrMatrix>, x: Var) -> Result<Var> {
        let value = propagation.matmul(self.value(x))?;
        Ok(self.unary(x, value, Op::SparseMatMul(propagation, x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b)).map_err(|_| self.mismatch("add", a, b))?;
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .map_err(|_| self.mismatch("mul", a, b))?;
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    /// `x + 1 bias` for a `1 x cols` bias row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(self.mismatch("add_row_bias", x, bias));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).row(0).to_vec();
        for r in 0..rows {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bv;
            }
        }
        Ok(self.binary(x, bias, value, Op::AddRowBias(x, bias)))
    }

    /// `out[i][j] = col[i] + row[j]` for an `n x 1` column and `1 x m` row.
    pub fn outer_add(&mut self, col: Var, row: Var) -> Result<Var> {
        let (n, c1) = self.shape(col);
        let (r1, m) = self.shape(row);
        if c1 != 1 || r1 != 1 {
            return Err(self.mismatch("outer_add", col, row));
        }
        let mut value = Matrix::zeros(n, m);
        let row_vals = self.value(row).row(0).to_vec();
        for i in 0..n {
            let ci = self.value(col).get(i, 0);
            for (o, rv) in value.row_mut(i).iter_mut().zip(&row_vals) {
                *o = ci + rv;
            }
        }
        Ok(self.binary(col, row, value, Op::OuterAdd(col, row)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).scale(factor);
        self.unary(x, value, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Var {
        let value = self.value(x).map(|v| v + offset);
        self.unary(x, value, Op::AddScalar(x))
    }

    /// `x * s` for a `1 x 1` tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(self.mismatch("mul_scalar", x, s));
        }
        let factor = self.value(s).item();
        let value = self.value(x).scale(factor);
        Ok(self.binary(x, s, value, Op::MulScalar(x, s)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.mismatch("concat_cols", first, p));
            }
            cols += self.shape(p).1;
        }
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start > end || end > cols {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: (rows, cols),
                rhs: (start, end),
            });
        }
        let mut value = Matrix::zeros(rows, end - start);
        for r in 0..rows {
            value.row_mut(r).copy_from_slice(&self.value(x).row(r)[start..end]);
        }
        Ok(self.unary(x, value, Op::SliceCols(x, start)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.unary(x, value, Op::Transpose(x))
    }

    /// Column means, `1 x cols`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).0 == 0 {
            return Err(Error::Empty("mean_rows"));
        }
        let value = self.value(x).column_means();
        Ok(self.unary(x, value, Op::MeanRows(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.unary(x, value, Op::Sum(x))
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            softmax_into(src.row(r), None, value.row_mut(r));
        }
        self.unary(x, value, Op::RowSoftmax(x))
    }

    /// Softmax over the masked entries of each row; unmasked entries are 0
    /// and a row with no masked entries is all zeros.
    pub fn masked_row_softmax(&mut self, x: Var, mask: Rc<DenseMask>) -> Result<Var> {
        if mask.shape() != self.shape(x) {
            return Err(Error::ShapeMismatch {
                op: "masked_row_softmax",
                lhs: self.shape(x),
                rhs: mask.shape(),
            });
        }
        let src = self.value(x);
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            softmax_into(src.row(r), Some(mask.row(r)), value.row_mut(r));
        }
        Ok(self.unary(x, value, Op::MaskedRowSoftmax(x)))
    }

    /// `out[i] = log Σ_{j ∈ mask_i} exp(x[i][j])`, an `n x 1` column. Every
    /// row must select at least one entry.
    pub fn masked_log_sum_exp(&mut self, x: Var, mask: Rc<DenseMask>) -> Result<Var> {
        if mask.shape() != self.shape(x) {
            return Err(Error::ShapeMismatch {
                op: "masked_log_sum_exp",
                lhs: self.shape(x),
                rhs: mask.shape(),
            });
        }
        let src = self.value(x);
        let mut value = Matrix::zeros(src.rows(), 1);
        for r in 0..src.rows() {
            let row = src.row(r);
            let mrow = mask.row(r);
            let max = row
                .iter()
                .zip(mrow)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::EmptyMaskRow(r));
            }
            let s: f64 = row
                .iter()
                .zip(mrow)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| libm::exp(v - max))
                .sum();
            value.set(r, 0, max + libm::log(s));
        }
        Ok(self.unary(x, value, Op::MaskedLogSumExp(x, mask)))
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { libm::expm1(v) });
        self.unary(x, value, Op::Elu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.unary(x, value, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::tanh);
        self.unary(x, value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.unary(x, value, Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(&bad) = self.value(x).as_slice().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(Error::NonPositiveLog(bad));
        }
        let value = self.value(x).map(libm::log);
        Ok(self.unary(x, value, Op::Log(x)))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::exp);
        self.unary(x, value, Op::Exp(x))
    }

    /// Scales each row to unit Euclidean norm (rows with norm below 1e-12
    /// are divided by 1e-12 instead).
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let norm = row_norm(src.row(r));
            value.row_mut(r).iter_mut().for_each(|v| *v /= norm);
        }
        self.unary(x, value, Op::L2NormalizeRows(x))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let rows = self.shape(x).0;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: self.shape(x),
                rhs: (bad, 0),
            });
        }
        let value = self.value(x).select_rows(indices);
        Ok(self.unary(x, value, Op::GatherRows(x, indices.to_vec())))
    }

    /// Clamps into `[lo, hi]`; the gradient is cut where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.unary(x, value, Op::Clamp(x, lo, hi))
    }

    /// Reverse pass from a `1 x 1` loss. Gradients add onto whatever earlier
    /// passes left; call [`Tape::zero_grads`] between independent passes.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut pending: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = pending[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                for (input, contribution) in self.local_grads(idx, &g)? {
                    if !self.needs(input) {
                        continue;
                    }
                    match &mut pending[input.0] {
                        Some(acc) => acc.add_scaled(&contribution, 1.0)?,
                        slot @ None => *slot = Some(contribution),
                    }
                }
            }
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.add_scaled(&g, 1.0)?,
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `idx` to its inputs given its own
    /// upstream gradient `g`.
    fn local_grads(&self, idx: usize, g: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let node = &self.nodes[idx];
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if self.needs(*a) {
                    v.push((*a, g.matmul_nt(self.value(*b))?));
                }
                if self.needs(*b) {
                    v.push((*b, self.value(*a).matmul_tn(g)?));
                }
                v
            }
            Op::SparseMatMul(p, x) => vec![(*x, p.matmul_transposed(g)?)],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(self.value(*b), |gv, bv| gv * bv)?),
                (*b, g.zip_map(self.value(*a), |gv, av| gv * av)?),
            ],
            Op::AddRowBias(x, b) => vec![(*x, g.clone()), (*b, g.column_sums())],
            Op::OuterAdd(col, row) => {
                let mut gc = Matrix::zeros(g.rows(), 1);
                for r in 0..g.rows() {
                    gc.set(r, 0, g.row(r).iter().sum());
                }
                vec![(*col, gc), (*row, g.column_sums())]
            }
            Op::Scale(x, f) => vec![(*x, g.scale(*f))],
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::MulScalar(x, s) => {
                let factor = self.value(*s).item();
                let ds = crate::matrix::dot(g.as_slice(), self.value(*x).as_slice());
                vec![(*x, g.scale(factor)), (*s, Matrix::scalar(ds))]
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = self.shape(p).1;
                    let mut gp = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    v.push((p, gp));
                }
                v
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                vec![(*x, gx)]
            }
            Op::Transpose(x) => vec![(*x, g.transpose())],
            Op::MeanRows(x) => {
                let (rows, cols) = self.shape(*x);
                let inv = 1.0 / rows as f64;
                let mut gx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for (o, &gv) in gx.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = gv * inv;
                    }
                }
                vec![(*x, gx)]
            }
            Op::Sum(x) => {
                let (rows, cols) = self.shape(*x);
                vec![(*x, Matrix::filled(rows, cols, g.item()))]
            }
            Op::RowSoftmax(x) | Op::MaskedRowSoftmax(x) => {
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner = crate::matrix::dot(yr, gr);
                    for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - inner);
                    }
                }
                vec![(*x, gx)]
            }
            Op::MaskedLogSumExp(x, mask) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let lse = y.get(r, 0);
                    let gr = g.get(r, 0);
                    for ((o, &v), &m) in gx.row_mut(r).iter_mut().zip(xv.row(r)).zip(mask.row(r)) {
                        if m {
                            *o = gr * libm::exp(v - lse);
                        }
                    }
                }
                vec![(*x, gx)]
            }
            // y > 0 iff x > 0, and exp(x) = y + 1 on the other branch
            Op::Elu(x) => vec![(*x, g.zip_map(y, |gv, yv| if yv > 0.0 { gv } else { gv * (yv + 1.0) })?)],
            Op::LeakyRelu(x, slope) => {
                vec![(*x, g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { gv * slope })?)]
            }
            Op::Tanh(x) => vec![(*x, g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv))?)],
            Op::Sigmoid(x) => vec![(*x, g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv))?)],
            Op::Log(x) => vec![(*x, g.zip_map(self.value(*x), |gv, xv| gv / xv)?)],
            Op::Exp(x) => vec![(*x, g.zip_map(y, |gv, yv| gv * yv)?)],
            Op::L2NormalizeRows(x) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let raw = libm::sqrt(crate::matrix::dot(xv.row(r), xv.row(r)));
                    let yr = y.row(r);
                    let gr = g.row(r);
                    if raw > NORM_FLOOR {
                        let inner = crate::matrix::dot(yr, gr);
                        for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = (gv - yv * inner) / raw;
                        }
                    } else {
                        for (o, &gv) in gx.row_mut(r).iter_mut().zip(gr) {
                            *o = gv / NORM_FLOOR;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::GatherRows(x, indices) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = Matrix::zeros(rows, cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, &gv) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += gv;
                    }
                }
                vec![(*x, gx)]
            }
            Op::Clamp(x, lo, hi) => {
                vec![(*x, g.zip_map(self.value(*x), |gv, xv| if xv > *lo && xv < *hi { gv } else { 0.0 })?)]
            }
        };
        Ok(out)
    }
}

fn row_norm(row: &[f64]) -> f64 {
    libm::sqrt(crate::matrix::dot(row, row)).max(NORM_FLOOR)
}

fn softmax_into(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
    let on = |j: usize| mask.is_none_or(|m| m[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| on(j))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut total = 0.0;
    for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
        *o = if on(j) { libm::exp(v - max) } else { 0.0 };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}
