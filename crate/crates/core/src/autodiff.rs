//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves are registered with
//! [`Tape::param`] (gradient tracked) or [`Tape::constant`]. Every primitive
//! returns a [`Var`] handle; [`Tape::backward`] consumes the tape and returns
//! the gradient of a 1x1 loss with respect to every node that depends on a
//! parameter.

use std::sync::Arc;

use crate::error::{Result, ShtError};
use crate::tensor::{self, CsrMatrix, DenseMatrix, Real};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, T),
    Hadamard(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RowSum(Var),
    MeanRows(Var),
    MeanAll(Var),
    SumAll(Var),
    Sigmoid(Var),
    LeakyRelu(Var, T),
    Hinge(Var),
    DotRows(Var, Var),
    TensorContract { tensor: Var, vector: Var },
    SpMM { back: Arc<CsrMatrix<T>>, x: Var },
    GatherRows(Var, Arc<[usize]>),
    SoftmaxXent { logits: Var, labels: Arc<[usize]>, probs: DenseMatrix<T> },
}

struct Node<T> {
    value: DenseMatrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    checked: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: false,
        }
    }

    /// Reject non-finite leaves and primitive outputs.
    pub fn checked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &DenseMatrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, value: DenseMatrix<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: DenseMatrix<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copy of `v` with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, false)
    }

    fn leaf(&mut self, value: DenseMatrix<T>, needs_grad: bool) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(ShtError::NonFinite { op: "leaf" });
        }
        Ok(self.push(value, Op::Leaf, needs_grad))
    }

    fn push(&mut self, value: DenseMatrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: DenseMatrix<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(ShtError::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(ShtError::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.record("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// `a (n x m) + row (1 x m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr != (1, sa.1) {
            return Err(ShtError::ShapeMismatch {
                op: "add_row",
                lhs: sa,
                rhs: sr,
            });
        }
        let mut value = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..sa.0 {
            for (o, &b) in value.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        self.record("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.record("add_scalar", value, Op::AddScalar(a), &[a])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).scale(c);
        self.record("scale", value, Op::Scale(a, c), &[a])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        self.record("hadamard", value, Op::Hadamard(a, b), &[a, b])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&DenseMatrix<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = DenseMatrix::concat_cols(&mats)?;
        self.record("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Columns `[from, to)`.
    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(from, to)?;
        self.record("slice_cols", value, Op::SliceCols(a, from), &[a])
    }

    /// Sum across columns: `n x m -> n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        let value = DenseMatrix::from_fn(m.rows(), 1, |r, _| m.row(r).iter().copied().sum());
        self.record("row_sum", value, Op::RowSum(a), &[a])
    }

    /// Mean over rows: `n x m -> 1 x m`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(ShtError::ShapeMismatch {
                op: "mean_rows",
                lhs: m.shape(),
                rhs: (1, m.cols()),
            });
        }
        let inv = T::one() / T::of(m.rows() as f64);
        let mut value = DenseMatrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, &x) in value.data_mut().iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        let value = value.scale(inv);
        self.record("mean_rows", value, Op::MeanRows(a), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(ShtError::ShapeMismatch {
                op: "mean_all",
                lhs: m.shape(),
                rhs: (1, 1),
            });
        }
        let value = DenseMatrix::filled(1, 1, m.sum() / T::of(m.len() as f64));
        self.record("mean_all", value, Op::MeanAll(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let value = DenseMatrix::filled(1, 1, self.value(a).sum());
        self.record("sum_all", value, Op::SumAll(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.record("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        if slope <= T::zero() {
            return Err(ShtError::invalid("leaky_relu slope must be positive"));
        }
        let value = self.value(a).map(|x| if x > T::zero() { x } else { slope * x });
        self.record("leaky_relu", value, Op::LeakyRelu(a, slope), &[a])
    }

    /// `max(0, a)` elementwise.
    pub fn hinge(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(T::zero()));
        self.record("hinge", value, Op::Hinge(a), &[a])
    }

    /// Row-wise inner products: `n x m, n x m -> n x 1`.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot_rows", a, b)?;
        let (ma, mb) = (self.value(a), self.value(b));
        let value = DenseMatrix::from_fn(ma.rows(), 1, |r, _| tensor::dot(ma.row(r), mb.row(r)));
        self.record("dot_rows", value, Op::DotRows(a, b), &[a, b])
    }

    /// Contract a third-order tensor with a vector over its last axis.
    ///
    /// The tensor of shape `p x q x r` is stored flattened as a `(p*q) x r`
    /// matrix; `vector` is `r x 1` or `1 x r`. The result is `p x q` with
    /// `out[a][b] = sum_c tensor[a][b][c] * vector[c]`.
    pub fn tensor_contract(&mut self, tensor: Var, vector: Var, p: usize, q: usize) -> Result<Var> {
        let (st, sv) = (self.shape(tensor), self.shape(vector));
        let r = sv.0 * sv.1;
        if st.0 != p * q || st.1 != r || (sv.0 != 1 && sv.1 != 1) {
            return Err(ShtError::ShapeMismatch {
                op: "tensor_contract",
                lhs: st,
                rhs: sv,
            });
        }
        let t = self.value(tensor);
        let v = self.value(vector).data();
        let value = DenseMatrix::from_fn(p, q, |a, b| tensor::dot(t.row(a * q + b), v));
        self.record(
            "tensor_contract",
            value,
            Op::TensorContract { tensor, vector },
            &[tensor, vector],
        )
    }

    /// Constant sparse matrix times a dense value. `transpose` must hold the
    /// transpose of `sparse`; it drives the backward pass.
    pub fn spmm(&mut self, sparse: &Arc<CsrMatrix<T>>, transpose: &Arc<CsrMatrix<T>>, x: Var) -> Result<Var> {
        debug_assert_eq!((sparse.rows(), sparse.cols()), (transpose.cols(), transpose.rows()));
        let value = sparse.spmm(self.value(x))?;
        self.record(
            "spmm",
            value,
            Op::SpMM {
                back: Arc::clone(transpose),
                x,
            },
            &[x],
        )
    }

    /// Select rows by index (duplicates allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(ShtError::ShapeMismatch {
                op: "gather_rows",
                lhs: m.shape(),
                rhs: (bad, 0),
            });
        }
        let value = m.gather_rows(idx);
        self.record("gather_rows", value, Op::GatherRows(a, idx.into()), &[a])
    }

    /// Mean softmax cross-entropy of `logits` rows against class `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let m = self.value(logits);
        if labels.len() != m.rows() || labels.iter().any(|&l| l >= m.cols()) {
            return Err(ShtError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: m.shape(),
                rhs: (labels.len(), 1),
            });
        }
        let mut probs = DenseMatrix::zeros(m.rows(), m.cols());
        let mut loss = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = m.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&x| (x - max).exp()).sum();
            for (p, &x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - max).exp() / z;
            }
            loss += z.ln() + max - row[label];
        }
        let value = DenseMatrix::filled(1, 1, loss / T::of(labels.len().max(1) as f64));
        self.record(
            "softmax_cross_entropy",
            value,
            Op::SoftmaxXent {
                logits,
                labels: labels.into(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse pass from a 1x1 `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(ShtError::NotScalar { rows: r, cols: c });
        }
        let mut grads: Vec<Option<DenseMatrix<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &DenseMatrix<T>, grads: &mut [Option<DenseMatrix<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, delta: DenseMatrix<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if wants(a) {
                    acc(a, tensor::matmul_nt(g, val(b))?);
                }
                if wants(b) {
                    acc(b, tensor::matmul_tn(val(a), g)?);
                }
            }
            &Op::Transpose(a) => acc(a, g.transpose()),
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            &Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.scale(-T::one()));
            }
            &Op::AddRow(a, row) => {
                acc(a, g.clone());
                if wants(row) {
                    let mut s = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in s.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(row, s);
                }
            }
            &Op::AddScalar(a) => acc(a, g.clone()),
            &Op::Scale(a, c) => acc(a, g.scale(c)),
            &Op::Hadamard(a, b) => {
                if wants(a) {
                    acc(a, g.zip_map(val(b), "hadamard", |x, y| x * y)?);
                }
                if wants(b) {
                    acc(b, g.zip_map(val(a), "hadamard", |x, y| x * y)?);
                }
            }
            Op::ConcatCols(parts) => {
                let mut from = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        acc(p, g.slice_cols(from, from + w)?);
                    }
                    from += w;
                }
            }
            &Op::SliceCols(a, from) => {
                let (rows, cols) = val(a).shape();
                let mut d = DenseMatrix::zeros(rows, cols);
                for r in 0..rows {
                    d.row_mut(r)[from..from + g.cols()].copy_from_slice(g.row(r));
                }
                acc(a, d);
            }
            &Op::RowSum(a) => {
                let (rows, cols) = val(a).shape();
                acc(a, DenseMatrix::from_fn(rows, cols, |r, _| g.get(r, 0)));
            }
            &Op::MeanRows(a) => {
                let (rows, cols) = val(a).shape();
                let inv = T::one() / T::of(rows as f64);
                acc(a, DenseMatrix::from_fn(rows, cols, |_, c| g.get(0, c) * inv));
            }
            &Op::MeanAll(a) => {
                let (rows, cols) = val(a).shape();
                let s = g.get(0, 0) / T::of((rows * cols) as f64);
                acc(a, DenseMatrix::filled(rows, cols, s));
            }
            &Op::SumAll(a) => {
                let (rows, cols) = val(a).shape();
                acc(a, DenseMatrix::filled(rows, cols, g.get(0, 0)));
            }
            &Op::Sigmoid(a) => {
                let y = &node.value;
                acc(a, g.zip_map(y, "sigmoid", |gv, yv| gv * yv * (T::one() - yv))?);
            }
            &Op::LeakyRelu(a, slope) => {
                let d = g.zip_map(val(a), "leaky_relu", |gv, x| if x > T::zero() { gv } else { gv * slope })?;
                acc(a, d);
            }
            &Op::Hinge(a) => {
                let d = g.zip_map(val(a), "hinge", |gv, x| if x > T::zero() { gv } else { T::zero() })?;
                acc(a, d);
            }
            &Op::DotRows(a, b) => {
                let scale_rows = |m: &DenseMatrix<T>| {
                    DenseMatrix::from_fn(m.rows(), m.cols(), |r, c| g.get(r, 0) * m.get(r, c))
                };
                if wants(a) {
                    acc(a, scale_rows(val(b)));
                }
                if wants(b) {
                    acc(b, scale_rows(val(a)));
                }
            }
            &Op::TensorContract { tensor, vector } => {
                let flat = g.data();
                if wants(tensor) {
                    let v = val(vector).data();
                    let (pq, r) = val(tensor).shape();
                    acc(tensor, DenseMatrix::from_fn(pq, r, |i, c| flat[i] * v[c]));
                }
                if wants(vector) {
                    let t = val(tensor);
                    let mut dv = vec![T::zero(); t.cols()];
                    for (i, &gi) in flat.iter().enumerate() {
                        for (o, &x) in dv.iter_mut().zip(t.row(i)) {
                            *o += gi * x;
                        }
                    }
                    let (vr, vc) = val(vector).shape();
                    acc(vector, DenseMatrix::from_vec(vr, vc, dv)?);
                }
            }
            Op::SpMM { back, x } => acc(*x, back.spmm(g)?),
            Op::GatherRows(a, idx) => {
                let (rows, cols) = val(*a).shape();
                let mut d = DenseMatrix::zeros(rows, cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(*a, d);
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let s = g.get(0, 0) / T::of(labels.len().max(1) as f64);
                let mut d = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    let cell = d.row_mut(r);
                    cell[l] -= T::one();
                }
                acc(*logits, d.scale(s));
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn leaky_relu<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<DenseMatrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`, if it was reached from the loss.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when unreached.
    pub fn wrt(&self, v: Var) -> DenseMatrix<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> DenseMatrix<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

/// Per-parameter comparison of tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max relative error per parameter, in input order.
    pub max_rel_error: Vec<f64>,
    /// Max absolute error per parameter.
    pub max_abs_error: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|&e| e < self.tolerance)
    }
}

/// Denominator floor for relative errors; below it differences count as absolute.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare [`Tape::backward`] against `(f(θ+ε) − f(θ−ε)) / 2ε` for every
/// coordinate of every parameter. `build` receives a fresh tape and the
/// parameter handles and must return a 1x1 loss.
///
/// Errors from `build` surface as a report entry of `f64::INFINITY`.
pub fn grad_check<F>(build: F, params: &[DenseMatrix<f64>], epsilon: f64, tolerance: f64) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[DenseMatrix<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = ps
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let analytic = (|| -> Result<Vec<DenseMatrix<f64>>> {
        let mut tape = Tape::new();
        let vars = params
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = build(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;
        Ok(vars.iter().map(|&v| grads.wrt(v)).collect())
    })();

    let Ok(analytic) = analytic else {
        return GradCheckReport {
            max_rel_error: vec![f64::INFINITY; params.len()],
            max_abs_error: vec![f64::INFINITY; params.len()],
            tolerance,
        };
    };

    let mut work: Vec<DenseMatrix<f64>> = params.to_vec();
    let mut max_rel_error = Vec::with_capacity(params.len());
    let mut max_abs_error = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut worst_rel = 0.0f64;
        let mut worst_abs = 0.0f64;
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + epsilon;
            let plus = eval(&work);
            work[p].data_mut()[i] = orig - epsilon;
            let minus = eval(&work);
            work[p].data_mut()[i] = orig;
            let (rel, abs) = match (plus, minus) {
                (Ok(fp), Ok(fm)) => {
                    let numeric = (fp - fm) / (2.0 * epsilon);
                    let a = analytic[p].data()[i];
                    let abs = (a - numeric).abs();
                    let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                    (if abs == 0.0 { 0.0 } else { abs / denom }, abs)
                }
                _ => (f64::INFINITY, f64::INFINITY),
            };
            worst_rel = worst_rel.max(rel);
            worst_abs = worst_abs.max(abs);
        }
        max_rel_error.push(worst_rel);
        max_abs_error.push(worst_abs);
    }
    GradCheckReport {
        max_rel_error,
        max_abs_error,
        tolerance,
    }
}
