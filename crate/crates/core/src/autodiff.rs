//! Minimal reverse-mode gradient engine over dense matrices.
//!
//! Operations append records to a [`Tape`]; [`Tape::backward`] walks the
//! records strictly in reverse execution order and accumulates gradients
//! additively. The sparse product treats the matrix as a constant: gradients
//! flow only into the dense operand, never into the graph.
//!
//! A tape and its tensors form a single-owner training context. Independent
//! contexts (one per seed or run) may execute in parallel.

use crate::graph::SparseSymMatrix;
use crate::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch, {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: mask selects no rows")]
    EmptyMask { op: &'static str },
    #[error("{op}: row {row} of the mask is outside 0..{rows}")]
    MaskOutOfRange {
        op: &'static str,
        row: usize,
        rows: usize,
    },
    #[error("cross_entropy: non-finite logits in masked rows")]
    NonFiniteLogits,
    #[error("dropout probability {0} is outside [0, 1)")]
    InvalidDropout(f64),
    #[error("backward target must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarBackward { rows: usize, cols: usize },
}

/// Handle to a tensor on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum CeTarget {
    Hard(Arc<Vec<usize>>),
    Soft(Var),
}

enum MseTarget {
    Const(Arc<Matrix>),
    Var(Var),
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    MatmulConst(Var, Matrix),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Spmm(Arc<SparseSymMatrix>, Var),
    LinComb(Vec<Var>, Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    SoftmaxRows(Var),
    Sum(Var),
    Detach,
    CrossEntropy {
        logits: Var,
        target: CeTarget,
        mask: Arc<Vec<usize>>,
    },
    Mse {
        pred: Var,
        target: MseTarget,
        mask: Arc<Vec<usize>>,
    },
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
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

    /// Trainable input: participates in gradient accumulation.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Fixed input: carried on the tape but receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of a tensor, zero-filled when no path reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.shape(), (1, 1), "tensor is not a scalar");
        value.data()[0]
    }

    /// Shapes of every tensor recorded so far.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().map(|n| n.value.shape()).collect()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// `a * b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                detail: format!("{ar}x{ac} * {br}x{bc}"),
            });
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, Op::Matmul(a, b)))
    }

    /// `x * m` with a constant right factor.
    pub fn matmul_const(&mut self, x: Var, m: Matrix) -> Result<Var, AutodiffError> {
        let (xr, xc) = self.value(x).shape();
        if xc != m.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul_const",
                detail: format!("{xr}x{xc} * {}x{}", m.rows(), m.cols()),
            });
        }
        let value = self.value(x).matmul(&m);
        let rg = self.requires(x);
        Ok(self.push(value, rg, Op::MatmulConst(x, m)))
    }

    /// Adds a 1 x h bias row to every row of x.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (_, xc) = self.value(x).shape();
        let (br, bc) = self.value(b).shape();
        if br != 1 || bc != xc {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_bias",
                detail: format!("bias is {br}x{bc}, expected 1x{xc}"),
            });
        }
        let xv = self.value(x);
        let bv = self.value(b);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for c in 0..bc {
                value[(r, c)] += bv.data()[c];
            }
        }
        let rg = self.requires(x) || self.requires(b);
        Ok(self.push(value, rg, Op::AddBias(x, b)))
    }

    /// `x * w + b`, the affine transform.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise(a, b, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise(a, b, "sub")
    }

    fn elementwise(&mut self, a: Var, b: Var, op: &'static str) -> Result<Var, AutodiffError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: if op == "add" { "add" } else { "sub" },
                detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            });
        }
        let value = if op == "add" {
            self.value(a).add(self.value(b))
        } else {
            self.value(a).sub(self.value(b))
        };
        let rg = self.requires(a) || self.requires(b);
        let record = if op == "add" { Op::Add(a, b) } else { Op::Sub(a, b) };
        Ok(self.push(value, rg, record))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        let rg = self.requires(x);
        self.push(value, rg, Op::Scale(x, s))
    }

    /// Sparse constant times dense tensor. The matrix must be symmetric;
    /// backward reuses it in place of its transpose.
    pub fn spmm(&mut self, m: &Arc<SparseSymMatrix>, x: Var) -> Result<Var, AutodiffError> {
        let value = m.spmm(self.value(x)).map_err(|_| AutodiffError::ShapeMismatch {
            op: "spmm",
            detail: format!(
                "matrix over {} nodes, signal {}x{}",
                m.num_nodes(),
                self.value(x).rows(),
                self.value(x).cols()
            ),
        })?;
        let rg = self.requires(x);
        Ok(self.push(value, rg, Op::Spmm(Arc::clone(m), x)))
    }

    /// `sum_k coeffs[0, k] * blocks[k]` with a 1 x (K+1) coefficient row.
    pub fn lincomb(&mut self, blocks: &[Var], coeffs: Var) -> Result<Var, AutodiffError> {
        let (cr, cc) = self.value(coeffs).shape();
        if cr != 1 || cc != blocks.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "lincomb",
                detail: format!("coefficients are {cr}x{cc}, expected 1x{}", blocks.len()),
            });
        }
        let shape = self.value(blocks[0]).shape();
        for &b in blocks {
            if self.value(b).shape() != shape {
                return Err(AutodiffError::ShapeMismatch {
                    op: "lincomb",
                    detail: "blocks differ in shape".to_string(),
                });
            }
        }
        let mut value = Matrix::zeros(shape.0, shape.1);
        for (k, &b) in blocks.iter().enumerate() {
            let c = self.value(coeffs).data()[k];
            value.add_assign_scaled(self.value(b), c);
        }
        let rg = self.requires(coeffs) || blocks.iter().any(|&b| self.requires(b));
        Ok(self.push(value, rg, Op::LinComb(blocks.to_vec(), coeffs)))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.requires(x);
        self.push(value, rg, Op::Relu(x))
    }

    /// Inverted dropout: kept entries are scaled by 1/(1-p) during training;
    /// evaluation and p = 0 are the identity. The mask is a pure function of
    /// the seed.
    pub fn dropout(
        &mut self,
        x: Var,
        p: f64,
        seed: u64,
        training: bool,
    ) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::InvalidDropout(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).data().len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let xv = self.value(x);
        let mut value = xv.clone();
        for (v, &m) in value.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let rg = self.requires(x);
        Ok(self.push(value, rg, Op::Dropout(x, mask)))
    }

    /// Row-wise softmax with max subtraction; rows sum to 1.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            softmax_row_in_place(value.row_mut(r));
        }
        let rg = self.requires(x);
        self.push(value, rg, Op::SoftmaxRows(x))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let rg = self.requires(x);
        self.push(Matrix::from_vec(1, 1, vec![total]), rg, Op::Sum(x))
    }

    /// Copies the value and blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, false, Op::Detach)
    }

    /// Mean over masked rows of the cross-entropy against hard class labels.
    pub fn cross_entropy_hard(
        &mut self,
        logits: Var,
        labels: Arc<Vec<usize>>,
        mask: Arc<Vec<usize>>,
    ) -> Result<Var, AutodiffError> {
        self.check_mask("cross_entropy", logits, &mask)?;
        let lv = self.value(logits);
        let classes = lv.cols();
        let mut total = 0.0;
        for &r in mask.iter() {
            let row = lv.row(r);
            if !row.iter().all(|v| v.is_finite()) {
                return Err(AutodiffError::NonFiniteLogits);
            }
            let label = labels[r];
            assert!(label < classes, "label {label} out of range for {classes} classes");
            total += log_sum_exp(row) - row[label];
        }
        let value = total / mask.len() as f64;
        let rg = self.requires(logits);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![value]),
            rg,
            Op::CrossEntropy {
                logits,
                target: CeTarget::Hard(labels),
                mask,
            },
        ))
    }

    /// Mean over masked rows of `-sum_c target[r,c] * log softmax(logits)[r,c]`
    /// with a soft target tensor. Gradients flow into both arguments.
    pub fn cross_entropy_soft(
        &mut self,
        logits: Var,
        target: Var,
        mask: Arc<Vec<usize>>,
    ) -> Result<Var, AutodiffError> {
        self.check_mask("cross_entropy", logits, &mask)?;
        if self.value(logits).shape() != self.value(target).shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                detail: format!(
                    "logits {:?} vs target {:?}",
                    self.value(logits).shape(),
                    self.value(target).shape()
                ),
            });
        }
        let lv = self.value(logits);
        let tv = self.value(target);
        let mut total = 0.0;
        for &r in mask.iter() {
            let row = lv.row(r);
            if !row.iter().all(|v| v.is_finite()) {
                return Err(AutodiffError::NonFiniteLogits);
            }
            let lse = log_sum_exp(row);
            for (c, &t) in tv.row(r).iter().enumerate() {
                total += t * (lse - row[c]);
            }
        }
        let value = total / mask.len() as f64;
        let rg = self.requires(logits) || self.requires(target);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![value]),
            rg,
            Op::CrossEntropy {
                logits,
                target: CeTarget::Soft(target),
                mask,
            },
        ))
    }

    /// Mean over masked entries of the squared difference against a constant
    /// target.
    pub fn mse_const(
        &mut self,
        pred: Var,
        target: Arc<Matrix>,
        mask: Arc<Vec<usize>>,
    ) -> Result<Var, AutodiffError> {
        self.check_mask("mse", pred, &mask)?;
        if self.value(pred).shape() != target.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                detail: format!(
                    "pred {:?} vs target {:?}",
                    self.value(pred).shape(),
                    target.shape()
                ),
            });
        }
        let value = masked_mse(self.value(pred), &target, &mask);
        let rg = self.requires(pred);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![value]),
            rg,
            Op::Mse {
                pred,
                target: MseTarget::Const(target),
                mask,
            },
        ))
    }

    /// Mean over masked entries of the squared difference between two
    /// tensors; gradients flow into both.
    pub fn mse_var(
        &mut self,
        pred: Var,
        target: Var,
        mask: Arc<Vec<usize>>,
    ) -> Result<Var, AutodiffError> {
        self.check_mask("mse", pred, &mask)?;
        if self.value(pred).shape() != self.value(target).shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                detail: format!(
                    "pred {:?} vs target {:?}",
                    self.value(pred).shape(),
                    self.value(target).shape()
                ),
            });
        }
        let value = masked_mse(self.value(pred), self.value(target), &mask);
        let rg = self.requires(pred) || self.requires(target);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![value]),
            rg,
            Op::Mse {
                pred,
                target: MseTarget::Var(target),
                mask,
            },
        ))
    }

    fn check_mask(
        &self,
        op: &'static str,
        over: Var,
        mask: &[usize],
    ) -> Result<(), AutodiffError> {
        if mask.is_empty() {
            return Err(AutodiffError::EmptyMask { op });
        }
        let rows = self.value(over).rows();
        for &r in mask {
            if r >= rows {
                return Err(AutodiffError::MaskOutOfRange { op, row: r, rows });
            }
        }
        Ok(())
    }

    /// Reverse pass from a scalar output. Gradients accumulate additively
    /// into every tensor with `requires_grad` on a path to the output.
    pub fn backward(&mut self, output: Var) -> Result<(), AutodiffError> {
        let (r, c) = self.value(output).shape();
        if (r, c) != (1, 1) {
            return Err(AutodiffError::NonScalarBackward { rows: r, cols: c });
        }
        // Work buffer kept apart from the nodes so op records can be read
        // while downstream gradients are written.
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            if let Some(g) = grad {
                if node.requires_grad {
                    match &mut node.grad {
                        Some(existing) => existing.add_assign_scaled(&g, 1.0),
                        slot => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let accumulate = |grads: &mut [Option<Matrix>], v: Var, contribution: Matrix| {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_scaled(&contribution, 1.0),
                slot => *slot = Some(contribution),
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.requires(*a) {
                    accumulate(grads, *a, g.matmul_bt(self.value(*b)));
                }
                if self.requires(*b) {
                    accumulate(grads, *b, self.value(*a).matmul_at(g));
                }
            }
            Op::MatmulConst(x, m) => {
                if self.requires(*x) {
                    accumulate(grads, *x, g.matmul_bt(m));
                }
            }
            Op::AddBias(x, b) => {
                if self.requires(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if self.requires(*b) {
                    accumulate(grads, *b, g.col_sums());
                }
            }
            Op::Add(a, b) => {
                if self.requires(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.requires(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.requires(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.requires(*b) {
                    accumulate(grads, *b, g.scale(-1.0));
                }
            }
            Op::Scale(x, s) => {
                if self.requires(*x) {
                    accumulate(grads, *x, g.scale(*s));
                }
            }
            Op::Spmm(m, x) => {
                if self.requires(*x) {
                    // Symmetric matrix, so M^T g = M g.
                    let dx = m.spmm(g).expect("forward shape already checked");
                    accumulate(grads, *x, dx);
                }
            }
            Op::LinComb(blocks, coeffs) => {
                for (k, &b) in blocks.iter().enumerate() {
                    if self.requires(b) {
                        let c = self.value(*coeffs).data()[k];
                        accumulate(grads, b, g.scale(c));
                    }
                }
                if self.requires(*coeffs) {
                    let mut dc = Matrix::zeros(1, blocks.len());
                    for (k, &b) in blocks.iter().enumerate() {
                        dc.data_mut()[k] = g.dot(self.value(b));
                    }
                    accumulate(grads, *coeffs, dc);
                }
            }
            Op::Relu(x) => {
                if self.requires(*x) {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Dropout(x, mask) => {
                if self.requires(*x) {
                    let mut dx = g.clone();
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::SoftmaxRows(x) => {
                if self.requires(*x) {
                    let y = &self.nodes[idx].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        let dr = dx.row_mut(r);
                        for c in 0..yr.len() {
                            dr[c] = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Sum(x) => {
                if self.requires(*x) {
                    let shape = self.value(*x).shape();
                    accumulate(grads, *x, Matrix::filled(shape.0, shape.1, g.data()[0]));
                }
            }
            Op::Detach => {}
            Op::CrossEntropy { logits, target, mask } => {
                let scale = g.data()[0] / mask.len() as f64;
                match target {
                    CeTarget::Hard(labels) => {
                        if self.requires(*logits) {
                            let lv = self.value(*logits);
                            let mut dl = Matrix::zeros(lv.rows(), lv.cols());
                            for &r in mask.iter() {
                                let probs = softmax_copy(lv.row(r));
                                let dr = dl.row_mut(r);
                                for (c, &p) in probs.iter().enumerate() {
                                    dr[c] = scale * (p - f64::from(c == labels[r]));
                                }
                            }
                            accumulate(grads, *logits, dl);
                        }
                    }
                    CeTarget::Soft(t) => {
                        if self.requires(*logits) {
                            let lv = self.value(*logits);
                            let tv = self.value(*t);
                            let mut dl = Matrix::zeros(lv.rows(), lv.cols());
                            for &r in mask.iter() {
                                let probs = softmax_copy(lv.row(r));
                                let weight: f64 = tv.row(r).iter().sum();
                                let dr = dl.row_mut(r);
                                for (c, &p) in probs.iter().enumerate() {
                                    dr[c] = scale * (weight * p - tv.row(r)[c]);
                                }
                            }
                            accumulate(grads, *logits, dl);
                        }
                        if self.requires(*t) {
                            let lv = self.value(*logits);
                            let tv = self.value(*t);
                            let mut dt = Matrix::zeros(tv.rows(), tv.cols());
                            for &r in mask.iter() {
                                let row = lv.row(r);
                                let lse = log_sum_exp(row);
                                let dr = dt.row_mut(r);
                                for c in 0..row.len() {
                                    dr[c] = scale * (lse - row[c]);
                                }
                            }
                            accumulate(grads, *t, dt);
                        }
                    }
                }
            }
            Op::Mse { pred, target, mask } => {
                let cols = self.value(*pred).cols();
                let scale = g.data()[0] * 2.0 / (mask.len() * cols) as f64;
                let target_view: &Matrix = match target {
                    MseTarget::Const(t) => t,
                    MseTarget::Var(t) => self.value(*t),
                };
                if self.requires(*pred) {
                    let pv = self.value(*pred);
                    let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                    for &r in mask.iter() {
                        let pr = pv.row(r);
                        let tr = target_view.row(r);
                        let dr = dp.row_mut(r);
                        for c in 0..cols {
                            dr[c] = scale * (pr[c] - tr[c]);
                        }
                    }
                    accumulate(grads, *pred, dp);
                }
                if let MseTarget::Var(t) = target {
                    if self.requires(*t) {
                        let pv = self.value(*pred);
                        let mut dt = Matrix::zeros(pv.rows(), pv.cols());
                        for &r in mask.iter() {
                            let pr = pv.row(r);
                            let tr = target_view.row(r);
                            let dr = dt.row_mut(r);
                            for c in 0..cols {
                                dr[c] = -scale * (pr[c] - tr[c]);
                            }
                        }
                        accumulate(grads, *t, dt);
                    }
                }
            }
        }
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn softmax_copy(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    softmax_row_in_place(&mut out);
    out
}

fn masked_mse(pred: &Matrix, target: &Matrix, mask: &[usize]) -> f64 {
    let cols = pred.cols();
    let mut total = 0.0;
    for &r in mask {
        let pr = pred.row(r);
        let tr = target.row(r);
        for c in 0..cols {
            let d = pr[c] - tr[c];
            total += d * d;
        }
    }
    total / (mask.len() * cols) as f64
}

/// Central finite-difference gradient of a scalar function of one matrix.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&Matrix) -> f64,
    at: &Matrix,
    step: f64,
) -> Matrix {
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.data().len() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + step;
        let plus = f(&probe);
        probe.data_mut()[i] = original - step;
        let minus = f(&probe);
        probe.data_mut()[i] = original;
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative disagreement between two gradients, with a floor so
/// near-zero entries compare absolutely.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        let denom = a.abs().max(n.abs()).max(floor);
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}
