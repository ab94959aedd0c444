//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Operations are appended to a [`Tape`] in execution order and referred to
//! by [`Var`] handles. Inputs always precede the node that consumes them, so
//! the backward pass is a single reverse sweep over the node list.

use std::fmt;
use std::sync::Arc;

use super::kernels;
use super::sparse::SparseOperator;
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-supplied unary op: `(input, output_grad) -> input_grad`.
pub type CustomBackward<T> = Box<dyn Fn(&Tensor<T>, &Tensor<T>) -> Tensor<T> + Send + Sync>;

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseOperator<T>>, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    Silu(Var),
    Relu(Var),
    Sigmoid(Var),
    RowNormalize { x: Var, norms: Vec<T>, eps: T },
    RowDot(Var, Var),
    WeightedSum(Var, Arc<Vec<T>>),
    MeanRows(Var),
    SumSquares(Var),
    Sum(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatCols(Var, Var),
    BceWithLogits(Var, Arc<Vec<T>>),
    Custom(Var, CustomBackward<T>),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | AddBias(a, b) | Mul(a, b) | RowDot(a, b)
            | ConcatCols(a, b) => vec![*a, *b],
            SpMM(_, x)
            | Affine(x, _)
            | Silu(x)
            | Relu(x)
            | Sigmoid(x)
            | RowNormalize { x, .. }
            | WeightedSum(x, _)
            | MeanRows(x)
            | SumSquares(x)
            | Sum(x)
            | GatherRows(x, _)
            | BceWithLogits(x, _)
            | Custom(x, _) => vec![*x],
        }
    }

    fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            MatMul(..) => "matmul",
            SpMM(..) => "spmm",
            Add(..) => "add",
            AddBias(..) => "add_bias",
            Mul(..) => "mul",
            Affine(..) => "affine",
            Silu(..) => "silu",
            Relu(..) => "relu",
            Sigmoid(..) => "sigmoid",
            RowNormalize { .. } => "row_normalize",
            RowDot(..) => "row_dot",
            WeightedSum(..) => "weighted_sum",
            MeanRows(..) => "mean_rows",
            SumSquares(..) => "sum_squares",
            Sum(..) => "sum",
            GatherRows(..) => "gather_rows",
            ConcatCols(..) => "concat_cols",
            BceWithLogits(..) => "bce_with_logits",
            Custom(..) => "custom",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    trainable: bool,
}

/// Record of executed operations.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| n.op.name()))
            .finish()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let id = self.nodes.len();
        let inputs = op.inputs();
        debug_assert!(inputs.iter().all(|v| v.0 < id), "tape order violated");
        debug_assert!(value.is_finite(), "{} produced a non-finite value", op.name());
        let requires_grad = inputs.iter().any(|&v| self.requires(v));
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable: false,
        });
        Var(id)
    }

    fn leaf(&mut self, value: Tensor<T>, trainable: bool) -> Result<Var> {
        value.ensure_finite("leaf")?;
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: trainable,
            trainable,
        });
        Ok(Var(id))
    }

    /// Trainable leaf; receives a gradient from [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copy of `v` cut off from the graph (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            trainable: false,
        });
        Var(id)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::Shape(format!(
                "matmul: {}x{} times {}x{}",
                va.rows(),
                va.cols(),
                vb.rows(),
                vb.cols()
            )));
        }
        let out = kernels::matmul(va, vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn spmm(&mut self, adj: &Arc<SparseOperator<T>>, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if adj.forward.n_cols() != vx.rows() {
            return Err(Error::Shape(format!(
                "spmm: operator has {} columns, input has {} rows",
                adj.forward.n_cols(),
                vx.rows()
            )));
        }
        let out = kernels::spmm(&adj.forward, vx);
        Ok(self.push(out, Op::SpMM(Arc::clone(adj), x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Add a `1 x d` row vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(Error::Shape(format!(
                "add_bias: bias {}x{} for input with {} columns",
                vb.rows(),
                vb.cols(),
                vx.cols()
            )));
        }
        let mut out = vx.clone();
        let b = vb.row(0).to_vec();
        for i in 0..out.rows() {
            for (o, &bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o = *o + bj;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.affine(x, c, T::zero())
    }

    /// `c * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, c: T, shift: T) -> Var {
        let out = self.value(x).map(|v| c * v + shift);
        self.push(out, Op::Affine(x, c))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * sigmoid(v));
        self.push(out, Op::Silu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    /// Project each row onto the unit sphere: `z_i = x_i / max(|x_i|, eps)`.
    pub fn row_normalize(&mut self, x: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(Error::Argument("row_normalize: eps must be positive".into()));
        }
        let vx = self.value(x);
        let norms = vx.row_norms();
        let mut out = vx.clone();
        for (i, &n) in norms.iter().enumerate() {
            let d = n.max(eps);
            for v in out.row_mut(i) {
                *v = *v / d;
            }
        }
        Ok(self.push(out, Op::RowNormalize { x, norms, eps }))
    }

    /// Per-row inner products, producing an `N x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "row_dot")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = (0..va.rows())
            .map(|i| {
                va.row(i)
                    .iter()
                    .zip(vb.row(i))
                    .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
            })
            .collect();
        let out = Tensor::from_vec(va.rows(), 1, data)?;
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    /// `sum_i w_i * x_i` over all entries of `x` (in row-major order).
    pub fn weighted_sum(&mut self, x: Var, weights: Arc<Vec<T>>) -> Result<Var> {
        let vx = self.value(x);
        if weights.len() != vx.len() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for {} entries",
                weights.len(),
                vx.len()
            )));
        }
        let s = vx
            .data()
            .iter()
            .zip(weights.iter())
            .fold(T::zero(), |acc, (&v, &w)| acc + w * v);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, weights)))
    }

    /// Column means: `1 x d`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows() == 0 {
            return Err(Error::Shape("mean_rows: empty input".into()));
        }
        let mut out = Tensor::zeros(1, vx.cols());
        for i in 0..vx.rows() {
            for (o, &v) in out.row_mut(0).iter_mut().zip(vx.row(i)) {
                *o = *o + v;
            }
        }
        let n = T::of(vx.rows() as f64);
        let out = out.map(|v| v / n);
        Ok(self.push(out, Op::MeanRows(x)))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v * v);
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn gather_rows(&mut self, x: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= vx.rows()) {
            return Err(Error::Shape(format!(
                "gather_rows: index {bad} out of range for {} rows",
                vx.rows()
            )));
        }
        let out = vx.select_rows(&index);
        Ok(self.push(out, Op::GatherRows(x, index)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::Shape(format!(
                "concat_cols: {} rows vs {} rows",
                va.rows(),
                vb.rows()
            )));
        }
        let cols = va.cols() + vb.cols();
        let mut out = Tensor::zeros(va.rows(), cols);
        for i in 0..va.rows() {
            let row = out.row_mut(i);
            row[..va.cols()].copy_from_slice(va.row(i));
            row[va.cols()..].copy_from_slice(vb.row(i));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// Mean binary cross-entropy of `M x 1` logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Vec<T>>) -> Result<Var> {
        let vx = self.value(logits);
        if vx.cols() != 1 || vx.rows() != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "bce_with_logits: {}x{} logits for {} targets",
                vx.rows(),
                vx.cols(),
                targets.len()
            )));
        }
        let m = T::of(targets.len() as f64);
        let total = vx
            .data()
            .iter()
            .zip(targets.iter())
            .fold(T::zero(), |acc, (&x, &t)| acc + softplus(x) - t * x);
        Ok(self.push(Tensor::scalar(total / m), Op::BceWithLogits(logits, targets)))
    }

    /// Elementwise op with a caller-supplied forward value and backward rule.
    pub fn custom(&mut self, x: Var, value: Tensor<T>, backward: CustomBackward<T>) -> Result<Var> {
        value.expect_shape(self.value(x).shape(), "custom")?;
        Ok(self.push(value, Op::Custom(x, backward)))
    }

    /// Gradients of the scalar `loss` with respect to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with_seed(loss, T::one())
    }

    /// Reverse sweep starting from `seed * d(loss)`.
    pub fn backward_with_seed(&self, loss: Var, seed: T) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Shape(format!("backward: loss must be 1x1, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(seed));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, gi) in self.local_grads(id, &g)? {
                assert!(input.0 < id, "tape cycle at node {id}");
                if !self.requires(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
        }
        let by_leaf = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| g.filter(|_| self.nodes[id].trainable))
            .collect();
        Ok(Gradients { by_node: by_leaf })
    }

    fn local_grads(&self, id: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[id];
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if self.requires(*a) {
                    v.push((*a, kernels::matmul_bt(g, self.value(*b))));
                }
                if self.requires(*b) {
                    v.push((*b, kernels::matmul_at(self.value(*a), g)));
                }
                v
            }
            Op::SpMM(adj, x) => vec![(*x, kernels::spmm(&adj.adjoint, g))],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddBias(x, b) => {
                let mut gb = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                        *o = *o + v;
                    }
                }
                vec![(*x, g.clone()), (*b, gb)]
            }
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(self.value(*b), |gv, bv| gv * bv)?),
                (*b, g.zip_map(self.value(*a), |gv, av| gv * av)?),
            ],
            Op::Affine(x, c) => {
                let c = *c;
                vec![(*x, g.map(|v| c * v))]
            }
            Op::Silu(x) => vec![(
                *x,
                g.zip_map(self.value(*x), |gv, xv| {
                    let s = sigmoid(xv);
                    gv * s * (T::one() + xv * (T::one() - s))
                })?,
            )],
            Op::Relu(x) => vec![(
                *x,
                g.zip_map(self.value(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() })?,
            )],
            Op::Sigmoid(x) => vec![(*x, g.zip_map(y, |gv, yv| gv * yv * (T::one() - yv))?)],
            Op::RowNormalize { x, norms, eps } => {
                let mut gx = g.clone();
                for (i, &n) in norms.iter().enumerate() {
                    let z = y.row(i);
                    let row = gx.row_mut(i);
                    if n >= *eps {
                        let zg = z.iter().zip(row.iter()).fold(T::zero(), |a, (&p, &q)| a + p * q);
                        for (r, &zv) in row.iter_mut().zip(z) {
                            *r = (*r - zv * zg) / n;
                        }
                    } else {
                        for r in row.iter_mut() {
                            *r = *r / *eps;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut ga = vb.clone();
                let mut gb = va.clone();
                for i in 0..va.rows() {
                    let gi = g.data()[i];
                    ga.row_mut(i).iter_mut().for_each(|v| *v = *v * gi);
                    gb.row_mut(i).iter_mut().for_each(|v| *v = *v * gi);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::WeightedSum(x, w) => {
                let (r, c) = self.value(*x).shape();
                let gs = g.data()[0];
                vec![(*x, Tensor::from_vec(r, c, w.iter().map(|&wi| gs * wi).collect())?)]
            }
            Op::MeanRows(x) => {
                let (r, c) = self.value(*x).shape();
                let n = T::of(r as f64);
                let per = g.row(0).iter().map(|&v| v / n).collect::<Vec<_>>();
                vec![(*x, Tensor::from_fn(r, c, |_, j| per[j]))]
            }
            Op::SumSquares(x) => {
                let two_g = T::of(2.0) * g.data()[0];
                vec![(*x, self.value(*x).map(|v| two_g * v))]
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                vec![(*x, Tensor::full(r, c, g.data()[0]))]
            }
            Op::GatherRows(x, index) => {
                let (r, c) = self.value(*x).shape();
                let mut gx = Tensor::zeros(r, c);
                for (k, &i) in index.iter().enumerate() {
                    for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o = *o + v;
                    }
                }
                vec![(*x, gx)]
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let ga = Tensor::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                let gb = Tensor::from_fn(g.rows(), g.cols() - ca, |i, j| g.get(i, ca + j));
                vec![(*a, ga), (*b, gb)]
            }
            Op::BceWithLogits(x, targets) => {
                let vx = self.value(*x);
                let scale = g.data()[0] / T::of(targets.len() as f64);
                let data = vx
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&l, &t)| scale * (sigmoid(l) - t))
                    .collect();
                vec![(*x, Tensor::from_vec(vx.rows(), 1, data)?)]
            }
            Op::Custom(x, rule) => vec![(*x, rule(self.value(*x), g))],
        };
        Ok(out)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a trainable leaf, or `None` for anything else (including
    /// trainable leaves the loss does not depend on).
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when the loss does not reach it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}
