//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation in execution order, so inputs always
//! precede the records that consume them. [`Tape::backward`] walks the records
//! in reverse and returns a fresh [`Gradients`] map each call; calling it twice
//! on the same tape yields identical maps. Sum maps explicitly with
//! [`Gradients::accumulate`] when accumulation is wanted.
//!
//! Random inputs (Gumbel noise) enter as constants, so derivatives are
//! pathwise through the sample.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Axis, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    /// Scalar variable times tensor.
    ScaleBy {
        scalar: usize,
        a: usize,
    },
    AddRow {
        a: usize,
        row: usize,
    },
    MulRow {
        a: usize,
        row: usize,
    },
    MatMul(usize, usize),
    /// `a · bᵀ`
    MatMulNt(usize, usize),
    Transpose(usize),
    Exp(usize),
    Log(usize),
    LogClamped(usize, f64),
    LeakyRelu(usize, f64),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    LogSumExpRows(usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, Axis),
    Pick(usize, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    /// Adds another map from the same tape into this one.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => a.axpy(1.0, b)?,
                (None, Some(b)) => *mine = Some(b.clone()),
                _ => {}
            }
        }
        Ok(())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(&[a.0]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(&[a.0, b.0]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Mul(a.0, b.0)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).div(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Div(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.unary(a, v, Op::Scale(a.0, s))
    }

    /// Multiplies every entry of `a` by the scalar-shaped variable `s`.
    pub fn scale_by(&mut self, s: Var, a: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape(
                "scale_by",
                self.value(s).shape(),
                self.value(a).shape(),
            ));
        }
        let v = self.value(a).scale(self.value(s).item());
        Ok(self.binary(
            s,
            a,
            v,
            Op::ScaleBy {
                scalar: s.0,
                a: a.0,
            },
        ))
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (sa, sr) = (self.value(a).shape(), self.value(row).shape());
        if sr.rows() != 1 || sr.cols() != sa.cols() {
            return Err(Error::shape(op, sa, sr));
        }
        Ok(())
    }

    /// Adds a row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("add_row", a, row)?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        Ok(self.binary(a, row, v, Op::AddRow { a: a.0, row: row.0 }))
    }

    /// Multiplies every row of `a` elementwise by a row vector, i.e. `a·diag(row)`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("mul_row", a, row)?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, &b) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= b;
            }
        }
        Ok(self.binary(a, row, v, Op::MulRow { a: a.0, row: row.0 }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMul(a.0, b.0)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMulNt(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.unary(a, v, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).ln();
        self.unary(a, v, Op::Log(a.0))
    }

    /// `log(max(a, eps))`; no gradient flows where the clamp is active.
    pub fn log_clamped(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).map(|x| libm::log(x.max(eps)));
        self.unary(a, v, Op::LogClamped(a.0, eps))
    }

    /// The derivative at exactly zero is taken as `slope`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(a, v, Op::LeakyRelu(a.0, slope))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        match axis {
            Axis::Cols => {
                let v = softmax_rows(self.value(a));
                self.unary(a, v, Op::SoftmaxRows(a.0))
            }
            Axis::Rows => {
                let t = self.transpose(a);
                let s = self.softmax(t, Axis::Cols);
                self.transpose(s)
            }
        }
    }

    pub fn log_softmax(&mut self, a: Var, axis: Axis) -> Var {
        match axis {
            Axis::Cols => {
                let v = log_softmax_rows(self.value(a));
                self.unary(a, v, Op::LogSoftmaxRows(a.0))
            }
            Axis::Rows => {
                let t = self.transpose(a);
                let s = self.log_softmax(t, Axis::Cols);
                self.transpose(s)
            }
        }
    }

    /// Row-wise (`Axis::Cols`) or column-wise (`Axis::Rows`) log-sum-exp,
    /// shifted by the maximum.
    pub fn logsumexp(&mut self, a: Var, axis: Axis) -> Var {
        match axis {
            Axis::Cols => {
                let v = logsumexp_rows(self.value(a));
                self.unary(a, v, Op::LogSumExpRows(a.0))
            }
            Axis::Rows => {
                let t = self.transpose(a);
                let s = self.logsumexp(t, Axis::Cols);
                self.transpose(s)
            }
        }
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.unary(a, v, Op::Mean(a.0))
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Var {
        let v = self.value(a).sum_axis(axis);
        self.unary(a, v, Op::SumAxis(a.0, axis))
    }

    /// Picks `a[i, indices[i]]` for every row, giving a column.
    pub fn pick(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if indices.len() != t.rows() {
            return Err(Error::shape(
                "pick",
                t.shape(),
                Shape::Vector(indices.len()),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= t.cols()) {
            return Err(Error::contract(alloc::format!(
                "pick index {bad} out of range for {} columns",
                t.cols()
            )));
        }
        let data = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| t.get(i, j))
            .collect();
        let v = Tensor::matrix(indices.len(), 1, data)?;
        Ok(self.unary(a, v, Op::Pick(a.0, indices.to_vec())))
    }

    /// Reverse pass from a scalar-shaped `loss` with seed gradient 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::contract(alloc::format!(
                "backward needs a scalar loss, got shape {}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], id: usize, g: Tensor) -> Result<()> {
        if !self.nodes[id].requires_grad {
            return Ok(());
        }
        match &mut grads[id] {
            Some(existing) => existing.axpy(1.0, &g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let val = |i: usize| &self.nodes[i].value;
        let need = |i: usize| self.nodes[i].requires_grad;
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.acc(grads, a, g.clone())?;
                self.acc(grads, b, g.clone())?;
            }
            &Op::Sub(a, b) => {
                self.acc(grads, a, g.clone())?;
                self.acc(grads, b, g.scale(-1.0))?;
            }
            &Op::Mul(a, b) => {
                if need(a) {
                    self.acc(grads, a, g.mul(val(b))?)?;
                }
                if need(b) {
                    self.acc(grads, b, g.mul(val(a))?)?;
                }
            }
            &Op::Div(a, b) => {
                if need(a) {
                    self.acc(grads, a, g.div(val(b))?)?;
                }
                if need(b) {
                    // d(a/b)/db = -(a/b)/b
                    let gb = g.mul(&node.value)?.div(val(b))?.scale(-1.0);
                    self.acc(grads, b, gb)?;
                }
            }
            &Op::Scale(a, s) => self.acc(grads, a, g.scale(s))?,
            &Op::ScaleBy { scalar, a } => {
                if need(scalar) {
                    let s = g.dot(val(a))?;
                    self.acc(grads, scalar, Tensor::full(val(scalar).shape(), s))?;
                }
                if need(a) {
                    self.acc(grads, a, g.scale(val(scalar).item()))?;
                }
            }
            &Op::AddRow { a, row } => {
                self.acc(grads, a, g.clone())?;
                if need(row) {
                    let r = g.sum_axis(Axis::Rows).reshape(val(row).shape())?;
                    self.acc(grads, row, r)?;
                }
            }
            &Op::MulRow { a, row } => {
                let (av, rv) = (val(a), val(row));
                if need(a) {
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        for (x, &r) in ga.row_mut(i).iter_mut().zip(rv.data()) {
                            *x *= r;
                        }
                    }
                    self.acc(grads, a, ga)?;
                }
                if need(row) {
                    let gr = g.mul(av)?.sum_axis(Axis::Rows).reshape(rv.shape())?;
                    self.acc(grads, row, gr)?;
                }
            }
            &Op::MatMul(a, b) => {
                if need(a) {
                    let ga = g.matmul_nt(val(b))?.reshape(val(a).shape())?;
                    self.acc(grads, a, ga)?;
                }
                if need(b) {
                    let gb = val(a).matmul_tn(g)?.reshape(val(b).shape())?;
                    self.acc(grads, b, gb)?;
                }
            }
            &Op::MatMulNt(a, b) => {
                if need(a) {
                    let ga = g.matmul(val(b))?.reshape(val(a).shape())?;
                    self.acc(grads, a, ga)?;
                }
                if need(b) {
                    let gb = g.matmul_tn(val(a))?.reshape(val(b).shape())?;
                    self.acc(grads, b, gb)?;
                }
            }
            &Op::Transpose(a) => {
                let ga = g.transpose().reshape(val(a).shape())?;
                self.acc(grads, a, ga)?;
            }
            &Op::Exp(a) => self.acc(grads, a, g.mul(&node.value)?)?,
            &Op::Log(a) => self.acc(grads, a, g.div(val(a))?)?,
            &Op::LogClamped(a, eps) => {
                let x = val(a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gi, &xi)| if xi > eps { gi / xi } else { 0.0 })
                    .collect();
                self.acc(grads, a, Tensor::new(x.shape(), data)?)?;
            }
            &Op::LeakyRelu(a, slope) => {
                let x = val(a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { slope * gi })
                    .collect();
                self.acc(grads, a, Tensor::new(x.shape(), data)?)?;
            }
            &Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g.mul(y)?;
                for i in 0..ga.rows() {
                    let s = ga.row(i).iter().fold(0.0, |acc, &v| acc + v);
                    for (x, &yi) in ga.row_mut(i).iter_mut().zip(y.row(i)) {
                        *x -= yi * s;
                    }
                }
                self.acc(grads, a, ga)?;
            }
            &Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    let s = g.row(i).iter().fold(0.0, |acc, &v| acc + v);
                    for (x, &yi) in ga.row_mut(i).iter_mut().zip(y.row(i)) {
                        *x -= libm::exp(yi) * s;
                    }
                }
                self.acc(grads, a, ga)?;
            }
            &Op::LogSumExpRows(a) => {
                let mut ga = softmax_rows(val(a));
                for i in 0..ga.rows() {
                    let gi = g.data()[i];
                    for x in ga.row_mut(i) {
                        *x *= gi;
                    }
                }
                self.acc(grads, a, ga)?;
            }
            &Op::Sum(a) => self.acc(grads, a, Tensor::full(val(a).shape(), g.item()))?,
            &Op::Mean(a) => {
                let n = val(a).numel() as f64;
                self.acc(grads, a, Tensor::full(val(a).shape(), g.item() / n))?;
            }
            &Op::SumAxis(a, axis) => {
                let shape = val(a).shape();
                let mut ga = Tensor::zeros(shape);
                for i in 0..shape.rows() {
                    for j in 0..shape.cols() {
                        let gi = match axis {
                            Axis::Rows => g.data()[j],
                            Axis::Cols => g.data()[i],
                        };
                        ga.set(i, j, gi);
                    }
                }
                self.acc(grads, a, ga)?;
            }
            Op::Pick(a, indices) => {
                let mut ga = Tensor::zeros(val(*a).shape());
                for (i, &j) in indices.iter().enumerate() {
                    ga.set(i, j, g.data()[i]);
                }
                self.acc(grads, *a, ga)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = libm::exp(*x - m);
            s += *x;
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    out
}

pub(crate) fn log_softmax_rows(t: &Tensor) -> Tensor {
    let lse = logsumexp_rows(t);
    let mut out = t.clone();
    for i in 0..out.rows() {
        let l = lse.data()[i];
        for x in out.row_mut(i) {
            *x -= l;
        }
    }
    out
}

pub(crate) fn logsumexp_rows(t: &Tensor) -> Tensor {
    let data = (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = row.iter().fold(0.0, |acc, &x| acc + libm::exp(x - m));
            m + libm::log(s)
        })
        .collect();
    Tensor::new(Shape::Matrix(t.rows(), 1), data).expect("row count matches")
}

/// Maximum relative error between autodiff gradients and central finite
/// differences over every entry of every parameter:
/// `|ad - fd| / max(|fd|, 1e-8)`.
///
/// `f` must be deterministic given the parameter values.
pub fn grad_check<F>(params: &[Tensor], step: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.leaf(p.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).item())
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], p.shape());
        for k in 0..p.numel() {
            let orig = p.data()[k];
            work[pi].data_mut()[k] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let err = libm::fabs(analytic.data()[k] - fd) / libm::fabs(fd).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
