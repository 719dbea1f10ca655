//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] owns an append-only list of nodes; every operation records its
//! operands by index and stores its forward value immediately. [`Var`] is a
//! copyable handle into the tape. [`Graph::backward`] walks the tape once in
//! reverse creation order, which makes gradient accumulation deterministic
//! for a fixed graph; a second call on the same graph is an error.
//!
//! Gradients only flow into nodes that can reach a trainable leaf, so
//! constants (mixtures, targets) cost nothing extra during the backward pass.

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::signal::{overlap_add_into, overlap_counts};
use crate::tensor::{Real, Tensor};

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// value = a + c; the constant is irrelevant to the gradient
    AddConst(usize),
    /// value = a * c
    Scale(usize, f64),
    /// value[i] = a[i] + c * s, s scalar node
    AddScalarMul { a: usize, s: usize, c: f64 },
    /// value[i] = a[i] * s, s scalar node
    MulScalar { a: usize, s: usize },
    MatMul(usize, usize),
    Conv1d { x: usize, w: usize, bias: Option<usize>, dilation: usize, groups: usize },
    /// Row blocks are normalized independently; `blocks == 1` is plain gLN.
    GlobalLayerNorm { x: usize, gamma: usize, beta: usize, blocks: usize, eps: f64 },
    PRelu { x: usize, slope: usize },
    Sigmoid(usize),
    Ln(usize),
    Dot(usize, usize),
    Sum(usize),
    ConcatRows(Vec<usize>),
    SliceRows { x: usize, start: usize },
    OverlapAdd { x: usize, hop: usize, original_len: usize },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op,
    needs_grad: bool,
}

/// Computation tape. Single-threaded; distinct graphs are independent.
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    backward_done: Cell<bool>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()), backward_done: Cell::new(false) }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(&self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, grad: None, op, needs_grad });
        Var(nodes.len() - 1)
    }

    /// Leaf that receives no gradient (inputs, targets).
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; `grad` is populated by [`Graph::backward`].
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.item()
    }

    /// Gradient of the last backward root w.r.t. `v`; `None` until backward
    /// runs or if nothing trainable flows through `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.nodes.borrow()[v.0].grad.clone()
    }

    fn unary<F: FnOnce(&Tensor<T>) -> Tensor<T>>(&self, a: Var, op: Op, f: F) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (f(&nodes[a.0].value), nodes[a.0].needs_grad)
        };
        self.push(value, op, needs)
    }

    fn zip2<F: FnOnce(T, T) -> T + Copy>(&self, a: Var, b: Var, op: Op, name: &str, f: F) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            if na.value.shape() != nb.value.shape() {
                return Err(Error::invalid(format!(
                    "{name}: shape mismatch {:?} vs {:?}",
                    na.value.shape(),
                    nb.value.shape()
                )));
            }
            let data: Vec<T> =
                na.value.data().iter().zip(nb.value.data()).map(|(&x, &y)| f(x, y)).collect();
            (Tensor::from_raw(na.value.shape().to_vec(), data), na.needs_grad || nb.needs_grad)
        };
        Ok(self.push(value, op, needs))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.zip2(a, b, Op::Add(a.0, b.0), "add", |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.zip2(a, b, Op::Sub(a.0, b.0), "sub", |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.zip2(a, b, Op::Mul(a.0, b.0), "mul", |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.zip2(a, b, Op::Div(a.0, b.0), "div", |x, y| x / y)
    }

    pub fn add_const(&self, a: Var, c: f64) -> Var {
        let cv = T::from_f64_(c);
        self.unary(a, Op::AddConst(a.0), |t| t.map(|x| x + cv))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let cv = T::from_f64_(c);
        self.unary(a, Op::Scale(a.0, c), |t| t.map(|x| x * cv))
    }

    /// `a + c * s` with `s` a scalar node broadcast over `a`.
    pub fn add_scalar_mul(&self, a: Var, s: Var, c: f64) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, ns) = (&nodes[a.0], &nodes[s.0]);
            if !ns.value.is_scalar() {
                return Err(Error::invalid("add_scalar_mul: second operand must be scalar"));
            }
            let sv = ns.value.item() * T::from_f64_(c);
            (na.value.map(|x| x + sv), na.needs_grad || ns.needs_grad)
        };
        Ok(self.push(value, Op::AddScalarMul { a: a.0, s: s.0, c }, needs))
    }

    /// `a * s` with `s` a scalar node broadcast over `a`.
    pub fn mul_scalar(&self, a: Var, s: Var) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, ns) = (&nodes[a.0], &nodes[s.0]);
            if !ns.value.is_scalar() {
                return Err(Error::invalid("mul_scalar: second operand must be scalar"));
            }
            let sv = ns.value.item();
            (na.value.map(|x| x * sv), na.needs_grad || ns.needs_grad)
        };
        Ok(self.push(value, Op::MulScalar { a: a.0, s: s.0 }, needs))
    }

    /// Standard 2-D matrix product.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            if na.value.ndim() != 2 || nb.value.ndim() != 2 {
                return Err(Error::invalid("matmul: operands must be 2-D"));
            }
            let (p, q) = (na.value.rows(), na.value.cols());
            let (q2, r) = (nb.value.rows(), nb.value.cols());
            if q != q2 {
                return Err(Error::invalid(format!("matmul: inner dimensions {q} vs {q2}")));
            }
            let mut out = vec![T::zero(); p * r];
            matmul_forward(na.value.data(), nb.value.data(), p, q, r, &mut out);
            (Tensor::from_raw(vec![p, r], out), na.needs_grad || nb.needs_grad)
        };
        Ok(self.push(value, Op::MatMul(a.0, b.0), needs))
    }

    /// Non-causal "same" 1-D convolution with symmetric zero padding of
    /// `dilation * (P - 1) / 2` per side. Input is `C_in x T`, kernel
    /// `C_out x (C_in / groups) x P` with odd `P`; `groups == C_in` gives a
    /// depthwise convolution. Bias, when given, is a length-`C_out` vector.
    pub fn conv1d(
        &self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        dilation: usize,
        groups: usize,
    ) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (nx, nw) = (&nodes[x.0], &nodes[w.0]);
            if nx.value.ndim() != 2 || nw.value.ndim() != 3 {
                return Err(Error::invalid("conv1d: input must be 2-D and kernel 3-D"));
            }
            let (cin, t_len) = (nx.value.rows(), nx.value.cols());
            let ws = nw.value.shape();
            let (cout, cpg, p) = (ws[0], ws[1], ws[2]);
            if p % 2 == 0 {
                return Err(Error::invalid(format!("conv1d: kernel width {p} must be odd for same padding")));
            }
            if groups == 0 || cin % groups != 0 || cout % groups != 0 {
                return Err(Error::invalid(format!(
                    "conv1d: groups {groups} must divide C_in {cin} and C_out {cout}"
                )));
            }
            if cpg != cin / groups {
                return Err(Error::invalid(format!(
                    "conv1d: kernel expects {cpg} channels per group, input supplies {}",
                    cin / groups
                )));
            }
            if dilation == 0 {
                return Err(Error::invalid("conv1d: dilation must be >= 1"));
            }
            let mut needs = nx.needs_grad || nw.needs_grad;
            let bdata = match bias {
                Some(bv) => {
                    let nb = &nodes[bv.0];
                    if nb.value.numel() != cout {
                        return Err(Error::invalid(format!(
                            "conv1d: bias has {} elements, expected {cout}",
                            nb.value.numel()
                        )));
                    }
                    needs = needs || nb.needs_grad;
                    Some(nb.value.data().to_vec())
                }
                None => None,
            };
            let mut out = vec![T::zero(); cout * t_len];
            conv1d_forward(
                nx.value.data(),
                cin,
                t_len,
                nw.value.data(),
                cout,
                cpg,
                p,
                bdata.as_deref(),
                dilation,
                groups,
                &mut out,
            );
            (Tensor::from_raw(vec![cout, t_len], out), needs)
        };
        Ok(self.push(value, Op::Conv1d { x: x.0, w: w.0, bias: bias.map(|b| b.0), dilation, groups }, needs))
    }

    /// Global layer normalization: zero mean / unit variance over all `C x T`
    /// elements jointly, then a per-channel affine `gamma`/`beta` (length C).
    pub fn global_layer_norm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.block_global_layer_norm(x, gamma, beta, 1, eps)
    }

    /// [`Graph::global_layer_norm`] applied independently to `blocks` equal
    /// row groups. Used where channel groups must keep their statistics
    /// independent of how many groups are present.
    pub fn block_global_layer_norm(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        blocks: usize,
        eps: f64,
    ) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (nx, ng, nb) = (&nodes[x.0], &nodes[gamma.0], &nodes[beta.0]);
            if nx.value.ndim() != 2 {
                return Err(Error::invalid("layer norm: input must be 2-D"));
            }
            if eps <= 0.0 {
                return Err(Error::invalid("layer norm: eps must be positive"));
            }
            let (rows, cols) = (nx.value.rows(), nx.value.cols());
            if blocks == 0 || rows % blocks != 0 {
                return Err(Error::invalid(format!("layer norm: {blocks} blocks must divide {rows} rows")));
            }
            if ng.value.numel() != rows || nb.value.numel() != rows {
                return Err(Error::invalid(format!(
                    "layer norm: gamma/beta must have {rows} elements, got {}/{}",
                    ng.value.numel(),
                    nb.value.numel()
                )));
            }
            let xd = nx.value.data();
            let (gd, bd) = (ng.value.data(), nb.value.data());
            let stats = gln_stats(xd, rows, cols, blocks, eps);
            let block_rows = rows / blocks;
            let mut out = vec![T::zero(); rows * cols];
            for c in 0..rows {
                let (mean, inv_std) = stats[c / block_rows];
                let (g, b) = (gd[c], bd[c]);
                for t in 0..cols {
                    out[c * cols + t] = g * (xd[c * cols + t] - mean) * inv_std + b;
                }
            }
            (
                Tensor::from_raw(vec![rows, cols], out),
                nx.needs_grad || ng.needs_grad || nb.needs_grad,
            )
        };
        Ok(self.push(value, Op::GlobalLayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, blocks, eps }, needs))
    }

    /// `x` where `x >= 0`, else `slope * x`; `slope` is a trainable scalar.
    pub fn prelu(&self, x: Var, slope: Var) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (nx, ns) = (&nodes[x.0], &nodes[slope.0]);
            if !ns.value.is_scalar() {
                return Err(Error::invalid("prelu: slope must be scalar"));
            }
            let a = ns.value.item();
            (nx.value.map(|v| if v >= T::zero() { v } else { a * v }), nx.needs_grad || ns.needs_grad)
        };
        Ok(self.push(value, Op::PRelu { x: x.0, slope: slope.0 }, needs))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x.0), |t| t.map(sigmoid_stable))
    }

    /// Elementwise natural logarithm; the caller guards the domain.
    pub fn ln(&self, x: Var) -> Var {
        self.unary(x, Op::Ln(x.0), |t| t.map(|v| v.ln()))
    }

    /// Inner product of two equal-size tensors; yields a scalar node.
    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            if na.value.numel() != nb.value.numel() {
                return Err(Error::invalid(format!(
                    "dot: size mismatch {} vs {}",
                    na.value.numel(),
                    nb.value.numel()
                )));
            }
            let s: T = na.value.data().iter().zip(nb.value.data()).map(|(&x, &y)| x * y).sum();
            (Tensor::scalar(s), na.needs_grad || nb.needs_grad)
        };
        Ok(self.push(value, Op::Dot(a.0, b.0), needs))
    }

    pub fn sum(&self, a: Var) -> Var {
        self.unary(a, Op::Sum(a.0), |t| Tensor::scalar(t.data().iter().copied().sum()))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.nodes.borrow()[a.0].value.numel();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Stacks 2-D tensors with equal column counts along the row axis, in
    /// input order.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_rows: no inputs"));
        }
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let cols = {
                let first = &nodes[parts[0].0].value;
                if first.ndim() != 2 {
                    return Err(Error::invalid("concat_rows: inputs must be 2-D"));
                }
                first.cols()
            };
            let mut rows = 0;
            let mut needs = false;
            for pv in parts {
                let n = &nodes[pv.0];
                if n.value.ndim() != 2 || n.value.cols() != cols {
                    return Err(Error::invalid(format!(
                        "concat_rows: expected 2-D with {cols} columns, got {:?}",
                        n.value.shape()
                    )));
                }
                rows += n.value.rows();
                needs = needs || n.needs_grad;
            }
            let mut out = Vec::with_capacity(rows * cols);
            for pv in parts {
                out.extend_from_slice(nodes[pv.0].value.data());
            }
            (Tensor::from_raw(vec![rows, cols], out), needs)
        };
        Ok(self.push(value, Op::ConcatRows(parts.iter().map(|p| p.0).collect()), needs))
    }

    /// Rows `start .. start + rows` of a 2-D tensor.
    pub fn slice_rows(&self, x: Var, start: usize, rows: usize) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let nx = &nodes[x.0];
            if nx.value.ndim() != 2 {
                return Err(Error::invalid("slice_rows: input must be 2-D"));
            }
            let (total, cols) = (nx.value.rows(), nx.value.cols());
            if rows == 0 || start + rows > total {
                return Err(Error::invalid(format!(
                    "slice_rows: rows {start}..{} out of range 0..{total}",
                    start + rows
                )));
            }
            let data = nx.value.data()[start * cols..(start + rows) * cols].to_vec();
            (Tensor::from_raw(vec![rows, cols], data), nx.needs_grad)
        };
        Ok(self.push(value, Op::SliceRows { x: x.0, start }, needs))
    }

    /// Count-normalized overlap-add of an `L x T` segment matrix back to a
    /// waveform of `original_len` samples.
    pub fn overlap_add(&self, x: Var, hop: usize, original_len: usize) -> Result<Var> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let nx = &nodes[x.0];
            if nx.value.ndim() != 2 {
                return Err(Error::invalid("overlap_add: input must be 2-D"));
            }
            let (seg_len, frames) = (nx.value.rows(), nx.value.cols());
            if hop == 0 || hop > seg_len {
                return Err(Error::invalid(format!("overlap_add: hop {hop} must be in 1..={seg_len}")));
            }
            if original_len == 0 || original_len > (frames - 1) * hop + seg_len {
                return Err(Error::invalid(format!(
                    "overlap_add: original length {original_len} not covered by {frames} windows"
                )));
            }
            let mut out = vec![T::zero(); original_len];
            overlap_add_into(nx.value.data(), seg_len, hop, frames, original_len, &mut out);
            (Tensor::from_raw(vec![original_len], out), nx.needs_grad)
        };
        Ok(self.push(value, Op::OverlapAdd { x: x.0, hop, original_len }, needs))
    }

    /// Reverse pass from a scalar root. Fills `grad` on every node that can
    /// reach a trainable leaf. One backward per graph; a second call errors.
    pub fn backward(&self, root: Var) -> Result<()> {
        if self.backward_done.get() {
            return Err(Error::BackwardAlreadyRan);
        }
        let mut nodes = self.nodes.borrow_mut();
        let r = root.0;
        if r >= nodes.len() {
            return Err(Error::invalid("backward: unknown variable"));
        }
        if nodes[r].value.numel() != 1 {
            return Err(Error::NonScalarRoot(nodes[r].value.numel()));
        }
        if !nodes[r].needs_grad {
            return Err(Error::NoTrainableLeaves);
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=r).map(|_| None).collect();
        grads[r] = Some(vec![T::one()]);
        for i in (0..=r).rev() {
            let Some(g) = grads[i].take() else { continue };
            propagate(&nodes, i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, slot) in grads.iter_mut().enumerate() {
            if let Some(g) = slot.take() {
                let shape = nodes[i].value.shape().to_vec();
                nodes[i].grad = Some(Tensor::from_raw(shape, g));
            }
        }
        self.backward_done.set(true);
        Ok(())
    }
}

/// Adds this node's upstream gradient `g` into its parents' buffers.
fn propagate<T: Real>(nodes: &[Node<T>], i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let needs = |idx: usize| nodes[idx].needs_grad;
    let numel = |idx: usize| nodes[idx].value.numel();
    macro_rules! acc {
        ($idx:expr) => {
            grads[$idx].get_or_insert_with(|| vec![T::zero(); numel($idx)])
        };
    }
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if needs(*a) {
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            if needs(*b) {
                for (d, &gv) in acc!(*b).iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            if needs(*b) {
                for (d, &gv) in acc!(*b).iter_mut().zip(g) {
                    *d = *d - gv;
                }
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                let bv = nodes[*b].value.data();
                for ((d, &gv), &y) in acc!(*a).iter_mut().zip(g).zip(bv) {
                    *d = *d + gv * y;
                }
            }
            if needs(*b) {
                let av = nodes[*a].value.data();
                for ((d, &gv), &x) in acc!(*b).iter_mut().zip(g).zip(av) {
                    *d = *d + gv * x;
                }
            }
        }
        Op::Div(a, b) => {
            let bv = nodes[*b].value.data();
            if needs(*a) {
                for ((d, &gv), &y) in acc!(*a).iter_mut().zip(g).zip(bv) {
                    *d = *d + gv / y;
                }
            }
            if needs(*b) {
                let val = nodes[i].value.data();
                let dst = acc!(*b);
                for t in 0..g.len() {
                    dst[t] = dst[t] - g[t] * val[t] / bv[t];
                }
            }
        }
        Op::AddConst(a) => {
            if needs(*a) {
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
        }
        Op::Scale(a, c) => {
            if needs(*a) {
                let cv = T::from_f64_(*c);
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv * cv;
                }
            }
        }
        Op::AddScalarMul { a, s, c } => {
            if needs(*a) {
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            if needs(*s) {
                let total: T = g.iter().copied().sum();
                acc!(*s)[0] = acc!(*s)[0] + total * T::from_f64_(*c);
            }
        }
        Op::MulScalar { a, s } => {
            let sv = nodes[*s].value.item();
            if needs(*a) {
                for (d, &gv) in acc!(*a).iter_mut().zip(g) {
                    *d = *d + gv * sv;
                }
            }
            if needs(*s) {
                let av = nodes[*a].value.data();
                let total: T = g.iter().zip(av).map(|(&gv, &x)| gv * x).sum();
                acc!(*s)[0] = acc!(*s)[0] + total;
            }
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (p, q, rr) = (av.rows(), av.cols(), bv.cols());
            if needs(*a) {
                // dA[i,k] = <g row i, B row k>
                let bd = bv.data();
                let da = acc!(*a);
                for r0 in 0..p {
                    let grow = &g[r0 * rr..(r0 + 1) * rr];
                    for k in 0..q {
                        let brow = &bd[k * rr..(k + 1) * rr];
                        let s: T = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        da[r0 * q + k] = da[r0 * q + k] + s;
                    }
                }
            }
            if needs(*b) {
                // dB row k += sum_i A[i,k] * g row i
                let ad = av.data();
                let db = acc!(*b);
                for r0 in 0..p {
                    let grow = &g[r0 * rr..(r0 + 1) * rr];
                    for k in 0..q {
                        let aik = ad[r0 * q + k];
                        let drow = &mut db[k * rr..(k + 1) * rr];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d = *d + aik * gv;
                        }
                    }
                }
            }
        }
        Op::Conv1d { x, w, bias, dilation, groups } => {
            let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
            let t_len = xv.cols();
            let ws = wv.shape();
            let (cout, cpg, p) = (ws[0], ws[1], ws[2]);
            let pad = (*dilation * (p - 1) / 2) as isize;
            let out_per_group = cout / groups;
            if let Some(b) = bias {
                if needs(*b) {
                    let db = acc!(*b);
                    for co in 0..cout {
                        let s: T = g[co * t_len..(co + 1) * t_len].iter().copied().sum();
                        db[co] = db[co] + s;
                    }
                }
            }
            let (xd, wd) = (xv.data(), wv.data());
            if needs(*w) {
                let dw = acc!(*w);
                for co in 0..cout {
                    let grow = &g[co * t_len..(co + 1) * t_len];
                    let grp = co / out_per_group;
                    for cl in 0..cpg {
                        let xrow = &xd[(grp * cpg + cl) * t_len..(grp * cpg + cl + 1) * t_len];
                        for pp in 0..p {
                            let off = (*dilation * pp) as isize - pad;
                            let t0 = (-off).max(0) as usize;
                            let t1 = (t_len as isize).min(t_len as isize - off).max(0) as usize;
                            if t0 >= t1 {
                                continue;
                            }
                            let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                            let s: T = grow[t0..t1].iter().zip(src).map(|(&a, &b)| a * b).sum();
                            let wi = (co * cpg + cl) * p + pp;
                            dw[wi] = dw[wi] + s;
                        }
                    }
                }
            }
            if needs(*x) {
                let dx = acc!(*x);
                for co in 0..cout {
                    let grow = &g[co * t_len..(co + 1) * t_len];
                    let grp = co / out_per_group;
                    for cl in 0..cpg {
                        let ci = grp * cpg + cl;
                        for pp in 0..p {
                            let off = (*dilation * pp) as isize - pad;
                            let t0 = (-off).max(0) as usize;
                            let t1 = (t_len as isize).min(t_len as isize - off).max(0) as usize;
                            if t0 >= t1 {
                                continue;
                            }
                            let wvv = wd[(co * cpg + cl) * p + pp];
                            let dst = &mut dx
                                [ci * t_len + (t0 as isize + off) as usize..ci * t_len + (t1 as isize + off) as usize];
                            for (d, &gv) in dst.iter_mut().zip(&grow[t0..t1]) {
                                *d = *d + wvv * gv;
                            }
                        }
                    }
                }
            }
        }
        Op::GlobalLayerNorm { x, gamma, beta, blocks, eps } => {
            let xv = &nodes[*x].value;
            let (rows, cols) = (xv.rows(), xv.cols());
            let block_rows = rows / blocks;
            let m = T::from_f64_((block_rows * cols) as f64);
            let xd = xv.data();
            let gd = nodes[*gamma].value.data();
            let stats = gln_stats(xd, rows, cols, *blocks, *eps);
            if needs(*beta) {
                let db = acc!(*beta);
                for c in 0..rows {
                    let s: T = g[c * cols..(c + 1) * cols].iter().copied().sum();
                    db[c] = db[c] + s;
                }
            }
            if needs(*gamma) {
                let dg = acc!(*gamma);
                for c in 0..rows {
                    let (mean, inv_std) = stats[c / block_rows];
                    let s: T = g[c * cols..(c + 1) * cols]
                        .iter()
                        .zip(&xd[c * cols..(c + 1) * cols])
                        .map(|(&gv, &x0)| gv * (x0 - mean) * inv_std)
                        .sum();
                    dg[c] = dg[c] + s;
                }
            }
            if needs(*x) {
                let dx = acc!(*x);
                for blk in 0..*blocks {
                    let (mean, inv_std) = stats[blk];
                    let c0 = blk * block_rows;
                    // block means of gamma-scaled gradient and its x-hat product
                    let mut sum_gh = T::zero();
                    let mut sum_ghx = T::zero();
                    for c in c0..c0 + block_rows {
                        let gam = gd[c];
                        for t in 0..cols {
                            let gh = g[c * cols + t] * gam;
                            let xh = (xd[c * cols + t] - mean) * inv_std;
                            sum_gh = sum_gh + gh;
                            sum_ghx = sum_ghx + gh * xh;
                        }
                    }
                    let mg = sum_gh / m;
                    let mgx = sum_ghx / m;
                    for c in c0..c0 + block_rows {
                        let gam = gd[c];
                        for t in 0..cols {
                            let gh = g[c * cols + t] * gam;
                            let xh = (xd[c * cols + t] - mean) * inv_std;
                            let idx = c * cols + t;
                            dx[idx] = dx[idx] + (gh - mg - xh * mgx) * inv_std;
                        }
                    }
                }
            }
        }
        Op::PRelu { x, slope } => {
            let xv = nodes[*x].value.data();
            let a = nodes[*slope].value.item();
            if needs(*x) {
                let dx = acc!(*x);
                for t in 0..g.len() {
                    let f = if xv[t] >= T::zero() { T::one() } else { a };
                    dx[t] = dx[t] + g[t] * f;
                }
            }
            if needs(*slope) {
                let s: T = g
                    .iter()
                    .zip(xv)
                    .filter(|(_, &x0)| x0 < T::zero())
                    .map(|(&gv, &x0)| gv * x0)
                    .sum();
                acc!(*slope)[0] = acc!(*slope)[0] + s;
            }
        }
        Op::Sigmoid(a) => {
            if needs(*a) {
                let val = nodes[i].value.data();
                let da = acc!(*a);
                for t in 0..g.len() {
                    da[t] = da[t] + g[t] * val[t] * (T::one() - val[t]);
                }
            }
        }
        Op::Ln(a) => {
            if needs(*a) {
                let av = nodes[*a].value.data();
                let da = acc!(*a);
                for t in 0..g.len() {
                    da[t] = da[t] + g[t] / av[t];
                }
            }
        }
        Op::Dot(a, b) => {
            let gs = g[0];
            if needs(*a) {
                let bv = nodes[*b].value.data();
                for (d, &y) in acc!(*a).iter_mut().zip(bv) {
                    *d = *d + gs * y;
                }
            }
            if needs(*b) {
                let av = nodes[*a].value.data();
                for (d, &x) in acc!(*b).iter_mut().zip(av) {
                    *d = *d + gs * x;
                }
            }
        }
        Op::Sum(a) => {
            if needs(*a) {
                let gs = g[0];
                for d in acc!(*a).iter_mut() {
                    *d = *d + gs;
                }
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &pv in parts {
                let n = nodes[pv].value.numel();
                if needs(pv) {
                    for (d, &gv) in acc!(pv).iter_mut().zip(&g[offset..offset + n]) {
                        *d = *d + gv;
                    }
                }
                offset += n;
            }
        }
        Op::SliceRows { x, start } => {
            if needs(*x) {
                let cols = nodes[*x].value.cols();
                let dx = acc!(*x);
                for (d, &gv) in dx[start * cols..start * cols + g.len()].iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
        }
        Op::OverlapAdd { x, hop, original_len } => {
            if needs(*x) {
                let xv = &nodes[*x].value;
                let (seg_len, frames) = (xv.rows(), xv.cols());
                let counts = overlap_counts(seg_len, *hop, frames, *original_len);
                let dx = acc!(*x);
                for l in 0..seg_len {
                    for t in 0..frames {
                        let idx = t * hop + l;
                        if idx < *original_len {
                            dx[l * frames + t] =
                                dx[l * frames + t] + g[idx] / T::from_f64_(f64::from(counts[idx]));
                        }
                    }
                }
            }
        }
    }
}

fn matmul_forward<T: Real>(a: &[T], b: &[T], p: usize, q: usize, r: usize, out: &mut [T]) {
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let brow = &b[k * r..(k + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + aik * bv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward<T: Real>(
    x: &[T],
    _cin: usize,
    t_len: usize,
    w: &[T],
    cout: usize,
    cpg: usize,
    p: usize,
    bias: Option<&[T]>,
    dilation: usize,
    groups: usize,
    out: &mut [T],
) {
    let pad = (dilation * (p - 1) / 2) as isize;
    let out_per_group = cout / groups;
    for co in 0..cout {
        let grp = co / out_per_group;
        if let Some(b) = bias {
            out[co * t_len..(co + 1) * t_len].fill(b[co]);
        }
        for cl in 0..cpg {
            let xrow = &x[(grp * cpg + cl) * t_len..(grp * cpg + cl + 1) * t_len];
            for pp in 0..p {
                let wv = w[(co * cpg + cl) * p + pp];
                let off = (dilation * pp) as isize - pad;
                let t0 = (-off).max(0) as usize;
                let t1 = (t_len as isize).min(t_len as isize - off).max(0) as usize;
                if t0 >= t1 {
                    continue;
                }
                let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                let dst = &mut out[co * t_len + t0..co * t_len + t1];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o = *o + wv * s;
                }
            }
        }
    }
}

/// Per-block `(mean, 1/sqrt(var + eps))` over `block_rows * cols` elements.
fn gln_stats<T: Real>(x: &[T], rows: usize, cols: usize, blocks: usize, eps: f64) -> Vec<(T, T)> {
    let block_rows = rows / blocks;
    let m = T::from_f64_((block_rows * cols) as f64);
    (0..blocks)
        .map(|b| {
            let blk = &x[b * block_rows * cols..(b + 1) * block_rows * cols];
            let mean = blk.iter().copied().sum::<T>() / m;
            let var = blk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
            (mean, T::one() / (var + T::from_f64_(eps)).sqrt())
        })
        .collect()
}

fn sigmoid_stable<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
