use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::kernels::{self, ConvGeom};
use crate::tensor::numel;
use crate::{NnError, Result, Scalar, Shape, Tensor};

/// Elementwise nonlinearities. Each derivative is expressible with graph ops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Tanh,
    Sigmoid,
    /// `sqrt(x)`; the derivative at exactly zero is taken as zero.
    Sqrt,
    /// `1/x`, with `0 -> 0`.
    Recip,
    Relu,
    /// Heaviside step; derivative zero.
    Step,
}

impl UnaryKind {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            UnaryKind::Tanh => v.tanh(),
            UnaryKind::Sigmoid => T::one() / (T::one() + (-v).exp()),
            UnaryKind::Sqrt => v.max(T::zero()).sqrt(),
            UnaryKind::Recip => {
                if v == T::zero() {
                    T::zero()
                } else {
                    v.recip()
                }
            }
            UnaryKind::Relu => v.max(T::zero()),
            UnaryKind::Step => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Sparse linear map along the sample axis: `out[.., j] = sum_i in[.., i] * m[i, j]`.
pub struct SampleMatrix<T> {
    len_in: usize,
    len_out: usize,
    // cols[j] = [(i, m[i, j])]
    cols: Vec<Vec<(usize, T)>>,
    // rows[i] = [(j, m[i, j])]
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SampleMatrix<T> {
    pub fn from_entries(len_in: usize, len_out: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut cols = vec![Vec::new(); len_out];
        let mut rows = vec![Vec::new(); len_in];
        for (i, j, v) in entries {
            assert!(i < len_in && j < len_out, "sample matrix entry out of range");
            if v != T::zero() {
                cols[j].push((i, v));
                rows[i].push((j, v));
            }
        }
        Self { len_in, len_out, cols, rows }
    }

    pub fn dense(len_in: usize, len_out: usize, f: impl Fn(usize, usize) -> T) -> Self {
        Self::from_entries(
            len_in,
            len_out,
            (0..len_in).flat_map(|i| (0..len_out).map(move |j| (i, j))).map(|(i, j)| (i, j, f(i, j))),
        )
    }

    /// Linear interpolation by two: even outputs copy, odd outputs average
    /// neighbours, the last odd output repeats the final input.
    pub fn upsample2(len: usize) -> Self {
        let half = T::lit(0.5);
        let mut e = Vec::new();
        for i in 0..len {
            e.push((i, 2 * i, T::one()));
            if i + 1 < len {
                e.push((i, 2 * i + 1, half));
                e.push((i + 1, 2 * i + 1, half));
            } else {
                e.push((i, 2 * i + 1, T::one()));
            }
        }
        Self::from_entries(len, 2 * len, e)
    }

    /// Mean-pool by two.
    pub fn pool2(len: usize) -> Self {
        let half = T::lit(0.5);
        Self::from_entries(len, len / 2, (0..len).map(|i| (i, i / 2, half)))
    }

    /// Copies a single sample across `len` positions.
    pub fn broadcast(len: usize) -> Self {
        Self::from_entries(1, len, (0..len).map(|j| (0, j, T::one())))
    }

    pub fn len_in(&self) -> usize {
        self.len_in
    }

    pub fn len_out(&self) -> usize {
        self.len_out
    }

    fn apply(&self, x: &Tensor<T>, transposed: bool) -> Result<Tensor<T>> {
        let [b, c, f, l] = x.shape();
        let (lin, lout, taps) = if transposed {
            (self.len_out, self.len_in, &self.rows)
        } else {
            (self.len_in, self.len_out, &self.cols)
        };
        if l != lin {
            return Err(NnError::Shape { op: "sample_map", detail: format!("length {l}, expected {lin}") });
        }
        let mut out = Tensor::zeros([b, c, f, lout]);
        let xd = x.data();
        for (row, dst) in out.data_mut().chunks_mut(lout).enumerate() {
            let src = &xd[row * lin..(row + 1) * lin];
            for (j, d) in dst.iter_mut().enumerate() {
                *d = taps[j].iter().fold(T::zero(), |acc, &(i, w)| acc + src[i] * w);
            }
        }
        Ok(out)
    }
}

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add,
    Sub,
    Mul,
    Affine { scale: T },
    Unary(UnaryKind),
    ReduceTo,
    BroadcastTo,
    Concat,
    Slice { start: usize },
    Pad { start: usize },
    SampleMap { m: Rc<SampleMatrix<T>>, transposed: bool },
    Conv(ConvGeom),
    ConvGradInput(ConvGeom),
    ConvGradKernel(ConvGeom),
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    inputs: Vec<usize>,
}

/// Append-only computation tape. Node ids are topologically ordered.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, inputs: Vec<usize>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, inputs });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// Inserts a leaf. Whether it is differentiated is decided by [`Graph::grad`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, Vec::new())
    }

    pub fn scalar(&self, v: T) -> Var<'_, T> {
        self.leaf(Tensor::scalar(v))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Concatenates along the channel axis.
    pub fn concat<'g>(&'g self, parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let first = vals.first().ok_or(NnError::Shape { op: "concat", detail: "no inputs".into() })?;
        let [b, _, f, l] = first.shape();
        let mut channels = 0;
        for v in &vals {
            let s = v.shape();
            if s[0] != b || s[2] != f || s[3] != l {
                return Err(NnError::Shape {
                    op: "concat",
                    detail: format!("{:?} vs {:?}", s, first.shape()),
                });
            }
            channels += s[1];
        }
        let plane = f * l;
        let mut data = Vec::with_capacity(b * channels * plane);
        for bi in 0..b {
            for v in &vals {
                let c = v.shape()[1];
                data.extend_from_slice(&v.data()[bi * c * plane..(bi + 1) * c * plane]);
            }
        }
        let out = Tensor::new([b, channels, f, l], data)?;
        Ok(self.push(out, Op::Concat, parts.iter().map(|p| p.id).collect()))
    }

    /// Gradient of scalar `output` with respect to each of `wrt`.
    ///
    /// The returned gradients are graph nodes and can be differentiated
    /// again. Inputs that `output` does not depend on get a zero gradient.
    pub fn grad<'g>(&'g self, output: Var<'g, T>, wrt: &[Var<'g, T>]) -> Result<Vec<Var<'g, T>>> {
        let out_shape = output.shape();
        if numel(out_shape) != 1 {
            return Err(NnError::Shape { op: "grad", detail: format!("output must be scalar, got {out_shape:?}") });
        }
        let n = output.id + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.id < n {
                needs[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..n {
                if !needs[i] && nodes[i].inputs.iter().any(|&j| needs[j]) {
                    needs[i] = true;
                }
            }
        }
        let mut grads: Vec<Option<Var<'g, T>>> = vec![None; n];
        if needs[output.id] {
            grads[output.id] = Some(self.leaf(Tensor::full(out_shape, T::one())));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let (op, inputs) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op.clone(), nodes[i].inputs.clone())
            };
            if matches!(op, Op::Leaf) {
                continue;
            }
            let this = Var { graph: self, id: i };
            let parts = self.backward(&op, this, &inputs, g, &needs)?;
            for (j, gj) in inputs.iter().zip(parts) {
                if let (Some(gj), true) = (gj, needs[*j]) {
                    grads[*j] = Some(match grads[*j] {
                        Some(acc) => acc.add(gj)?,
                        None => gj,
                    });
                }
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.leaf(Tensor::zeros(w.shape()))),
            })
            .collect()
    }

    fn backward<'g>(
        &'g self,
        op: &Op<T>,
        this: Var<'g, T>,
        inputs: &[usize],
        g: Var<'g, T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Var<'g, T>>>> {
        let inp = |k: usize| Var { graph: self, id: inputs[k] };
        let want = |k: usize| needs[inputs[k]];
        Ok(match op {
            Op::Leaf => vec![],
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => vec![Some(g), if want(1) { Some(g.neg()) } else { None }],
            Op::Mul => vec![
                if want(0) { Some(g.mul(inp(1))?) } else { None },
                if want(1) { Some(g.mul(inp(0))?) } else { None },
            ],
            Op::Affine { scale, .. } => vec![Some(g.affine(*scale, T::zero()))],
            Op::Unary(kind) => {
                let d = match kind {
                    UnaryKind::Tanh => Some(this.mul(this)?.affine(-T::one(), T::one())),
                    UnaryKind::Sigmoid => Some(this.mul(this.affine(-T::one(), T::one()))?),
                    UnaryKind::Sqrt => Some(this.unary(UnaryKind::Recip).affine(T::lit(0.5), T::zero())),
                    UnaryKind::Recip => Some(this.mul(this)?.affine(-T::one(), T::zero())),
                    UnaryKind::Relu => Some(inp(0).unary(UnaryKind::Step)),
                    UnaryKind::Step => None,
                };
                match d {
                    Some(d) => vec![Some(g.mul(d)?)],
                    None => vec![None],
                }
            }
            Op::ReduceTo => vec![Some(g.broadcast_to(inp(0).shape())?)],
            Op::BroadcastTo => vec![Some(g.reduce_to(inp(0).shape())?)],
            Op::Concat => {
                let mut start = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for k in 0..inputs.len() {
                    let c = inp(k).shape()[1];
                    out.push(if want(k) { Some(g.slice_channels(start, c)?) } else { None });
                    start += c;
                }
                out
            }
            Op::Slice { start } => vec![Some(g.pad_channels(*start, inp(0).shape()[1])?)],
            Op::Pad { start } => vec![Some(g.slice_channels(*start, inp(0).shape()[1])?)],
            Op::SampleMap { m, transposed } => vec![Some(g.sample_map_raw(m.clone(), !*transposed)?)],
            Op::Conv(geom) => {
                let x = inp(0);
                let w = inp(1);
                let [_, _, fi, li] = x.shape();
                vec![
                    if want(0) { Some(g.conv_grad_input(w, *geom, fi, li)?) } else { None },
                    if want(1) { Some(x.conv_grad_kernel(g, *geom)?) } else { None },
                ]
            }
            Op::ConvGradInput(geom) => {
                let y = inp(0);
                let w = inp(1);
                vec![
                    if want(0) { Some(g.conv2d(w, *geom)?) } else { None },
                    if want(1) { Some(g.conv_grad_kernel(y, *geom)?) } else { None },
                ]
            }
            Op::ConvGradKernel(geom) => {
                let x = inp(0);
                let y = inp(1);
                let [_, _, fi, li] = x.shape();
                vec![
                    if want(0) { Some(y.conv_grad_input(g, *geom, fi, li)?) } else { None },
                    if want(1) { Some(x.conv2d(g, *geom)?) } else { None },
                ]
            }
        })
    }
}

fn same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(NnError::Shape { op, detail: format!("{a:?} vs {b:?}") });
    }
    Ok(())
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Shape {
        self.graph.nodes.borrow()[self.id].value.shape()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        self.value().item()
    }

    fn binary(self, other: Self, op: Op<T>, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        let a = self.value();
        let b = other.value();
        same_shape(name, a.shape(), b.shape())?;
        Ok(self.graph.push(a.zip_map(&b, f), op, vec![self.id, other.id]))
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Add, "add", |a, b| a + b)
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Sub, "sub", |a, b| a - b)
    }

    pub fn mul(self, other: Self) -> Result<Self> {
        self.binary(other, Op::Mul, "mul", |a, b| a * b)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(self, scale: T, shift: T) -> Self {
        let v = self.value().map(|x| scale * x + shift);
        self.graph.push(v, Op::Affine { scale }, vec![self.id])
    }

    pub fn scale(self, s: T) -> Self {
        self.affine(s, T::zero())
    }

    pub fn neg(self) -> Self {
        self.affine(-T::one(), T::zero())
    }

    pub fn square(self) -> Self {
        self.mul(self).expect("same shape")
    }

    pub fn unary(self, kind: UnaryKind) -> Self {
        let v = self.value().map(|x| kind.apply(x));
        self.graph.push(v, Op::Unary(kind), vec![self.id])
    }

    pub fn tanh(self) -> Self {
        self.unary(UnaryKind::Tanh)
    }

    pub fn sigmoid(self) -> Self {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn sqrt(self) -> Self {
        self.unary(UnaryKind::Sqrt)
    }

    pub fn relu(self) -> Self {
        self.unary(UnaryKind::Relu)
    }

    /// Sums over every axis where `shape` has extent one.
    pub fn reduce_to(self, shape: Shape) -> Result<Self> {
        let x = self.value();
        let src = x.shape();
        for k in 0..4 {
            if shape[k] != src[k] && shape[k] != 1 {
                return Err(NnError::Shape { op: "reduce_to", detail: format!("{src:?} -> {shape:?}") });
            }
        }
        let mut out = Tensor::zeros(shape);
        let od = out.data_mut();
        let xd = x.data();
        let mut idx = 0;
        for b in 0..src[0] {
            let ob = if shape[0] == 1 { 0 } else { b };
            for c in 0..src[1] {
                let oc = if shape[1] == 1 { 0 } else { c };
                for f in 0..src[2] {
                    let of = if shape[2] == 1 { 0 } else { f };
                    let base = ((ob * shape[1] + oc) * shape[2] + of) * shape[3];
                    if shape[3] == 1 {
                        od[base] = od[base] + xd[idx..idx + src[3]].iter().copied().sum();
                    } else {
                        for s in 0..src[3] {
                            od[base + s] = od[base + s] + xd[idx + s];
                        }
                    }
                    idx += src[3];
                }
            }
        }
        Ok(self.graph.push(out, Op::ReduceTo, vec![self.id]))
    }

    /// Repeats along every axis where the input has extent one.
    pub fn broadcast_to(self, shape: Shape) -> Result<Self> {
        let x = self.value();
        let src = x.shape();
        for k in 0..4 {
            if shape[k] != src[k] && src[k] != 1 {
                return Err(NnError::Shape { op: "broadcast_to", detail: format!("{src:?} -> {shape:?}") });
            }
        }
        let xd = x.data();
        let out = Tensor::from_fn(shape, |[b, c, f, s]| {
            let ib = if src[0] == 1 { 0 } else { b };
            let ic = if src[1] == 1 { 0 } else { c };
            let ifr = if src[2] == 1 { 0 } else { f };
            let is = if src[3] == 1 { 0 } else { s };
            xd[((ib * src[1] + ic) * src[2] + ifr) * src[3] + is]
        });
        Ok(self.graph.push(out, Op::BroadcastTo, vec![self.id]))
    }

    pub fn sum(self) -> Self {
        self.reduce_to([1, 1, 1, 1]).expect("reduction to scalar")
    }

    pub fn mean(self) -> Self {
        let n = numel(self.shape());
        self.sum().scale(T::one() / T::from_usize(n).unwrap())
    }

    pub fn slice_channels(self, start: usize, len: usize) -> Result<Self> {
        let x = self.value();
        let [b, c, f, l] = x.shape();
        if start + len > c {
            return Err(NnError::Shape { op: "slice_channels", detail: format!("{start}+{len} > {c}") });
        }
        let plane = f * l;
        let mut data = Vec::with_capacity(b * len * plane);
        for bi in 0..b {
            let base = (bi * c + start) * plane;
            data.extend_from_slice(&x.data()[base..base + len * plane]);
        }
        let out = Tensor::new([b, len, f, l], data)?;
        Ok(self.graph.push(out, Op::Slice { start }, vec![self.id]))
    }

    /// Places the input at channel offset `start` of a zero tensor with `total` channels.
    pub fn pad_channels(self, start: usize, total: usize) -> Result<Self> {
        let x = self.value();
        let [b, c, f, l] = x.shape();
        if start + c > total {
            return Err(NnError::Shape { op: "pad_channels", detail: format!("{start}+{c} > {total}") });
        }
        let plane = f * l;
        let mut out = Tensor::zeros([b, total, f, l]);
        for bi in 0..b {
            let dst = (bi * total + start) * plane;
            out.data_mut()[dst..dst + c * plane].copy_from_slice(&x.data()[bi * c * plane..(bi + 1) * c * plane]);
        }
        Ok(self.graph.push(out, Op::Pad { start }, vec![self.id]))
    }

    fn sample_map_raw(self, m: Rc<SampleMatrix<T>>, transposed: bool) -> Result<Self> {
        let out = m.apply(&self.value(), transposed)?;
        Ok(self.graph.push(out, Op::SampleMap { m, transposed }, vec![self.id]))
    }

    /// Applies a linear map along the sample axis.
    pub fn sample_map(self, m: &Rc<SampleMatrix<T>>) -> Result<Self> {
        self.sample_map_raw(m.clone(), false)
    }

    /// Cross-correlation with kernel `w` of shape `(out, in, kf, ks)`.
    pub fn conv2d(self, w: Self, geom: ConvGeom) -> Result<Self> {
        let y = kernels::conv_forward(&self.value(), &w.value(), &geom)?;
        Ok(self.graph.push(y, Op::Conv(geom), vec![self.id, w.id]))
    }

    fn conv_grad_input(self, w: Self, geom: ConvGeom, frames: usize, samples: usize) -> Result<Self> {
        let x = kernels::conv_grad_input(&self.value(), &w.value(), &geom, (frames, samples))?;
        Ok(self.graph.push(x, Op::ConvGradInput(geom), vec![self.id, w.id]))
    }

    fn conv_grad_kernel(self, y: Self, geom: ConvGeom) -> Result<Self> {
        let w = kernels::conv_grad_kernel(&self.value(), &y.value(), &geom)?;
        Ok(self.graph.push(w, Op::ConvGradKernel(geom), vec![self.id, y.id]))
    }

    /// Convolution plus a per-channel bias of shape `(1, out, 1, 1)`.
    pub fn conv2d_bias(self, w: Self, bias: Self, geom: ConvGeom) -> Result<Self> {
        let y = self.conv2d(w, geom)?;
        let b = bias.broadcast_to(y.shape())?;
        y.add(b)
    }

    /// `tanh(self) * sigmoid(gate)`.
    pub fn gated(self, gate: Self) -> Result<Self> {
        self.tanh().mul(gate.sigmoid())
    }
}
