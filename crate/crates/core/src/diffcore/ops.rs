use std::fmt;
use std::str::FromStr;

use super::tape::{DiffValue, NodeId, Record};
use super::{gemm, DiffError, Element, MatView, Result};

/// Operation kinds understood by the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    MatMul,
    Conv1d,
    Relu,
    MaxPool1d,
    GlobalMeanPool,
    Exp,
    Log,
    Sum,
    Mean,
    ScalarScale,
    L2NormalizeRows,
    ConcatRows,
    DotRows,
    SoftmaxRows,
    CrossEntropyWithLogits,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::MatMul,
        OpKind::Conv1d,
        OpKind::Relu,
        OpKind::MaxPool1d,
        OpKind::GlobalMeanPool,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::ScalarScale,
        OpKind::L2NormalizeRows,
        OpKind::ConcatRows,
        OpKind::DotRows,
        OpKind::SoftmaxRows,
        OpKind::CrossEntropyWithLogits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Conv1d => "conv1d",
            OpKind::Relu => "relu",
            OpKind::MaxPool1d => "max_pool1d",
            OpKind::GlobalMeanPool => "global_mean_pool",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::ScalarScale => "scalar_scale",
            OpKind::L2NormalizeRows => "l2_normalize_rows",
            OpKind::ConcatRows => "concat_rows",
            OpKind::DotRows => "dot_rows",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::CrossEntropyWithLogits => "cross_entropy_with_logits",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = DiffError;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace('-', "_");
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == normalized)
            .ok_or_else(|| DiffError::UnknownOp(s.to_string()))
    }
}

/// An operation together with its attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Elementwise sum. The right operand may also be a length-`n` row
    /// added to every row of an `[m, n]` left operand (bias add).
    Add,
    Sub,
    Mul,
    /// `[m, k] @ [k, n]`, or `[m, k] @ [n, k]^T` when `transpose_rhs`.
    MatMul { transpose_rhs: bool },
    /// Valid-padding convolution: `[B, C, K] * [O, C, k] (+ [O]) -> [B, O, (K - k) / stride + 1]`.
    Conv1d { stride: usize },
    Relu,
    /// Non-overlapping windows: `[B, C, K] -> [B, C, K / size]`.
    MaxPool1d { size: usize },
    /// `[B, C, K] -> [B, C]`.
    GlobalMeanPool,
    Exp,
    Log,
    Sum,
    Mean,
    ScalarScale(f64),
    L2NormalizeRows,
    ConcatRows,
    /// `[m, n], [m, n] -> [m]`.
    DotRows,
    SoftmaxRows,
    /// `[m, n] -> [m]` per-row negative log-likelihood of `targets`.
    CrossEntropyWithLogits { targets: Vec<usize> },
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::Relu => OpKind::Relu,
            Op::MaxPool1d { .. } => OpKind::MaxPool1d,
            Op::GlobalMeanPool => OpKind::GlobalMeanPool,
            Op::Exp => OpKind::Exp,
            Op::Log => OpKind::Log,
            Op::Sum => OpKind::Sum,
            Op::Mean => OpKind::Mean,
            Op::ScalarScale(_) => OpKind::ScalarScale,
            Op::L2NormalizeRows => OpKind::L2NormalizeRows,
            Op::ConcatRows => OpKind::ConcatRows,
            Op::DotRows => OpKind::DotRows,
            Op::SoftmaxRows => OpKind::SoftmaxRows,
            Op::CrossEntropyWithLogits { .. } => OpKind::CrossEntropyWithLogits,
        }
    }
}

pub(crate) enum Saved<T> {
    None,
    /// Flat input index selected by each pooled output.
    Argmax(Vec<usize>),
    /// Row norms (l2 normalize) or softmax probabilities (cross entropy).
    Buffer(Vec<T>),
}

pub(crate) struct Forward<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub saved: Saved<T>,
}

const NORM_EPS: f64 = 1e-12;

fn mismatch(op: OpKind, inputs: &[&[usize]], reason: impl Into<String>) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        shapes: inputs.iter().map(|s| s.to_vec()).collect(),
        reason: reason.into(),
    }
}

fn expect_arity<T>(op: OpKind, inputs: &[&DiffValue<T>], n: usize) -> Result<()>
where
    T: Element,
{
    if inputs.len() != n {
        let shapes: Vec<&[usize]> = inputs.iter().map(|v| v.shape()).collect();
        return Err(mismatch(op, &shapes, format!("expected {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

fn expect_rank<T: Element>(op: OpKind, v: &DiffValue<T>, rank: usize) -> Result<()> {
    if v.shape().len() != rank {
        return Err(mismatch(op, &[v.shape()], format!("expected rank {rank}")));
    }
    Ok(())
}

fn unary<T: Element>(x: &DiffValue<T>, f: impl Fn(T) -> T) -> Forward<T> {
    Forward {
        shape: x.shape().to_vec(),
        data: x.data().iter().map(|&v| f(v)).collect(),
        saved: Saved::None,
    }
}

pub(crate) fn forward<T: Element>(op: &Op, inputs: &[&DiffValue<T>]) -> Result<Forward<T>> {
    let kind = op.kind();
    match op {
        Op::Add | Op::Sub | Op::Mul => {
            expect_arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() == b.shape() {
                let data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| match op {
                        Op::Add => x + y,
                        Op::Sub => x - y,
                        _ => x * y,
                    })
                    .collect();
                return Ok(Forward { shape: a.shape().to_vec(), data, saved: Saved::None });
            }
            let row_bias = matches!(op, Op::Add)
                && a.shape().len() == 2
                && b.shape().len() == 1
                && a.shape()[1] == b.shape()[0];
            if !row_bias {
                return Err(mismatch(kind, &[a.shape(), b.shape()], "shapes must match"));
            }
            let n = b.numel();
            let data = a
                .data()
                .chunks_exact(n)
                .flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| x + y))
                .collect();
            Ok(Forward { shape: a.shape().to_vec(), data, saved: Saved::None })
        }
        Op::MatMul { transpose_rhs } => {
            expect_arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape().len() != 2 || b.shape().len() != 2 {
                return Err(mismatch(kind, &[a.shape(), b.shape()], "operands must be rank 2"));
            }
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let rhs = rhs_view(b, *transpose_rhs);
            if rhs.rows != k {
                return Err(mismatch(kind, &[a.shape(), b.shape()], "inner dimensions differ"));
            }
            let n = rhs.cols;
            let mut data = vec![T::zero(); m * n];
            gemm(MatView::new(a.data(), m, k), rhs, &mut data, false);
            Ok(Forward { shape: vec![m, n], data, saved: Saved::None })
        }
        Op::Conv1d { stride } => conv1d_forward(*stride, inputs),
        Op::Relu => {
            expect_arity(kind, inputs, 1)?;
            Ok(unary(inputs[0], |v| if v > T::zero() { v } else { T::zero() }))
        }
        Op::Exp => {
            expect_arity(kind, inputs, 1)?;
            Ok(unary(inputs[0], |v| v.exp()))
        }
        Op::Log => {
            expect_arity(kind, inputs, 1)?;
            Ok(unary(inputs[0], |v| v.ln()))
        }
        Op::ScalarScale(c) => {
            expect_arity(kind, inputs, 1)?;
            if !c.is_finite() {
                return Err(DiffError::InvalidAttribute { op: kind, reason: format!("factor {c}") });
            }
            let c = T::of(*c);
            Ok(unary(inputs[0], |v| v * c))
        }
        Op::MaxPool1d { size } => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            expect_rank(kind, x, 3)?;
            if *size == 0 {
                return Err(DiffError::InvalidAttribute { op: kind, reason: "pool size 0".into() });
            }
            let (b, c, k) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let p = k / size;
            if p == 0 {
                return Err(mismatch(kind, &[x.shape()], format!("length {k} shorter than pool {size}")));
            }
            let mut data = Vec::with_capacity(b * c * p);
            let mut argmax = Vec::with_capacity(b * c * p);
            for (row_idx, row) in x.data().chunks_exact(k).enumerate() {
                for w in 0..p {
                    let start = w * size;
                    let mut best = start;
                    for j in start + 1..start + size {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    data.push(row[best]);
                    argmax.push(row_idx * k + best);
                }
            }
            Ok(Forward { shape: vec![b, c, p], data, saved: Saved::Argmax(argmax) })
        }
        Op::GlobalMeanPool => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            expect_rank(kind, x, 3)?;
            let k = x.shape()[2];
            let inv = T::one() / T::of(k as f64);
            let data = x.data().chunks_exact(k).map(|row| row.iter().copied().sum::<T>() * inv).collect();
            Ok(Forward { shape: vec![x.shape()[0], x.shape()[1]], data, saved: Saved::None })
        }
        Op::Sum | Op::Mean => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            let mut total: T = x.data().iter().copied().sum();
            if matches!(op, Op::Mean) {
                total = total / T::of(x.numel() as f64);
            }
            Ok(Forward { shape: vec![1], data: vec![total], saved: Saved::None })
        }
        Op::L2NormalizeRows => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            expect_rank(kind, x, 2)?;
            let n = x.shape()[1];
            let eps = T::of(NORM_EPS);
            let mut norms = Vec::with_capacity(x.shape()[0]);
            let mut data = Vec::with_capacity(x.numel());
            for row in x.data().chunks_exact(n) {
                let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(eps);
                norms.push(norm);
                data.extend(row.iter().map(|&v| v / norm));
            }
            Ok(Forward { shape: x.shape().to_vec(), data, saved: Saved::Buffer(norms) })
        }
        Op::ConcatRows => {
            if inputs.is_empty() {
                return Err(mismatch(kind, &[], "needs at least one input"));
            }
            let shapes: Vec<&[usize]> = inputs.iter().map(|v| v.shape()).collect();
            let n = inputs[0].shape().get(1).copied();
            if inputs.iter().any(|v| v.shape().len() != 2 || v.shape().get(1).copied() != n) {
                return Err(mismatch(kind, &shapes, "all inputs must be [rows, n] with equal n"));
            }
            let rows = inputs.iter().map(|v| v.shape()[0]).sum();
            let data = inputs.iter().flat_map(|v| v.data().iter().copied()).collect();
            Ok(Forward { shape: vec![rows, n.unwrap_or(0)], data, saved: Saved::None })
        }
        Op::DotRows => {
            expect_arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape().len() != 2 || a.shape() != b.shape() {
                return Err(mismatch(kind, &[a.shape(), b.shape()], "expected two equal [m, n] inputs"));
            }
            let n = a.shape()[1];
            let data = a
                .data()
                .chunks_exact(n)
                .zip(b.data().chunks_exact(n))
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| x * y).sum())
                .collect();
            Ok(Forward { shape: vec![a.shape()[0]], data, saved: Saved::None })
        }
        Op::SoftmaxRows => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            expect_rank(kind, x, 2)?;
            let n = x.shape()[1];
            let mut data = Vec::with_capacity(x.numel());
            for row in x.data().chunks_exact(n) {
                softmax_into(row, &mut data);
            }
            Ok(Forward { shape: x.shape().to_vec(), data, saved: Saved::None })
        }
        Op::CrossEntropyWithLogits { targets } => {
            expect_arity(kind, inputs, 1)?;
            let x = inputs[0];
            expect_rank(kind, x, 2)?;
            let (m, n) = (x.shape()[0], x.shape()[1]);
            if targets.len() != m {
                return Err(mismatch(kind, &[x.shape(), &[targets.len()]], "one target per row"));
            }
            if let Some(bad) = targets.iter().find(|&&t| t >= n) {
                return Err(DiffError::InvalidAttribute { op: kind, reason: format!("target {bad} >= {n} classes") });
            }
            let mut probs = Vec::with_capacity(m * n);
            let mut data = Vec::with_capacity(m);
            for (row, &t) in x.data().chunks_exact(n).zip(targets) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
                data.push(lse - row[t]);
                probs.extend(row.iter().map(|&v| (v - lse).exp()));
            }
            Ok(Forward { shape: vec![m], data, saved: Saved::Buffer(probs) })
        }
    }
}

fn rhs_view<T: Element>(b: &DiffValue<T>, transpose: bool) -> MatView<'_, T> {
    let view = MatView::new(b.data(), b.shape()[0], b.shape()[1]);
    if transpose {
        view.t()
    } else {
        view
    }
}

fn softmax_into<T: Element>(row: &[T], out: &mut Vec<T>) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let start = out.len();
    out.extend(row.iter().map(|&v| (v - max).exp()));
    let total: T = out[start..].iter().copied().sum();
    out[start..].iter_mut().for_each(|v| *v = *v / total);
}

struct ConvDims {
    batch: usize,
    channels: usize,
    len: usize,
    out_channels: usize,
    kernel: usize,
    out_len: usize,
    stride: usize,
}

impl ConvDims {
    fn patch(&self) -> usize {
        self.channels * self.kernel
    }

    fn columns(&self) -> usize {
        self.batch * self.out_len
    }
}

fn conv_dims<T: Element>(stride: usize, inputs: &[&DiffValue<T>]) -> Result<ConvDims> {
    let kind = OpKind::Conv1d;
    let shapes: Vec<&[usize]> = inputs.iter().map(|v| v.shape()).collect();
    if !(2..=3).contains(&inputs.len()) {
        return Err(mismatch(kind, &shapes, "expected input, weight and optional bias"));
    }
    if stride == 0 {
        return Err(DiffError::InvalidAttribute { op: kind, reason: "stride 0".into() });
    }
    let (x, w) = (inputs[0].shape(), inputs[1].shape());
    if x.len() != 3 || w.len() != 3 {
        return Err(mismatch(kind, &shapes, "input [B, C, K] and weight [O, C, k] required"));
    }
    if x[1] != w[1] {
        return Err(mismatch(kind, &shapes, "channel count differs"));
    }
    if x[2] < w[2] {
        return Err(mismatch(kind, &shapes, "kernel longer than input"));
    }
    if let Some(b) = inputs.get(2) {
        if b.shape() != [w[0]] {
            return Err(mismatch(kind, &shapes, "bias must be [O]"));
        }
    }
    Ok(ConvDims {
        batch: x[0],
        channels: x[1],
        len: x[2],
        out_channels: w[0],
        kernel: w[2],
        out_len: (x[2] - w[2]) / stride + 1,
        stride,
    })
}

/// Unfolds `[B, C, K]` into `[C * k, B * L]` patch columns.
fn im2col<T: Element>(x: &[T], d: &ConvDims) -> Vec<T> {
    let cols = d.columns();
    let mut out = vec![T::zero(); d.patch() * cols];
    for c in 0..d.channels {
        for j in 0..d.kernel {
            let dst_row = &mut out[(c * d.kernel + j) * cols..][..cols];
            for b in 0..d.batch {
                let src = &x[(b * d.channels + c) * d.len + j..];
                let dst = &mut dst_row[b * d.out_len..][..d.out_len];
                for (l, v) in dst.iter_mut().enumerate() {
                    *v = src[l * d.stride];
                }
            }
        }
    }
    out
}

fn conv1d_forward<T: Element>(stride: usize, inputs: &[&DiffValue<T>]) -> Result<Forward<T>> {
    let d = conv_dims(stride, inputs)?;
    let cols = im2col(inputs[0].data(), &d);
    let mut mat = vec![T::zero(); d.out_channels * d.columns()];
    gemm(
        MatView::new(inputs[1].data(), d.out_channels, d.patch()),
        MatView::new(&cols, d.patch(), d.columns()),
        &mut mat,
        false,
    );
    // [O, B * L] -> [B, O, L]
    let mut data = vec![T::zero(); mat.len()];
    let bias = inputs.get(2).map(|b| b.data());
    for o in 0..d.out_channels {
        let shift = bias.map_or(T::zero(), |b| b[o]);
        for b in 0..d.batch {
            let src = &mat[o * d.columns() + b * d.out_len..][..d.out_len];
            let dst = &mut data[(b * d.out_channels + o) * d.out_len..][..d.out_len];
            for (v, &s) in dst.iter_mut().zip(src) {
                *v = s + shift;
            }
        }
    }
    Ok(Forward {
        shape: vec![d.batch, d.out_channels, d.out_len],
        data,
        saved: Saved::Buffer(cols),
    })
}

fn slot<T: Element>(adj: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut Vec<T> {
    adj[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Element>(dst: &mut [T], src: impl IntoIterator<Item = T>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Pushes `g = d loss / d out` back to the inputs of `rec`.
pub(crate) fn backward<T: Element>(
    rec: &Record<T>,
    nodes: &[DiffValue<T>],
    out: &DiffValue<T>,
    g: &[T],
    adj: &mut [Option<Vec<T>>],
) {
    let input = |i: usize| &nodes[rec.inputs[i].0];
    match &rec.op {
        Op::Add | Op::Sub => {
            let (a, b) = (input(0), input(1));
            add_into(slot(adj, a.id(), a.numel()), g.iter().copied());
            let sign = if matches!(rec.op, Op::Sub) { -T::one() } else { T::one() };
            let gb = slot(adj, b.id(), b.numel());
            if a.shape() == b.shape() {
                add_into(gb, g.iter().map(|&v| v * sign));
            } else {
                for row in g.chunks_exact(b.numel()) {
                    add_into(gb, row.iter().copied());
                }
            }
        }
        Op::Mul => {
            let (a, b) = (input(0), input(1));
            add_into(slot(adj, a.id(), a.numel()), g.iter().zip(b.data()).map(|(&gv, &bv)| gv * bv));
            add_into(slot(adj, b.id(), b.numel()), g.iter().zip(a.data()).map(|(&gv, &av)| gv * av));
        }
        Op::MatMul { transpose_rhs } => {
            let (a, b) = (input(0), input(1));
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let rhs = rhs_view(b, *transpose_rhs);
            let n = rhs.cols;
            let gmat = MatView::new(g, m, n);
            // dA = G @ B^T
            gemm(gmat, rhs.t(), slot(adj, a.id(), a.numel()), true);
            let av = MatView::new(a.data(), m, k);
            if *transpose_rhs {
                // stored B is [n, k]: dB = G^T @ A
                gemm(gmat.t(), av, slot(adj, b.id(), b.numel()), true);
            } else {
                gemm(av.t(), gmat, slot(adj, b.id(), b.numel()), true);
            }
        }
        Op::Conv1d { stride } => {
            let views: Vec<&DiffValue<T>> = rec.inputs.iter().map(|id| &nodes[id.0]).collect();
            let d = conv_dims(*stride, &views).expect("validated in forward");
            let Saved::Buffer(cols) = &rec.saved else { unreachable!("conv1d saves columns") };
            // [B, O, L] -> [O, B * L]
            let mut gmat = vec![T::zero(); d.out_channels * d.columns()];
            for b in 0..d.batch {
                for o in 0..d.out_channels {
                    let src = &g[(b * d.out_channels + o) * d.out_len..][..d.out_len];
                    gmat[o * d.columns() + b * d.out_len..][..d.out_len].copy_from_slice(src);
                }
            }
            let gview = MatView::new(&gmat[..], d.out_channels, d.columns());
            let (x, w) = (views[0], views[1]);
            gemm(gview, MatView::new(cols, d.patch(), d.columns()).t(), slot(adj, w.id(), w.numel()), true);
            if let Some(bias) = views.get(2) {
                let gb = slot(adj, bias.id(), bias.numel());
                for (o, row) in gmat.chunks_exact(d.columns()).enumerate() {
                    gb[o] = gb[o] + row.iter().copied().sum::<T>();
                }
            }
            let mut gcols = vec![T::zero(); d.patch() * d.columns()];
            gemm(MatView::new(w.data(), d.out_channels, d.patch()).t(), gview, &mut gcols, false);
            let gx = slot(adj, x.id(), x.numel());
            for c in 0..d.channels {
                for j in 0..d.kernel {
                    let src_row = &gcols[(c * d.kernel + j) * d.columns()..][..d.columns()];
                    for b in 0..d.batch {
                        let base = (b * d.channels + c) * d.len + j;
                        for (l, &v) in src_row[b * d.out_len..][..d.out_len].iter().enumerate() {
                            let idx = base + l * d.stride;
                            gx[idx] = gx[idx] + v;
                        }
                    }
                }
            }
        }
        Op::Relu => {
            let x = input(0);
            add_into(
                slot(adj, x.id(), x.numel()),
                g.iter().zip(x.data()).map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() }),
            );
        }
        Op::MaxPool1d { .. } => {
            let x = input(0);
            let Saved::Argmax(idx) = &rec.saved else { unreachable!("max pool saves argmax") };
            let gx = slot(adj, x.id(), x.numel());
            for (&i, &gv) in idx.iter().zip(g) {
                gx[i] = gx[i] + gv;
            }
        }
        Op::GlobalMeanPool => {
            let x = input(0);
            let k = x.shape()[2];
            let inv = T::one() / T::of(k as f64);
            let gx = slot(adj, x.id(), x.numel());
            for (row, &gv) in gx.chunks_exact_mut(k).zip(g) {
                row.iter_mut().for_each(|v| *v = *v + gv * inv);
            }
        }
        Op::Exp => {
            let x = input(0);
            add_into(slot(adj, x.id(), x.numel()), g.iter().zip(out.data()).map(|(&gv, &y)| gv * y));
        }
        Op::Log => {
            let x = input(0);
            add_into(slot(adj, x.id(), x.numel()), g.iter().zip(x.data()).map(|(&gv, &xv)| gv / xv));
        }
        Op::Sum | Op::Mean => {
            let x = input(0);
            let mut gv = g[0];
            if matches!(rec.op, Op::Mean) {
                gv = gv / T::of(x.numel() as f64);
            }
            slot(adj, x.id(), x.numel()).iter_mut().for_each(|v| *v = *v + gv);
        }
        Op::ScalarScale(c) => {
            let x = input(0);
            let c = T::of(*c);
            add_into(slot(adj, x.id(), x.numel()), g.iter().map(|&gv| gv * c));
        }
        Op::L2NormalizeRows => {
            let x = input(0);
            let n = x.shape()[1];
            let Saved::Buffer(norms) = &rec.saved else { unreachable!("normalize saves norms") };
            let gx = slot(adj, x.id(), x.numel());
            for (((gx_row, g_row), y_row), &norm) in
                gx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(out.data().chunks_exact(n)).zip(norms)
            {
                let proj: T = g_row.iter().zip(y_row).map(|(&a, &b)| a * b).sum();
                for ((d, &gv), &y) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                    *d = *d + (gv - y * proj) / norm;
                }
            }
        }
        Op::ConcatRows => {
            let mut offset = 0;
            for id in &rec.inputs {
                let part = &nodes[id.0];
                add_into(slot(adj, part.id(), part.numel()), g[offset..offset + part.numel()].iter().copied());
                offset += part.numel();
            }
        }
        Op::DotRows => {
            let (a, b) = (input(0), input(1));
            let n = a.shape()[1];
            let spread = |other: &[T]| -> Vec<T> {
                other.chunks_exact(n).zip(g).flat_map(|(row, &gv)| row.iter().map(move |&v| v * gv)).collect()
            };
            let ga = spread(b.data());
            let gb = spread(a.data());
            add_into(slot(adj, a.id(), a.numel()), ga);
            add_into(slot(adj, b.id(), b.numel()), gb);
        }
        Op::SoftmaxRows => {
            let x = input(0);
            let n = x.shape()[1];
            let gx = slot(adj, x.id(), x.numel());
            for ((gx_row, g_row), y_row) in gx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(out.data().chunks_exact(n)) {
                let dot: T = g_row.iter().zip(y_row).map(|(&a, &b)| a * b).sum();
                for ((d, &gv), &y) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                    *d = *d + y * (gv - dot);
                }
            }
        }
        Op::CrossEntropyWithLogits { targets } => {
            let x = input(0);
            let n = x.shape()[1];
            let Saved::Buffer(probs) = &rec.saved else { unreachable!("cross entropy saves probabilities") };
            let gx = slot(adj, x.id(), x.numel());
            for (((gx_row, p_row), &gv), &t) in gx.chunks_exact_mut(n).zip(probs.chunks_exact(n)).zip(g).zip(targets) {
                for (j, (d, &p)) in gx_row.iter_mut().zip(p_row).enumerate() {
                    let onehot = if j == t { T::one() } else { T::zero() };
                    *d = *d + gv * (p - onehot);
                }
            }
        }
    }
}
