//! Op nodes and the reverse-mode pass.
//!
//! Every non-leaf tensor records the op that produced it together with
//! handles to its parents. `backward` seeds the scalar loss with 1, walks
//! the graph in reverse topological order and accumulates `d loss / d t`
//! into every tensor that requires gradients.

use std::collections::HashMap;

use super::ops::{self, Broadcast};
use super::{Scalar, Tensor};
use crate::error::Result;
use crate::usage_err;

pub enum Node<S: Scalar> {
    Leaf,
    Add { a: Tensor<S>, b: Tensor<S>, bc: Broadcast },
    Mul { a: Tensor<S>, b: Tensor<S>, bc: Broadcast },
    Scale { a: Tensor<S>, c: S },
    AddScalar { a: Tensor<S> },
    Sigmoid { a: Tensor<S> },
    Relu { a: Tensor<S> },
    Ln { a: Tensor<S> },
    Clamp { a: Tensor<S>, lo: S, hi: S },
    Matmul { a: Tensor<S>, b: Tensor<S> },
    Bmm { a: Tensor<S>, b: Tensor<S> },
    Conv2d { input: Tensor<S>, weight: Tensor<S>, bias: Tensor<S>, pad: (usize, usize), stride: (usize, usize) },
    SoftmaxRows { a: Tensor<S> },
    GlobalAvgPool { a: Tensor<S> },
    GlobalMaxPool { a: Tensor<S>, argmax: Vec<usize> },
    ChannelMean { a: Tensor<S> },
    ChannelMax { a: Tensor<S>, argmax: Vec<usize> },
    Concat { parts: Vec<Tensor<S>>, axis: usize },
    Reshape { a: Tensor<S> },
    Permute { a: Tensor<S>, axes: Vec<usize> },
    SumAll { a: Tensor<S> },
    MeanAll { a: Tensor<S> },
}

impl<S: Scalar> Node<S> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Node::Leaf => "leaf",
            Node::Add { .. } => "add",
            Node::Mul { .. } => "mul",
            Node::Scale { .. } => "scale",
            Node::AddScalar { .. } => "add_scalar",
            Node::Sigmoid { .. } => "sigmoid",
            Node::Relu { .. } => "relu",
            Node::Ln { .. } => "ln",
            Node::Clamp { .. } => "clamp",
            Node::Matmul { .. } => "matmul",
            Node::Bmm { .. } => "bmm",
            Node::Conv2d { .. } => "conv2d",
            Node::SoftmaxRows { .. } => "softmax_rows",
            Node::GlobalAvgPool { .. } => "global_avg_pool",
            Node::GlobalMaxPool { .. } => "global_max_pool",
            Node::ChannelMean { .. } => "channel_mean",
            Node::ChannelMax { .. } => "channel_max",
            Node::Concat { .. } => "concat",
            Node::Reshape { .. } => "reshape",
            Node::Permute { .. } => "permute",
            Node::SumAll { .. } => "sum_all",
            Node::MeanAll { .. } => "mean_all",
        }
    }

    pub(crate) fn parents(&self) -> Vec<&Tensor<S>> {
        match self {
            Node::Leaf => vec![],
            Node::Add { a, b, .. } | Node::Mul { a, b, .. } => vec![a, b],
            Node::Scale { a, .. }
            | Node::AddScalar { a }
            | Node::Sigmoid { a }
            | Node::Relu { a }
            | Node::Ln { a }
            | Node::Clamp { a, .. }
            | Node::SoftmaxRows { a }
            | Node::GlobalAvgPool { a }
            | Node::GlobalMaxPool { a, .. }
            | Node::ChannelMean { a }
            | Node::ChannelMax { a, .. }
            | Node::Reshape { a }
            | Node::Permute { a, .. }
            | Node::SumAll { a }
            | Node::MeanAll { a } => vec![a],
            Node::Matmul { a, b } | Node::Bmm { a, b } => vec![a, b],
            Node::Conv2d { input, weight, bias, .. } => vec![input, weight, bias],
            Node::Concat { parts, .. } => parts.iter().collect(),
        }
    }
}

/// Per-tensor gradient buffers keyed by tensor id, alive for one pass.
pub(crate) struct GradSink<S: Scalar> {
    grads: HashMap<usize, Vec<S>>,
}

impl<S: Scalar> GradSink<S> {
    pub(crate) fn add_all(&mut self, t: &Tensor<S>, contribution: &[S]) {
        if let Some(buf) = self.grads.get_mut(&t.id()) {
            for (g, c) in buf.iter_mut().zip(contribution) {
                *g = *g + *c;
            }
        }
    }

    pub(crate) fn wants(&self, t: &Tensor<S>) -> bool {
        self.grads.contains_key(&t.id())
    }
}

pub(crate) fn backward<S: Scalar>(loss: &Tensor<S>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(usage_err!("backward requires a scalar loss, got shape {:?}", loss.shape()));
    }
    if !loss.requires_grad() {
        // Nothing tracks gradients below this value.
        return Ok(());
    }

    // Post-order DFS over tensors that require gradients. `order` ends up
    // topologically sorted with parents before children.
    let mut order: Vec<Tensor<S>> = Vec::new();
    let mut visited: HashMap<usize, ()> = HashMap::new();
    let mut stack: Vec<(Tensor<S>, bool)> = vec![(loss.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if visited.contains_key(&t.id()) {
            continue;
        }
        visited.insert(t.id(), ());
        stack.push((t.clone(), true));
        for p in t.node().parents() {
            if p.requires_grad() && !visited.contains_key(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }

    let mut sink = GradSink { grads: HashMap::new() };
    for t in &order {
        sink.grads.insert(t.id(), vec![S::zero(); t.numel()]);
    }
    sink.grads.insert(loss.id(), vec![S::one()]);

    // Children before parents.
    for t in order.iter().rev() {
        let grad_out = sink.grads.get(&t.id()).expect("grad buffer").clone();
        propagate(t, &grad_out, &mut sink);
    }

    for t in &order {
        if let Some(buf) = sink.grads.get(&t.id()) {
            t.accumulate_grad(buf);
        }
    }
    Ok(())
}

fn propagate<S: Scalar>(out: &Tensor<S>, g: &[S], sink: &mut GradSink<S>) {
    match out.node() {
        Node::Leaf => {}
        Node::Add { a, b, bc } => {
            if sink.wants(a) {
                sink.add_all(a, g);
            }
            if sink.wants(b) {
                let gb = ops::reduce_broadcast(g, a.shape(), b.shape(), *bc, None);
                sink.add_all(b, &gb);
            }
        }
        Node::Mul { a, b, bc } => {
            if sink.wants(a) {
                let mut ga = vec![S::zero(); a.numel()];
                ops::broadcast_apply(a.shape(), b.shape(), *bc, |ai, bi| {
                    ga[ai] = ga[ai] + g[ai] * b.data()[bi];
                });
                sink.add_all(a, &ga);
            }
            if sink.wants(b) {
                let gb = ops::reduce_broadcast(g, a.shape(), b.shape(), *bc, Some(a.data()));
                sink.add_all(b, &gb);
            }
        }
        Node::Scale { a, c } => {
            if sink.wants(a) {
                let ga: Vec<S> = g.iter().map(|&gi| gi * *c).collect();
                sink.add_all(a, &ga);
            }
        }
        Node::AddScalar { a } => {
            if sink.wants(a) {
                sink.add_all(a, g);
            }
        }
        Node::Sigmoid { a } => {
            if sink.wants(a) {
                let y = out.data();
                let ga: Vec<S> =
                    g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (S::one() - yi)).collect();
                sink.add_all(a, &ga);
            }
        }
        Node::Relu { a } => {
            // Subgradient 0 at the kink.
            if sink.wants(a) {
                let x = a.data();
                let ga: Vec<S> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > S::zero() { gi } else { S::zero() })
                    .collect();
                sink.add_all(a, &ga);
            }
        }
        Node::Ln { a } => {
            if sink.wants(a) {
                let x = a.data();
                let ga: Vec<S> = g.iter().zip(x).map(|(&gi, &xi)| gi / xi).collect();
                sink.add_all(a, &ga);
            }
        }
        Node::Clamp { a, lo, hi } => {
            if sink.wants(a) {
                let x = a.data();
                let ga: Vec<S> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi >= *lo && xi <= *hi { gi } else { S::zero() })
                    .collect();
                sink.add_all(a, &ga);
            }
        }
        Node::Matmul { a, b } => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            if sink.wants(a) {
                let ga = ops::matmul_grad_lhs(g, b.data(), m, k, n);
                sink.add_all(a, &ga);
            }
            if sink.wants(b) {
                let gb = ops::matmul_grad_rhs(g, a.data(), m, k, n);
                sink.add_all(b, &gb);
            }
        }
        Node::Bmm { a, b } => {
            let (bs, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let n = b.shape()[2];
            if sink.wants(a) {
                let mut ga = vec![S::zero(); a.numel()];
                for i in 0..bs {
                    let gslice = &g[i * m * n..(i + 1) * m * n];
                    let part = ops::matmul_grad_lhs(gslice, &b.data()[i * k * n..(i + 1) * k * n], m, k, n);
                    ga[i * m * k..(i + 1) * m * k].copy_from_slice(&part);
                }
                sink.add_all(a, &ga);
            }
            if sink.wants(b) {
                let mut gb = vec![S::zero(); b.numel()];
                for i in 0..bs {
                    let gslice = &g[i * m * n..(i + 1) * m * n];
                    let part = ops::matmul_grad_rhs(gslice, &a.data()[i * m * k..(i + 1) * m * k], m, k, n);
                    gb[i * k * n..(i + 1) * k * n].copy_from_slice(&part);
                }
                sink.add_all(b, &gb);
            }
        }
        Node::Conv2d { input, weight, bias, pad, stride } => {
            ops::conv2d_backward(out.shape(), g, input, weight, bias, *pad, *stride, sink);
        }
        Node::SoftmaxRows { a } => {
            if sink.wants(a) {
                let y = out.data();
                let n = *out.shape().last().expect("softmax rank");
                let mut ga = vec![S::zero(); y.len()];
                for r in 0..y.len() / n {
                    let ys = &y[r * n..(r + 1) * n];
                    let gs = &g[r * n..(r + 1) * n];
                    let dot: S = ys.iter().zip(gs).map(|(&yi, &gi)| yi * gi).sum();
                    for j in 0..n {
                        ga[r * n + j] = ys[j] * (gs[j] - dot);
                    }
                }
                sink.add_all(a, &ga);
            }
        }
        Node::GlobalAvgPool { a } => {
            if sink.wants(a) {
                let (h, w) = (a.shape()[2], a.shape()[3]);
                let inv = S::one() / scl_usize(h * w);
                let mut ga = vec![S::zero(); a.numel()];
                for (nc, &gv) in g.iter().enumerate() {
                    let base = nc * h * w;
                    for v in &mut ga[base..base + h * w] {
                        *v = gv * inv;
                    }
                }
                sink.add_all(a, &ga);
            }
        }
        Node::GlobalMaxPool { a, argmax } => {
            if sink.wants(a) {
                let mut ga = vec![S::zero(); a.numel()];
                for (nc, &gv) in g.iter().enumerate() {
                    ga[argmax[nc]] = ga[argmax[nc]] + gv;
                }
                sink.add_all(a, &ga);
            }
        }
        Node::ChannelMean { a } => {
            if sink.wants(a) {
                let (n, c, h, w) = ops::dims4(a.shape());
                let inv = S::one() / scl_usize(c);
                let mut ga = vec![S::zero(); a.numel()];
                for ni in 0..n {
                    for p in 0..h * w {
                        let gv = g[ni * h * w + p] * inv;
                        for ci in 0..c {
                            ga[(ni * c + ci) * h * w + p] = gv;
                        }
                    }
                }
                sink.add_all(a, &ga);
            }
        }
        Node::ChannelMax { a, argmax } => {
            if sink.wants(a) {
                let mut ga = vec![S::zero(); a.numel()];
                for (p, &gv) in g.iter().enumerate() {
                    ga[argmax[p]] = ga[argmax[p]] + gv;
                }
                sink.add_all(a, &ga);
            }
        }
        Node::Concat { parts, axis } => {
            let shapes: Vec<&[usize]> = parts.iter().map(|p| p.shape()).collect();
            let splits = ops::concat_split(g, &shapes, *axis);
            for (p, gp) in parts.iter().zip(splits) {
                if sink.wants(p) {
                    sink.add_all(p, &gp);
                }
            }
        }
        Node::Reshape { a } => {
            if sink.wants(a) {
                sink.add_all(a, g);
            }
        }
        Node::Permute { a, axes } => {
            if sink.wants(a) {
                // Route the gradient through the inverse permutation.
                let mut inverse = vec![0usize; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let ga = ops::permute_data(g, out.shape(), &inverse);
                sink.add_all(a, &ga);
            }
        }
        Node::SumAll { a } => {
            if sink.wants(a) {
                let ga = vec![g[0]; a.numel()];
                sink.add_all(a, &ga);
            }
        }
        Node::MeanAll { a } => {
            if sink.wants(a) {
                let gv = g[0] / scl_usize(a.numel());
                let ga = vec![gv; a.numel()];
                sink.add_all(a, &ga);
            }
        }
    }
}

fn scl_usize<S: Scalar>(v: usize) -> S {
    S::from_usize(v).expect("usize conversion")
}
