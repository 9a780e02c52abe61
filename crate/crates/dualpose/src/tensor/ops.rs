//! Forward kernels and graph construction for every op the models need.
//!
//! Broadcasting is deliberately narrow: identical shapes, scalar right-hand
//! sides, a bias row over `[n,c]`, a channel gate `[n,c]` over `[n,c,h,w]`
//! and a spatial gate `[n,1,h,w]` over `[n,c,h,w]`. Anything else is a
//! dimension error.

use super::autodiff::{GradSink, Node};
use super::{scl, Scalar, Tensor};
use crate::dim_err;
use crate::error::Result;

/// Accepted shape pairs for binary elementwise ops (lhs shape, rhs shape).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    /// Identical shapes.
    Same,
    /// rhs is a single element.
    Scalar,
    /// lhs `[n,c]`, rhs `[c]`.
    Row,
    /// lhs `[n,c,h,w]`, rhs `[n,c]`.
    Channel,
    /// lhs `[n,c,h,w]`, rhs `[n,1,h,w]`.
    Spatial,
}

pub(crate) fn classify_broadcast(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b == [1] {
        Ok(Broadcast::Scalar)
    } else if a.len() == 2 && b.len() == 1 && b[0] == a[1] {
        Ok(Broadcast::Row)
    } else if a.len() == 4 && b.len() == 2 && b[0] == a[0] && b[1] == a[1] {
        Ok(Broadcast::Channel)
    } else if a.len() == 4 && b.len() == 4 && b[0] == a[0] && b[1] == 1 && b[2] == a[2] && b[3] == a[3] {
        Ok(Broadcast::Spatial)
    } else {
        Err(dim_err!("unsupported broadcast: lhs {:?} vs rhs {:?}", a, b))
    }
}

/// Visit every lhs element together with the rhs element it pairs with.
pub(crate) fn broadcast_apply(
    a_shape: &[usize],
    b_shape: &[usize],
    bc: Broadcast,
    mut f: impl FnMut(usize, usize),
) {
    let a_len: usize = a_shape.iter().product();
    match bc {
        Broadcast::Same => {
            for i in 0..a_len {
                f(i, i);
            }
        }
        Broadcast::Scalar => {
            for i in 0..a_len {
                f(i, 0);
            }
        }
        Broadcast::Row => {
            let c = b_shape[0];
            for i in 0..a_shape[0] {
                for j in 0..c {
                    f(i * c + j, j);
                }
            }
        }
        Broadcast::Channel => {
            let (n, c, h, w) = dims4(a_shape);
            let hw = h * w;
            for nc in 0..n * c {
                for p in 0..hw {
                    f(nc * hw + p, nc);
                }
            }
        }
        Broadcast::Spatial => {
            let (n, c, h, w) = dims4(a_shape);
            let hw = h * w;
            for ni in 0..n {
                for ci in 0..c {
                    for p in 0..hw {
                        f((ni * c + ci) * hw + p, ni * hw + p);
                    }
                }
            }
        }
    }
}

/// Gradient for the broadcast rhs: sums `g` (optionally times `factor`,
/// the lhs data, for products) over the positions each rhs element fed.
pub(crate) fn reduce_broadcast<S: Scalar>(
    g: &[S],
    a_shape: &[usize],
    b_shape: &[usize],
    bc: Broadcast,
    factor: Option<&[S]>,
) -> Vec<S> {
    let b_len: usize = b_shape.iter().product();
    let mut gb = vec![S::zero(); b_len];
    broadcast_apply(a_shape, b_shape, bc, |ai, bi| {
        let v = match factor {
            Some(fa) => g[ai] * fa[ai],
            None => g[ai],
        };
        gb[bi] = gb[bi] + v;
    });
    gb
}

pub(crate) fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    (shape[0], shape[1], shape[2], shape[3])
}

fn require_rank(t: &Tensor<impl Scalar>, rank: usize, what: &str) -> Result<()> {
    if t.shape().len() != rank {
        return Err(dim_err!("{what} expects rank {rank}, got shape {:?}", t.shape()));
    }
    Ok(())
}

impl<S: Scalar> Tensor<S> {
    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let bc = classify_broadcast(self.shape(), rhs.shape())?;
        let mut out = vec![S::zero(); self.numel()];
        let (a, b) = (self.data(), rhs.data());
        broadcast_apply(self.shape(), rhs.shape(), bc, |ai, bi| out[ai] = a[ai] + b[bi]);
        Tensor::from_op(self.shape().to_vec(), out, Node::Add { a: self.clone(), b: rhs.clone(), bc })
    }

    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let bc = classify_broadcast(self.shape(), rhs.shape())?;
        let mut out = vec![S::zero(); self.numel()];
        let (a, b) = (self.data(), rhs.data());
        broadcast_apply(self.shape(), rhs.shape(), bc, |ai, bi| out[ai] = a[ai] * b[bi]);
        Tensor::from_op(self.shape().to_vec(), out, Node::Mul { a: self.clone(), b: rhs.clone(), bc })
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.add(&rhs.scale(-1.0)?)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor<S>> {
        let c: S = scl(c);
        let out: Vec<S> = self.data().iter().map(|&v| v * c).collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::Scale { a: self.clone(), c })
    }

    pub fn neg(&self) -> Result<Tensor<S>> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<S>> {
        let c: S = scl(c);
        let out: Vec<S> = self.data().iter().map(|&v| v + c).collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::AddScalar { a: self.clone() })
    }

    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        let out: Vec<S> = self
            .data()
            .iter()
            .map(|&x| {
                if x >= S::zero() {
                    S::one() / (S::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (S::one() + e)
                }
            })
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::Sigmoid { a: self.clone() })
    }

    pub fn relu(&self) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&x| if x > S::zero() { x } else { S::zero() }).collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::Relu { a: self.clone() })
    }

    pub fn ln(&self) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&x| x.ln()).collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::Ln { a: self.clone() })
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor<S>> {
        let (lo, hi): (S, S) = (scl(lo), scl(hi));
        let out: Vec<S> = self
            .data()
            .iter()
            .map(|&x| if x < lo { lo } else if x > hi { hi } else { x })
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, Node::Clamp { a: self.clone(), lo, hi })
    }

    pub fn square(&self) -> Result<Tensor<S>> {
        self.mul(self)
    }

    /// 2-D matrix product `[m,k] · [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        require_rank(self, 2, "matmul lhs")?;
        require_rank(rhs, 2, "matmul rhs")?;
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (rhs.shape()[0], rhs.shape()[1]);
        if k != k2 {
            return Err(dim_err!("matmul inner extents differ: {:?} vs {:?}", self.shape(), rhs.shape()));
        }
        let out = matmul_data(self.data(), rhs.data(), m, k, n);
        Tensor::from_op(vec![m, n], out, Node::Matmul { a: self.clone(), b: rhs.clone() })
    }

    /// Batched matrix product `[b,m,k] · [b,k,n] -> [b,m,n]`.
    pub fn bmm(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        require_rank(self, 3, "bmm lhs")?;
        require_rank(rhs, 3, "bmm rhs")?;
        let (bs, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (bs2, k2, n) = (rhs.shape()[0], rhs.shape()[1], rhs.shape()[2]);
        if bs != bs2 || k != k2 {
            return Err(dim_err!("bmm shapes incompatible: {:?} vs {:?}", self.shape(), rhs.shape()));
        }
        let mut out = vec![S::zero(); bs * m * n];
        for i in 0..bs {
            let part = matmul_data(
                &self.data()[i * m * k..(i + 1) * m * k],
                &rhs.data()[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
            );
            out[i * m * n..(i + 1) * m * n].copy_from_slice(&part);
        }
        Tensor::from_op(vec![bs, m, n], out, Node::Bmm { a: self.clone(), b: rhs.clone() })
    }

    /// Cross-correlation with stride 1; resolution is preserved when
    /// `pad = (kh/2, kw/2)` for odd kernels.
    pub fn conv2d(&self, weight: &Tensor<S>, bias: &Tensor<S>, pad: (usize, usize)) -> Result<Tensor<S>> {
        self.conv2d_strided(weight, bias, pad, (1, 1))
    }

    /// Cross-correlation with an explicit stride (used by the encoder).
    pub fn conv2d_strided(
        &self,
        weight: &Tensor<S>,
        bias: &Tensor<S>,
        pad: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Tensor<S>> {
        require_rank(self, 4, "conv2d input")?;
        require_rank(weight, 4, "conv2d weight")?;
        require_rank(bias, 1, "conv2d bias")?;
        let (n, c_in, h, w) = dims4(self.shape());
        let (c_out, c_in_w, kh, kw) = dims4(weight.shape());
        if c_in != c_in_w {
            return Err(dim_err!("conv2d channels: input {c_in} vs weight {c_in_w}"));
        }
        if bias.shape()[0] != c_out {
            return Err(dim_err!("conv2d bias: {} vs c_out {c_out}", bias.shape()[0]));
        }
        let (ph, pw) = pad;
        let (sh, sw) = stride;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(dim_err!("conv2d kernel {kh}x{kw} does not fit padded input {h}x{w} pad {ph},{pw}"));
        }
        if sh == 0 || sw == 0 {
            return Err(dim_err!("conv2d stride must be positive"));
        }
        let ho = (h + 2 * ph - kh) / sh + 1;
        let wo = (w + 2 * pw - kw) / sw + 1;

        let mut out = vec![S::zero(); n * c_out * ho * wo];
        let x = self.data();
        let wt = weight.data();
        let b = bias.data();
        for nn in 0..n {
            for co in 0..c_out {
                let out_base = (nn * c_out + co) * ho * wo;
                out[out_base..out_base + ho * wo].fill(b[co]);
                for ci in 0..c_in {
                    let in_base = (nn * c_in + ci) * h * w;
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = conv_range(ph, ky, sh, h, ho);
                        for kx in 0..kw {
                            let wv = wt[((co * c_in + ci) * kh + ky) * kw + kx];
                            if wv == S::zero() {
                                continue;
                            }
                            let (ox_lo, ox_hi) = conv_range(pw, kx, sw, w, wo);
                            for oy in oy_lo..oy_hi {
                                let iy = oy * sh + ky - ph;
                                let in_row = in_base + iy * w;
                                let out_row = out_base + oy * wo;
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * sw + kx - pw;
                                    out[out_row + ox] = out[out_row + ox] + wv * x[in_row + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_op(
            vec![n, c_out, ho, wo],
            out,
            Node::Conv2d { input: self.clone(), weight: weight.clone(), bias: bias.clone(), pad, stride },
        )
    }

    /// Softmax over the last axis with per-row max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor<S>> {
        let n = *self
            .shape()
            .last()
            .ok_or_else(|| dim_err!("softmax_rows needs rank >= 1"))?;
        let mut out = vec![S::zero(); self.numel()];
        for r in 0..self.numel() / n {
            let row = &self.data()[r * n..(r + 1) * n];
            let mut m = row[0];
            for &v in row {
                if v > m {
                    m = v;
                }
            }
            let mut sum = S::zero();
            for (o, &v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                let e = (v - m).exp();
                *o = e;
                sum = sum + e;
            }
            for o in &mut out[r * n..(r + 1) * n] {
                *o = *o / sum;
            }
        }
        Tensor::from_op(self.shape().to_vec(), out, Node::SoftmaxRows { a: self.clone() })
    }

    /// Spatial mean per channel: `[n,c,h,w] -> [n,c]`.
    pub fn global_avg_pool(&self) -> Result<Tensor<S>> {
        require_rank(self, 4, "global_avg_pool")?;
        let (n, c, h, w) = dims4(self.shape());
        let hw = h * w;
        let inv = S::one() / S::from_usize(hw).expect("usize conversion");
        let mut out = vec![S::zero(); n * c];
        for nc in 0..n * c {
            let mut acc = S::zero();
            for &v in &self.data()[nc * hw..(nc + 1) * hw] {
                acc = acc + v;
            }
            out[nc] = acc * inv;
        }
        Tensor::from_op(vec![n, c], out, Node::GlobalAvgPool { a: self.clone() })
    }

    /// Spatial max per channel; ties resolve to the first row-major index.
    pub fn global_max_pool(&self) -> Result<Tensor<S>> {
        require_rank(self, 4, "global_max_pool")?;
        let (n, c, h, w) = dims4(self.shape());
        let hw = h * w;
        let mut out = vec![S::zero(); n * c];
        let mut argmax = vec![0usize; n * c];
        for nc in 0..n * c {
            let base = nc * hw;
            let mut best = self.data()[base];
            let mut best_at = base;
            for p in 1..hw {
                let v = self.data()[base + p];
                if v > best {
                    best = v;
                    best_at = base + p;
                }
            }
            out[nc] = best;
            argmax[nc] = best_at;
        }
        Tensor::from_op(vec![n, c], out, Node::GlobalMaxPool { a: self.clone(), argmax })
    }

    /// Mean over channels: `[n,c,h,w] -> [n,1,h,w]`.
    pub fn channel_mean(&self) -> Result<Tensor<S>> {
        require_rank(self, 4, "channel_mean")?;
        let (n, c, h, w) = dims4(self.shape());
        let hw = h * w;
        let inv = S::one() / S::from_usize(c).expect("usize conversion");
        let mut out = vec![S::zero(); n * hw];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                for p in 0..hw {
                    out[ni * hw + p] = out[ni * hw + p] + self.data()[base + p];
                }
            }
        }
        for o in &mut out {
            *o = *o * inv;
        }
        Tensor::from_op(vec![n, 1, h, w], out, Node::ChannelMean { a: self.clone() })
    }

    /// Max over channels; ties resolve to the lowest channel index.
    pub fn channel_max(&self) -> Result<Tensor<S>> {
        require_rank(self, 4, "channel_max")?;
        let (n, c, h, w) = dims4(self.shape());
        let hw = h * w;
        let mut out = vec![S::zero(); n * hw];
        let mut argmax = vec![0usize; n * hw];
        for ni in 0..n {
            for p in 0..hw {
                let mut best = self.data()[ni * c * hw + p];
                let mut best_at = ni * c * hw + p;
                for ci in 1..c {
                    let idx = (ni * c + ci) * hw + p;
                    let v = self.data()[idx];
                    if v > best {
                        best = v;
                        best_at = idx;
                    }
                }
                out[ni * hw + p] = best;
                argmax[ni * hw + p] = best_at;
            }
        }
        Tensor::from_op(vec![n, 1, h, w], out, Node::ChannelMax { a: self.clone(), argmax })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        if parts.is_empty() {
            return Err(dim_err!("concat of zero tensors"));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(dim_err!("concat axis {axis} out of range for rank {rank}"));
        }
        for p in parts {
            if p.shape().len() != rank {
                return Err(dim_err!("concat rank mismatch: {:?} vs {:?}", parts[0].shape(), p.shape()));
            }
            for d in 0..rank {
                if d != axis && p.shape()[d] != parts[0].shape()[d] {
                    return Err(dim_err!(
                        "concat extent mismatch at axis {d}: {:?} vs {:?}",
                        parts[0].shape(),
                        p.shape()
                    ));
                }
            }
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let outer: usize = out_shape[..axis].iter().product();
        let tail: usize = out_shape[axis + 1..].iter().product();
        let mut out = vec![S::zero(); out_shape.iter().product()];
        let mut offset = 0usize;
        let out_block = out_shape[axis] * tail;
        for p in parts {
            let block = p.shape()[axis] * tail;
            for o in 0..outer {
                let src = &p.data()[o * block..(o + 1) * block];
                out[o * out_block + offset..o * out_block + offset + block].copy_from_slice(src);
            }
            offset += block;
        }
        Tensor::from_op(out_shape, out, Node::Concat { parts: parts.to_vec(), axis })
    }

    /// Channel-axis concatenation of `[n,c_i,h,w]` tensors.
    pub fn concat_channels(parts: &[Tensor<S>]) -> Result<Tensor<S>> {
        for p in parts {
            require_rank(p, 4, "concat_channels")?;
        }
        Tensor::concat(parts, 1)
    }

    /// Row-major layout-preserving reshape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(dim_err!("reshape {:?} -> {:?} changes element count", self.shape(), shape));
        }
        Tensor::from_op(shape.to_vec(), self.data().to_vec(), Node::Reshape { a: self.clone() })
    }

    /// Axis permutation (materialized).
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let rank = self.shape().len();
        if axes.len() != rank {
            return Err(dim_err!("permute axes {:?} vs rank {rank}", axes));
        }
        let mut seen = vec![false; rank];
        for &ax in axes {
            if ax >= rank || seen[ax] {
                return Err(dim_err!("permute axes {:?} is not a permutation of 0..{rank}", axes));
            }
            seen[ax] = true;
        }
        let out_shape: Vec<usize> = axes.iter().map(|&ax| self.shape()[ax]).collect();
        let out = permute_data(self.data(), self.shape(), axes);
        Tensor::from_op(out_shape, out, Node::Permute { a: self.clone(), axes: axes.to_vec() })
    }

    /// Swap the axes of a matrix.
    pub fn transpose2(&self) -> Result<Tensor<S>> {
        require_rank(self, 2, "transpose2")?;
        self.permute(&[1, 0])
    }

    /// Swap the trailing two axes of a rank-3 tensor.
    pub fn transpose_last2(&self) -> Result<Tensor<S>> {
        require_rank(self, 3, "transpose_last2")?;
        self.permute(&[0, 2, 1])
    }

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let mut acc = S::zero();
        for &v in self.data() {
            acc = acc + v;
        }
        Tensor::from_op(vec![1], vec![acc], Node::SumAll { a: self.clone() })
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let mut acc = S::zero();
        for &v in self.data() {
            acc = acc + v;
        }
        let mean = acc / S::from_usize(self.numel()).expect("usize conversion");
        Tensor::from_op(vec![1], vec![mean], Node::MeanAll { a: self.clone() })
    }
}

/// Output index range `[lo, hi)` whose input coordinate
/// `o*stride + k_off - pad` stays inside `[0, in_extent)`.
fn conv_range(pad: usize, k_off: usize, stride: usize, in_extent: usize, out_extent: usize) -> (usize, usize) {
    let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(stride) };
    let max_coord = in_extent - 1 + pad;
    if k_off > max_coord {
        return (0, 0);
    }
    let hi = ((max_coord - k_off) / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

pub(crate) fn matmul_data<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == S::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// dA of `C = A·B`: `G · B^T`.
pub(crate) fn matmul_grad_lhs<S: Scalar>(g: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut ga = vec![S::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = S::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc = acc + gv * bv;
            }
            ga[i * k + kk] = acc;
        }
    }
    ga
}

/// dB of `C = A·B`: `A^T · G`.
pub(crate) fn matmul_grad_rhs<S: Scalar>(g: &[S], a: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut gb = vec![S::zero(); k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == S::zero() {
                continue;
            }
            let brow = &mut gb[kk * n..(kk + 1) * n];
            for (o, &gv) in brow.iter_mut().zip(grow) {
                *o = *o + av * gv;
            }
        }
    }
    gb
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<S: Scalar>(
    out_shape: &[usize],
    g: &[S],
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    pad: (usize, usize),
    stride: (usize, usize),
    sink: &mut GradSink<S>,
) {
    let (n, c_in, h, w) = dims4(input.shape());
    let (c_out, _, kh, kw) = dims4(weight.shape());
    let (_, _, ho, wo) = dims4(out_shape);
    let (ph, pw) = pad;
    let (sh, sw) = stride;
    let x = input.data();
    let wt = weight.data();

    if sink.wants(bias) {
        let mut gb = vec![S::zero(); c_out];
        for nn in 0..n {
            for co in 0..c_out {
                let base = (nn * c_out + co) * ho * wo;
                for &gv in &g[base..base + ho * wo] {
                    gb[co] = gb[co] + gv;
                }
            }
        }
        sink.add_all(bias, &gb);
    }

    let want_w = sink.wants(weight);
    let want_x = sink.wants(input);
    if !want_w && !want_x {
        return;
    }
    let mut gw = vec![S::zero(); weight.numel()];
    let mut gx = vec![S::zero(); input.numel()];
    for nn in 0..n {
        for co in 0..c_out {
            let out_base = (nn * c_out + co) * ho * wo;
            for ci in 0..c_in {
                let in_base = (nn * c_in + ci) * h * w;
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = conv_range(ph, ky, sh, h, ho);
                    for kx in 0..kw {
                        let widx = ((co * c_in + ci) * kh + ky) * kw + kx;
                        let wv = wt[widx];
                        let (ox_lo, ox_hi) = conv_range(pw, kx, sw, w, wo);
                        let mut wacc = S::zero();
                        for oy in oy_lo..oy_hi {
                            let iy = oy * sh + ky - ph;
                            let in_row = in_base + iy * w;
                            let out_row = out_base + oy * wo;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * sw + kx - pw;
                                let gv = g[out_row + ox];
                                if want_w {
                                    wacc = wacc + gv * x[in_row + ix];
                                }
                                if want_x {
                                    gx[in_row + ix] = gx[in_row + ix] + wv * gv;
                                }
                            }
                        }
                        if want_w {
                            gw[widx] = gw[widx] + wacc;
                        }
                    }
                }
            }
        }
    }
    if want_w {
        sink.add_all(weight, &gw);
    }
    if want_x {
        sink.add_all(input, &gx);
    }
}

/// Split a concat result's buffer back into per-part buffers.
pub(crate) fn concat_split<S: Scalar>(g: &[S], shapes: &[&[usize]], axis: usize) -> Vec<Vec<S>> {
    let rank = shapes[0].len();
    let outer: usize = shapes[0][..axis].iter().product();
    let tail: usize = shapes[0][axis + 1..].iter().product();
    let total_axis: usize = shapes.iter().map(|s| s[axis]).sum();
    let out_block = total_axis * tail;
    let _ = rank;
    let mut result = Vec::with_capacity(shapes.len());
    let mut offset = 0usize;
    for s in shapes {
        let block = s[axis] * tail;
        let mut part = vec![S::zero(); s.iter().product()];
        for o in 0..outer {
            part[o * block..(o + 1) * block]
                .copy_from_slice(&g[o * out_block + offset..o * out_block + offset + block]);
        }
        offset += block;
        result.push(part);
    }
    result
}

pub(crate) fn permute_data<S: Scalar>(data: &[S], shape: &[usize], axes: &[usize]) -> Vec<S> {
    let rank = shape.len();
    let numel: usize = shape.iter().product();
    let mut old_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        old_strides[d] = old_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
    let step: Vec<usize> = axes.iter().map(|&ax| old_strides[ax]).collect();

    let mut out = Vec::with_capacity(numel);
    let mut coord = vec![0usize; rank];
    let mut old_flat = 0usize;
    for _ in 0..numel {
        out.push(data[old_flat]);
        for d in (0..rank).rev() {
            coord[d] += 1;
            old_flat += step[d];
            if coord[d] < out_shape[d] {
                break;
            }
            coord[d] = 0;
            old_flat -= step[d] * out_shape[d];
        }
    }
    out
}
