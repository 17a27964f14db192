//! Elementwise, shape, reduction and matrix-product kernels.

use super::{check_axis, split_axis, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Copy, PartialEq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

/// Output shape for suffix broadcasting: the shorter operand must match the
/// trailing axes of the longer one.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if long[long.len() - short.len()..] != *short {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(long.to_vec())
}

// Sums a full-size gradient down onto a broadcast operand of `len` elements.
fn reduce_broadcast<S: Scalar>(g: &[S], len: usize) -> Vec<S> {
    if g.len() == len {
        return g.to_vec();
    }
    let mut out = vec![S::zero(); len];
    for chunk in g.chunks(len) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o += *v);
    }
    out
}

impl<S: Scalar> Tensor<S> {
    fn binary(&self, rhs: &Tensor<S>, kind: Binary) -> Result<Tensor<S>> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        };
        let shape = broadcast_shape(name, self.shape(), rhs.shape())?;
        let n: usize = shape.iter().product();
        let (la, lb) = (self.numel(), rhs.numel());
        let (a, b) = (self.data(), rhs.data());
        let f = |x: S, y: S| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let data: Vec<S> = if la == lb {
            a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
        } else {
            (0..n).map(|i| f(a[i % la], b[i % lb])).collect()
        };
        let (ta, tb) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(name, shape, data, vec![self.clone(), rhs.clone()], move |g, _, needs| {
            let (a, b) = (ta.data(), tb.data());
            let (la, lb) = (a.len(), b.len());
            let ga = needs[0].then(|| {
                let full: Vec<S> = match kind {
                    Binary::Add | Binary::Sub => g.to_vec(),
                    Binary::Mul => g.iter().enumerate().map(|(i, &g)| g * b[i % lb]).collect(),
                    Binary::Div => g.iter().enumerate().map(|(i, &g)| g / b[i % lb]).collect(),
                };
                reduce_broadcast(&full, la)
            });
            let gb = needs[1].then(|| {
                let full: Vec<S> = match kind {
                    Binary::Add => g.to_vec(),
                    Binary::Sub => g.iter().map(|&g| -g).collect(),
                    Binary::Mul => g.iter().enumerate().map(|(i, &g)| g * a[i % la]).collect(),
                    Binary::Div => g
                        .iter()
                        .enumerate()
                        .map(|(i, &g)| {
                            let y = b[i % lb];
                            -g * a[i % la] / (y * y)
                        })
                        .collect(),
                };
                reduce_broadcast(&full, lb)
            });
            vec![ga, gb]
        }))
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, Binary::Add)
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, Binary::Sub)
    }

    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, Binary::Mul)
    }

    pub fn div(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, Binary::Div)
    }

    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    pub(crate) fn unary(
        &self,
        name: &'static str,
        f: impl Fn(S) -> S,
        df: impl Fn(S, S) -> S + Send + Sync + 'static,
    ) -> Tensor<S> {
        let data: Vec<S> = self.data().iter().map(|&x| f(x)).collect();
        let x = self.clone();
        Tensor::from_op(name, self.shape().to_vec(), data, vec![self.clone()], move |g, y, _| {
            let gx = g
                .iter()
                .zip(x.data())
                .zip(y)
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn scale(&self, k: f64) -> Tensor<S> {
        let k = S::of(k);
        self.unary("scale", move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<S> {
        let c = S::of(c);
        self.unary("add_scalar", move |x| x + c, |_, _| S::one())
    }

    pub fn neg(&self) -> Tensor<S> {
        self.unary("neg", |x| -x, |_, _| -S::one())
    }

    pub fn square(&self) -> Tensor<S> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn abs(&self) -> Tensor<S> {
        self.unary("abs", |x| x.abs(), |x, _| x.signum())
    }

    pub fn exp(&self) -> Tensor<S> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    /// Natural log with the argument floored at 1e-12.
    pub fn ln(&self) -> Tensor<S> {
        let floor = S::of(1e-12);
        self.unary(
            "ln",
            move |x| x.max(floor).ln(),
            move |x, _| if x > floor { S::one() / x } else { S::zero() },
        )
    }

    /// Square root with the argument floored at 0.
    pub fn sqrt(&self) -> Tensor<S> {
        self.unary(
            "sqrt",
            |x| x.max(S::zero()).sqrt(),
            |x, y| if x > S::zero() { S::of(0.5) / y } else { S::zero() },
        )
    }

    pub fn clamp_min(&self, lo: f64) -> Tensor<S> {
        let lo = S::of(lo);
        self.unary(
            "clamp_min",
            move |x| x.max(lo),
            move |x, _| if x > lo { S::one() } else { S::zero() },
        )
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(
            "relu",
            |x| x.max(S::zero()),
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<S> {
        let k = S::of(slope);
        self.unary(
            "leaky_relu",
            move |x| if x > S::zero() { x } else { k * x },
            move |x, _| if x > S::zero() { S::one() } else { k },
        )
    }

    pub fn elu(&self, alpha: f64) -> Tensor<S> {
        let a = S::of(alpha);
        self.unary(
            "elu",
            move |x| if x > S::zero() { x } else { a * (x.exp() - S::one()) },
            move |x, y| if x > S::zero() { S::one() } else { y + a },
        )
    }

    pub fn tanh(&self) -> Tensor<S> {
        self.unary("tanh", |x| x.tanh(), |_, y| S::one() - y * y)
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(
            "sigmoid",
            |x| S::one() / (S::one() + (-x).exp()),
            |_, y| y * (S::one() - y),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor<S> {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044_715;
        self.unary(
            "gelu",
            |x| {
                let x = x.wide();
                S::of(0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()))
            },
            |x, _| {
                let x = x.wide();
                let u = C * (x + A * x * x * x);
                let t = u.tanh();
                let du = C * (1.0 + 3.0 * A * x * x);
                S::of(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
            },
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g, _, _| vec![Some(g.to_vec())],
        ))
    }

    /// General axis permutation; `axes[i]` is the source axis of output axis `i`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(Error::ShapeMismatch {
                op: "permute",
                lhs: self.shape().to_vec(),
                rhs: axes.to_vec(),
            });
        }
        for &a in axes {
            check_axis("permute", a, rank)?;
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::Invalid(format!("permute: repeated axis {a}")));
            }
        }
        let src_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| src_shape[a]).collect();
        let mut src_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            src_strides[i] = src_strides[i + 1] * src_shape[i + 1];
        }
        // Source offset of every output element.
        let n = self.numel();
        let mut index = Vec::with_capacity(n);
        let mut counter = vec![0usize; rank];
        for _ in 0..n {
            let off: usize = counter
                .iter()
                .zip(axes)
                .map(|(&c, &a)| c * src_strides[a])
                .sum();
            index.push(off);
            for d in (0..rank).rev() {
                counter[d] += 1;
                if counter[d] < out_shape[d] {
                    break;
                }
                counter[d] = 0;
            }
        }
        let src = self.data();
        let data = index.iter().map(|&i| src[i]).collect();
        Ok(Tensor::from_op("permute", out_shape, data, vec![self.clone()], move |g, _, _| {
            let mut gx = vec![S::zero(); g.len()];
            for (o, &i) in index.iter().enumerate() {
                gx[i] = g[o];
            }
            vec![Some(gx)]
        }))
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor<S>> {
        check_axis("transpose", a, self.rank())?;
        check_axis("transpose", b, self.rank())?;
        let mut axes: Vec<usize> = (0..self.rank()).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<S>> {
        check_axis("narrow", axis, self.rank())?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if start + len > n {
            return Err(Error::OutOfRange {
                what: "narrow",
                index: start + len,
                size: n,
            });
        }
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let total = self.numel();
        Ok(Tensor::from_op("narrow", shape, data, vec![self.clone()], move |g, _, _| {
            let mut gx = vec![S::zero(); total];
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    pub fn concat(parts: &[Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?;
        check_axis("concat", axis, first.rank())?;
        for p in parts {
            let same_rank = p.rank() == first.rank();
            let same_other = same_rank
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same_other {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_len: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total_len * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total_len;
        let lens2 = lens.clone();
        Ok(Tensor::from_op("concat", shape, data, parts.to_vec(), move |g, _, needs| {
            let mut out: Vec<Option<Vec<S>>> = lens2
                .iter()
                .zip(needs)
                .map(|(&l, &need)| need.then(|| Vec::with_capacity(outer * l * inner)))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (slot, &l) in out.iter_mut().zip(&lens2) {
                    if let Some(v) = slot {
                        v.extend_from_slice(&g[pos..pos + l * inner]);
                    }
                    pos += l * inner;
                }
            }
            out
        }))
    }

    /// Rows of a `[V, D]` table gathered by `ids`, shaped `[..prefix, D]`.
    pub fn embedding(&self, ids: &[usize], prefix: &[usize]) -> Result<Tensor<S>> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "embedding",
                lhs: self.shape().to_vec(),
                rhs: vec![0, 0],
            });
        }
        let (v, d) = (self.shape()[0], self.shape()[1]);
        if prefix.iter().product::<usize>() != ids.len() {
            return Err(Error::ShapeMismatch {
                op: "embedding",
                lhs: prefix.to_vec(),
                rhs: vec![ids.len()],
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: bad,
                size: v,
            });
        }
        let table = self.data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&table[i * d..(i + 1) * d]);
        }
        let mut shape = prefix.to_vec();
        shape.push(d);
        let ids = ids.to_vec();
        Ok(Tensor::from_op("embedding", shape, data, vec![self.clone()], move |g, _, _| {
            let mut gw = vec![S::zero(); v * d];
            for (r, &i) in ids.iter().enumerate() {
                gw[i * d..(i + 1) * d]
                    .iter_mut()
                    .zip(&g[r * d..(r + 1) * d])
                    .for_each(|(a, b)| *a += *b);
            }
            vec![Some(gw)]
        }))
    }

    /// Overlapping windows over the last axis: `[.., N] -> [.., F, win]`.
    pub fn frames(&self, win: usize, hop: usize) -> Result<Tensor<S>> {
        let rank = self.rank();
        if rank == 0 || hop == 0 || win == 0 {
            return Err(Error::Invalid("frames: need rank >= 1, win > 0, hop > 0".into()));
        }
        let n = self.shape()[rank - 1];
        if n < win {
            return Err(Error::Invalid(format!("frames: length {n} shorter than window {win}")));
        }
        let f = (n - win) / hop + 1;
        let outer = self.numel() / n;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * f * win);
        for o in 0..outer {
            for j in 0..f {
                let s = o * n + j * hop;
                data.extend_from_slice(&src[s..s + win]);
            }
        }
        let mut shape = self.shape()[..rank - 1].to_vec();
        shape.extend([f, win]);
        let total = self.numel();
        Ok(Tensor::from_op("frames", shape, data, vec![self.clone()], move |g, _, _| {
            let mut gx = vec![S::zero(); total];
            for o in 0..outer {
                for j in 0..f {
                    let s = o * n + j * hop;
                    let src = &g[(o * f + j) * win..(o * f + j + 1) * win];
                    gx[s..s + win].iter_mut().zip(src).for_each(|(a, b)| *a += *b);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn sum_all(&self) -> Tensor<S> {
        let s: f64 = self.data().iter().map(|v| v.wide()).sum();
        let n = self.numel();
        Tensor::from_op("sum_all", vec![], vec![S::of(s)], vec![self.clone()], move |g, _, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean_all(&self) -> Tensor<S> {
        let n = self.numel().max(1);
        let s: f64 = self.data().iter().map(|v| v.wide()).sum::<f64>() / n as f64;
        let len = self.numel();
        Tensor::from_op("mean_all", vec![], vec![S::of(s)], vec![self.clone()], move |g, _, _| {
            vec![Some(vec![S::of(g[0].wide() / n as f64); len])]
        })
    }

    fn reduce_axis(&self, axis: usize, keepdim: bool, mean: bool) -> Result<Tensor<S>> {
        check_axis(if mean { "mean" } else { "sum" }, axis, self.rank())?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let norm = if mean { 1.0 / n.max(1) as f64 } else { 1.0 };
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let s: f64 = (0..n).map(|j| src[(o * n + j) * inner + i].wide()).sum();
                data.push(S::of(s * norm));
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let norm = S::of(norm);
        Ok(Tensor::from_op(
            if mean { "mean" } else { "sum" },
            shape,
            data,
            vec![self.clone()],
            move |g, _, _| {
                let mut gx = vec![S::zero(); outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            gx[(o * n + j) * inner + i] = g[o * inner + i] * norm;
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    pub fn sum(&self, axis: usize, keepdim: bool) -> Result<Tensor<S>> {
        self.reduce_axis(axis, keepdim, false)
    }

    pub fn mean(&self, axis: usize, keepdim: bool) -> Result<Tensor<S>> {
        self.reduce_axis(axis, keepdim, true)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("mse", self, other)?;
        Ok(self.sub(other)?.square().mean_all())
    }

    /// Mean absolute difference over all elements.
    pub fn l1(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("l1", self, other)?;
        Ok(self.sub(other)?.abs().mean_all())
    }

    /// Batched matrix product. `self: [.., M, K]`, `rhs: [K, N]` or `[.., K, N]`
    /// with identical leading axes.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: self.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if self.rank() < 2 || rhs.rank() < 2 {
            return Err(mismatch());
        }
        let ar = self.rank();
        let (m, k) = (self.shape()[ar - 2], self.shape()[ar - 1]);
        let br = rhs.rank();
        let (k2, n) = (rhs.shape()[br - 2], rhs.shape()[br - 1]);
        let shared_rhs = br == 2;
        if k != k2 || (!shared_rhs && self.shape()[..ar - 2] != rhs.shape()[..br - 2]) {
            return Err(mismatch());
        }
        let batch: usize = self.shape()[..ar - 2].iter().product();
        let (a, b) = (self.data(), rhs.data());
        let mut data = vec![S::zero(); batch * m * n];
        for bi in 0..batch {
            let ab = &a[bi * m * k..(bi + 1) * m * k];
            let bb = if shared_rhs { b } else { &b[bi * k * n..(bi + 1) * k * n] };
            gemm(ab, bb, m, k, n, &mut data[bi * m * n..(bi + 1) * m * n]);
        }
        let mut shape = self.shape()[..ar - 2].to_vec();
        shape.extend([m, n]);
        let (ta, tb) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op("matmul", shape, data, vec![self.clone(), rhs.clone()], move |g, _, needs| {
            let (a, b) = (ta.data(), tb.data());
            let ga = needs[0].then(|| {
                let mut ga = vec![S::zero(); batch * m * k];
                for bi in 0..batch {
                    let gb = &g[bi * m * n..(bi + 1) * m * n];
                    let bb = if shared_rhs { b } else { &b[bi * k * n..(bi + 1) * k * n] };
                    gemm_nt(gb, bb, m, n, k, &mut ga[bi * m * k..(bi + 1) * m * k]);
                }
                ga
            });
            let gbv = needs[1].then(|| {
                let mut acc = vec![0f64; b.len()];
                for bi in 0..batch {
                    let ab = &a[bi * m * k..(bi + 1) * m * k];
                    let gb = &g[bi * m * n..(bi + 1) * m * n];
                    let off = if shared_rhs { 0 } else { bi * k * n };
                    gemm_tn_acc(ab, gb, m, k, n, &mut acc[off..off + k * n]);
                }
                acc.into_iter().map(S::of).collect::<Vec<S>>()
            });
            vec![ga, gbv]
        }))
    }
}

pub(crate) fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// `out = a[m,k] · b[k,n]`, accumulated in f64, four rows at a time so each
/// row of `b` is widened once per block.
pub(crate) fn gemm<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    let mut acc = vec![0f64; 4 * n];
    let mut brow = vec![0f64; n];
    let mut i = 0;
    while i < m {
        let rows = (m - i).min(4);
        acc.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..k {
            let mut w = [0f64; 4];
            for (r, wr) in w.iter_mut().enumerate().take(rows) {
                *wr = a[(i + r) * k + p].wide();
            }
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            brow.iter_mut().zip(&b[p * n..(p + 1) * n]).for_each(|(d, s)| *d = s.wide());
            for (r, &wr) in w.iter().enumerate().take(rows) {
                if wr == 0.0 {
                    continue;
                }
                for (acc, &bv) in acc[r * n..(r + 1) * n].iter_mut().zip(&brow) {
                    *acc += wr * bv;
                }
            }
        }
        for r in 0..rows {
            for (o, &v) in out[(i + r) * n..(i + r + 1) * n].iter_mut().zip(&acc[r * n..(r + 1) * n]) {
                *o = S::of(v);
            }
        }
        i += rows;
    }
}

/// `out = a[m,k] · b[n,k]ᵀ`, accumulated in f64.
pub(crate) fn gemm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    let bw: Vec<f64> = b.iter().map(|v| v.wide()).collect();
    let mut row = vec![0f64; k];
    for i in 0..m {
        row.iter_mut().zip(&a[i * k..(i + 1) * k]).for_each(|(d, s)| *d = s.wide());
        for j in 0..n {
            out[i * n + j] = S::of(row.iter().zip(&bw[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum());
        }
    }
}

/// `acc += a[m,k]ᵀ · g[m,n]` into an f64 accumulator `[k, n]`.
pub(crate) fn gemm_tn_acc<S: Scalar>(a: &[S], g: &[S], m: usize, k: usize, n: usize, acc: &mut [f64]) {
    let mut grow = vec![0f64; n];
    for i in 0..m {
        grow.iter_mut().zip(&g[i * n..(i + 1) * n]).for_each(|(d, s)| *d = s.wide());
        for p in 0..k {
            let w = a[i * k + p].wide();
            if w == 0.0 {
                continue;
            }
            for (o, &gv) in acc[p * n..(p + 1) * n].iter_mut().zip(&grow) {
                *o += w * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    fn t(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_f64(data, shape).unwrap()
    }

    #[test]
    fn suffix_broadcast_add() {
        let a = t(&[1., 2., 3., 4., 5., 6.], &[2, 3]);
        let b = t(&[10., 20., 30.], &[3]);
        assert_eq!(a.add(&b).unwrap().to_vec(), vec![11., 22., 33., 14., 25., 36.]);
        assert!(a.add(&t(&[1., 2.], &[2])).is_err());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = t(&[1., 2., 3.], &[3]);
        let b = t(&[1., 2.], &[2]);
        let msg = a.mse(&b).unwrap_err().to_string();
        assert!(msg.contains("[3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn unknown_axis_is_reported() {
        let a = t(&[1., 2.], &[2]);
        assert!(matches!(a.sum(3, false), Err(crate::Error::UnknownAxis { .. })));
    }

    #[test]
    fn matmul_small() {
        let a = t(&[1., 2., 3., 4.], &[2, 2]);
        let b = t(&[5., 6., 7., 8.], &[2, 2]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![19., 22., 43., 50.]);
    }

    #[test]
    fn permute_round_trip() {
        let a = t(&(0..24).map(|v| v as f64).collect::<Vec<_>>(), &[2, 3, 4]);
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.data()[1], 4.0);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.to_vec(), a.to_vec());
    }

    #[test]
    fn narrow_and_concat_invert() {
        let a = t(&(0..12).map(|v| v as f64).collect::<Vec<_>>(), &[2, 6]);
        let l = a.narrow(1, 0, 2).unwrap();
        let r = a.narrow(1, 2, 4).unwrap();
        let c = Tensor::concat(&[l, r], 1).unwrap();
        assert_eq!(c.to_vec(), a.to_vec());
    }

    #[test]
    fn frames_count() {
        let a = t(&[0.0; 20], &[1, 20]);
        assert_eq!(a.frames(8, 4).unwrap().shape(), &[1, 4, 8]);
    }
}
