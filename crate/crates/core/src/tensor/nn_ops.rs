//! Fused kernels: softmax family, layer norm and 1-D convolutions.

use super::{check_axis, split_axis, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

impl<S: Scalar> Tensor<S> {
    pub fn softmax(&self, axis: usize) -> Result<Tensor<S>> {
        check_axis("softmax", axis, self.rank())?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut y = vec![S::zero(); x.len()];
        let mut buf = vec![0f64; n];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| x[at(j)].wide()).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = (x[at(j)].wide() - max).exp();
                    z += *b;
                }
                for (j, b) in buf.iter().enumerate() {
                    y[at(j)] = S::of(b / z);
                }
            }
        }
        Ok(Tensor::from_op("softmax", self.shape().to_vec(), y, vec![self.clone()], move |g, y, _| {
            let mut gx = vec![S::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: f64 = (0..n).map(|j| g[at(j)].wide() * y[at(j)].wide()).sum();
                    for j in 0..n {
                        gx[at(j)] = S::of(y[at(j)].wide() * (g[at(j)].wide() - dot));
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Log-softmax via max subtraction.
    pub fn log_softmax(&self, axis: usize) -> Result<Tensor<S>> {
        check_axis("log_softmax", axis, self.rank())?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut y = vec![S::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| x[at(j)].wide()).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..n).map(|j| (x[at(j)].wide() - max).exp()).sum::<f64>().ln();
                for j in 0..n {
                    y[at(j)] = S::of(x[at(j)].wide() - lse);
                }
            }
        }
        Ok(Tensor::from_op("log_softmax", self.shape().to_vec(), y, vec![self.clone()], move |g, y, _| {
            let mut gx = vec![S::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let gs: f64 = (0..n).map(|j| g[at(j)].wide()).sum();
                    for j in 0..n {
                        gx[at(j)] = S::of(g[at(j)].wide() - y[at(j)].wide().exp() * gs);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta` of
    /// shape `[D]`.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        let d = *self.shape().last().ok_or_else(|| Error::Invalid("layer_norm of a scalar".into()))?;
        for p in [gamma, beta] {
            if p.shape() != [d] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    lhs: self.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let rows = self.numel() / d.max(1);
        let x = self.data();
        let (gm, bt) = (gamma.data(), beta.data());
        let mut xhat = vec![0f64; x.len()];
        let mut rstd = vec![0f64; rows];
        let mut y = vec![S::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|v| v.wide()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.wide() - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j].wide() - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = S::of(h * gm[j].wide() + bt[j].wide());
            }
        }
        let gamma_t = gamma.clone();
        Ok(Tensor::from_op(
            "layer_norm",
            self.shape().to_vec(),
            y,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g, _, needs| {
                let gm = gamma_t.data();
                let mut gx = needs[0].then(|| vec![S::zero(); g.len()]);
                let mut gg = vec![0f64; d];
                let mut gb = vec![0f64; d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        let gj = gr[j].wide();
                        gg[j] += gj * hr[j];
                        gb[j] += gj;
                        let dh = gj * gm[j].wide();
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    if let Some(gx) = gx.as_mut() {
                        let inv_d = 1.0 / d as f64;
                        for j in 0..d {
                            let dh = gr[j].wide() * gm[j].wide();
                            gx[r * d + j] =
                                S::of(rstd[r] * (dh - inv_d * sum_dh - hr[j] * inv_d * sum_dh_h));
                        }
                    }
                }
                let to_s = |v: Vec<f64>| v.into_iter().map(S::of).collect::<Vec<S>>();
                vec![gx, needs[1].then(|| to_s(gg)), needs[2].then(|| to_s(gb))]
            },
        ))
    }

    /// 1-D convolution. `self: [B, Cin, L]`, `weight: [Cout, Cin, K]`,
    /// optional `bias: [Cout]`; zero padding on both sides.
    pub fn conv1d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<S>> {
        let mismatch = |rhs: &[usize]| Error::ShapeMismatch {
            op: "conv1d",
            lhs: self.shape().to_vec(),
            rhs: rhs.to_vec(),
        };
        if self.rank() != 3 || weight.rank() != 3 || weight.shape()[1] != self.shape()[1] || stride == 0 {
            return Err(mismatch(weight.shape()));
        }
        let (b, cin, l) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, kw) = (weight.shape()[0], weight.shape()[2]);
        if let Some(bias) = bias {
            if bias.shape() != [cout] {
                return Err(mismatch(bias.shape()));
            }
        }
        if l + 2 * padding < kw {
            return Err(Error::Invalid(format!(
                "conv1d: input length {l} with padding {padding} shorter than kernel {kw}"
            )));
        }
        let lout = (l + 2 * padding - kw) / stride + 1;
        let x = widen(self.data());
        let w = widen(weight.data());
        let spans: Vec<_> = (0..kw).map(|k| span(k, stride, padding, l, lout)).collect();
        let mut y = vec![S::zero(); b * cout * lout];
        let mut acc = vec![0f64; lout];
        for bi in 0..b {
            for co in 0..cout {
                let b0 = bias.map(|t| t.data()[co].wide()).unwrap_or(0.0);
                acc.iter_mut().for_each(|v| *v = b0);
                for ci in 0..cin {
                    let xr = &x[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                    for (k, r) in spans.iter().enumerate() {
                        let wv = w[(co * cin + ci) * kw + k];
                        let start = r.start * stride + k - padding;
                        if stride == 1 {
                            for (a, &xv) in acc[r.clone()].iter_mut().zip(&xr[start..]) {
                                *a += wv * xv;
                            }
                        } else {
                            for (a, &xv) in acc[r.clone()].iter_mut().zip(xr[start..].iter().step_by(stride)) {
                                *a += wv * xv;
                            }
                        }
                    }
                }
                for (o, &a) in y[(bi * cout + co) * lout..(bi * cout + co + 1) * lout].iter_mut().zip(&acc) {
                    *o = S::of(a);
                }
            }
        }
        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            inputs.push(bias.clone());
        }
        let (xt, wt) = (self.clone(), weight.clone());
        Ok(Tensor::from_op("conv1d", vec![b, cout, lout], y, inputs, move |g, _, needs| {
            let (x, w, gw64) = (widen(xt.data()), widen(wt.data()), widen(g));
            let mut gx = needs[0].then(|| vec![0f64; x.len()]);
            let mut gw = needs[1].then(|| vec![0f64; w.len()]);
            for bi in 0..b {
                for co in 0..cout {
                    let gr = &gw64[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
                    for ci in 0..cin {
                        let xoff = (bi * cin + ci) * l;
                        for (k, r) in spans.iter().enumerate() {
                            let widx = (co * cin + ci) * kw + k;
                            let start = xoff + r.start * stride + k - padding;
                            let grs = &gr[r.clone()];
                            let n = grs.len();
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += if stride == 1 {
                                    grs.iter().zip(&x[start..start + n]).map(|(a, b)| a * b).sum::<f64>()
                                } else {
                                    grs.iter().zip(x[start..].iter().step_by(stride)).map(|(a, b)| a * b).sum::<f64>()
                                };
                            }
                            if let Some(gx) = gx.as_mut() {
                                let wv = w[widx];
                                if stride == 1 {
                                    for (o, &gv) in gx[start..start + n].iter_mut().zip(grs) {
                                        *o += gv * wv;
                                    }
                                } else {
                                    for (o, &gv) in gx[start..].iter_mut().step_by(stride).zip(grs) {
                                        *o += gv * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let to_s = |v: Vec<f64>| v.into_iter().map(S::of).collect::<Vec<S>>();
            let mut out = vec![gx.map(to_s), gw.map(to_s)];
            if needs.len() == 3 {
                out.push(needs[2].then(|| bias_grad(g, b, cout, lout)));
            }
            out
        }))
    }

    /// Transposed 1-D convolution. `self: [B, Cin, L]`, `weight: [Cin, Cout, K]`;
    /// output length `(L - 1) * stride - 2 * padding + K`.
    pub fn conv_transpose1d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<S>> {
        let mismatch = |rhs: &[usize]| Error::ShapeMismatch {
            op: "conv_transpose1d",
            lhs: self.shape().to_vec(),
            rhs: rhs.to_vec(),
        };
        if self.rank() != 3 || weight.rank() != 3 || weight.shape()[0] != self.shape()[1] || stride == 0 {
            return Err(mismatch(weight.shape()));
        }
        let (b, cin, l) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, kw) = (weight.shape()[1], weight.shape()[2]);
        if let Some(bias) = bias {
            if bias.shape() != [cout] {
                return Err(mismatch(bias.shape()));
            }
        }
        let full = (l.max(1) - 1) * stride + kw;
        if full < 2 * padding + 1 {
            return Err(Error::Invalid("conv_transpose1d: padding consumes the output".into()));
        }
        let lout = full - 2 * padding;
        let x = widen(self.data());
        let w = widen(weight.data());
        let spans: Vec<_> = (0..kw).map(|k| span(k, stride, padding, lout, l)).collect();
        let mut acc = vec![0f64; b * cout * lout];
        for bi in 0..b {
            for co in 0..cout {
                let b0 = bias.map(|t| t.data()[co].wide()).unwrap_or(0.0);
                let orow = &mut acc[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
                orow.iter_mut().for_each(|v| *v = b0);
                for ci in 0..cin {
                    let xr = &x[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                    for (k, r) in spans.iter().enumerate() {
                        let wv = w[(ci * cout + co) * kw + k];
                        let start = r.start * stride + k - padding;
                        for (o, &xv) in orow[start..].iter_mut().step_by(stride).zip(&xr[r.clone()]) {
                            *o += wv * xv;
                        }
                    }
                }
            }
        }
        let y = acc.into_iter().map(S::of).collect();
        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            inputs.push(bias.clone());
        }
        let (xt, wt) = (self.clone(), weight.clone());
        Ok(Tensor::from_op("conv_transpose1d", vec![b, cout, lout], y, inputs, move |g, _, needs| {
            let (x, w, gw64) = (widen(xt.data()), widen(wt.data()), widen(g));
            let mut gx = needs[0].then(|| vec![0f64; x.len()]);
            let mut gw = needs[1].then(|| vec![0f64; w.len()]);
            for bi in 0..b {
                for co in 0..cout {
                    let gr = &gw64[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
                    for ci in 0..cin {
                        let xoff = (bi * cin + ci) * l;
                        for (k, r) in spans.iter().enumerate() {
                            let widx = (ci * cout + co) * kw + k;
                            let gs = gr[r.start * stride + k - padding..].iter().step_by(stride);
                            let xr = &x[xoff + r.start..xoff + r.end];
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += xr.iter().zip(gs.clone()).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if let Some(gx) = gx.as_mut() {
                                let wv = w[widx];
                                for (o, &gv) in gx[xoff + r.start..xoff + r.end].iter_mut().zip(gs) {
                                    *o += gv * wv;
                                }
                            }
                        }
                    }
                }
            }
            let to_s = |v: Vec<f64>| v.into_iter().map(S::of).collect::<Vec<S>>();
            let mut out = vec![gx.map(to_s), gw.map(to_s)];
            if needs.len() == 3 {
                out.push(needs[2].then(|| bias_grad(g, b, cout, lout)));
            }
            out
        }))
    }
}

fn widen<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.wide()).collect()
}

/// Indices `t < count` whose tap position `t·stride + k − padding` lies in
/// `[0, len)`.
fn span(k: usize, stride: usize, padding: usize, len: usize, count: usize) -> std::ops::Range<usize> {
    let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
    let hi = if len + padding <= k {
        0
    } else {
        count.min((len + padding - k).div_ceil(stride))
    };
    lo.min(hi)..hi
}

fn bias_grad<S: Scalar>(g: &[S], b: usize, c: usize, l: usize) -> Vec<S> {
    let mut gb = vec![0f64; c];
    for bi in 0..b {
        for (co, acc) in gb.iter_mut().enumerate() {
            *acc += g[(bi * c + co) * l..(bi * c + co + 1) * l].iter().map(|v| v.wide()).sum::<f64>();
        }
    }
    gb.into_iter().map(S::of).collect()
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn log_softmax_of_tie_is_minus_ln2() {
        let x = Tensor::<f64>::from_f64(&[0.0, 0.0], &[2]).unwrap();
        let y = x.log_softmax(0).unwrap();
        for v in y.to_vec() {
            assert!((v + std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_normalizes() {
        let x = Tensor::<f64>::from_f64(&[3.0, -1.0, 0.5, 200.0, 0.0, -200.0], &[2, 3]).unwrap();
        let y = x.softmax(1).unwrap();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ly = x.log_softmax(1).unwrap();
        for (a, b) in ly.data().iter().zip(y.data()) {
            assert!((a.exp() - b).abs() < 1e-10);
        }
    }

    #[test]
    fn conv1d_output_length() {
        let x = Tensor::<f32>::zeros(&[1, 1, 8]);
        let w = Tensor::<f32>::zeros(&[1, 1, 3]);
        assert_eq!(x.conv1d(&w, None, 2, 1).unwrap().shape(), &[1, 1, 4]);
    }

    #[test]
    fn conv1d_known_values() {
        // [1,2,3,4] * [1,0,-1], pad 1, stride 1
        let x = Tensor::<f64>::from_f64(&[1., 2., 3., 4.], &[1, 1, 4]).unwrap();
        let w = Tensor::<f64>::from_f64(&[1., 0., -1.], &[1, 1, 3]).unwrap();
        let y = x.conv1d(&w, None, 1, 1).unwrap();
        assert_eq!(y.to_vec(), vec![-2., -2., -2., 3.]);
    }

    #[test]
    fn conv_transpose_upsamples_exactly() {
        let x = Tensor::<f32>::zeros(&[2, 3, 5]);
        let w = Tensor::<f32>::zeros(&[3, 4, 8]);
        assert_eq!(x.conv_transpose1d(&w, None, 4, 2).unwrap().shape(), &[2, 4, 20]);
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_t(y)> for the same weights
        let x = Tensor::<f64>::from_f64(&[0.3, -1.0, 2.0, 0.5, 1.5, -0.2], &[1, 1, 6]).unwrap();
        let w = Tensor::<f64>::from_f64(&[0.5, -0.25, 1.0, 2.0], &[1, 1, 4]).unwrap();
        let cx = x.conv1d(&w, None, 2, 1).unwrap();
        let y = Tensor::<f64>::from_f64(&[1.0, -2.0, 0.7], &[1, 1, 3]).unwrap();
        let ty = y.conv_transpose1d(&w, None, 2, 1).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
