//! Native CPU ops on `(B, T, C, H, W)` tensors for the two layers where
//! composing framework primitives costs mostly overhead: channelwise 3D
//! convolution and training-mode batch norm.

use std::sync::{Arc, Mutex};

use candle_core::{CpuStorage, CustomOp2, CustomOp3, Layout, Shape, Tensor};
use rayon::prelude::*;

use crate::complexity::ConvSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    b: usize,
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
    out: [usize; 3],
}

impl Geometry {
    fn in_plane(&self) -> usize {
        self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.out[1] * self.out[2]
    }

    fn kvol(&self) -> usize {
        self.k[0] * self.k[1] * self.k[2]
    }

    /// Input index along one axis for output index `o` and tap `k`, if inside.
    #[inline]
    fn src(o: usize, k: usize, s: usize, p: usize, len: usize) -> Option<usize> {
        let i = (o * s + k).checked_sub(p)?;
        (i < len).then_some(i)
    }

    /// Calls `f(out_offset_in_plane, in_offset_in_plane)` for every valid
    /// spatial tap `(dh, dw)`.
    #[inline]
    fn spatial(&self, dh: usize, dw: usize, mut f: impl FnMut(usize, usize)) {
        for oh in 0..self.out[1] {
            let Some(ih) = Self::src(oh, dh, self.s[1], self.p[1], self.h) else {
                continue;
            };
            for ow in 0..self.out[2] {
                let Some(iw) = Self::src(ow, dw, self.s[2], self.p[2], self.w) else {
                    continue;
                };
                f(oh * self.out[2] + ow, ih * self.w + iw);
            }
        }
    }
}

struct DepthwiseOp(Geometry);

fn f32_slice<'a>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [f32]> {
    let CpuStorage::F32(v) = s else {
        candle_core::bail!("depthwise conv expects f32 tensors")
    };
    let Some((a, b)) = l.contiguous_offsets() else {
        candle_core::bail!("depthwise conv expects contiguous tensors")
    };
    Ok(&v[a..b])
}

impl CustomOp2 for DepthwiseOp {
    fn name(&self) -> &'static str {
        "depthwise-conv3d"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.0;
        let x = f32_slice(s1, l1)?;
        let wt = f32_slice(s2, l2)?;
        let [to, ho, wo] = g.out;
        let mut y = vec![0f32; g.b * to * g.c * ho * wo];
        let frame = g.c * g.out_plane();
        y.par_chunks_mut(frame).enumerate().for_each(|(bt, out)| {
            let (bi, ot) = (bt / to, bt % to);
            for dt in 0..g.k[0] {
                let Some(it) = Geometry::src(ot, dt, g.s[0], g.p[0], g.t) else {
                    continue;
                };
                for ch in 0..g.c {
                    let xin = &x[((bi * g.t + it) * g.c + ch) * g.in_plane()..][..g.in_plane()];
                    let yo = &mut out[ch * g.out_plane()..][..g.out_plane()];
                    let wk = &wt[ch * g.kvol() + dt * g.k[1] * g.k[2]..];
                    for dh in 0..g.k[1] {
                        for dw in 0..g.k[2] {
                            let wv = wk[dh * g.k[2] + dw];
                            g.spatial(dh, dw, |o, i| yo[o] += wv * xin[i]);
                        }
                    }
                }
            }
        });
        Ok((CpuStorage::F32(y), Shape::from_dims(&[g.b, to, g.c, ho, wo])))
    }

    fn bwd(&self, x: &Tensor, weight: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let g = self.0;
        let xv = x.flatten_all()?.to_vec1::<f32>()?;
        let wv = weight.flatten_all()?.to_vec1::<f32>()?;
        let gv = grad.contiguous()?.flatten_all()?.to_vec1::<f32>()?;
        let to = g.out[0];
        let sample = g.t * g.c * g.in_plane();
        let mut gx = vec![0f32; xv.len()];
        let gw = gx
            .par_chunks_mut(sample)
            .enumerate()
            .map(|(bi, gxb)| {
                let mut gw = vec![0f32; wv.len()];
                for ot in 0..to {
                    for dt in 0..g.k[0] {
                        let Some(it) = Geometry::src(ot, dt, g.s[0], g.p[0], g.t) else {
                            continue;
                        };
                        for ch in 0..g.c {
                            let xo = ((bi * g.t + it) * g.c + ch) * g.in_plane();
                            let xin = &xv[xo..][..g.in_plane()];
                            let gxin = &mut gxb[(it * g.c + ch) * g.in_plane()..][..g.in_plane()];
                            let go = &gv[((bi * to + ot) * g.c + ch) * g.out_plane()..][..g.out_plane()];
                            let base = ch * g.kvol() + dt * g.k[1] * g.k[2];
                            for dh in 0..g.k[1] {
                                for dw in 0..g.k[2] {
                                    let wi = base + dh * g.k[2] + dw;
                                    let wk = wv[wi];
                                    let mut acc = 0f32;
                                    g.spatial(dh, dw, |o, i| {
                                        gxin[i] += wk * go[o];
                                        acc += go[o] * xin[i];
                                    });
                                    gw[wi] += acc;
                                }
                            }
                        }
                    }
                }
                gw
            })
            .reduce(
                || vec![0f32; wv.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let gx = Tensor::from_vec(gx, x.dims(), x.device())?;
        let gw = Tensor::from_vec(gw, weight.dims(), weight.device())?;
        Ok((Some(gx), Some(gw)))
    }
}

/// Channelwise conv of `x: (B, T, C, H, W)` with `weight: (C, 1, kt, kh, kw)`.
pub fn depthwise_conv3d(x: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (b, t, c, h, w) = x.dims5()?;
    if !spec.is_depthwise() || c != spec.in_channels {
        return Err(Error::shape(format!("depthwise conv `{}`", spec.name), spec.in_channels, c));
    }
    if weight.dims() != spec.weight_shape() {
        return Err(Error::shape(format!("depthwise conv `{}` weight", spec.name), spec.weight_shape(), weight.dims()));
    }
    let geom = Geometry {
        b,
        t,
        c,
        h,
        w,
        k: spec.kernel,
        s: spec.stride,
        p: spec.padding,
        out: spec.output_extent([t, h, w])?,
    };
    let x = x.contiguous()?;
    let weight = weight.contiguous()?;
    Ok(x.apply_op2(&weight, DepthwiseOp(geom))?)
}

struct BatchNormOp {
    c: usize,
    /// `B·T` and `H·W`
    outer: usize,
    plane: usize,
    eps: f64,
    stats: Arc<Mutex<Option<(Vec<f32>, Vec<f32>)>>>,
}

impl BatchNormOp {
    fn n(&self) -> usize {
        self.outer * self.plane
    }

    /// Per-channel mean and biased variance, accumulated in f64.
    fn moments(&self, x: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let mut sum = vec![0f64; self.c];
        let mut sq = vec![0f64; self.c];
        for (k, plane) in x.chunks(self.plane).enumerate() {
            let ch = k % self.c;
            for &v in plane {
                sum[ch] += v as f64;
                sq[ch] += (v as f64) * (v as f64);
            }
        }
        let n = self.n() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0) as f32).collect();
        (mean.into_iter().map(|m| m as f32).collect(), var)
    }
}

impl CustomOp3 for BatchNormOp {
    fn name(&self) -> &'static str {
        "batch-norm-train"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let x = f32_slice(s1, l1)?;
        let gamma = f32_slice(s2, l2)?;
        let beta = f32_slice(s3, l3)?;
        let (mean, var) = self.moments(x);
        let scale: Vec<f32> = (0..self.c)
            .map(|ch| gamma[ch] / (var[ch] as f64 + self.eps).sqrt() as f32)
            .collect();
        let mut y = vec![0f32; x.len()];
        for (k, (yo, xi)) in y.chunks_mut(self.plane).zip(x.chunks(self.plane)).enumerate() {
            let ch = k % self.c;
            let (m, s, b) = (mean[ch], scale[ch], beta[ch]);
            for (o, &v) in yo.iter_mut().zip(xi) {
                *o = (v - m) * s + b;
            }
        }
        *self.stats.lock().unwrap_or_else(|e| e.into_inner()) = Some((mean, var));
        Ok((CpuStorage::F32(y), l1.shape().clone()))
    }

    fn bwd(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        _beta: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
        let xv = x.flatten_all()?.to_vec1::<f32>()?;
        let gm = gamma.to_vec1::<f32>()?;
        let gv = grad.contiguous()?.flatten_all()?.to_vec1::<f32>()?;
        let (mean, var) = self.moments(&xv);
        let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v as f64 + self.eps).sqrt()).collect();
        let mut dbeta = vec![0f64; self.c];
        let mut dgamma = vec![0f64; self.c];
        for (k, (gp, xp)) in gv.chunks(self.plane).zip(xv.chunks(self.plane)).enumerate() {
            let ch = k % self.c;
            for (&g, &v) in gp.iter().zip(xp) {
                dbeta[ch] += g as f64;
                dgamma[ch] += g as f64 * (v - mean[ch]) as f64 * inv[ch];
            }
        }
        let n = self.n() as f64;
        let mut dx = vec![0f32; xv.len()];
        for (k, ((dp, gp), xp)) in dx
            .chunks_mut(self.plane)
            .zip(gv.chunks(self.plane))
            .zip(xv.chunks(self.plane))
            .enumerate()
        {
            let ch = k % self.c;
            let a = gm[ch] as f64 * inv[ch];
            let (mb, mg) = (dbeta[ch] / n, dgamma[ch] / n);
            for ((d, &g), &v) in dp.iter_mut().zip(gp).zip(xp) {
                let xhat = (v - mean[ch]) as f64 * inv[ch];
                *d = (a * (g as f64 - mb - xhat * mg)) as f32;
            }
        }
        let dev = x.device();
        let to_t = |v: Vec<f64>| Tensor::from_vec(v.into_iter().map(|x| x as f32).collect::<Vec<_>>(), self.c, dev);
        Ok((
            Some(Tensor::from_vec(dx, x.dims(), dev)?),
            Some(to_t(dgamma)?),
            Some(to_t(dbeta)?),
        ))
    }
}

/// Training-mode batch norm over channel dim 2 of `(B, T, C, H, W)`.
/// Returns the output and the batch `(mean, biased variance)`.
pub fn batch_norm_train(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    let (b, t, c, h, w) = x.dims5()?;
    let stats = Arc::new(Mutex::new(None));
    let op = BatchNormOp {
        c,
        outer: b * t,
        plane: h * w,
        eps,
        stats: stats.clone(),
    };
    let y = x.contiguous()?.apply_op3(&gamma.contiguous()?, &beta.contiguous()?, op)?;
    let (mean, var) = stats
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .take()
        .ok_or_else(|| Error::Config("batch norm produced no statistics".into()))?;
    Ok((y, mean, var))
}
