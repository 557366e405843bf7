//! Parameter storage and the handful of 3D building blocks the networks need.
//!
//! Activations are kept as `(B, T, C, H, W)` internally so that every frame
//! can be handed to a 2D convolution by a free reshape. A 3D convolution is
//! the sum over temporal kernel offsets of 2D convolutions. Depthwise
//! convolutions are written out as shifted elementwise products, which is far
//! cheaper than per-channel grouped 2D convolutions on CPU.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::complexity::{ConvSpec, LinearSpec};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Names ending in these suffixes are running statistics, not trainable.
const BUFFER_SUFFIXES: [&str; 2] = [".running_mean", ".running_var"];

pub fn is_buffer(name: &str) -> bool {
    BUFFER_SUFFIXES.iter().any(|s| name.ends_with(s))
}

pub fn is_head(name: &str) -> bool {
    name.starts_with("head.")
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a, stable across platforms and releases
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Named tensors of one network, in a stable (sorted) order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            vars: BTreeMap::new(),
            seed,
        }
    }

    fn insert(&mut self, name: &str, var: Var) -> Result<()> {
        if self.vars.insert(name.to_string(), var).is_some() {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        Ok(())
    }

    /// Gaussian init, seeded by the store seed and the parameter name only.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(name));
        let dist = Normal::new(0.0f32, std as f32).map_err(|e| Error::Config(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &Device::Cpu)?)?;
        self.insert(name, var)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        let t = (Tensor::ones(shape, DType::F32, &Device::Cpu)? * value)?;
        self.insert(name, Var::from_tensor(&t)?)
    }

    pub fn get(&self, name: &str) -> Result<&Var> {
        self.vars.get(name).ok_or_else(|| Error::Lookup {
            kind: "parameter",
            name: name.to_string(),
        })
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        Ok(self.get(name)?.as_tensor())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Everything the optimizer updates (running statistics excluded).
    pub fn trainable(&self) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect()
    }

    pub fn trainable_count(&self) -> u64 {
        self.vars
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(_, v)| v.elem_count() as u64)
            .sum()
    }

    /// Overwrite a stored tensor in place; shapes must agree.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self.get(name)?;
        if var.dims() != value.dims() {
            return Err(Error::shape(name, var.dims(), value.dims()));
        }
        var.set(&value.to_dtype(DType::F32)?)?;
        Ok(())
    }

    /// [`tensor_checksum`] of every tensor whose name passes `filter`.
    pub fn checksum(&self, filter: impl Fn(&str) -> bool) -> Result<String> {
        tensor_checksum(
            self.vars
                .iter()
                .filter(|(n, _)| filter(n))
                .map(|(n, v)| (n.as_str(), v.as_tensor())),
        )
    }

    pub fn trunk_checksum(&self) -> Result<String> {
        self.checksum(|n| !is_head(n))
    }

    // ---- parameter groups for the building blocks ----

    /// Kaiming-normal conv weight (fan-in).
    pub fn add_conv(&mut self, spec: &ConvSpec) -> Result<()> {
        spec.validate()?;
        let shape = spec.weight_shape();
        let fan_in = shape[1] * spec.kernel_volume();
        self.normal(&format!("{}.weight", spec.name), &shape, (2.0 / fan_in as f64).sqrt())
    }

    pub fn add_bn(&mut self, prefix: &str, channels: usize) -> Result<()> {
        self.constant(&format!("{prefix}.weight"), &[channels], 1.0)?;
        self.constant(&format!("{prefix}.bias"), &[channels], 0.0)?;
        self.constant(&format!("{prefix}.running_mean"), &[channels], 0.0)?;
        self.constant(&format!("{prefix}.running_var"), &[channels], 1.0)
    }

    /// Conv followed by batch norm named `{conv}.bn`.
    pub fn add_conv_bn(&mut self, spec: &ConvSpec) -> Result<()> {
        self.add_conv(spec)?;
        self.add_bn(&format!("{}.bn", spec.name), spec.out_channels)
    }

    pub fn add_linear(&mut self, spec: &LinearSpec) -> Result<()> {
        self.normal(
            &format!("{}.weight", spec.name),
            &[spec.out_features, spec.in_features],
            0.01,
        )?;
        self.constant(&format!("{}.bias", spec.name), &[spec.out_features], 0.0)
    }
}

/// SHA-256 over `(name, shape, little-endian f32 data)` in iteration order.
pub fn tensor_checksum<'a>(items: impl Iterator<Item = (&'a str, &'a Tensor)>) -> Result<String> {
    let mut hasher = Sha256::new();
    for (name, t) in items {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((t.dims().len() as u64).to_le_bytes());
        for &d in t.dims() {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()? {
            hasher.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// `(B, C, T, H, W)` to the internal `(B, T, C, H, W)`.
pub fn to_internal(x: &Tensor) -> Result<Tensor> {
    Ok(x.permute((0, 2, 1, 3, 4))?.contiguous()?)
}

/// Every `step`-th entry along `dim`, starting at `start`, `count` entries.
pub(crate) fn take_strided(x: &Tensor, dim: usize, start: usize, step: usize, count: usize) -> Result<Tensor> {
    if step == 1 {
        return Ok(x.narrow(dim, start, count)?);
    }
    let idx: Vec<u32> = (0..count).map(|i| (start + i * step) as u32).collect();
    let idx = Tensor::from_vec(idx, count, x.device())?;
    Ok(x.contiguous()?.index_select(&idx, dim)?)
}

fn pad(x: &Tensor, dim: usize, p: usize) -> Result<Tensor> {
    if p == 0 {
        Ok(x.clone())
    } else {
        Ok(x.pad_with_zeros(dim, p, p)?)
    }
}

/// 3D convolution (no bias) on `(B, T, C, H, W)`.
pub fn conv3d(x: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (b, t, c, h, w) = x.dims5()?;
    if c != spec.in_channels {
        return Err(Error::shape(
            format!("conv `{}` input channels", spec.name),
            spec.in_channels,
            c,
        ));
    }
    if spec.is_depthwise() {
        return crate::kernels::depthwise_conv3d(x, weight, spec);
    }
    let [t_out, h_out, w_out] = spec.output_extent([t, h, w])?;
    let xp = pad(x, 1, spec.padding[0])?;
    let mut acc: Option<Tensor> = None;
    for dt in 0..spec.kernel[0] {
        let frames = take_strided(&xp, 1, dt, spec.stride[0], t_out)?.reshape((b * t_out, c, h, w))?;
        let k = weight.narrow(2, dt, 1)?.squeeze(2)?.contiguous()?;
        let y = frames.conv2d(&k, spec.padding[1], spec.stride[1], 1, 1)?;
        acc = Some(match acc {
            None => y,
            Some(a) => (a + y)?,
        });
    }
    let y = acc.ok_or_else(|| Error::Config("empty kernel".into()))?;
    Ok(y.reshape((b, t_out, spec.out_channels, h_out, w_out))?)
}

/// Batch norm over channel dim 2 of `(B, T, C, H, W)`. In training mode batch
/// statistics are used and the running estimates updated.
pub fn batch_norm(x: &Tensor, store: &ParamStore, prefix: &str, train: bool) -> Result<Tensor> {
    let c = x.dim(2)?;
    let gamma = store.tensor(&format!("{prefix}.weight"))?;
    let beta = store.tensor(&format!("{prefix}.bias"))?;
    let rm = store.get(&format!("{prefix}.running_mean"))?;
    let rv = store.get(&format!("{prefix}.running_var"))?;

    if !train {
        let view = |t: &Tensor| t.reshape((1, 1, c, 1, 1));
        let scale = (view(gamma)? / (view(rv.as_tensor())? + BN_EPS)?.sqrt()?)?;
        let shift = (view(beta)? - (view(rm.as_tensor())? * &scale)?)?;
        return Ok(x.broadcast_mul(&scale)?.broadcast_add(&shift)?);
    }

    let (y, mean, var) = crate::kernels::batch_norm_train(x, gamma, beta, BN_EPS)?;
    let n = x.elem_count() / c;
    let unbiased = if n > 1 { n as f32 / (n - 1) as f32 } else { 1.0 };
    let m = BN_MOMENTUM as f32;
    let blend = |run: &Var, batch: &[f32], k: f32| -> Result<()> {
        let old = run.as_tensor().to_vec1::<f32>()?;
        let new: Vec<f32> = old.iter().zip(batch).map(|(o, v)| (1.0 - m) * o + m * k * v).collect();
        run.set(&Tensor::from_vec(new, c, x.device())?)?;
        Ok(())
    };
    blend(rm, &mean, 1.0)?;
    blend(rv, &var, unbiased)?;
    Ok(y)
}

/// Conv, batch norm and optionally ReLU, using parameters named after `spec`.
pub fn conv_bn(x: &Tensor, store: &ParamStore, spec: &ConvSpec, relu: bool, train: bool) -> Result<Tensor> {
    let y = conv3d(x, store.tensor(&format!("{}.weight", spec.name))?, spec)?;
    let y = batch_norm(&y, store, &format!("{}.bn", spec.name), train)?;
    if relu {
        Ok(y.relu()?)
    } else {
        Ok(y)
    }
}

/// Spatial max pool `(1, k, k)`, stride `(1, s, s)`, zero padding `p`.
/// Zero padding equals the usual `-inf` padding because inputs follow a ReLU.
pub fn max_pool_spatial(x: &Tensor, k: usize, s: usize, p: usize) -> Result<Tensor> {
    let (_, t, _, h, w) = x.dims5()?;
    let [_, h_out, w_out] = crate::complexity::pool_extent([t, h, w], k, s, p)?;
    let xp = pad(&pad(x, 3, p)?, 4, p)?;
    let mut out: Option<Tensor> = None;
    for dh in 0..k {
        let xh = take_strided(&xp, 3, dh, s, h_out)?;
        for dw in 0..k {
            let v = take_strided(&xh, 4, dw, s, w_out)?;
            out = Some(match out.take() {
                None => v,
                Some(o) => o.maximum(&v)?,
            });
        }
    }
    out.ok_or_else(|| Error::Config("empty pool kernel".into()))
}

/// Mean over `(T, H, W)`: `(B, T, C, H, W)` to `(B, C)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (b, _, c, _, _) = x.dims5()?;
    Ok(x.mean_keepdim([1usize, 3, 4].as_slice())?.reshape((b, c))?)
}

pub fn linear(x: &Tensor, store: &ParamStore, spec: &LinearSpec) -> Result<Tensor> {
    let w = store.tensor(&format!("{}.weight", spec.name))?;
    let b = store.tensor(&format!("{}.bias", spec.name))?;
    Ok(x.matmul(&w.t()?)?.broadcast_add(b)?)
}

/// Numerically stable binary cross-entropy on logits, averaged over all cells.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let relu = logits.relu()?;
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let loss = ((relu - (logits * targets)?)? + softplus)?;
    Ok(loss.mean_all()?)
}

pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let logp = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok(candle_nn::loss::nll(&logp, targets)?)
}
