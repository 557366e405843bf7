//! X2D basis network and its expansion into X3D.
//!
//! Stem: `1×3×3` conv with spatial stride 2, then a channelwise `k×1×1`
//! temporal conv. Four residual stages of bottleneck blocks
//! (`1×1×1` → channelwise `3×3×3` → `1×1×1`), the first block of each stage
//! subsampling space by 2 and doubling width. Global average pool, then a
//! linear head. No layer ever strides in time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::complexity::{ConvSpec, Extent, LinearSpec, NetworkCost};
use crate::error::{Error, Result};
use crate::layers::{self, ParamStore};
use crate::network::{check_input, VideoNetwork};
use crate::task::HeadKind;

const PRESETS_JSON: &str = include_str!("../assets/x3d_presets.json");

/// `(γ_T, γ_t, γ_s, γ_w, γ_b, γ_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFactors {
    #[serde(rename = "gamma_T")]
    pub gamma_frame: f64,
    #[serde(rename = "gamma_t")]
    pub gamma_t: f64,
    pub gamma_s: f64,
    pub gamma_w: f64,
    pub gamma_b: f64,
    pub gamma_d: f64,
}

impl Default for ExpansionFactors {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Display for ExpansionFactors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(γ_T={:.4}, γ_t={:.4}, γ_s={:.4}, γ_w={:.4}, γ_b={:.4}, γ_d={:.4})",
            self.gamma_frame, self.gamma_t, self.gamma_s, self.gamma_w, self.gamma_b, self.gamma_d
        )
    }
}

impl ExpansionFactors {
    pub const IDENTITY: Self = Self {
        gamma_frame: 1.0,
        gamma_t: 1.0,
        gamma_s: 1.0,
        gamma_w: 1.0,
        gamma_b: 1.0,
        gamma_d: 1.0,
    };

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.gamma_frame,
            self.gamma_t,
            self.gamma_s,
            self.gamma_w,
            self.gamma_b,
            self.gamma_d,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            gamma_frame: a[0],
            gamma_t: a[1],
            gamma_s: a[2],
            gamma_w: a[3],
            gamma_b: a[4],
            gamma_d: a[5],
        }
    }

    /// γ_T only has to be positive: X-Fast raises the frame rate `1/γ_T`,
    /// which pushes γ_T below 1. The other factors are at least 1.
    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite expansion factor in {self}")));
        }
        if self.gamma_frame <= 0.0 {
            return Err(Error::Config(format!("γ_T must be positive, got {}", self.gamma_frame)));
        }
        if a[1..].iter().any(|&v| v < 1.0) {
            return Err(Error::Config(format!("expansion factors below 1 in {self}")));
        }
        Ok(())
    }

    /// Sampling rate relative to the source video, `1/γ_T`.
    pub fn frame_rate(&self) -> f64 {
        1.0 / self.gamma_frame
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct X3dBasis {
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    pub stage_depths: Vec<usize>,
    pub spatial_size: usize,
    #[serde(default = "default_stem_kt")]
    pub stem_temporal_kernel: usize,
}

fn default_stem_kt() -> usize {
    5
}

impl Default for X3dBasis {
    fn default() -> Self {
        Self {
            stem_width: 24,
            stage_widths: vec![24, 48, 96, 192],
            stage_depths: vec![1, 2, 5, 3],
            spatial_size: 160,
            stem_temporal_kernel: 5,
        }
    }
}

impl X3dBasis {
    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.stage_depths.len() {
            return Err(Error::Config("basis needs one width and one depth per stage".into()));
        }
        if self.stem_width == 0
            || self.spatial_size == 0
            || self.stem_temporal_kernel == 0
            || self.stage_widths.contains(&0)
            || self.stage_depths.contains(&0)
        {
            return Err(Error::Config("basis widths, depths and size must be positive".into()));
        }
        if let Some(w) = self.stage_widths.windows(2).find(|w| w[1] != 2 * w[0]) {
            return Err(Error::Config(format!(
                "basis stage widths must double per stage, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(())
    }
}

/// Input `(frames, size)` supplied by the data pipeline, overriding the
/// factor-derived input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSize {
    pub frames: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X3dConfig {
    #[serde(default)]
    pub basis: X3dBasis,
    pub factors: ExpansionFactors,
    pub num_classes: usize,
    pub head: HeadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSize>,
}

pub fn round_pos(v: f64) -> usize {
    (v.round() as usize).max(1)
}

pub fn expanded_depth(gamma_d: f64, base: usize) -> usize {
    // the epsilon keeps γ_d = 2.2 on depth 5 at 11, not 12
    ((gamma_d * base as f64 - 1e-9).ceil() as usize).max(1)
}

impl X3dConfig {
    pub fn new(factors: ExpansionFactors, num_classes: usize, head: HeadKind) -> Self {
        Self {
            basis: X3dBasis::default(),
            factors,
            num_classes,
            head,
            input: None,
        }
    }

    pub fn with_input(mut self, frames: usize, size: usize) -> Self {
        self.input = Some(InputSize { frames, size });
        self
    }

    /// `(T, S)` the network consumes.
    pub fn input_size(&self) -> (usize, usize) {
        match self.input {
            Some(i) => (i.frames, i.size),
            None => (
                round_pos(self.factors.gamma_t),
                round_pos(self.factors.gamma_s * self.basis.spatial_size as f64),
            ),
        }
    }

    pub fn stem_width(&self) -> usize {
        round_pos(self.factors.gamma_w * self.basis.stem_width as f64)
    }

    pub fn stage_widths(&self) -> Vec<usize> {
        self.basis
            .stage_widths
            .iter()
            .map(|&w| round_pos(self.factors.gamma_w * w as f64))
            .collect()
    }

    pub fn inner_widths(&self) -> Vec<usize> {
        self.basis
            .stage_widths
            .iter()
            .map(|&w| round_pos(self.factors.gamma_b * self.factors.gamma_w * w as f64))
            .collect()
    }

    pub fn stage_depths(&self) -> Vec<usize> {
        self.basis
            .stage_depths
            .iter()
            .map(|&d| expanded_depth(self.factors.gamma_d, d))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.factors.validate()?;
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let (t, s) = self.input_size();
        if t == 0 || s == 0 {
            return Err(Error::Config(format!("input size T={t}, S={s} is empty")));
        }
        Ok(())
    }

    pub fn blueprint(&self) -> Result<X3dBlueprint> {
        self.validate()?;
        let stem_w = self.stem_width();
        let stem_xy = ConvSpec::new("stem.conv_xy", 3, stem_w, [1, 3, 3]).stride([1, 2, 2]);
        let stem_t = ConvSpec::new("stem.conv_t", stem_w, stem_w, [self.basis.stem_temporal_kernel, 1, 1]).depthwise();
        let widths = self.stage_widths();
        let inner = self.inner_widths();
        let depths = self.stage_depths();
        let mut stages = Vec::new();
        let mut in_w = stem_w;
        for (s, ((&w, &wi), &d)) in widths.iter().zip(&inner).zip(&depths).enumerate() {
            let mut blocks = Vec::new();
            for j in 0..d {
                let p = format!("s{}.b{j}", s + 1);
                let stride = if j == 0 { 2 } else { 1 };
                let shortcut = (j == 0 && (in_w != w || stride != 1)).then(|| {
                    ConvSpec::new(format!("{p}.shortcut"), in_w, w, [1, 1, 1]).stride([1, stride, stride])
                });
                blocks.push(BottleneckSpec {
                    a: ConvSpec::new(format!("{p}.a"), in_w, wi, [1, 1, 1]),
                    b: ConvSpec::new(format!("{p}.b"), wi, wi, [3, 3, 3])
                        .stride([1, stride, stride])
                        .depthwise(),
                    c: ConvSpec::new(format!("{p}.c"), wi, w, [1, 1, 1]),
                    shortcut,
                });
                in_w = w;
            }
            stages.push(blocks);
        }
        let (t, s) = self.input_size();
        Ok(X3dBlueprint {
            input: [t, s, s],
            stem_xy,
            stem_t,
            stages,
            head: LinearSpec {
                name: "head".into(),
                in_features: in_w,
                out_features: self.num_classes,
            },
        })
    }

    /// Complexity `C(X)` of this configuration in FLOPs.
    pub fn flops(&self) -> Result<u64> {
        Ok(self.blueprint()?.cost()?.flops())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckSpec {
    pub a: ConvSpec,
    pub b: ConvSpec,
    pub c: ConvSpec,
    pub shortcut: Option<ConvSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct X3dBlueprint {
    /// `(T, H, W)`
    pub input: Extent,
    pub stem_xy: ConvSpec,
    pub stem_t: ConvSpec,
    pub stages: Vec<Vec<BottleneckSpec>>,
    pub head: LinearSpec,
}

impl X3dBlueprint {
    /// Layer-by-layer cost, plus the activation extent after the stem and
    /// after every stage.
    pub fn trace(&self) -> Result<(NetworkCost, Vec<[usize; 4]>)> {
        let mut cost = NetworkCost::default();
        let mut shapes = Vec::new();
        let mut e = cost.conv(&self.stem_xy, self.input)?;
        e = cost.conv(&self.stem_t, e)?;
        cost.norm("stem.conv_t.bn", self.stem_t.out_channels, e);
        shapes.push([self.stem_t.out_channels, e[0], e[1], e[2]]);
        for stage in &self.stages {
            for blk in stage {
                let input = e;
                for spec in [&blk.a, &blk.b, &blk.c] {
                    e = cost.conv(spec, e)?;
                    cost.norm(&format!("{}.bn", spec.name), spec.out_channels, e);
                }
                if let Some(sc) = &blk.shortcut {
                    let se = cost.conv(sc, input)?;
                    cost.norm(&format!("{}.bn", sc.name), sc.out_channels, se);
                }
            }
            let w = stage.last().map(|b| b.c.out_channels).unwrap_or(0);
            shapes.push([w, e[0], e[1], e[2]]);
        }
        cost.linear(&self.head);
        Ok((cost, shapes))
    }

    pub fn cost(&self) -> Result<NetworkCost> {
        Ok(self.trace()?.0)
    }
}

pub struct X3dNet {
    config: X3dConfig,
    blueprint: X3dBlueprint,
    store: ParamStore,
}

impl X3dNet {
    pub fn new(config: X3dConfig, seed: u64) -> Result<Self> {
        let blueprint = config.blueprint()?;
        // reject inputs too small for the layer stack before allocating
        blueprint.trace()?;
        let mut store = ParamStore::new(seed);
        store.add_conv(&blueprint.stem_xy)?;
        store.add_conv_bn(&blueprint.stem_t)?;
        for blk in blueprint.stages.iter().flatten() {
            store.add_conv_bn(&blk.a)?;
            store.add_conv_bn(&blk.b)?;
            store.add_conv_bn(&blk.c)?;
            if let Some(sc) = &blk.shortcut {
                store.add_conv_bn(sc)?;
            }
        }
        store.add_linear(&blueprint.head)?;
        Ok(Self {
            config,
            blueprint,
            store,
        })
    }

    pub fn config(&self) -> &X3dConfig {
        &self.config
    }

    pub fn blueprint(&self) -> &X3dBlueprint {
        &self.blueprint
    }

    /// Pooled features `(B, C)` and the per-stage activations `(B, T, C, H, W)`.
    pub fn features(&self, x: &Tensor, train: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let [_, t, h, w] = self.input_shape();
        check_input(x, [3, t, h, w], "X3D input")?;
        let bp = &self.blueprint;
        let st = &self.store;
        let x = layers::to_internal(x)?;
        let x = layers::conv3d(&x, st.tensor("stem.conv_xy.weight")?, &bp.stem_xy)?;
        let mut x = layers::conv_bn(&x, st, &bp.stem_t, true, train)?;
        let mut acts = vec![x.clone()];
        for stage in &bp.stages {
            for blk in stage {
                let y = layers::conv_bn(&x, st, &blk.a, true, train)?;
                let y = layers::conv_bn(&y, st, &blk.b, true, train)?;
                let y = layers::conv_bn(&y, st, &blk.c, false, train)?;
                let skip = match &blk.shortcut {
                    Some(sc) => layers::conv_bn(&x, st, sc, false, train)?,
                    None => x.clone(),
                };
                x = (y + skip)?.relu()?;
            }
            acts.push(x.clone());
        }
        Ok((layers::global_avg_pool(&x)?, acts))
    }
}

impl VideoNetwork for X3dNet {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (feat, _) = self.features(x, train)?;
        layers::linear(&feat, &self.store, &self.blueprint.head)
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn input_shape(&self) -> [usize; 4] {
        let [t, h, w] = self.blueprint.input;
        [3, t, h, w]
    }

    fn feature_width(&self) -> usize {
        self.blueprint.head.in_features
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn cost(&self) -> Result<NetworkCost> {
        self.blueprint.cost()
    }
}

/// The single-frame basis network with identity factors.
pub fn instantiate_x2d(basis: X3dBasis, num_classes: usize, head: HeadKind, seed: u64) -> Result<X3dNet> {
    let config = X3dConfig {
        basis,
        factors: ExpansionFactors::IDENTITY,
        num_classes,
        head,
        input: None,
    };
    X3dNet::new(config, seed)
}

pub fn expand(config: X3dConfig, seed: u64) -> Result<X3dNet> {
    X3dNet::new(config, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresetFile {
    #[serde(default)]
    pub note: String,
    pub basis: X3dBasis,
    pub presets: BTreeMap<String, ExpansionFactors>,
}

impl PresetFile {
    pub fn standard() -> Self {
        serde_json::from_str(PRESETS_JSON).expect("bundled preset file is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn config(&self, name: &str, num_classes: usize, head: HeadKind) -> Result<X3dConfig> {
        let factors = *self.presets.get(&name.to_ascii_lowercase()).ok_or_else(|| Error::Lookup {
            kind: "X3D preset",
            name: name.to_string(),
        })?;
        Ok(X3dConfig {
            basis: self.basis.clone(),
            factors,
            num_classes,
            head,
            input: None,
        })
    }
}

/// `x3d-s` or `x3d-m` from the bundled preset file.
pub fn preset(name: &str, num_classes: usize, head: HeadKind) -> Result<X3dConfig> {
    PresetFile::standard().config(name, num_classes, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_rounding() {
        let mut cfg = X3dConfig::new(ExpansionFactors::IDENTITY, 16, HeadKind::Multiclass);
        cfg.factors.gamma_d = 2.0;
        assert_eq!(cfg.stage_depths(), vec![2, 4, 10, 6]);
        cfg.factors.gamma_d = 2.2;
        assert_eq!(cfg.stage_depths(), vec![3, 5, 11, 7]);
        cfg.factors.gamma_w = 2.0;
        assert_eq!(cfg.stem_width(), 48);
    }

    #[test]
    fn basis_shapes() {
        let cfg = X3dConfig::new(ExpansionFactors::IDENTITY, 16, HeadKind::Multiclass);
        let (_, shapes) = cfg.blueprint().unwrap().trace().unwrap();
        assert_eq!(shapes[0], [24, 1, 80, 80]);
        assert_eq!(shapes[4], [192, 1, 5, 5]);
        assert!(shapes.iter().all(|s| s[1] == 1));
    }

    #[test]
    fn presets_ordered() {
        let s = preset("x3d-s", 16, HeadKind::Multiclass).unwrap();
        let m = preset("X3D-m", 16, HeadKind::Multiclass).unwrap();
        let (cs, cm) = (s.blueprint().unwrap().cost().unwrap(), m.blueprint().unwrap().cost().unwrap());
        assert!(cm.flops() > cs.flops());
        assert!(cm.params() > cs.params());
        assert!(preset("x3d-xl", 16, HeadKind::Multiclass).is_err());
    }

    #[test]
    fn rejects_bad_factors() {
        let mut f = ExpansionFactors::IDENTITY;
        f.gamma_w = 0.5;
        assert!(f.validate().is_err());
        f = ExpansionFactors::IDENTITY;
        f.gamma_frame = 0.25;
        assert!(f.validate().is_ok());
        f.gamma_d = f64::NAN;
        assert!(f.validate().is_err());
    }

    #[test]
    fn param_store_matches_cost() {
        let cfg = X3dConfig::new(ExpansionFactors::IDENTITY, 16, HeadKind::Multiclass).with_input(2, 32);
        let net = X3dNet::new(cfg, 0).unwrap();
        assert_eq!(net.store().trainable_count(), net.cost().unwrap().params());
    }
}
