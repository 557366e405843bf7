//! Two-pathway SlowFast network.
//!
//! Both pathways are ResNet bottleneck trunks over the same clip. The Slow
//! pathway sees every τ-th frame at full width; the Fast pathway sees frames
//! at stride `max(1, ⌊τ/α⌋)` with β of the width. After pool₁ and after each
//! residual stage a lateral `5×1×1` conv with temporal stride equal to the
//! frame ratio maps Fast features onto the Slow clock and is concatenated to
//! the Slow channels. The Fast trunk never strides in time.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::complexity::{pool_extent, ConvSpec, Extent, LinearSpec, NetworkCost};
use crate::error::{Error, Result};
use crate::layers::{self, ParamStore};
use crate::network::{check_input, VideoNetwork};
use crate::task::HeadKind;

pub const NUM_STAGES: usize = 4;
/// Attachment points: pool₁ and the four residual stages.
pub const NUM_LATERALS: usize = NUM_STAGES + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Depth {
    R50,
    R101,
}

impl Depth {
    pub fn blocks(self) -> [usize; NUM_STAGES] {
        match self {
            Depth::R50 => [3, 4, 6, 3],
            Depth::R101 => [3, 4, 23, 3],
        }
    }

    pub fn from_layers(n: usize) -> Result<Self> {
        match n {
            50 => Ok(Depth::R50),
            101 => Ok(Depth::R101),
            _ => Err(Error::Config(format!("trunk depth must be 50 or 101, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastConfig {
    /// Frames seen by the Slow pathway, `T`.
    pub slow_frames: usize,
    pub tau: usize,
    pub alpha: usize,
    /// `1/β`, the channel reduction ratio.
    pub inverse_beta: usize,
    pub depth: Depth,
    pub num_classes: usize,
    pub head: HeadKind,
    #[serde(default = "d_base_width")]
    pub base_width: usize,
    #[serde(default = "d_input_frames")]
    pub input_frames: usize,
    #[serde(default = "d_input_size")]
    pub input_size: usize,
    #[serde(default = "d_lateral_kernel")]
    pub lateral_kernel: usize,
    /// Lateral output width is `round(lateral_ratio · β · slow_width)`.
    #[serde(default = "d_lateral_ratio")]
    pub lateral_ratio: f64,
}

fn d_base_width() -> usize {
    64
}
fn d_input_frames() -> usize {
    32
}
fn d_input_size() -> usize {
    256
}
fn d_lateral_kernel() -> usize {
    5
}
fn d_lateral_ratio() -> f64 {
    2.0
}

impl SlowFastConfig {
    /// T=16, τ=2, α=4, β=1/8 on 32 frames of 256².
    pub fn new(depth: Depth, num_classes: usize, head: HeadKind) -> Self {
        Self {
            slow_frames: 16,
            tau: 2,
            alpha: 4,
            inverse_beta: 8,
            depth,
            num_classes,
            head,
            base_width: d_base_width(),
            input_frames: d_input_frames(),
            input_size: d_input_size(),
            lateral_kernel: d_lateral_kernel(),
            lateral_ratio: d_lateral_ratio(),
        }
    }

    /// Sets `β`; `1/β` must be an integer of at least 2.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("β must lie in (0, 1), got {beta}")));
        }
        let inv = 1.0 / beta;
        if (inv - inv.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("1/β = {inv} is not an integer")));
        }
        self.inverse_beta = inv.round() as usize;
        Ok(self)
    }

    /// Changes the clip size; `T` follows as `frames / τ`.
    pub fn with_input(mut self, frames: usize, size: usize) -> Self {
        self.input_frames = frames;
        self.input_size = size;
        self.slow_frames = frames / self.tau.max(1);
        self
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.inverse_beta as f64
    }

    pub fn fast_stride(&self) -> usize {
        (self.tau / self.alpha.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.alpha == 0 {
            return Err(Error::Config("τ and α must be at least 1".into()));
        }
        if self.inverse_beta < 2 {
            return Err(Error::Config(format!(
                "1/β must be an integer of at least 2, got {}",
                self.inverse_beta
            )));
        }
        if self.num_classes == 0 || self.base_width == 0 || self.input_size == 0 || self.lateral_kernel == 0 {
            return Err(Error::Config("widths, sizes and num_classes must be positive".into()));
        }
        if !(self.lateral_ratio > 0.0 && self.lateral_ratio.is_finite()) {
            return Err(Error::Config("lateral_ratio must be positive".into()));
        }
        let (slow, _) = pathway_frame_counts(self, self.input_frames)?;
        if slow != self.slow_frames {
            return Err(Error::Config(format!(
                "T = {} but {} input frames at τ = {} give {slow} slow frames",
                self.slow_frames, self.input_frames, self.tau
            )));
        }
        Ok(())
    }

    /// Per-stage widths for both pathways.
    pub fn shapes(&self) -> Result<PathwayShapes> {
        self.validate()?;
        let (slow_frames, fast_frames) = pathway_frame_counts(self, self.input_frames)?;
        let w = self.base_width;
        let slow_widths = vec![w, 4 * w, 8 * w, 16 * w, 32 * w];
        let slow_inner = vec![w, 2 * w, 4 * w, 8 * w];
        let beta = self.beta();
        let fast = |v: &Vec<usize>| v.iter().map(|&c| scale(c, beta)).collect::<Vec<_>>();
        Ok(PathwayShapes {
            slow_frames,
            fast_frames,
            fast_widths: fast(&slow_widths),
            fast_inner: fast(&slow_inner),
            lateral_widths: slow_widths.iter().map(|&c| scale(c, self.lateral_ratio * beta)).collect(),
            slow_widths,
            slow_inner,
        })
    }

    pub fn blueprint(&self) -> Result<SlowFastBlueprint> {
        let shapes = self.shapes()?;
        let blocks = self.depth.blocks();
        let r = shapes.fast_frames / shapes.slow_frames;
        let lk = self.lateral_kernel;

        let slow_stem = ConvSpec::new("slow.stem", 3, shapes.slow_widths[0], [1, 7, 7]).stride([1, 2, 2]);
        let fast_stem = ConvSpec::new("fast.stem", 3, shapes.fast_widths[0], [5, 7, 7]).stride([1, 2, 2]);
        let laterals: Vec<ConvSpec> = (0..NUM_LATERALS)
            .map(|k| {
                ConvSpec::new(
                    format!("lateral.{k}"),
                    shapes.fast_widths[k],
                    shapes.lateral_widths[k],
                    [lk, 1, 1],
                )
                .stride([r, 1, 1])
            })
            .collect();

        let mut slow_stages = Vec::new();
        let mut fast_stages = Vec::new();
        let mut slow_in = shapes.slow_widths[0] + shapes.lateral_widths[0];
        let mut fast_in = shapes.fast_widths[0];
        for s in 0..NUM_STAGES {
            let stride = if s == 0 { 1 } else { 2 };
            // temporal kernels of conv_a: the Slow pathway only uses them in
            // the last two stages
            let slow_kt = if s < 2 { 1 } else { 3 };
            slow_stages.push(res_stage(
                &format!("slow.s{}", s + 1),
                slow_in,
                shapes.slow_inner[s],
                shapes.slow_widths[s + 1],
                blocks[s],
                stride,
                slow_kt,
            ));
            fast_stages.push(res_stage(
                &format!("fast.s{}", s + 1),
                fast_in,
                shapes.fast_inner[s],
                shapes.fast_widths[s + 1],
                blocks[s],
                stride,
                3,
            ));
            slow_in = shapes.slow_widths[s + 1] + shapes.lateral_widths[s + 1];
            fast_in = shapes.fast_widths[s + 1];
        }
        Ok(SlowFastBlueprint {
            input: [self.input_frames, self.input_size, self.input_size],
            tau: self.tau,
            fast_stride: self.fast_stride(),
            slow_stem,
            fast_stem,
            laterals,
            slow_stages,
            fast_stages,
            head: LinearSpec {
                name: "head".into(),
                in_features: slow_in + fast_in,
                out_features: self.num_classes,
            },
            shapes,
        })
    }
}

fn scale(c: usize, f: f64) -> usize {
    ((c as f64 * f).round() as usize).max(1)
}

fn res_stage(prefix: &str, mut in_w: usize, inner: usize, out: usize, n: usize, stride: usize, kt: usize) -> Vec<ResBlockSpec> {
    (0..n)
        .map(|j| {
            let p = format!("{prefix}.b{j}");
            let s = if j == 0 { stride } else { 1 };
            let blk = ResBlockSpec {
                a: ConvSpec::new(format!("{p}.a"), in_w, inner, [kt, 1, 1]),
                b: ConvSpec::new(format!("{p}.b"), inner, inner, [1, 3, 3]).stride([1, s, s]),
                c: ConvSpec::new(format!("{p}.c"), inner, out, [1, 1, 1]),
                shortcut: (j == 0 && (in_w != out || s != 1))
                    .then(|| ConvSpec::new(format!("{p}.shortcut"), in_w, out, [1, 1, 1]).stride([1, s, s])),
            };
            in_w = out;
            blk
        })
        .collect()
}

/// `(slow_frames, fast_frames)` for a clip of `input_frames`.
pub fn pathway_frame_counts(config: &SlowFastConfig, input_frames: usize) -> Result<(usize, usize)> {
    if config.tau == 0 || input_frames == 0 || input_frames % config.tau != 0 {
        return Err(Error::Config(format!(
            "τ = {} does not divide {input_frames} input frames",
            config.tau
        )));
    }
    let fs = config.fast_stride();
    if input_frames % fs != 0 || config.tau % fs != 0 {
        return Err(Error::Config(format!(
            "fast stride {fs} must divide both τ = {} and {input_frames} input frames",
            config.tau
        )));
    }
    Ok((input_frames / config.tau, input_frames / fs))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayShapes {
    pub slow_frames: usize,
    pub fast_frames: usize,
    /// Stem output, then each residual stage output.
    pub slow_widths: Vec<usize>,
    pub fast_widths: Vec<usize>,
    /// Bottleneck inner width per residual stage.
    pub slow_inner: Vec<usize>,
    pub fast_inner: Vec<usize>,
    /// Channels each lateral connection adds to the Slow pathway.
    pub lateral_widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResBlockSpec {
    pub a: ConvSpec,
    pub b: ConvSpec,
    pub c: ConvSpec,
    pub shortcut: Option<ConvSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowFastBlueprint {
    /// `(T, H, W)` of the input clip.
    pub input: Extent,
    pub tau: usize,
    pub fast_stride: usize,
    pub slow_stem: ConvSpec,
    pub fast_stem: ConvSpec,
    pub laterals: Vec<ConvSpec>,
    pub slow_stages: Vec<Vec<ResBlockSpec>>,
    pub fast_stages: Vec<Vec<ResBlockSpec>>,
    pub head: LinearSpec,
    pub shapes: PathwayShapes,
}

/// Activation shapes `(C, T, H, W)` at one lateral attachment point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionPoint {
    pub slow: [usize; 4],
    pub fast: [usize; 4],
    pub lateral: [usize; 4],
    /// Slow channels after concatenation.
    pub fused_channels: usize,
}

fn trace_stage(cost: &mut NetworkCost, stage: &[ResBlockSpec], mut e: Extent) -> Result<Extent> {
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
    Ok(e)
}

impl SlowFastBlueprint {
    pub fn trace(&self) -> Result<(NetworkCost, Vec<FusionPoint>)> {
        let mut cost = NetworkCost::default();
        let [t, h, w] = self.input;
        let mut se = [t / self.tau, h, w];
        let mut fe = [t / self.fast_stride, h, w];
        se = cost.conv(&self.slow_stem, se)?;
        cost.norm("slow.stem.bn", self.slow_stem.out_channels, se);
        fe = cost.conv(&self.fast_stem, fe)?;
        cost.norm("fast.stem.bn", self.fast_stem.out_channels, fe);
        se = pool_extent(se, 3, 2, 1)?;
        fe = pool_extent(fe, 3, 2, 1)?;

        let mut points = Vec::new();
        let mut slow_c = self.slow_stem.out_channels;
        let mut fast_c = self.fast_stem.out_channels;
        for k in 0..NUM_LATERALS {
            if k > 0 {
                se = trace_stage(&mut cost, &self.slow_stages[k - 1], se)?;
                fe = trace_stage(&mut cost, &self.fast_stages[k - 1], fe)?;
                slow_c = self.slow_stages[k - 1].last().map_or(0, |b| b.c.out_channels);
                fast_c = self.fast_stages[k - 1].last().map_or(0, |b| b.c.out_channels);
            }
            let lat = &self.laterals[k];
            let le = cost.conv(lat, fe)?;
            cost.norm(&format!("{}.bn", lat.name), lat.out_channels, le);
            if le != se {
                return Err(Error::shape(format!("lateral {k} output extent"), se, le));
            }
            points.push(FusionPoint {
                slow: [slow_c, se[0], se[1], se[2]],
                fast: [fast_c, fe[0], fe[1], fe[2]],
                lateral: [lat.out_channels, le[0], le[1], le[2]],
                fused_channels: slow_c + lat.out_channels,
            });
        }
        cost.linear(&self.head);
        Ok((cost, points))
    }

    pub fn cost(&self) -> Result<NetworkCost> {
        Ok(self.trace()?.0)
    }
}

pub struct SlowFastNet {
    config: SlowFastConfig,
    blueprint: SlowFastBlueprint,
    store: ParamStore,
}

/// Intermediate activations, all `(B, T, C, H, W)`.
pub struct SlowFastTrace {
    pub features: Tensor,
    /// Slow features after each fusion.
    pub fused: Vec<Tensor>,
    /// Fast features at each attachment point.
    pub fast: Vec<Tensor>,
    /// Lateral outputs at each attachment point.
    pub lateral: Vec<Tensor>,
}

fn run_stage(x: &Tensor, store: &ParamStore, stage: &[ResBlockSpec], train: bool) -> Result<Tensor> {
    let mut x = x.clone();
    for blk in stage {
        let y = layers::conv_bn(&x, store, &blk.a, true, train)?;
        let y = layers::conv_bn(&y, store, &blk.b, true, train)?;
        let y = layers::conv_bn(&y, store, &blk.c, false, train)?;
        let skip = match &blk.shortcut {
            Some(sc) => layers::conv_bn(&x, store, sc, false, train)?,
            None => x.clone(),
        };
        x = (y + skip)?.relu()?;
    }
    Ok(x)
}

impl SlowFastNet {
    pub fn new(config: SlowFastConfig, seed: u64) -> Result<Self> {
        let blueprint = config.blueprint()?;
        blueprint.trace()?;
        let mut store = ParamStore::new(seed);
        store.add_conv_bn(&blueprint.slow_stem)?;
        store.add_conv_bn(&blueprint.fast_stem)?;
        for lat in &blueprint.laterals {
            store.add_conv_bn(lat)?;
        }
        for blk in blueprint.slow_stages.iter().chain(&blueprint.fast_stages).flatten() {
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

    pub fn config(&self) -> &SlowFastConfig {
        &self.config
    }

    pub fn blueprint(&self) -> &SlowFastBlueprint {
        &self.blueprint
    }

    /// Fuse Fast features onto the Slow clock through lateral `stage`
    /// (0 = after pool₁). `slow_frames` is the Slow temporal length.
    pub fn lateral_connection(&self, fast: &Tensor, stage: usize, slow_frames: usize, train: bool) -> Result<Tensor> {
        let spec = self.blueprint.laterals.get(stage).ok_or_else(|| Error::Lookup {
            kind: "lateral stage",
            name: stage.to_string(),
        })?;
        let tf = fast.dim(1)?;
        if slow_frames == 0 || tf % slow_frames != 0 || tf / slow_frames != spec.stride[0] {
            return Err(Error::shape(
                format!("lateral {stage} temporal ratio"),
                format!("{} x {slow_frames}", spec.stride[0]),
                tf,
            ));
        }
        layers::conv_bn(fast, &self.store, spec, true, train)
    }

    pub fn trace(&self, x: &Tensor, train: bool) -> Result<SlowFastTrace> {
        check_input(x, self.input_shape(), "SlowFast input")?;
        let bp = &self.blueprint;
        let st = &self.store;
        let x = layers::to_internal(x)?;
        let shapes = &bp.shapes;
        let slow_in = layers::take_strided(&x, 1, 0, bp.tau, shapes.slow_frames)?;
        let fast_in = layers::take_strided(&x, 1, 0, bp.fast_stride, shapes.fast_frames)?;

        let slow = layers::conv_bn(&slow_in, st, &bp.slow_stem, true, train)?;
        let mut slow = layers::max_pool_spatial(&slow, 3, 2, 1)?;
        let fast = layers::conv_bn(&fast_in, st, &bp.fast_stem, true, train)?;
        let mut fast = layers::max_pool_spatial(&fast, 3, 2, 1)?;

        let mut out = SlowFastTrace {
            features: Tensor::zeros(1, candle_core::DType::F32, x.device())?,
            fused: Vec::new(),
            fast: Vec::new(),
            lateral: Vec::new(),
        };
        for k in 0..NUM_LATERALS {
            if k > 0 {
                slow = run_stage(&slow, st, &bp.slow_stages[k - 1], train)?;
                fast = run_stage(&fast, st, &bp.fast_stages[k - 1], train)?;
            }
            let lat = self.lateral_connection(&fast, k, slow.dim(1)?, train)?;
            slow = Tensor::cat(&[&slow, &lat], 2)?;
            out.fused.push(slow.clone());
            out.fast.push(fast.clone());
            out.lateral.push(lat);
        }
        out.features = Tensor::cat(
            &[layers::global_avg_pool(&slow)?, layers::global_avg_pool(&fast)?],
            1,
        )?;
        Ok(out)
    }
}

impl VideoNetwork for SlowFastNet {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let trace = self.trace(x, train)?;
        layers::linear(&trace.features, &self.store, &self.blueprint.head)
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
