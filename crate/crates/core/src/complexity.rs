//! Layer blueprints and the analytic FLOP / parameter counter.
//!
//! Convolution cost is `2 · out_elements · kernel_volume · in_channels / groups`,
//! a fully connected layer costs `2 · in · out`. Normalization and pooling are
//! free. Parameter counts include batch-norm scale/shift and linear biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation extent `(T, H, W)`.
pub type Extent = [usize; 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(kt, kh, kw)`
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride: [1, 1, 1],
            padding: [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2],
            groups: 1,
        }
    }

    pub fn stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: [usize; 3]) -> Self {
        self.padding = padding;
        self
    }

    /// Channelwise convolution (one group per channel).
    pub fn depthwise(mut self) -> Self {
        self.groups = self.in_channels;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::Config(format!("conv `{}`: {why}", self.name)));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("zero channels");
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return bad("zero kernel or stride");
        }
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return bad("channels not divisible by groups");
        }
        if self.groups != 1 && !self.is_depthwise() {
            return bad("only dense or depthwise convolutions are supported");
        }
        if self.kernel[1] != self.kernel[2]
            || self.stride[1] != self.stride[2]
            || self.padding[1] != self.padding[2]
        {
            return bad("spatial kernel, stride and padding must be square");
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        let [kt, kh, kw] = self.kernel;
        [self.out_channels, self.in_channels / self.groups, kt, kh, kw]
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn weight_params(&self) -> u64 {
        self.weight_shape().iter().map(|&d| d as u64).product()
    }

    pub fn output_extent(&self, input: Extent) -> Result<Extent> {
        let mut out = [0; 3];
        for d in 0..3 {
            let padded = input[d] + 2 * self.padding[d];
            if padded < self.kernel[d] {
                return Err(Error::Config(format!(
                    "conv `{}`: input extent {:?} too small for kernel {:?}",
                    self.name, input, self.kernel
                )));
            }
            out[d] = (padded - self.kernel[d]) / self.stride[d] + 1;
        }
        Ok(out)
    }

    pub fn flops(&self, output: Extent) -> u64 {
        let out_elems = (self.out_channels * output.iter().product::<usize>()) as u64;
        2 * out_elems * self.kernel_volume() as u64 * (self.in_channels / self.groups) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearSpec {
    pub fn flops(&self) -> u64 {
        2 * (self.in_features * self.out_features) as u64
    }

    pub fn params(&self) -> u64 {
        (self.in_features * self.out_features + self.out_features) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Norm,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    /// `(C, T, H, W)` of the layer output.
    pub output: [usize; 4],
    pub flops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkCost {
    pub layers: Vec<LayerCost>,
}

impl NetworkCost {
    pub fn flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerCost> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Record a convolution applied to `input` and return its output extent.
    pub fn conv(&mut self, spec: &ConvSpec, input: Extent) -> Result<Extent> {
        spec.validate()?;
        let out = spec.output_extent(input)?;
        self.layers.push(LayerCost {
            name: spec.name.clone(),
            kind: LayerKind::Conv,
            output: [spec.out_channels, out[0], out[1], out[2]],
            flops: spec.flops(out),
            params: spec.weight_params(),
        });
        Ok(out)
    }

    pub fn norm(&mut self, name: &str, channels: usize, extent: Extent) {
        self.layers.push(LayerCost {
            name: name.to_string(),
            kind: LayerKind::Norm,
            output: [channels, extent[0], extent[1], extent[2]],
            flops: 0,
            params: 2 * channels as u64,
        });
    }

    pub fn linear(&mut self, spec: &LinearSpec) {
        self.layers.push(LayerCost {
            name: spec.name.clone(),
            kind: LayerKind::Linear,
            output: [spec.out_features, 1, 1, 1],
            flops: spec.flops(),
            params: spec.params(),
        });
    }
}

/// Spatial max pooling `(1, k, k)` with stride `(1, s, s)` and padding `(0, p, p)`.
pub fn pool_extent(input: Extent, k: usize, s: usize, p: usize) -> Result<Extent> {
    let f = |x: usize| {
        if x + 2 * p < k {
            Err(Error::Config(format!("pool input {input:?} smaller than kernel {k}")))
        } else {
            Ok((x + 2 * p - k) / s + 1)
        }
    };
    Ok([input[0], f(input[1])?, f(input[2])?])
}

/// A plain chain of layers, mainly for checking the counter on small cases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanLayer {
    Conv(ConvSpec),
    /// Conv followed by batch norm on its output.
    ConvBn(ConvSpec),
    MaxPool { kernel: usize, stride: usize, padding: usize },
    GlobalPool,
    Linear(LinearSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequentialPlan {
    /// `(C, T, H, W)`
    pub input: [usize; 4],
    pub layers: Vec<PlanLayer>,
}

impl SequentialPlan {
    pub fn cost(&self) -> Result<NetworkCost> {
        let mut cost = NetworkCost::default();
        let [mut c, t, h, w] = self.input;
        let mut extent = [t, h, w];
        let mut flat = false;
        for layer in &self.layers {
            match layer {
                PlanLayer::Conv(spec) | PlanLayer::ConvBn(spec) => {
                    if flat || spec.in_channels != c {
                        return Err(Error::shape(&spec.name, c, spec.in_channels));
                    }
                    extent = cost.conv(spec, extent)?;
                    c = spec.out_channels;
                    if matches!(layer, PlanLayer::ConvBn(_)) {
                        cost.norm(&format!("{}.bn", spec.name), c, extent);
                    }
                }
                PlanLayer::MaxPool { kernel, stride, padding } => {
                    extent = pool_extent(extent, *kernel, *stride, *padding)?;
                }
                PlanLayer::GlobalPool => {
                    extent = [1, 1, 1];
                    flat = true;
                }
                PlanLayer::Linear(spec) => {
                    let features = c * extent.iter().product::<usize>();
                    if spec.in_features != features {
                        return Err(Error::shape(&spec.name, features, spec.in_features));
                    }
                    cost.linear(spec);
                    c = spec.out_features;
                    extent = [1, 1, 1];
                    flat = true;
                }
            }
        }
        Ok(cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_conv() {
        let plan = SequentialPlan {
            input: [4, 1, 1, 1],
            layers: vec![PlanLayer::Conv(ConvSpec::new("c", 4, 8, [1, 1, 1]))],
        };
        assert_eq!(plan.cost().unwrap().flops(), 64);
    }

    #[test]
    fn fc_layer() {
        let plan = SequentialPlan {
            input: [10, 1, 1, 1],
            layers: vec![PlanLayer::Linear(LinearSpec {
                name: "fc".into(),
                in_features: 10,
                out_features: 5,
            })],
        };
        let cost = plan.cost().unwrap();
        assert_eq!(cost.flops(), 100);
        assert_eq!(cost.params(), 55);
    }

    #[test]
    fn rejects_grouped_non_depthwise() {
        let mut spec = ConvSpec::new("g", 8, 8, [1, 3, 3]);
        spec.groups = 2;
        assert!(spec.validate().is_err());
        assert!(ConvSpec::new("d", 8, 8, [3, 3, 3]).depthwise().validate().is_ok());
    }
}
