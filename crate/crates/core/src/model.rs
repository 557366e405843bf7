//! Architecture-agnostic model handle, checkpoints and head replacement.
//!
//! A checkpoint is a safetensors file holding every named tensor (trainable
//! parameters and batch-norm running statistics) plus three metadata
//! entries: `format`, `model` (the architecture spec as JSON) and `meta`
//! (task, epoch, validation loss). Parameter names are listed by
//! [`Model::parameter_manifest`]; everything not under `head.` is trunk.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{is_head, tensor_checksum, ParamStore};
use crate::network::VideoNetwork;
use crate::slowfast::{Depth, SlowFastConfig, SlowFastNet};
use crate::task::{HeadKind, Task};
use crate::x3d::{X3dConfig, X3dNet};

pub const CHECKPOINT_FORMAT: &str = "musclenet-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ModelSpec {
    X3d(X3dConfig),
    SlowFast(SlowFastConfig),
}

impl ModelSpec {
    pub fn build(&self, seed: u64) -> Result<Box<dyn VideoNetwork>> {
        Ok(match self {
            ModelSpec::X3d(c) => Box::new(X3dNet::new(c.clone(), seed)?),
            ModelSpec::SlowFast(c) => Box::new(SlowFastNet::new(c.clone(), seed)?),
        })
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelSpec::X3d(c) => c.num_classes,
            ModelSpec::SlowFast(c) => c.num_classes,
        }
    }

    pub fn head(&self) -> HeadKind {
        match self {
            ModelSpec::X3d(c) => c.head,
            ModelSpec::SlowFast(c) => c.head,
        }
    }

    pub fn with_head(&self, num_classes: usize, head: HeadKind) -> Self {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::X3d(c) => {
                c.num_classes = num_classes;
                c.head = head;
            }
            ModelSpec::SlowFast(c) => {
                c.num_classes = num_classes;
                c.head = head;
            }
        }
        s
    }

    pub fn for_task(&self, task: Task) -> Self {
        self.with_head(task.num_outputs(), task.head())
    }

    /// Short architecture label, e.g. `x3d` or `slowfast-r101`.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::X3d(_) => "x3d".into(),
            ModelSpec::SlowFast(c) => match c.depth {
                Depth::R50 => "slowfast-r50".into(),
                Depth::R101 => "slowfast-r101".into(),
            },
        }
    }

    /// Clip shape `(3, T, H, W)` the architecture consumes.
    pub fn input_shape(&self) -> Result<[usize; 4]> {
        Ok(match self {
            ModelSpec::X3d(c) => {
                let (t, s) = c.input_size();
                [3, t, s, s]
            }
            ModelSpec::SlowFast(c) => [3, c.input_frames, c.input_size, c.input_size],
        })
    }
}

/// Metadata stored with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Task,
    pub epoch: usize,
    pub val_loss: Option<f64>,
}

pub struct Model {
    spec: ModelSpec,
    net: Box<dyn VideoNetwork>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("tensors", &self.net.store().len())
            .finish()
    }
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let net = spec.build(seed)?;
        Ok(Self { spec, net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn network(&self) -> &dyn VideoNetwork {
        self.net.as_ref()
    }

    pub fn store(&self) -> &ParamStore {
        self.net.store()
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.net.forward(x, train)
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.net.input_shape()
    }

    pub fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    pub fn trunk_checksum(&self) -> Result<String> {
        self.store().trunk_checksum()
    }

    /// `(name, shape)` of every stored tensor, sorted by name.
    pub fn parameter_manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.store()
            .iter()
            .map(|(n, v)| (n.clone(), v.dims().to_vec()))
            .collect()
    }

    /// Snapshot of every tensor's current value.
    pub fn snapshot(&self) -> Result<Vec<(String, Tensor)>> {
        self.store()
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &[(String, Tensor)]) -> Result<()> {
        for (n, t) in snapshot {
            self.store().assign(n, t)?;
        }
        Ok(())
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let mut info = HashMap::new();
        info.insert("format".to_string(), CHECKPOINT_FORMAT.to_string());
        info.insert("model".to_string(), serde_json::to_string(&self.spec)?);
        info.insert("meta".to_string(), serde_json::to_string(meta)?);
        let tensors: Vec<(String, Tensor)> = self
            .store()
            .iter()
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("safetensors.tmp");
        safetensors::serialize_to_file(tensors, Some(info), &tmp)
            .map_err(|e| Error::Checkpoint(format!("writing {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Rebuild the architecture recorded in the checkpoint and load all tensors.
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let ckpt = Checkpoint::read(path)?;
        let model = Model::new(ckpt.spec.clone(), 0)?;
        model.copy_from(&ckpt.tensors, |_| true)?;
        Ok((model, ckpt.meta))
    }

    /// Copy tensors whose names pass `filter`. Any missing, extra or
    /// mis-shaped name among the filtered ones is reported together.
    pub fn copy_from(&self, tensors: &HashMap<String, Tensor>, filter: impl Fn(&str) -> bool) -> Result<()> {
        let mut divergent = Vec::new();
        for (name, var) in self.store().iter().filter(|(n, _)| filter(n)) {
            match tensors.get(name) {
                None => divergent.push(format!("{name} (missing)")),
                Some(t) if t.dims() != var.dims() => {
                    divergent.push(format!("{name} (shape {:?} vs {:?})", t.dims(), var.dims()))
                }
                Some(_) => {}
            }
        }
        let mut extra: Vec<&String> = tensors
            .keys()
            .filter(|n| filter(n) && self.store().get(n).is_err())
            .collect();
        extra.sort();
        divergent.extend(extra.into_iter().map(|n| format!("{n} (unexpected)")));
        if !divergent.is_empty() {
            return Err(Error::Incompatible { divergent });
        }
        for (name, _) in self.store().iter().filter(|(n, _)| filter(n)) {
            self.store().assign(name, &tensors[name])?;
        }
        Ok(())
    }

    /// Same trunk, fresh head of `num_classes` outputs.
    pub fn swap_head(&self, num_classes: usize, head: HeadKind, seed: u64) -> Result<Self> {
        let spec = self.spec.with_head(num_classes, head);
        let fresh = Model::new(spec, seed)?;
        let trunk: HashMap<String, Tensor> = self
            .store()
            .iter()
            .filter(|(n, _)| !is_head(n))
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect();
        fresh.copy_from(&trunk, |n| !is_head(n))?;
        let (before, after) = (self.trunk_checksum()?, fresh.trunk_checksum()?);
        if before != after {
            return Err(Error::Checkpoint(format!(
                "trunk checksum changed during head swap: {before} -> {after}"
            )));
        }
        Ok(fresh)
    }
}

/// Raw contents of a checkpoint file.
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub meta: CheckpointMeta,
    pub tensors: HashMap<String, Tensor>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Checkpoint(format!("no checkpoint at {}", path.display())));
        }
        let bytes = std::fs::read(path)?;
        let (_, header) = safetensors::SafeTensors::read_metadata(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let info = header.metadata().clone().unwrap_or_default();
        if info.get("format").map(String::as_str) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!(
                "{} is not a {CHECKPOINT_FORMAT} file",
                path.display()
            )));
        }
        let field = |k: &str| {
            info.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("{}: metadata `{k}` missing", path.display())))
        };
        let spec: ModelSpec = serde_json::from_str(field("model")?)?;
        let meta: CheckpointMeta = serde_json::from_str(field("meta")?)?;
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
        Ok(Self { spec, meta, tensors })
    }

    pub fn trunk_checksum(&self) -> Result<String> {
        let mut names: Vec<&String> = self.tensors.keys().filter(|n| !is_head(n)).collect();
        names.sort();
        tensor_checksum(names.into_iter().map(|n| (n.as_str(), &self.tensors[n])))
    }
}
