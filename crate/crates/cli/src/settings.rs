//! The effective run configuration. Every command-line flag has a field
//! here; a config file supplies the starting values and flags override them.
//! The resolved value is written to `config.json` in the output directory and
//! can be passed back with `--config` to repeat the run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use musclenet::data::SplitRatios;
use musclenet::ensemble::EnsembleWeights;
use musclenet::report::TableKind;
use musclenet::search::SearchSpace;
use musclenet::slowfast::{Depth, SlowFastConfig};
use musclenet::train::{TrainConfig, DEFAULT_INVERSE_BETAS};
use musclenet::x3d::{self, PresetFile};
use musclenet::{ModelSpec, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    /// Subcommand that produced this file; informational.
    pub command: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub deterministic: bool,
    pub data: DataSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub prepare: PrepareSettings,
    pub finetune: FinetuneSettings,
    pub evaluate: EvaluateSettings,
    pub ensemble: EnsembleSettings,
    pub ablate_beta: AblateSettings,
    pub expand: ExpandSettings,
    pub report: ReportSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            out: PathBuf::from("runs/latest"),
            deterministic: false,
            data: DataSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            prepare: PrepareSettings::default(),
            finetune: FinetuneSettings::default(),
            evaluate: EvaluateSettings::default(),
            ensemble: EnsembleSettings::default(),
            ablate_beta: AblateSettings::default(),
            expand: ExpandSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Synthetic moving-bar clips, no files needed.
    Toy,
    /// Clips listed in a manifest written by `prepare-data`.
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSettings {
    pub kind: DataKind,
    pub manifest: Option<PathBuf>,
    pub dataset_root: Option<PathBuf>,
    pub muscle_map: Option<PathBuf>,
    /// Frames per clip; also the model's input length.
    pub frames: usize,
    /// Square frame size; also the model's input size.
    pub size: usize,
    pub toy: ToyData,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            kind: DataKind::Manifest,
            manifest: None,
            dataset_root: None,
            muscle_map: None,
            frames: 32,
            size: 256,
            toy: ToyData::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyData {
    /// Clips per split.
    pub clips: usize,
    /// Exercise ids the synthetic clips cycle through.
    pub classes: Vec<usize>,
    pub noise: f32,
}

impl Default for ToyData {
    fn default() -> Self {
        Self {
            clips: 8,
            classes: vec![12, 0],
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// `x3d-s`, `x3d-m`, `slowfast-r50` or `slowfast-r101`.
    pub name: String,
    /// Overrides the SlowFast stem width (64 in the standard model).
    pub base_width: Option<usize>,
    pub inverse_beta: Option<usize>,
    /// Alternative X3D preset file.
    pub presets: Option<PathBuf>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            name: "x3d-m".into(),
            base_width: None,
            inverse_beta: None,
            presets: None,
        }
    }
}

impl ModelSettings {
    pub fn spec(&self, task: Task, frames: usize, size: usize) -> anyhow::Result<ModelSpec> {
        let (n, head) = (task.num_outputs(), task.head());
        let name = self.name.to_ascii_lowercase();
        let spec = match name.as_str() {
            "slowfast-r50" | "slowfast-r101" => {
                let depth = if name.ends_with("r50") { Depth::R50 } else { Depth::R101 };
                let mut c = SlowFastConfig::new(depth, n, head).with_input(frames, size);
                if let Some(w) = self.base_width {
                    c.base_width = w;
                }
                if let Some(inv) = self.inverse_beta {
                    c = c.with_beta(1.0 / inv as f64)?;
                }
                ModelSpec::SlowFast(c)
            }
            _ => {
                let presets = match &self.presets {
                    Some(p) => PresetFile::load(p)?,
                    None => PresetFile::standard(),
                };
                let c = presets.config(&name, n, head).or_else(|_| x3d::preset(&name, n, head));
                match c {
                    Ok(c) => ModelSpec::X3d(c.with_input(frames, size)),
                    Err(_) => bail!(
                        "unknown model `{}` (expected x3d-s, x3d-m, slowfast-r50 or slowfast-r101)",
                        self.name
                    ),
                }
            }
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareSettings {
    pub dataset_root: Option<PathBuf>,
    /// Folder-name to exercise map (JSON); the bundled map by default.
    pub taxonomy: Option<PathBuf>,
    pub muscle_map: Option<PathBuf>,
    pub ratios: SplitRatios,
}

impl Default for PrepareSettings {
    fn default() -> Self {
        Self {
            dataset_root: None,
            taxonomy: None,
            muscle_map: None,
            ratios: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneSettings {
    pub checkpoint: Option<PathBuf>,
    pub task: Task,
    /// Training settings; the fixed fine-tuning budget for `task` when absent.
    pub train: Option<TrainConfig>,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            task: Task::Mgap,
            train: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub checkpoint: Option<PathBuf>,
    pub split: SplitName,
    /// Row label in `metrics.json`; the architecture label by default.
    pub name: Option<String>,
    pub batch_size: usize,
    pub threshold: f64,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            split: SplitName::Test,
            name: None,
            batch_size: 8,
            threshold: musclenet::metrics::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    /// X3D logit dump (`logits.jsonl` or the run directory holding it).
    pub x3d: Option<PathBuf>,
    pub slowfast: Option<PathBuf>,
    pub weights: Vec<EnsembleWeights>,
    pub threshold: f64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            x3d: None,
            slowfast: None,
            weights: EnsembleWeights::default_grid(),
            threshold: musclenet::metrics::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateSettings {
    pub inverse_betas: Vec<usize>,
    pub depth: usize,
}

impl Default for AblateSettings {
    fn default() -> Self {
        Self {
            inverse_betas: DEFAULT_INVERSE_BETAS.to_vec(),
            depth: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandSettings {
    /// Forward steps; each doubles the complexity target.
    pub steps: usize,
    /// Final complexity target for backward contraction, in FLOPs.
    pub contract_to: Option<f64>,
    pub space: SearchSpace,
    /// Epochs per candidate of the desk-scale goodness evaluator.
    pub epochs: usize,
    pub clips: usize,
}

impl Default for ExpandSettings {
    fn default() -> Self {
        let toy = musclenet::train::ToyGoodness::default();
        Self {
            steps: 2,
            contract_to: None,
            space: SearchSpace {
                basis: toy.basis.clone(),
                num_classes: Task::Ec.num_outputs(),
                ..SearchSpace::default()
            },
            epochs: toy.epochs,
            clips: toy.clips,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReportSettings {
    /// `metrics.json` files or directories searched for them.
    pub inputs: Vec<PathBuf>,
    /// Table layout; inferred from the reports when absent.
    pub kind: Option<TableKind>,
}
