//! Training with early stopping, fine-tuning onto the multilabel task,
//! evaluation with logit dumps, and the channel-ratio sweep.
//!
//! Runs are reproducible from the seed: batch order, crop positions and
//! weight init are all derived from it. With `MUSCLENET_DETERMINISTIC=1`
//! samples are loaded sequentially, and [`pin_threads`] restricts the
//! compute pool to one thread.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClipDataset, CropMode, Sample, ToyDataset};
use crate::error::{Error, Result};
use crate::layers::{bce_with_logits, cross_entropy, is_head};
use crate::logits::{self, Label, LogitRow};
use crate::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use crate::model::{Checkpoint, CheckpointMeta, Model, ModelSpec};
use crate::search::GoodnessEvaluator;
use crate::slowfast::SlowFastConfig;
use crate::task::{HeadKind, Task};
use crate::x3d::{round_pos, ExpansionFactors, X3dBasis, X3dConfig};

pub const DETERMINISTIC_ENV: &str = "MUSCLENET_DETERMINISTIC";

/// Epoch budget when fine-tuning for exercise classification.
pub const EC_FINETUNE_EPOCHS: usize = 50;
/// Epoch budget when fine-tuning for muscle-group activation.
pub const MGAP_FINETUNE_EPOCHS: usize = 30;

/// Inverse channel ratios compared in the Fast-pathway ablation.
pub const DEFAULT_INVERSE_BETAS: [usize; 5] = [2, 4, 8, 10, 16];

pub fn deterministic_mode() -> bool {
    std::env::var(DETERMINISTIC_ENV)
        .map(|v| !matches!(v.trim(), "" | "0" | "false"))
        .unwrap_or(false)
}

/// In deterministic mode, build the global thread pool with a single thread.
/// Must run before any parallel work; returns whether the pool was pinned.
pub fn pin_threads() -> bool {
    deterministic_mode() && rayon::ThreadPoolBuilder::new().num_threads(1).build_global().is_ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    /// Validation loss must drop by more than this to count as improvement.
    pub min_delta: f64,
    pub patience: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            min_delta: 0.0,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: Task,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub early_stop: EarlyStopConfig,
    pub seed: u64,
    /// Trunk weights to start from (any safetensors file with matching names).
    pub pretrained_checkpoint: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Ec,
            batch_size: 8,
            learning_rate: 1e-4,
            min_epochs: 30,
            max_epochs: 100,
            early_stop: EarlyStopConfig::default(),
            seed: 0,
            pretrained_checkpoint: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            ..Self::default()
        }
    }

    /// Fixed budget for fine-tuning: 50 epochs for EC, 30 for MGAP.
    pub fn fine_tune(task: Task) -> Self {
        let epochs = match task {
            Task::Ec => EC_FINETUNE_EPOCHS,
            Task::Mgap => MGAP_FINETUNE_EPOCHS,
        };
        Self {
            task,
            min_epochs: epochs.min(30),
            max_epochs: epochs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.min_epochs == 0 {
            return Err(Error::Config("min_epochs must be at least 1".into()));
        }
        if self.max_epochs < self.min_epochs {
            return Err(Error::Config(format!(
                "max_epochs {} is below min_epochs {}",
                self.max_epochs, self.min_epochs
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.early_stop.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Tracks validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    config: EarlyStopConfig,
    min_epochs: usize,
    best: f64,
    best_epoch: Option<usize>,
    since: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(config: EarlyStopConfig, min_epochs: usize) -> Self {
        Self {
            config,
            min_epochs,
            best: f64::INFINITY,
            best_epoch: None,
            since: 0,
        }
    }

    /// Record the validation loss of 0-based `epoch`.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let improved = self.best_epoch.is_none() || val_loss < self.best - self.config.min_delta;
        if improved {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.since = 0;
        } else {
            self.since += 1;
        }
        StopDecision {
            improved,
            stop: epoch + 1 >= self.min_epochs && self.since >= self.config.patience && !improved,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub model: ModelSpec,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// `config.json`, `metrics.json`, `logits.jsonl`, `checkpoints/`, `log.txt`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("checkpoints"))?;
        Ok(Self { root })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn logits(&self) -> PathBuf {
        self.root.join("logits.jsonl")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("best.safetensors")
    }

    pub fn log(&self, line: &str) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("log.txt"))?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        write_json_atomic(path, value)
    }
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 29)
}

/// Load `indices` and stack them into `(B, 3, T, H, W)`.
pub fn load_batch(
    dataset: &dyn ClipDataset,
    indices: &[usize],
    mode: CropMode,
    seed: u64,
) -> Result<(Tensor, Vec<Sample>)> {
    let get = |&i: &usize| dataset.sample(i, mode, mix(seed, i as u64, 1));
    let samples: Vec<Sample> = if deterministic_mode() {
        indices.iter().map(get).collect::<Result<_>>()?
    } else {
        indices.par_iter().map(get).collect::<Result<_>>()?
    };
    let shape = samples[0].clip.shape();
    if let Some(bad) = samples.iter().find(|s| s.clip.shape() != shape) {
        return Err(Error::shape(format!("clip {}", bad.clip_id), shape, bad.clip.shape()));
    }
    let mut data = Vec::with_capacity(samples.len() * samples[0].clip.data.len());
    for s in &samples {
        data.extend_from_slice(&s.clip.data);
    }
    let x = Tensor::from_vec(data, (samples.len(), shape[0], shape[1], shape[2], shape[3]), &Device::Cpu)?;
    Ok((x, samples))
}

fn targets(task: Task, samples: &[Sample]) -> Result<Tensor> {
    Ok(match task {
        Task::Ec => Tensor::from_vec(
            samples.iter().map(|s| s.exercise_id as u32).collect::<Vec<_>>(),
            samples.len(),
            &Device::Cpu,
        )?,
        Task::Mgap => {
            let n = samples[0].muscles.len();
            let v: Vec<f32> = samples.iter().flat_map(|s| s.muscles.iter().map(|&m| m as f32)).collect();
            Tensor::from_vec(v, (samples.len(), n), &Device::Cpu)?
        }
    })
}

/// Mean loss of a batch: cross-entropy for EC, binary cross-entropy for MGAP.
pub fn task_loss(task: Task, logits: &Tensor, samples: &[Sample]) -> Result<Tensor> {
    let t = targets(task, samples)?;
    match task {
        Task::Ec => cross_entropy(logits, &t),
        Task::Mgap => bce_with_logits(logits, &t),
    }
}

fn check_model_task(model: &Model, task: Task) -> Result<()> {
    if model.num_classes() != task.num_outputs() || model.spec().head() != task.head() {
        return Err(Error::Config(format!(
            "model has a {}-way {:?} head but {task} needs {}-way {:?}",
            model.num_classes(),
            model.spec().head(),
            task.num_outputs(),
            task.head()
        )));
    }
    Ok(())
}

/// Mean loss over a whole dataset in eval mode with centred crops.
pub fn dataset_loss(model: &Model, dataset: &dyn ClipDataset, task: Task, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, samples) = load_batch(dataset, chunk, CropMode::Center, 0)?;
        let logits = model.forward(&x, false)?;
        let loss = task_loss(task, &logits, &samples)?.to_scalar::<f32>()? as f64;
        total += loss * chunk.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Copy every non-head tensor of a safetensors file into `model`.
pub fn load_pretrained_trunk(model: &Model, path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Checkpoint(format!("no pretrained weights at {}", path.display())));
    }
    let tensors: HashMap<String, Tensor> = candle_core::safetensors::load(path, &Device::Cpu)?
        .into_iter()
        .filter(|(n, _)| !is_head(n))
        .map(|(n, t)| Ok((n, t.to_dtype(DType::F32)?)))
        .collect::<Result<_>>()?;
    model.copy_from(&tensors, |n| !is_head(n))
}

/// Train `model` in place. On return the model holds the weights of the
/// epoch with the lowest validation loss.
pub fn train(
    model: &Model,
    train_set: &dyn ClipDataset,
    val_set: &dyn ClipDataset,
    config: &TrainConfig,
    run: Option<&RunDir>,
) -> Result<RunRecord> {
    config.validate()?;
    check_model_task(model, config.task)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    if let Some(p) = &config.pretrained_checkpoint {
        load_pretrained_trunk(model, p)?;
    }
    let started = Instant::now();
    let vars = model.store().trainable().into_iter().map(|(_, v)| v).collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: config.learning_rate,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;
    let mut stopper = EarlyStopping::new(config.early_stop.clone(), config.min_epochs);
    let mut epochs = Vec::new();
    let mut history = Vec::new();
    let mut best_snapshot = None;
    let mut stopped_early = false;
    let mut checkpoint = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64, 2));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, samples) = load_batch(train_set, chunk, CropMode::Random, mix(config.seed, epoch as u64, 3))?;
            let logits = model.forward(&x, true)?;
            let loss = task_loss(config.task, &logits, &samples)?;
            let value = loss.to_scalar::<f32>()? as f64;
            history.push(value);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    history: history.iter().rev().take(20).rev().copied().collect(),
                });
            }
            opt.backward_step(&loss)?;
            sum += value * chunk.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = dataset_loss(model, val_set, config.task, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                history: vec![val_loss],
            });
        }
        let decision = stopper.observe(epoch, val_loss);
        let line = format!(
            "epoch {epoch:3}  train {train_loss:.5}  val {val_loss:.5}{}",
            if decision.improved { "  *" } else { "" }
        );
        log::info!("{line}");
        if let Some(run) = run {
            run.log(&line)?;
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if decision.improved {
            best_snapshot = Some(model.snapshot()?);
            if let Some(run) = run {
                let path = run.best_checkpoint();
                model.save(
                    &path,
                    &CheckpointMeta {
                        task: config.task,
                        epoch,
                        val_loss: Some(val_loss),
                    },
                )?;
                checkpoint = Some(path);
            }
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    if let Some(s) = &best_snapshot {
        model.restore(s)?;
    }
    Ok(RunRecord {
        config: config.clone(),
        model: model.spec().clone(),
        epochs,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_loss: stopper.best_loss(),
        stopped_early,
        checkpoint,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Build `target` (the multilabel spec), copy the trunk of `checkpoint`
/// verbatim and verify its checksum. The head is freshly initialized.
pub fn transfer(target: &ModelSpec, checkpoint: &Path, seed: u64) -> Result<Model> {
    let ckpt = Checkpoint::read(checkpoint)?;
    let model = Model::new(target.clone(), seed)?;
    model.copy_from(&ckpt.tensors, |n| !is_head(n))?;
    let (want, got) = (ckpt.trunk_checksum()?, model.trunk_checksum()?);
    if want != got {
        return Err(Error::Checkpoint(format!(
            "trunk checksum mismatch after copy: checkpoint {want}, model {got}"
        )));
    }
    Ok(model)
}

/// Start from a classification checkpoint and train the MGAP head (or
/// whatever `config.task` asks for) on top of the copied trunk.
pub fn fine_tune(
    checkpoint: &Path,
    config: &TrainConfig,
    train_set: &dyn ClipDataset,
    val_set: &dyn ClipDataset,
    run: Option<&RunDir>,
) -> Result<(Model, RunRecord)> {
    let source = Checkpoint::read(checkpoint)?;
    let target = source.spec.for_task(config.task);
    let model = transfer(&target, checkpoint, config.seed)?;
    log::info!(
        "fine-tuning {} from {} (trunk {})",
        target.label(),
        checkpoint.display(),
        model.trunk_checksum()?
    );
    let config = TrainConfig {
        pretrained_checkpoint: None,
        ..config.clone()
    };
    let record = train(&model, train_set, val_set, &config, run)?;
    Ok((model, record))
}

/// Single centred view per clip. Returns the report and one logit row per clip.
pub fn evaluate(
    model: &Model,
    dataset: &dyn ClipDataset,
    task: Task,
    batch_size: usize,
    threshold: f64,
) -> Result<(MetricsReport, Vec<LogitRow>)> {
    check_model_task(model, task)?;
    if dataset.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let mut rows = Vec::with_capacity(dataset.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, samples) = load_batch(dataset, chunk, CropMode::Center, 0)?;
        let logits = model.forward(&x, false)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        for (s, l) in samples.into_iter().zip(logits) {
            let label = match task {
                Task::Ec => Label::Class(s.exercise_id),
                Task::Mgap => Label::Multi(s.muscles.iter().map(|&m| m != 0).collect()),
            };
            rows.push(LogitRow {
                clip_id: s.clip_id,
                task,
                logits: l,
                label,
            });
        }
    }
    let report = logits::report(task, &rows, threshold)?;
    Ok((report, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub inverse_beta: usize,
    pub record: RunRecord,
    pub report: MetricsReport,
}

/// Train and evaluate one SlowFast model per inverse channel ratio, all from
/// scratch.
pub fn beta_sweep(
    base: &SlowFastConfig,
    inverse_betas: &[usize],
    config: &TrainConfig,
    train_set: &dyn ClipDataset,
    val_set: &dyn ClipDataset,
    test_set: &dyn ClipDataset,
    out: Option<&Path>,
) -> Result<Vec<BetaRow>> {
    let config = TrainConfig {
        pretrained_checkpoint: None,
        ..config.clone()
    };
    let mut rows = Vec::new();
    for &inv in inverse_betas {
        let sf = base.clone().with_beta(1.0 / inv as f64)?;
        let spec = ModelSpec::SlowFast(sf).for_task(config.task);
        let model = Model::new(spec, config.seed)?;
        let run = match out {
            Some(dir) => Some(RunDir::create(dir.join(format!("beta-{inv}")))?),
            None => None,
        };
        let record = train(&model, train_set, val_set, &config, run.as_ref())?;
        let (report, dump) = evaluate(&model, test_set, config.task, config.batch_size, config.threshold)?;
        if let Some(run) = &run {
            logits::write_jsonl(&run.logits(), &dump)?;
            run.write_json(&run.metrics(), &report)?;
            run.write_json(&run.config(), &record)?;
        }
        rows.push(BetaRow {
            inverse_beta: inv,
            record,
            report,
        });
    }
    Ok(rows)
}

/// Desk-scale goodness: train a small X3D built from the candidate factors on
/// a synthetic set for a few epochs and score it by validation top-1.
#[derive(Debug, Clone)]
pub struct ToyGoodness {
    pub basis: X3dBasis,
    /// Spatial size at γ_s = 1.
    pub base_size: usize,
    pub classes: Vec<usize>,
    pub clips: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ToyGoodness {
    fn default() -> Self {
        Self {
            basis: X3dBasis {
                stem_width: 4,
                stage_widths: vec![4, 8, 16, 32],
                stage_depths: vec![1, 1, 1, 1],
                spatial_size: 16,
                stem_temporal_kernel: 3,
            },
            base_size: 16,
            classes: vec![12, 0],
            clips: 8,
            epochs: 3,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl GoodnessEvaluator for ToyGoodness {
    fn evaluate(&self, factors: &ExpansionFactors) -> Result<f64> {
        let frames = round_pos(factors.gamma_t);
        let size = round_pos(factors.gamma_s * self.base_size as f64).max(8);
        let mut cfg = X3dConfig::new(*factors, Task::Ec.num_outputs(), HeadKind::Multiclass).with_input(frames, size);
        cfg.basis = self.basis.clone();
        let model = Model::new(ModelSpec::X3d(cfg), self.seed)?;
        let train_set = ToyDataset::new(self.clips, &self.classes, frames, size, self.seed)?;
        let val_set = ToyDataset::new(self.clips, &self.classes, frames, size, self.seed + 1)?;
        let config = TrainConfig {
            batch_size: self.clips,
            learning_rate: self.learning_rate,
            min_epochs: self.epochs,
            max_epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        };
        train(&model, &train_set, &val_set, &config, None)?;
        let (report, _) = evaluate(&model, &val_set, Task::Ec, self.clips, DEFAULT_THRESHOLD)?;
        Ok(report.columns()[0])
    }

    fn cost_budget(&self) -> usize {
        self.epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_improvement_never_stops() {
        let mut es = EarlyStopping::new(EarlyStopConfig::default(), 30);
        for e in 0..100 {
            let d = es.observe(e, 100.0 - e as f64);
            assert!(d.improved && !d.stop);
        }
        assert_eq!(es.best_epoch(), Some(99));
    }

    #[test]
    fn plateau_stops_after_patience_but_not_before_min_epochs() {
        let mut es = EarlyStopping::new(EarlyStopConfig::default(), 30);
        es.observe(0, 1.0);
        let mut stopped = None;
        for e in 1..100 {
            if es.observe(e, 1.0).stop {
                stopped = Some(e);
                break;
            }
        }
        // no improvement from epoch 1 on; patience is met at epoch 10 but
        // the minimum pushes the stop to epoch 29
        assert_eq!(stopped, Some(29));

        let mut es = EarlyStopping::new(EarlyStopConfig::default(), 5);
        es.observe(0, 1.0);
        let stop = (1..100).find(|&e| es.observe(e, 2.0).stop);
        assert_eq!(stop, Some(10));
    }

    #[test]
    fn min_delta_requires_strict_gain() {
        let mut es = EarlyStopping::new(
            EarlyStopConfig {
                min_delta: 0.1,
                patience: 1,
            },
            1,
        );
        assert!(es.observe(0, 1.0).improved);
        let d = es.observe(1, 0.95);
        assert!(!d.improved && d.stop);
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.min_epochs, c.early_stop.patience), (8, 30, 10));
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(TrainConfig::fine_tune(Task::Ec).max_epochs, 50);
        assert_eq!(TrainConfig::fine_tune(Task::Mgap).max_epochs, 30);
        assert!(TrainConfig {
            batch_size: 0,
            ..c
        }
        .validate()
        .is_err());
    }
}
