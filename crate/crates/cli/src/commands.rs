use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};

use musclenet::data::{
    prepare_corpus, read_manifest, write_manifest, AutoSource, ClipDataset, FolderMap, ManifestDataset, MuscleMap,
    PreprocessConfig, Split, ToyDataset,
};
use musclenet::ensemble;
use musclenet::logits::{self, LogitRow};
use musclenet::metrics::MetricsReport;
use musclenet::model::Checkpoint;
use musclenet::report::{NamedReport, Table, TableKind};
use musclenet::search::{backward_contract, doubling_targets, forward_expand, ExpansionState};
use musclenet::slowfast::{Depth, SlowFastConfig};
use musclenet::train::{self, write_json_atomic, RunDir, ToyGoodness};
use musclenet::x3d::ExpansionFactors;
use musclenet::{CheckpointMeta, Model, Task};

use crate::settings::{DataKind, Settings, SplitName};

pub fn run(s: &Settings) -> anyhow::Result<()> {
    let run = RunDir::create(&s.out).with_context(|| format!("creating {}", s.out.display()))?;
    write_json_atomic(&run.config(), s)?;
    let command = s.command.as_deref().unwrap_or_default();
    log::info!("{command}: writing to {}", run.root.display());
    run.log(&format!("command {command}, seed {}", s.seed))?;
    let result = match command {
        "prepare-data" => prepare(s, &run),
        "train" => train_cmd(s, &run),
        "finetune" => finetune(s, &run),
        "evaluate" => evaluate(s, &run),
        "ensemble" => ensemble_cmd(s, &run),
        "ablate-beta" => ablate(s, &run),
        "expand" => expand(s, &run),
        "report" => report(s, &run),
        other => bail!("unknown command `{other}`"),
    };
    match &result {
        Ok(()) => run.log(&format!("{command} finished"))?,
        Err(e) => run.log(&format!("{command} failed: {e:#}"))?,
    }
    result
}

fn muscle_map(path: Option<&Path>) -> anyhow::Result<MuscleMap> {
    Ok(match path {
        Some(p) => MuscleMap::load(p).with_context(|| format!("loading muscle map {}", p.display()))?,
        None => MuscleMap::standard(),
    })
}

fn prepare(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let p = &s.prepare;
    let Some(root) = &p.dataset_root else {
        bail!("prepare-data needs --dataset-root");
    };
    let folders = match &p.taxonomy {
        Some(t) => FolderMap::load(t).with_context(|| format!("loading folder map {}", t.display()))?,
        None => FolderMap::standard(),
    };
    let muscles = muscle_map(p.muscle_map.as_deref())?;
    let corpus = prepare_corpus(root, &folders, &muscles, p.ratios, s.seed, &AutoSource::default())?;
    let manifest = run.root.join("manifest.csv");
    write_manifest(std::fs::File::create(&manifest)?, &corpus.clips)?;
    write_json_atomic(&run.root.join("summary.json"), &corpus.summary)?;
    let t = &corpus.summary.totals;
    let line = format!(
        "{} clips: train {}, val {}, test {} -> {}",
        t.total,
        t.train,
        t.val,
        t.test,
        manifest.display()
    );
    log::info!("{line}");
    run.log(&line)?;
    println!("{line}");
    Ok(())
}

/// Train, validation and test sets at the given clip size.
fn datasets(s: &Settings, frames: usize, size: usize) -> anyhow::Result<[Box<dyn ClipDataset>; 3]> {
    let d = &s.data;
    match d.kind {
        DataKind::Toy => {
            let make = |k: u64| -> anyhow::Result<Box<dyn ClipDataset>> {
                let ds = ToyDataset::new(d.toy.clips, &d.toy.classes, frames, size, s.seed + 1000 * k)?;
                Ok(Box::new(ds.with_noise(d.toy.noise)))
            };
            Ok([make(0)?, make(1)?, make(2)?])
        }
        DataKind::Manifest => {
            let (Some(manifest), Some(root)) = (&d.manifest, &d.dataset_root) else {
                bail!("manifest data needs --manifest and --dataset-root (or --toy)");
            };
            let muscles = muscle_map(d.muscle_map.as_deref())?;
            let file =
                std::fs::File::open(manifest).with_context(|| format!("opening manifest {}", manifest.display()))?;
            let clips = read_manifest(file, &muscles.taxonomy(), &muscles)?;
            let pre = PreprocessConfig {
                frames,
                size: size as u32,
                ..PreprocessConfig::default()
            };
            let source = Arc::new(AutoSource::default());
            let make = |split| -> Box<dyn ClipDataset> {
                Box::new(ManifestDataset::new(root, &clips, split, source.clone(), pre.clone()))
            };
            Ok([make(Split::Train), make(Split::Val), make(Split::Test)])
        }
    }
}

fn clip_size(model: &Model) -> (usize, usize) {
    let [_, t, h, _] = model.input_shape();
    (t, h)
}

/// Test-split evaluation written as `logits.jsonl` and `metrics.json`.
fn finish(run: &RunDir, model: &Model, test: &dyn ClipDataset, name: String, task: Task, batch: usize, threshold: f64) -> anyhow::Result<()> {
    let (report, rows) = train::evaluate(model, test, task, batch, threshold)?;
    logits::write_jsonl(&run.logits(), &rows)?;
    let named = vec![NamedReport { name, report }];
    write_json_atomic(&run.metrics(), &named)?;
    print_table(TableKind::for_task(task), &named, run)?;
    Ok(())
}

fn print_table(kind: TableKind, reports: &[NamedReport], run: &RunDir) -> anyhow::Result<Table> {
    let table = Table::new(kind, reports)?;
    let md = table.to_markdown();
    std::fs::write(run.root.join("table.md"), &md)?;
    std::fs::write(run.root.join("table.csv"), table.to_csv()?)?;
    print!("{md}");
    Ok(table)
}

fn train_cmd(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let task = s.train.task;
    let spec = s.model.spec(task, s.data.frames, s.data.size)?;
    let model = Model::new(spec, s.seed)?;
    let [tr, va, te] = datasets(s, s.data.frames, s.data.size)?;
    log::info!("training {} on {} clips ({task})", s.model.name, tr.len());
    let record = train::train(&model, tr.as_ref(), va.as_ref(), &s.train, Some(run))?;
    write_json_atomic(&run.root.join("run.json"), &record)?;
    finish(run, &model, te.as_ref(), s.model.name.clone(), task, s.train.batch_size, s.train.threshold)
}

fn finetune(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let Some(ckpt) = &s.finetune.checkpoint else {
        bail!("finetune needs --checkpoint");
    };
    let Some(config) = &s.finetune.train else {
        bail!("finetune settings were not resolved");
    };
    let source = Checkpoint::read(ckpt)?;
    let (frames, size) = match source.spec.input_shape()? {
        [_, t, h, _] => (t, h),
    };
    let [tr, va, te] = datasets(s, frames, size)?;
    let (model, record) = train::fine_tune(ckpt, config, tr.as_ref(), va.as_ref(), Some(run))?;
    write_json_atomic(&run.root.join("run.json"), &record)?;
    let name = format!("FT {}", source.spec.label());
    finish(run, &model, te.as_ref(), name, config.task, config.batch_size, config.threshold)
}

fn evaluate(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let e = &s.evaluate;
    let Some(ckpt) = &e.checkpoint else {
        bail!("evaluate needs --checkpoint");
    };
    let (model, meta): (Model, CheckpointMeta) = Model::load(ckpt)?;
    let (frames, size) = clip_size(&model);
    let [tr, va, te] = datasets(s, frames, size)?;
    let ds = match e.split {
        SplitName::Train => tr,
        SplitName::Val => va,
        SplitName::Test => te,
    };
    let name = e.name.clone().unwrap_or_else(|| model.spec().label());
    finish(run, &model, ds.as_ref(), name, meta.task, e.batch_size, e.threshold)
}

/// A logit dump, or the `logits.jsonl` inside a run directory.
fn dump_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("logits.jsonl")
    } else {
        p.to_path_buf()
    }
}

fn read_dump(p: &Path) -> anyhow::Result<Vec<LogitRow>> {
    let path = dump_path(p);
    if !path.is_file() {
        bail!("no logit dump at {}", path.display());
    }
    logits::read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
}

fn ensemble_cmd(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let e = &s.ensemble;
    let (Some(x), Some(sf)) = (&e.x3d, &e.slowfast) else {
        bail!("ensemble needs --x3d and --slowfast logit dumps");
    };
    let (x_rows, s_rows) = (read_dump(x)?, read_dump(sf)?);
    let Some(first) = x_rows.first() else {
        bail!("{} is empty", dump_path(x).display());
    };
    let task = first.task;
    let rows = ensemble::sweep(task, &x_rows, &s_rows, &e.weights, e.threshold)?;
    for w in &e.weights {
        let fused = ensemble::fuse(&x_rows, &s_rows, *w)?;
        let file = format!("logits-{}.jsonl", w.label().replace('/', "-"));
        logits::write_jsonl(&run.root.join(file), &fused)?;
    }
    let named: Vec<NamedReport> = rows
        .into_iter()
        .map(|r| NamedReport {
            name: r.label,
            report: r.report,
        })
        .collect();
    write_json_atomic(&run.metrics(), &named)?;
    print_table(TableKind::for_task(task), &named, run)?;
    Ok(())
}

fn ablate(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let a = &s.ablate_beta;
    let task = s.train.task;
    let mut base =
        SlowFastConfig::new(Depth::from_layers(a.depth)?, task.num_outputs(), task.head()).with_input(s.data.frames, s.data.size);
    if let Some(w) = s.model.base_width {
        base.base_width = w;
    }
    let [tr, va, te] = datasets(s, s.data.frames, s.data.size)?;
    let rows = train::beta_sweep(&base, &a.inverse_betas, &s.train, tr.as_ref(), va.as_ref(), te.as_ref(), Some(&run.root))?;
    let named: Vec<NamedReport> = rows
        .into_iter()
        .map(|r| NamedReport {
            name: r.inverse_beta.to_string(),
            report: r.report,
        })
        .collect();
    write_json_atomic(&run.metrics(), &named)?;
    print_table(TableKind::Beta, &named, run)?;
    Ok(())
}

fn expand(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let e = &s.expand;
    let space = &e.space;
    let evaluator = ToyGoodness {
        basis: space.basis.clone(),
        base_size: space.basis.spatial_size,
        clips: e.clips,
        epochs: e.epochs,
        seed: s.seed,
        ..ToyGoodness::default()
    };
    let c0 = space.complexity(&ExpansionFactors::IDENTITY)?;
    let targets = doubling_targets(c0, e.steps);
    log::info!("expanding from {c0:.0} FLOPs through {} steps", targets.len());
    let mut state = forward_expand(ExpansionState::new(ExpansionFactors::IDENTITY), &targets, space, &evaluator)?;
    for h in &state.history {
        let line = format!("{} x{:.3}: C {:.0}, J {:?}", h.op, h.multiplier, h.complexity, h.goodness);
        log::info!("{line}");
        run.log(&line)?;
    }
    state.write_log(&run.root.join("search_log.jsonl"))?;
    if let Some(target) = e.contract_to {
        state = backward_contract(state, target, space)?;
    }
    write_json_atomic(&run.root.join("expansion.json"), &state)?;
    println!("{} at {:.0} FLOPs", state.factors, space.complexity(&state.factors)?);
    Ok(())
}

/// `metrics.json` files under `p`; a directory that has one is not searched
/// further.
fn find_metrics(p: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if p.is_file() {
        out.push(p.to_path_buf());
        return Ok(());
    }
    if !p.is_dir() {
        bail!("no metrics at {}", p.display());
    }
    let own = p.join("metrics.json");
    if own.is_file() {
        out.push(own);
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for e in entries.into_iter().filter(|e| e.is_dir()) {
        find_metrics(&e, out)?;
    }
    Ok(())
}

fn read_reports(path: &Path) -> anyhow::Result<Vec<NamedReport>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(list) = serde_json::from_str::<Vec<NamedReport>>(&text) {
        return Ok(list);
    }
    if let Ok(one) = serde_json::from_str::<NamedReport>(&text) {
        return Ok(vec![one]);
    }
    // a bare report is named after its run directory
    let report: MetricsReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dir = path.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = dir.strip_prefix("beta-").unwrap_or(&dir).to_string();
    Ok(vec![NamedReport { name, report }])
}

fn report(s: &Settings, run: &RunDir) -> anyhow::Result<()> {
    let r = &s.report;
    if r.inputs.is_empty() {
        bail!("report needs at least one metrics.json file or run directory");
    }
    let mut files = Vec::new();
    for p in &r.inputs {
        find_metrics(p, &mut files)?;
    }
    // the run's own output directory may sit among the inputs
    let own = run.metrics();
    files.retain(|f| f.canonicalize().ok() != own.canonicalize().ok());
    let mut reports = Vec::new();
    for f in &files {
        reports.extend(read_reports(f)?);
    }
    let Some(first) = reports.first() else {
        bail!("no reports found");
    };
    let kind = r.kind.unwrap_or_else(|| TableKind::for_task(first.report.task));
    log::info!("{} rows from {} files", reports.len(), files.len());
    print_table(kind, &reports, run)?;
    Ok(())
}
