mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use musclenet::ensemble::EnsembleWeights;
use musclenet::report::TableKind;
use musclenet::Task;

use settings::{DataKind, Settings, SplitName};

#[derive(Debug, Parser)]
#[command(name = "musclenet", version, about = "Exercise and muscle-group video models")]
struct Cli {
    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for every artifact of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-threaded, bitwise-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut the raw videos into clips and write the split manifest.
    PrepareData(PrepareArgs),
    /// Train a model from scratch (or from a pretrained trunk).
    Train(TrainArgs),
    /// Copy a classification trunk and train a new head.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint and dump its logits.
    Evaluate(EvaluateArgs),
    /// Weighted average of X3D and SlowFast logit dumps.
    Ensemble(EnsembleArgs),
    /// Sweep the SlowFast channel ratio.
    AblateBeta(AblateArgs),
    /// Progressive expansion search over X3D factors.
    Expand(ExpandArgs),
    /// Collect metrics.json files into markdown and CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    /// Folder-name to exercise map (JSON).
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    muscle_map: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct DataArgs {
    /// Use synthetic clips instead of a manifest.
    #[arg(long)]
    toy: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    #[arg(long)]
    muscle_map: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct OptimArgs {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    min_epochs: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    /// x3d-s, x3d-m, slowfast-r50 or slowfast-r101.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_width: Option<usize>,
    #[arg(long)]
    inverse_beta: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Row label for the report.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// X3D logits (file or run directory).
    #[arg(long)]
    x3d: Option<PathBuf>,
    /// SlowFast logits (file or run directory).
    #[arg(long)]
    slowfast: Option<PathBuf>,
    /// `x,s` pair such as 0.25,0.75; repeat for several rows.
    #[arg(long = "weights")]
    weights: Vec<EnsembleWeights>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Comma-separated inverse channel ratios.
    #[arg(long, value_delimiter = ',')]
    inverse_betas: Vec<usize>,
    /// Trunk depth, 50 or 101.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    base_width: Option<usize>,
    #[arg(long)]
    task: Option<Task>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Debug, Args)]
struct ExpandArgs {
    #[arg(long)]
    steps: Option<usize>,
    /// Contract the result to this many FLOPs.
    #[arg(long)]
    contract_to: Option<f64>,
    /// Training epochs per evaluated candidate.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// metrics.json files or directories containing them.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Ec,
    Mgap,
    Beta,
}

impl DataArgs {
    fn apply(&self, s: &mut Settings) {
        let d = &mut s.data;
        if self.toy {
            d.kind = DataKind::Toy;
        }
        if let Some(m) = &self.manifest {
            d.manifest = Some(m.clone());
            d.kind = DataKind::Manifest;
        }
        set(&mut d.dataset_root, self.dataset_root.clone());
        set(&mut d.muscle_map, self.muscle_map.clone());
        over(&mut d.frames, self.frames);
        over(&mut d.size, self.size);
    }
}

impl OptimArgs {
    fn apply(&self, t: &mut musclenet::train::TrainConfig) {
        over(&mut t.batch_size, self.batch_size);
        over(&mut t.learning_rate, self.lr);
        over(&mut t.min_epochs, self.min_epochs);
        over(&mut t.max_epochs, self.max_epochs);
        over(&mut t.early_stop.patience, self.patience);
        over(&mut t.threshold, self.threshold);
    }
}

impl ModelArgs {
    fn apply(&self, s: &mut Settings) {
        over(&mut s.model.name, self.model.clone());
        set(&mut s.model.base_width, self.base_width);
        set(&mut s.model.inverse_beta, self.inverse_beta);
    }
}

fn over<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Layer the flags over the config file.
fn resolve(cli: &Cli) -> anyhow::Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    over(&mut s.seed, cli.seed);
    over(&mut s.out, cli.out.clone());
    s.deterministic |= cli.deterministic;
    let name = match &cli.command {
        Command::PrepareData(a) => {
            set(&mut s.prepare.dataset_root, a.dataset_root.clone());
            set(&mut s.prepare.taxonomy, a.taxonomy.clone());
            set(&mut s.prepare.muscle_map, a.muscle_map.clone());
            "prepare-data"
        }
        Command::Train(a) => {
            over(&mut s.train.task, a.task);
            set(&mut s.train.pretrained_checkpoint, a.pretrained.clone());
            a.model.apply(&mut s);
            a.data.apply(&mut s);
            a.optim.apply(&mut s.train);
            "train"
        }
        Command::Finetune(a) => {
            set(&mut s.finetune.checkpoint, a.checkpoint.clone());
            over(&mut s.finetune.task, a.task);
            let task = s.finetune.task;
            let mut t = s
                .finetune
                .train
                .take()
                .unwrap_or_else(|| musclenet::train::TrainConfig::fine_tune(task));
            t.task = task;
            a.optim.apply(&mut t);
            s.finetune.train = Some(t);
            a.data.apply(&mut s);
            "finetune"
        }
        Command::Evaluate(a) => {
            let e = &mut s.evaluate;
            set(&mut e.checkpoint, a.checkpoint.clone());
            over(
                &mut e.split,
                a.split.map(|v| match v {
                    SplitArg::Train => SplitName::Train,
                    SplitArg::Val => SplitName::Val,
                    SplitArg::Test => SplitName::Test,
                }),
            );
            set(&mut e.name, a.name.clone());
            over(&mut e.batch_size, a.batch_size);
            over(&mut e.threshold, a.threshold);
            a.data.apply(&mut s);
            "evaluate"
        }
        Command::Ensemble(a) => {
            let e = &mut s.ensemble;
            set(&mut e.x3d, a.x3d.clone());
            set(&mut e.slowfast, a.slowfast.clone());
            if !a.weights.is_empty() {
                e.weights = a.weights.clone();
            }
            over(&mut e.threshold, a.threshold);
            "ensemble"
        }
        Command::AblateBeta(a) => {
            if !a.inverse_betas.is_empty() {
                s.ablate_beta.inverse_betas = a.inverse_betas.clone();
            }
            over(&mut s.ablate_beta.depth, a.depth);
            set(&mut s.model.base_width, a.base_width);
            over(&mut s.train.task, a.task);
            a.data.apply(&mut s);
            a.optim.apply(&mut s.train);
            "ablate-beta"
        }
        Command::Expand(a) => {
            let e = &mut s.expand;
            over(&mut e.steps, a.steps);
            set(&mut e.contract_to, a.contract_to);
            over(&mut e.epochs, a.epochs);
            over(&mut e.clips, a.clips);
            "expand"
        }
        Command::Report(a) => {
            if !a.inputs.is_empty() {
                s.report.inputs = a.inputs.clone();
            }
            set(
                &mut s.report.kind,
                a.kind.map(|k| match k {
                    KindArg::Ec => TableKind::Ec,
                    KindArg::Mgap => TableKind::Mgap,
                    KindArg::Beta => TableKind::Beta,
                }),
            );
            "report"
        }
    };
    s.command = Some(name.to_string());
    s.train.seed = s.seed;
    if let Some(t) = &mut s.finetune.train {
        t.seed = s.seed;
    }
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|s| {
        if s.deterministic {
            std::env::set_var(musclenet::train::DETERMINISTIC_ENV, "1");
        }
        if musclenet::train::pin_threads() {
            log::info!("deterministic mode: single-threaded");
        }
        commands::run(&s)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
