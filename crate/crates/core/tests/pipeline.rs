//! Train, checkpoint, evaluate and dump on tiny models.

use musclenet::data::ToyDataset;
use musclenet::logits;
use musclenet::slowfast::{Depth, SlowFastConfig};
use musclenet::train::{beta_sweep, evaluate, train, RunDir, TrainConfig};
use musclenet::x3d::{ExpansionFactors, X3dConfig};
use musclenet::{HeadKind, Model, ModelSpec, Task};

fn tiny_x3d(task: Task) -> ModelSpec {
    let mut c = X3dConfig::new(ExpansionFactors::IDENTITY, task.num_outputs(), task.head()).with_input(4, 32);
    c.basis.stem_width = 4;
    c.basis.stage_widths = vec![4, 8, 16, 32];
    c.basis.stage_depths = vec![1, 1, 1, 1];
    ModelSpec::X3d(c)
}

fn quick(task: Task, epochs: usize) -> TrainConfig {
    TrainConfig {
        task,
        batch_size: 4,
        learning_rate: 1e-3,
        min_epochs: epochs,
        max_epochs: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn checkpoint_round_trip_reproduces_logits() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();
    for task in [Task::Ec, Task::Mgap] {
        let data = ToyDataset::new(8, &[12, 0], 4, 32, 5).unwrap();
        let model = Model::new(tiny_x3d(task), 1).unwrap();
        let record = train(&model, &data, &data, &quick(task, 2), Some(&run)).unwrap();
        assert_eq!(record.epochs.len(), 2);

        let (report, dump) = evaluate(&model, &data, task, 8, 0.5).unwrap();
        let (again, dump2) = evaluate(&model, &data, task, 8, 0.5).unwrap();
        assert_eq!(dump, dump2, "repeated evaluation gives an identical dump");
        assert_eq!(report, again);
        // other batch sizes change only the float summation order
        let (_, dump3) = evaluate(&model, &data, task, 3, 0.5).unwrap();
        let worst = dump
            .iter()
            .zip(&dump3)
            .flat_map(|(a, b)| a.logits.iter().zip(&b.logits).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "batch size moved logits by {worst}");

        // the best checkpoint holds the restored best-epoch weights
        let (loaded, meta) = Model::load(&run.best_checkpoint()).unwrap();
        assert_eq!(meta.task, task);
        assert_eq!(meta.epoch, record.best_epoch);
        let (_, reloaded) = evaluate(&loaded, &data, task, 8, 0.5).unwrap();
        assert_eq!(dump, reloaded);

        // a report recomputed from the dump on disk matches the in-process one
        logits::write_jsonl(&run.logits(), &dump).unwrap();
        let rows = logits::read_jsonl(&run.logits()).unwrap();
        assert_eq!(logits::report(task, &rows, 0.5).unwrap(), report);
    }
    let log = std::fs::read_to_string(run.root.join("log.txt")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch")).count(), 4);
}

#[test]
fn beta_sweep_writes_one_run_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = SlowFastConfig::new(Depth::R50, 16, HeadKind::Multiclass).with_input(8, 32);
    base.base_width = 8;
    let data = ToyDataset::new(4, &[12, 0], 8, 32, 2).unwrap();
    let rows = beta_sweep(&base, &[4, 8], &quick(Task::Ec, 1), &data, &data, &data, Some(dir.path())).unwrap();
    assert_eq!(rows.iter().map(|r| r.inverse_beta).collect::<Vec<_>>(), [4, 8]);
    for r in &rows {
        let c = r.report.columns();
        assert!(c[1] >= c[0], "top5 {} < top1 {}", c[1], c[0]);
        let run = dir.path().join(format!("beta-{}", r.inverse_beta));
        for f in ["metrics.json", "logits.jsonl", "config.json", "checkpoints/best.safetensors"] {
            assert!(run.join(f).exists(), "{f} missing for 1/β = {}", r.inverse_beta);
        }
        match &r.record.model {
            ModelSpec::SlowFast(c) => assert_eq!(c.inverse_beta, r.inverse_beta),
            other => panic!("unexpected spec {other:?}"),
        }
    }
}
