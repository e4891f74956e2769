//! Small end-to-end runs of the training engine on synthetic data.

use headpose::codec::BinGrid;
use headpose::data::{make_synthetic_dataset, InMemoryDataset};
use headpose::model::{BackboneName, BackboneSpec, PoseModel};
use headpose::train::*;

fn model(seed: u64) -> PoseModel {
    PoseModel::new(BackboneSpec::new(BackboneName::TinyCnn), BinGrid::default(), 112, seed).unwrap()
}

fn data() -> InMemoryDataset {
    make_synthetic_dataset(96, 11).unwrap()
}

fn hard(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs: Some(epochs),
        lr: 1e-3,
        batch_size: 32,
        holdout_fraction: 0.0,
        augment: false,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn distill(epochs: usize) -> TrainConfig {
    TrainConfig {
        mode: TrainMode::Distill,
        teacher_checkpoints: vec!["in-memory".into()],
        ..hard(epochs)
    }
}

fn losses(h: &[EpochMetrics]) -> Vec<f64> {
    h.iter().map(|m| m.loss).collect()
}

fn assert_traces_close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= 1e-3 * x.abs().max(y.abs()), "{a:?} vs {b:?}");
    }
}

#[test]
fn hard_training_descends_and_is_repeatable() {
    let ds = data();
    let a = train_teacher(model(1), &ds, hard(6), None, None).unwrap();
    let b = train_teacher(model(1), &ds, hard(6), None, None).unwrap();
    let la = losses(&a.history);
    assert!(la.last().unwrap() < &la[0], "{la:?}");
    assert_traces_close(&la, &losses(&b.history));
    assert_eq!(a.history.len(), 6);
    assert!((a.history[0].lr - 1e-3).abs() < 1e-15);
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let ds = data();
    let full = train_teacher(model(2), &ds, hard(20), None, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(model(2), hard(20), None, &ds, Targets::Hard).unwrap().with_output_dir(dir.path()).unwrap();
    first.fit_until(10).unwrap();
    assert_eq!(first.epoch(), 10);
    drop(first);

    let mut second = Trainer::resume(dir.path(), hard(20), None, &ds, Targets::Hard).unwrap();
    assert_eq!(second.epoch(), 10);
    second.fit().unwrap();
    assert_traces_close(&losses(&full.history), &losses(second.history()));
    assert!(dir.path().join(METRICS_FILE).exists());
}

#[test]
fn resume_rejects_a_changed_config() {
    let ds = data();
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(model(2), hard(4), None, &ds, Targets::Hard).unwrap().with_output_dir(dir.path()).unwrap();
    t.fit_until(1).unwrap();
    drop(t);
    let changed = TrainConfig { lr: 5e-4, ..hard(4) };
    assert!(Trainer::resume(dir.path(), changed, None, &ds, Targets::Hard).is_err());
}

#[test]
fn copied_student_starts_at_zero_divergence_and_teachers_stay_frozen() {
    let ds = data();
    let teacher = train_teacher(model(3), &ds, hard(2), None, None).unwrap().model;
    let before = teacher.checksum();
    let teachers = vec![teacher];

    let trainer = Trainer::new(teachers[0].duplicate(), distill(3), None, &ds, Targets::Teachers(&teachers)).unwrap();
    let initial = trainer.evaluate_objective().unwrap();
    assert!(initial.abs() < 1e-6, "initial divergence {initial}");

    let outcome = distill_student(model(4), Targets::Teachers(&teachers), &ds, distill(3), None, None).unwrap();
    assert_eq!(outcome.history.len(), 3);
    assert_eq!(teachers[0].checksum(), before);
}

#[test]
fn precomputed_store_matches_on_the_fly_targets() {
    let ds = data();
    let teachers = vec![model(6), model(7)];
    let store = compute_pseudo_labels(&teachers, vec!["a".into(), "b".into()], &ds, 1.0).unwrap();
    let cfg = TrainConfig {
        pseudo_mode: PseudoMode::Precomputed,
        pseudo_store: Some("in-memory".into()),
        teacher_checkpoints: vec![],
        ..distill(2)
    };
    let from_store = distill_student(model(8), Targets::Store(&store), &ds, cfg, None, None).unwrap();
    let on_the_fly = distill_student(model(8), Targets::Teachers(&teachers), &ds, distill(2), None, None).unwrap();
    assert_traces_close(&losses(&from_store.history), &losses(&on_the_fly.history));
}

#[test]
fn mismatched_grids_fail_before_training() {
    let ds = data();
    let teachers = vec![PoseModel::new(BackboneSpec::new(BackboneName::TinyCnn), BinGrid::new(30, -90.0, 90.0).unwrap(), 112, 1).unwrap()];
    let err = Trainer::new(model(1), distill(1), None, &ds, Targets::Teachers(&teachers)).err().unwrap();
    assert!(err.to_string().contains("grid"), "{err}");
}
