use std::fs;
use std::path::Path;
use std::time::Instant;

use mia_core::pipeline::{layout, run_pipeline, DatasetSource, PipelineConfig, StageStatus};
use mia_core::{Error, PredictionMatrix};

/// N = 4 models, M = 60 examples, 50 epochs.
fn minimal(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_kv_text(
        "models = 4\nepochs = 50\nclasses = 3\ndim = 4\nper_class = 20\nhidden = 16\nseed = 11\n",
    )
    .unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

#[test]
fn minimal_config_runs_quickly_and_reports_25_rows() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let report = run_pipeline(&minimal(dir.path()), 1).unwrap();
    assert!(start.elapsed().as_secs() < 60);
    let csv = fs::read_to_string(&report.csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "attack,score_variant,auc,tpr@0.01,tpr@0.001,balanced_acc");
    assert_eq!(lines.len(), 26);
    assert!(lines[1].starts_with("online,baseline,"));
    assert!(lines[25].starts_with("global,logargmax,"));
    assert!(report.built().count() >= 4 + 5 + 25);
}

#[test]
fn rerun_reuses_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal(dir.path());
    let first = run_pipeline(&cfg, 1).unwrap();
    let csv = fs::read(&first.csv_path).unwrap();
    let svg = fs::read(&first.svg_path).unwrap();
    let second = run_pipeline(&cfg, 2).unwrap();
    assert!(second.stages.iter().all(|(_, s)| *s == StageStatus::Reused), "{:?}", second.stages);
    assert_eq!(fs::read(&second.csv_path).unwrap(), csv);
    assert_eq!(fs::read(&second.svg_path).unwrap(), svg);
}

#[test]
fn deleted_artifacts_are_rebuilt_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal(dir.path());
    run_pipeline(&cfg, 1).unwrap();
    let victims = [
        layout::MASK.to_string(),
        layout::model(2),
        layout::scores(mia_core::ScoreVariant::Argmax),
        layout::attack(mia_core::AttackVariant::Offline, mia_core::ScoreVariant::Confidence),
        layout::CSV.to_string(),
    ];
    let before: Vec<Vec<u8>> = victims.iter().map(|v| fs::read(dir.path().join(v)).unwrap()).collect();
    for v in &victims {
        fs::remove_file(dir.path().join(v)).unwrap();
    }
    let report = run_pipeline(&cfg, 1).unwrap();
    for (v, old) in victims.iter().zip(&before) {
        assert_eq!(&fs::read(dir.path().join(v)).unwrap(), old, "{v}");
    }
    let built: Vec<&str> = report.built().collect();
    assert_eq!(
        built,
        ["mask", "shadows", "score-argmax", "attack-offline-conf", "report"],
        "downstream stages keyed on unchanged content must be reused"
    );
}

#[test]
fn changed_parameters_invalidate_downstream_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = minimal(dir.path());
    run_pipeline(&cfg, 1).unwrap();
    cfg.fpr_levels = vec![0.05];
    let report = run_pipeline(&cfg, 1).unwrap();
    assert_eq!(report.built().collect::<Vec<_>>(), ["report"]);
    let csv = fs::read_to_string(&report.csv_path).unwrap();
    assert!(csv.starts_with("attack,score_variant,auc,tpr@0.05,balanced_acc\n"));
}

#[test]
fn failed_stage_removes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = minimal(dir.path());
    run_pipeline(&cfg, 1).unwrap();
    assert!(dir.path().join(layout::model(0)).exists());

    cfg.learning_rate = 1e200;
    cfg.init_scale = 1.0;
    let err = run_pipeline(&cfg, 1).unwrap_err();
    match &err {
        Error::Stage { stage, source } => {
            assert_eq!(stage, "shadows");
            assert!(matches!(**source, Error::Model { .. }), "{source}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(err.exit_code(), 3);
    for i in 0..4 {
        assert!(!dir.path().join(layout::model(i)).exists());
    }
    assert!(!dir.path().join(layout::PREDICTIONS).exists());
    assert!(dir.path().join(layout::DATASET).exists());
    assert!(dir.path().join(layout::MASK).exists());
}

#[test]
fn invalid_config_fails_before_touching_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = minimal(&out);
    cfg.num_models = 5;
    let err = run_pipeline(&cfg, 1).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());

    assert!(PipelineConfig::from_kv_text("attacks = online,lira").unwrap_err().exit_code() == 2);
}

#[test]
fn external_dataset_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let ds = mia_core::generate_synthetic(&mia_core::SynthSpec {
        num_classes: 2,
        dim: 3,
        per_class_count: 10,
        cluster_spread: 1.0,
        class_center_scale: 2.0,
        seed: 3,
    })
    .unwrap();
    let src = dir.path().join("input.dset");
    ds.save(&src).unwrap();
    let mut cfg = minimal(&dir.path().join("out"));
    cfg.dataset = DatasetSource::File(src);
    cfg.epochs = 5;
    run_pipeline(&cfg, 1).unwrap();
    let pm = PredictionMatrix::load(&cfg.out_dir.join(layout::PREDICTIONS)).unwrap();
    assert_eq!((pm.num_models(), pm.num_examples(), pm.num_classes()), (4, 20, 2));
    assert_eq!(fs::read(cfg.out_dir.join(layout::DATASET)).unwrap(), ds.to_bytes());
}
