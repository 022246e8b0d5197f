mod common;

use pcr::pipeline::Paths;
use pcr::Stage;
use pcr_core::model::TrainReport;

#[test]
fn training_loss_falls_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::fixture_config(dir.path());
    cfg.epochs = 10;
    for stage in [Stage::Ingest, Stage::Preprocess, Stage::Graph, Stage::Train] {
        pcr::run(stage, &cfg).unwrap();
    }
    let report: TrainReport = pcr::formats::read_json(&Paths::new(&cfg).train_report).unwrap();
    let losses = &report.epoch_losses;
    assert_eq!(losses.len(), 10);
    assert!(losses.iter().all(|l| l.is_finite()));
    assert!(losses[9] < losses[0], "{losses:?}");
}
