//! Trainer, checkpoint and inference behaviour on small fixture images.

use std::collections::HashMap;

use mapforensics_core::acquisition::fixture::{draw_generated_placeholder, draw_search_placeholder};
use mapforensics_core::acquisition::{AcquiredImage, Origin};
use mapforensics_core::corpus::manifest::SplitFractions;
use mapforensics_core::corpus::{DatasetManifest, ImageStore, Label, Split};
use mapforensics_core::metrics::ConfusionMatrix;
use mapforensics_core::prompt_grammar::{Region, RegionLevel};
use mapforensics_detector::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use mapforensics_detector::data::LabeledImages;
use mapforensics_detector::nn::Parameters;
use mapforensics_detector::preprocess::{resize_bytes, Normalization};
use mapforensics_detector::train::{build_model, evaluate_loss, load_training_log, save_training_log, train, TrainingLog};
use mapforensics_detector::{evaluate, Classifier, Detector, DetectorError, Prediction, Trainer, TrainingConfig};
use sha2::{Digest, Sha256};

const SIDE: u32 = 64;

fn fixture_bytes(label: Label, i: usize) -> Vec<u8> {
    match label {
        Label::AiGenerated => draw_generated_placeholder(&format!("A heat map of fixture {i}")),
        Label::HumanDesigned => draw_search_placeholder("fixture maps", i as u32 + 1),
    }
}

fn images(per_class: usize, offset: usize, flip_labels: bool) -> LabeledImages {
    let mut items = Vec::new();
    for i in 0..per_class {
        for label in Label::ALL {
            let shown = if flip_labels { Label::from_class_index(1 - label.class_index()).unwrap() } else { label };
            items.push((resize_bytes(&fixture_bytes(label, offset + i), SIDE).unwrap(), shown));
        }
    }
    LabeledImages::from_resized(items)
}

fn config(seed: u64, max_epochs: u32) -> TrainingConfig {
    TrainingConfig { batch_size: 8, max_epochs, early_stop_patience: max_epochs, seed, ..Default::default() }
}

#[test]
fn identical_seeds_reproduce_losses_and_checkpoints() {
    let run = |seed| train(config(seed, 2), images(8, 0, false), images(3, 100, false)).unwrap();
    let (ck_a, log_a, _) = run(11);
    let (ck_b, log_b, _) = run(11);
    assert_eq!(format!("{:.6}", log_a.epochs[0].train_loss), format!("{:.6}", log_b.epochs[0].train_loss));
    assert_eq!(log_a, log_b);
    assert_eq!(ck_a.to_bytes().unwrap(), ck_b.to_bytes().unwrap());
    let (_, log_c, _) = run(12);
    assert_ne!(log_a.epochs[0].train_loss, log_c.epochs[0].train_loss);
}

#[test]
fn early_stopping_keeps_the_best_validation_epoch() {
    // Validation labels are inverted, so validation loss rises as the model
    // learns the training labels.
    let cfg = TrainingConfig { batch_size: 8, max_epochs: 20, early_stop_patience: 2, seed: 3, ..Default::default() };
    let val = images(4, 200, true);
    let mut trainer = Trainer::new(cfg, images(8, 0, false), val.clone()).unwrap();
    while !trainer.should_stop() {
        trainer.run_epoch().unwrap();
    }
    let log = trainer.log().clone();
    let best = log.best_epoch().unwrap().clone();
    assert!(log.epochs.len() < 20, "stopped after {} epochs", log.epochs.len());
    assert_eq!(log.epochs.len() as u32, best.epoch + 2);
    let (ck, _, _) = trainer.finish();
    assert_eq!(ck.header.epoch, best.epoch);

    // The restored weights reproduce the best epoch's validation loss.
    let (val_loss, _) = evaluate_loss(&ck.to_model().unwrap(), &val, &ck.header.normalization, 8).unwrap();
    assert_eq!(val_loss, best.val_loss);
}

#[test]
fn checkpoint_round_trips_byte_exactly() {
    let (ck, log, wall) = train(config(5, 1), images(4, 0, false), images(2, 50, false)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.safetensors");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    assert_eq!(loaded.to_bytes().unwrap(), std::fs::read(&path).unwrap());
    assert_eq!(loaded.header.format, CHECKPOINT_FORMAT);
    assert_eq!(loaded.header.class_map["0"], Label::HumanDesigned);
    assert_eq!(loaded.header.class_map["1"], Label::AiGenerated);
    assert_eq!(loaded.header.training_log_digest, log.digest());
    assert_eq!(loaded.header.config, config(5, 1));

    let log_path = dir.path().join("train.log.jsonl");
    save_training_log(&log, &wall, &log_path).unwrap();
    assert_eq!(load_training_log(&log_path).unwrap(), log);
    assert!(dir.path().join("train.log.jsonl.meta.json").is_file());
    assert_eq!(TrainingLog::from_jsonl(&log.to_jsonl()).unwrap().digest(), log.digest());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let (ck, _, _) = train(config(5, 1), images(2, 0, false), images(1, 50, false)).unwrap();
    let bytes = ck.to_bytes().unwrap();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]), Err(DetectorError::CheckpointCorrupt(_))));
    assert!(matches!(Checkpoint::from_bytes(b"garbage"), Err(DetectorError::CheckpointCorrupt(_))));

    let mut missing = ck.clone();
    missing.tensors.remove("layer3.1.bn2.running_var");
    assert!(matches!(missing.to_model(), Err(DetectorError::CheckpointCorrupt(_))));

    let mut wrong_version = ck.clone();
    wrong_version.header.schema_version = 99;
    assert!(matches!(Checkpoint::from_bytes(&wrong_version.to_bytes().unwrap()), Err(DetectorError::CheckpointCorrupt(_))));
}

#[test]
fn pretrained_backbone_is_loaded_and_head_reinitialized() {
    let source = build_model(&TrainingConfig { seed: 77, ..Default::default() }).unwrap();
    let header = {
        let (ck, _, _) = train(config(1, 1), images(1, 0, false), images(1, 9, false)).unwrap();
        ck.header
    };
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("backbone.safetensors");
    Checkpoint::from_model(&source, header).save(&weights).unwrap();

    let cfg = TrainingConfig { seed: 1, pretrained_init: true, pretrained_weights: Some(weights.clone()), ..Default::default() };
    let model = build_model(&cfg).unwrap();
    let mut source_values = HashMap::new();
    source.visit("", &mut |n, p| {
        source_values.insert(n, p.value.clone());
    });
    model.visit("", &mut |n, p| {
        if n.starts_with("fc.") {
            assert_ne!(source_values[&n], p.value, "{n} should be freshly initialized");
        } else {
            assert_eq!(source_values[&n], p.value, "{n}");
        }
    });

    let trainer = Trainer::new(TrainingConfig { batch_size: 4, max_epochs: 1, early_stop_patience: 1, ..cfg }, images(2, 0, false), images(1, 9, false)).unwrap();
    assert_eq!(trainer.normalization, Normalization::imagenet());

    let mut partial = Checkpoint::from_model(&source, trainer.finish().0.header);
    partial.tensors.remove("layer1.0.conv1.weight");
    partial.save(&weights).unwrap();
    assert!(build_model(&TrainingConfig { seed: 1, pretrained_init: true, pretrained_weights: Some(weights), ..Default::default() }).is_err());
}

#[test]
fn empty_splits_are_rejected() {
    let empty = LabeledImages::from_resized(Vec::new());
    assert!(matches!(Trainer::new(config(1, 1), empty.clone(), images(1, 0, false)), Err(DetectorError::EmptySplit(Split::Train))));
    assert!(matches!(Trainer::new(config(1, 1), images(1, 0, false), empty), Err(DetectorError::EmptySplit(Split::Val))));
}

// --- evaluation ----------------------------------------------------------------

struct Oracle(HashMap<Vec<u8>, Label>);

impl Classifier for Oracle {
    fn classify(&self, bytes: &[u8]) -> Result<Prediction, DetectorError> {
        let label = self.0[&Sha256::digest(bytes).to_vec()];
        Ok(Prediction::from_probability(label.class_index() as f64))
    }
}

struct Constant(Label);

impl Classifier for Constant {
    fn classify(&self, _: &[u8]) -> Result<Prediction, DetectorError> {
        Ok(Prediction::from_probability(self.0.class_index() as f64))
    }
}

fn balanced_manifest(store: &ImageStore, per_class: usize) -> DatasetManifest {
    let mut m = DatasetManifest::new("test");
    let region = Region { name: "Asia".into(), level: RegionLevel::Continent };
    for i in 0..per_class {
        let ai = AcquiredImage::new(fixture_bytes(Label::AiGenerated, i), Origin::Fixture, "fixture", None).unwrap();
        m.ingest(store, &ai, Label::AiGenerated, &region, Some("A heat map of Asia")).unwrap();
        let human = AcquiredImage::new(fixture_bytes(Label::HumanDesigned, i), Origin::Searched, "fixture", Some(1)).unwrap();
        m.ingest(store, &human, Label::HumanDesigned, &region, None).unwrap();
    }
    m.assign_splits(SplitFractions::new(0.into(), 0.into(), 1.into()).unwrap(), 0, false).unwrap();
    m
}

#[test]
fn evaluate_tallies_oracle_and_constant_classifiers() {
    let dir = tempfile::tempdir().unwrap();
    let store = ImageStore::new(dir.path());
    let m = balanced_manifest(&store, 10);
    assert_eq!(m.split(Split::Test).count(), 20);
    let oracle = Oracle(m.records.iter().map(|r| (Sha256::digest(store.read(&r.image_path).unwrap()).to_vec(), r.label)).collect());
    assert_eq!(evaluate(&oracle, &m, Split::Test, &store).unwrap(), ConfusionMatrix::new(10, 0, 0, 10));
    assert_eq!(evaluate(&Constant(Label::AiGenerated), &m, Split::Test, &store).unwrap(), ConfusionMatrix::new(10, 10, 0, 0));
    assert!(matches!(evaluate(&oracle, &m, Split::Train, &store), Err(DetectorError::EmptySplit(Split::Train))));
}

#[test]
fn predictions_are_pure_functions_of_checkpoint_and_bytes() {
    let (ck, _, _) = train(config(9, 1), images(4, 0, false), images(2, 50, false)).unwrap();
    let detector = Detector::from_checkpoint(&ck).unwrap();
    let bytes = fixture_bytes(Label::AiGenerated, 3);
    let a = detector.predict(&bytes).unwrap();
    let b = detector.predict(&bytes).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.probability));
    assert_eq!(a.label == Label::AiGenerated, a.probability >= 0.5);

    let dir = tempfile::tempdir().unwrap();
    let store = ImageStore::new(dir.path());
    let m = balanced_manifest(&store, 4);
    let mut records = m.records.clone();
    records.reverse();
    let reversed = DatasetManifest::from_records(m.vocabulary_version.clone(), records);
    assert_eq!(evaluate(&detector, &m, Split::Test, &store).unwrap(), evaluate(&detector, &reversed, Split::Test, &store).unwrap());
    assert!(matches!(detector.predict(b"not an image"), Err(DetectorError::UndecodableImage(_))));
}
