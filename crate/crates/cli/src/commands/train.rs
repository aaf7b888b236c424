use mapforensics_core::corpus::{load_manifest, ImageStore};
use mapforensics_core::Split;
use mapforensics_detector::train::save_training_log;
use mapforensics_detector::{LabeledImages, Trainer, TrainingConfig};

use super::{ensure_parent, manifest_path, write_sidecar, Context};
use crate::args::TrainArgs;
use crate::error::CliError;

pub fn config_from(args: &TrainArgs) -> TrainingConfig {
    TrainingConfig {
        backbone_depth: args.backbone_depth,
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        early_stop_patience: args.early_stop_patience,
        seed: args.train_seed,
        pretrained_init: args.pretrained_weights.is_some(),
        pretrained_weights: args.pretrained_weights.clone(),
        augment: args.augment,
    }
}

pub fn run(args: &TrainArgs, ctx: &mut Context) -> Result<(), CliError> {
    let config = config_from(args);
    config.validate()?;
    let manifest = load_manifest(manifest_path(&args.corpus_dir))?;
    let store = ImageStore::new(&args.corpus_dir);
    let cache = args.cache_mb.saturating_mul(1 << 20);
    let train = LabeledImages::from_manifest(&manifest, Split::Train, &store, cache)?;
    let val = LabeledImages::from_manifest(&manifest, Split::Val, &store, cache)?;
    log::info!("training on {} images, validating on {}", train.len(), val.len());

    let mut trainer = Trainer::new(config, train, val)?;
    writeln!(ctx.out, "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc")?;
    while !trainer.should_stop() {
        let r = trainer.run_epoch()?;
        writeln!(ctx.out, "{}\t{:.6}\t{:.4}\t{:.6}\t{:.4}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc)?;
    }
    let (checkpoint, log, wall) = trainer.finish();

    ensure_parent(&args.checkpoint)?;
    ensure_parent(&args.training_log)?;
    checkpoint.save(&args.checkpoint)?;
    write_sidecar(&args.checkpoint, &ctx.effective)?;
    save_training_log(&log, &wall, &args.training_log)?;
    writeln!(
        ctx.out,
        "saved checkpoint {} from epoch {} of {}",
        args.checkpoint.display(),
        checkpoint.header.epoch,
        log.epochs.len()
    )?;
    Ok(())
}
