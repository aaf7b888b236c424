use std::collections::BTreeMap;
use std::fs;

use mapforensics_core::acquisition::{AcquiredImage, Origin};
use mapforensics_core::corpus::{save_manifest_with_meta, DatasetManifest, ImageStore, SplitFractions};
use mapforensics_core::{Label, Region, Split};
use serde_json::json;

use super::{load_vocabulary, manifest_path, Context};
use crate::acquired::{self, Kind, Status};
use crate::args::BuildArgs;
use crate::error::{CliError, ErrorClass};

pub fn run(args: &BuildArgs, ctx: &mut Context) -> Result<(), CliError> {
    let vocab = load_vocabulary(args.vocabulary.as_deref())?;
    let [tr, va, te] = args.split_fractions.0;
    let fractions = SplitFractions::from_f64(tr, va, te)?;

    let sources = [(Kind::Generated, &args.generated_dir, Label::AiGenerated), (Kind::Searched, &args.searched_dir, Label::HumanDesigned)];
    let mut batches = Vec::new();
    for (kind, dir, label) in sources {
        if acquired::index_path(dir).is_file() {
            batches.push((dir, label, acquired::load(dir, kind)?));
        } else {
            log::warn!("no {kind:?} index in {}", dir.display());
        }
    }
    if batches.is_empty() {
        return Err(CliError::new(ErrorClass::Validation, "no acquisitions to build from; run generate or scrape first"));
    }

    fs::create_dir_all(&args.corpus_dir)?;
    let store = ImageStore::new(&args.corpus_dir);
    let mut manifest = DatasetManifest::new(vocab.version.clone());
    let mut repeated = 0usize;
    for (dir, label, entries) in &batches {
        for e in entries.iter().filter(|e| e.status == Status::Ok) {
            let file = e.file.as_ref().ok_or_else(|| CliError::new(ErrorClass::Format, "index entry without a file"))?;
            let origin = e.origin.unwrap_or(Origin::Fixture);
            let rank = (*label == Label::HumanDesigned).then_some(e.position);
            let image = AcquiredImage::new(fs::read(dir.join(file))?, origin, e.source_detail.clone().unwrap_or_default(), rank)?;
            let before = manifest.len();
            manifest.ingest(&store, &image, *label, &Region::new(e.region.clone(), e.level), e.prompt.as_deref())?;
            if manifest.len() == before {
                repeated += 1;
            }
        }
    }

    let report = manifest.dedupe(args.dedupe_threshold)?;
    manifest.assign_splits(fractions, args.split_seed, false)?;

    let path = manifest_path(&args.corpus_dir);
    save_manifest_with_meta(&manifest, &path, Some(ctx.effective.clone()))?;
    let mut dedupe = String::new();
    for (kept, removed, distance) in &report.removed {
        dedupe.push_str(&json!({ "kept": kept, "removed": removed, "distance": distance }).to_string());
        dedupe.push('\n');
    }
    fs::write(args.corpus_dir.join("dedupe.jsonl"), dedupe)?;

    let mut table: BTreeMap<(Label, Split), usize> = BTreeMap::new();
    for r in &manifest.records {
        *table.entry((r.label, r.split.expect("splits assigned"))).or_insert(0) += 1;
    }
    writeln!(
        ctx.out,
        "wrote {} records to {} ({repeated} identical payloads skipped, {} near-duplicates removed)",
        manifest.len(),
        path.display(),
        report.removed.len()
    )?;
    writeln!(ctx.out, "{:<16}{:>8}{:>8}{:>8}", "label", "train", "val", "test")?;
    for label in Label::ALL {
        let n = |s| table.get(&(label, s)).copied().unwrap_or(0);
        writeln!(ctx.out, "{:<16}{:>8}{:>8}{:>8}", label.as_str(), n(Split::Train), n(Split::Val), n(Split::Test))?;
    }
    Ok(())
}
