use std::fs;

use mapforensics_core::corpus::{load_manifest, ImageStore};
use mapforensics_core::metrics::{compute_metrics, render_report, ConfusionMatrix, ReportFormat};
use mapforensics_detector::{evaluate, Detector};

use super::{ensure_parent, manifest_path, write_sidecar, Context};
use crate::args::{EvalArgs, ReportStyle};
use crate::error::CliError;

pub fn run(args: &EvalArgs, ctx: &mut Context) -> Result<(), CliError> {
    let cm = match args.cm {
        Some(c) => ConfusionMatrix::new(c.0[0], c.0[1], c.0[2], c.0[3]),
        None => {
            let detector = Detector::load(&args.checkpoint)?;
            let manifest = load_manifest(manifest_path(&args.corpus_dir))?;
            evaluate(&detector, &manifest, args.split, &ImageStore::new(&args.corpus_dir))?
        }
    };
    let report = compute_metrics(&cm)?;
    let format = match args.format {
        ReportStyle::Text => ReportFormat::Text,
        ReportStyle::Machine => ReportFormat::MachineReadable,
    };
    let rendered = render_report(&report, &cm, format);
    write!(ctx.out, "{rendered}")?;
    if let Some(path) = &args.report {
        ensure_parent(path)?;
        fs::write(path, &rendered)?;
        write_sidecar(path, &ctx.effective)?;
    }
    Ok(())
}
