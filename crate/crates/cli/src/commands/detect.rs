use std::fs;

use mapforensics_detector::Detector;

use super::Context;
use crate::args::DetectArgs;
use crate::error::{CliError, ErrorClass};

/// One `path<TAB>label<TAB>probability` line per input, in input order.
pub fn run(args: &DetectArgs, ctx: &mut Context) -> Result<(), CliError> {
    let detector = Detector::load(&args.checkpoint)?;
    for path in &args.paths {
        let bytes = fs::read(path).map_err(|e| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display())))?;
        let prediction = detector.predict(&bytes).map_err(|e| {
            let class = CliError::from(e);
            CliError::new(class.class, format!("{}: {}", path.display(), class.message))
        })?;
        writeln!(ctx.out, "{}\t{}\t{:.6}", path.display(), prediction.label, prediction.probability)?;
    }
    Ok(())
}
