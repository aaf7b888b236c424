//! The `mapforensics` command line: plan, generate, scrape, build, train,
//! eval and detect.

pub mod acquired;
pub mod args;
pub mod commands;
pub mod error;
pub mod settings;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Context;
use error::{CliError, ErrorClass};
use settings::ConfigFile;

fn usage_error(e: &clap::Error) -> CliError {
    let text = e.to_string();
    let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
    CliError::new(ErrorClass::Usage, first)
}

/// Runs the command line `args` (including the program name), writing
/// results to `out` and the single-line error, if any, to `err`. Returns the
/// process exit code.
pub fn run(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(args, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.line());
            e.class.exit_code()
        }
    }
}

fn dispatch(args: Vec<OsString>, out: &mut dyn Write) -> Result<(), CliError> {
    let root = Cli::command();
    let first = match root.clone().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render())?;
            return Ok(());
        }
        Err(e) => return Err(usage_error(&e)),
    };
    let config = match first.get_one::<std::path::PathBuf>("config") {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    settings::check_keys(&root, &config)?;
    let merged_args = settings::merged_args(&root, &first, &args, &config)?;
    let merged = root.clone().try_get_matches_from(&merged_args).map_err(|e| {
        let inner = usage_error(&e);
        CliError::new(ErrorClass::Config, format!("config {}: {}", config.path.as_deref().unwrap_or(""), inner.message))
    })?;
    let effective = settings::effective_config(&root, &first, &merged, &config);
    let cli = Cli::from_arg_matches(&merged).map_err(|e| usage_error(&e))?;

    let _ = env_logger::Builder::new().filter_level(cli.log_level).format_timestamp_secs().is_test(false).try_init();
    log::set_max_level(cli.log_level);

    let mut ctx = Context { offline: cli.offline, effective, out };
    match &cli.command {
        Command::Plan(a) => commands::plan::run(a, &mut ctx),
        Command::Generate(a) => commands::acquire::generate(a, &mut ctx),
        Command::Scrape(a) => commands::acquire::scrape(a, &mut ctx),
        Command::Build(a) => commands::build::run(a, &mut ctx),
        Command::Train(a) => commands::train::run(a, &mut ctx),
        Command::Eval(a) => commands::eval::run(a, &mut ctx),
        Command::Detect(a) => commands::detect::run(a, &mut ctx),
    }
}
