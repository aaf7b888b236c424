//! Merges a TOML config file under the command line.
//!
//! Keys are option names with underscores. For every option of the chosen
//! subcommand that was not given as a flag, a config value is appended to
//! the argument list as `--name=value` and the whole list is parsed again,
//! so config values get exactly the same validation as flags.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use serde_json::{json, Map, Value};

use crate::error::{CliError, ErrorClass};

/// Options that are never read from the config file.
const NOT_CONFIGURABLE: [&str; 3] = ["config", "help", "version"];

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    pub path: Option<String>,
    pub table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ErrorClass::Config, format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::new(ErrorClass::Config, format!("config {}: {}", path.display(), e.message())))?;
        Ok(ConfigFile { path: Some(path.display().to_string()), table })
    }
}

fn configurable_ids(cmd: &Command) -> impl Iterator<Item = &clap::Arg> {
    cmd.get_arguments()
        .filter(|a| a.get_long().is_some() && !NOT_CONFIGURABLE.contains(&a.get_id().as_str()))
}

/// Every key accepted by some subcommand or as a global option.
pub fn known_keys(root: &Command) -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = configurable_ids(root).map(|a| a.get_id().to_string()).collect();
    for sub in root.get_subcommands() {
        keys.extend(configurable_ids(sub).map(|a| a.get_id().to_string()));
    }
    keys
}

pub fn check_keys(root: &Command, config: &ConfigFile) -> Result<(), CliError> {
    let known = known_keys(root);
    let unknown: Vec<&str> = config.table.keys().map(String::as_str).filter(|k| !known.contains(*k)).collect();
    if unknown.is_empty() {
        return Ok(());
    }
    Err(CliError::new(
        ErrorClass::Config,
        format!("unknown key(s) {} in config {}", unknown.join(", "), config.path.as_deref().unwrap_or("")),
    ))
}

fn scalar_text(key: &str, v: &toml::Value) -> Result<String, CliError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(items) => items.iter().map(|i| scalar_text(key, i)).collect::<Result<Vec<_>, _>>().map(|p| p.join(",")),
        _ => Err(CliError::new(ErrorClass::Config, format!("config key {key} must be a string, number, boolean or array"))),
    }
}

fn from_command_line(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

/// Options in effect for the selected subcommand, each paired with the
/// matches it is read from: global options first, then the subcommand's own.
fn scoped_args<'a>(root: &'a Command, matches: &'a ArgMatches) -> Vec<(&'a clap::Arg, &'a ArgMatches)> {
    let mut scoped: Vec<(&clap::Arg, &ArgMatches)> = configurable_ids(root).map(|a| (a, matches)).collect();
    if let Some((name, sub_matches)) = matches.subcommand() {
        let sub = root.find_subcommand(name).expect("matched subcommand exists");
        for arg in configurable_ids(sub) {
            if !scoped.iter().any(|(a, _)| a.get_id() == arg.get_id()) {
                scoped.push((arg, sub_matches));
            }
        }
    }
    scoped
}

/// The argument list with config values appended for every option of the
/// selected subcommand that the command line left unset.
pub fn merged_args(root: &Command, first: &ArgMatches, args: &[OsString], config: &ConfigFile) -> Result<Vec<OsString>, CliError> {
    let mut merged = args.to_vec();
    for (arg, m) in scoped_args(root, first) {
        let id = arg.get_id().as_str();
        let (Some(value), false) = (config.table.get(id), from_command_line(m, id)) else {
            continue;
        };
        let long = arg.get_long().expect("configurable options have a long name");
        if arg.get_action().takes_values() {
            merged.push(format!("--{long}={}", scalar_text(id, value)?).into());
        } else {
            match value {
                toml::Value::Boolean(true) => merged.push(format!("--{long}").into()),
                toml::Value::Boolean(false) => {}
                _ => return Err(CliError::new(ErrorClass::Config, format!("config key {id} must be true or false"))),
            }
        }
    }
    Ok(merged)
}

fn value_json(m: &ArgMatches, arg: &clap::Arg) -> Value {
    let id = arg.get_id().as_str();
    if !arg.get_action().takes_values() {
        return Value::Bool(m.get_flag(id));
    }
    match m.get_raw(id) {
        None => Value::Null,
        Some(raw) => {
            let parts: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            match parts.len() {
                1 => Value::String(parts.into_iter().next().expect("one value")),
                _ => Value::from(parts),
            }
        }
    }
}

/// Resolved option values of the selected subcommand, with the origin of
/// each (`flag`, `config` or `default`).
pub fn effective_config(root: &Command, first: &ArgMatches, merged: &ArgMatches, config: &ConfigFile) -> Value {
    let first_scoped = scoped_args(root, first);
    let merged_scoped = scoped_args(root, merged);
    let mut settings = Map::new();
    for ((arg, m_first), (_, m_merged)) in first_scoped.iter().zip(&merged_scoped) {
        let id = arg.get_id().as_str();
        let source = if from_command_line(m_first, id) {
            "flag"
        } else if config.table.contains_key(id) {
            "config"
        } else {
            "default"
        };
        settings.insert(id.to_string(), json!({ "value": value_json(m_merged, arg), "source": source }));
    }
    let command = merged.subcommand_name().unwrap_or_default();
    json!({ "command": command, "config_file": config.path, "settings": settings })
}
