//! Flat `key = value` config files.
//!
//! Entries become command-line arguments appended before parsing, skipped
//! when the same flag is already on the command line or set in the
//! environment, so clap resolves the usual flag > env > file > default order.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;

pub const ENV_PREFIX: &str = "CCMSCREEN_";

#[derive(Debug)]
pub struct ConfigError(pub String);

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", i + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(ConfigError(format!("config line {}: duplicate key {key:?}", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Config path from `--config` on the command line or the environment.
fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    std::env::var_os(format!("{ENV_PREFIX}CONFIG"))
}

fn flag_present(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

/// Long flags accepted by the subcommand named in `argv`, plus globals.
fn known_flags(argv: &[OsString]) -> (Option<String>, BTreeSet<String>, BTreeSet<String>) {
    let cmd = Cli::command();
    let globals: BTreeSet<String> = cmd.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
    let mut every: BTreeSet<String> = globals.clone();
    for sub in cmd.get_subcommands() {
        every.extend(sub.get_arguments().filter_map(|a| a.get_long().map(String::from)));
    }
    let chosen = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| cmd.get_subcommands().any(|s| s.get_name() == a));
    let mut accepted = globals;
    if let Some(name) = &chosen {
        let sub = cmd.find_subcommand(name).expect("subcommand exists");
        accepted.extend(sub.get_arguments().filter_map(|a| a.get_long().map(String::from)));
    }
    (chosen, accepted, every)
}

/// Returns `argv` with config-file entries appended.
pub fn apply_config(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("reading config {}: {e}", path.display())))?;
    let entries = parse_config(&text)?;
    let (chosen, accepted, every) = known_flags(&argv);
    if chosen.is_none() {
        return Ok(argv);
    }
    let mut out = argv.clone();
    for (key, value) in entries {
        let long = key.replace('_', "-");
        if long == "config" {
            return Err(ConfigError("config files cannot name another config file".into()));
        }
        if !every.contains(&long) {
            return Err(ConfigError(format!("unknown config key {key:?}")));
        }
        if !accepted.contains(&long) {
            continue;
        }
        let flag = format!("--{long}");
        if flag_present(&argv, &flag) || std::env::var_os(format!("{ENV_PREFIX}{}", key.to_uppercase())).is_some() {
            continue;
        }
        out.push(format!("{flag}={value}").into());
    }
    Ok(out)
}
