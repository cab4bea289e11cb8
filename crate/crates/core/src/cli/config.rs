//! Flat `key = value` config files. Each key names a long flag of the
//! subcommand; flags given on the command line take precedence.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", k + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Usage(format!("config line {}: invalid key", k + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let rest = arg.strip_prefix("--")?;
    Some(rest.split('=').next().unwrap_or(rest))
}

/// Expands `--config FILE` into flags inserted after the subcommand, skipping
/// any key the command line sets itself.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut path = None;
    for (k, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(k + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(Path::new(&path), e))?;
    let given: Vec<&str> = strs.iter().filter_map(|a| flag_name(a)).collect();
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if given.contains(&key.as_str()) {
            continue;
        }
        extra.push(OsString::from(format!("--{key}={value}")));
    }
    // program name and subcommand come first
    let split = args.len().min(2);
    let mut out: Vec<OsString> = args[..split].to_vec();
    out.extend(extra);
    out.extend(args[split..].iter().cloned());
    Ok(out)
}
