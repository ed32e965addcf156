//! Flat `key=value` configuration files mirroring the command-line flags.
//! Keys are flag names without the leading dashes (`_` and `-` are
//! interchangeable); values given on the command line take precedence.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Flags that take no value; `true` enables them, `false` leaves them off.
const SWITCHES: &[&str] = &["reduced"];

pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Config(format!("line {}: invalid key `{}`", lineno + 1, k.trim())));
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let body = arg.strip_prefix("--")?;
    Some(body.split_once('=').map_or(body, |(k, _)| k))
}

/// Removes `--config PATH` from `argv` and appends every configured flag the
/// command line does not already set.
pub fn expand_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut args = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| CliError::Usage("--config needs a path".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_owned());
        } else {
            args.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| CliError::io(&path, e))?;
    let given: Vec<String> = args.iter().filter_map(|a| flag_name(a)).map(str::to_owned).collect();
    for (key, value) in parse_config(&text)? {
        if given.contains(&key) {
            continue;
        }
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" => args.push(format!("--{key}")),
                "false" => {}
                _ => return Err(CliError::Config(format!("`{key}` must be true or false"))),
            }
        } else {
            args.push(format!("--{key}={value}"));
        }
    }
    Ok(args)
}
