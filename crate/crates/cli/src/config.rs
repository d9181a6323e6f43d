//! `--config FILE` support: a flat `key=value` file whose keys are long flag
//! names. File values are spliced in before the command-line flags, so flags
//! given on the command line win.

use std::ffi::OsString;
use std::fs;

use clap::{ArgMatches, Command};
use covsel::{Error, Result};

fn find_config(args: &[OsString]) -> Option<(usize, usize, OsString)> {
    for (i, a) in args.iter().enumerate().skip(2) {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return args.get(i + 1).map(|p| (i, 2, p.clone()));
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some((i, 1, OsString::from(path)));
        }
    }
    None
}

/// Rewrites `args` with the contents of any `--config FILE`. Unknown keys
/// are rejected.
pub fn expand(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some((at, width, path)) = find_config(&args) else {
        return Ok(args);
    };
    let sub_name = args[1].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {} is not key=value", lineno + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config" && key != "help")
            .ok_or_else(|| Error::Config(format!("unknown key `{key}` in config file")))?;
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(Error::Config(format!("`{key}` expects true or false, got `{other}`")));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend_from_slice(&args[..2]);
    out.extend(injected);
    out.extend(args[2..at].iter().cloned());
    out.extend(args[at + width..].iter().cloned());
    Ok(out)
}

/// Every option of `sub` as it was finally resolved, in `key=value` form
/// (itself a valid config file).
pub fn resolved(sub: &Command, matches: &ArgMatches) -> String {
    let mut out = format!("# covsel {}\n", sub.get_name());
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if long == "config" || long == "help" {
            continue;
        }
        if !arg.get_action().takes_values() {
            if matches.get_flag(id) {
                out.push_str(&format!("{long}=true\n"));
            }
            continue;
        }
        if let Some(raw) = matches.get_raw(id) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push_str(&format!("{long}={}\n", values.join(",")));
        }
    }
    out
}
