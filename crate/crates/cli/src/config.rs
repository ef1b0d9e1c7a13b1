//! `key = value` config files. Each key is a long flag name of the chosen
//! subcommand; values are spliced in ahead of the command-line flags so that
//! explicit flags win.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};

fn parse(text: &str, path: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{path}:{}: expected key = value", i + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("{path}:{}: invalid key {key:?}", i + 1);
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

/// Removes `--config PATH` (or `--config=PATH`) from argv and inserts the
/// file's settings right after the subcommand name. Without a subcommand the
/// arguments pass through for clap to report.
pub fn expand(args: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(it.next().context("--config needs a path")?.to_string_lossy().into_owned());
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            out.push(a);
        }
    }
    let Some(p) = path else { return Ok(out) };
    let Some(pos) = out.iter().skip(1).position(|a| subcommands.iter().any(|s| a == s)) else {
        return Ok(out);
    };
    let text = fs::read_to_string(&p).with_context(|| format!("cannot read config file {p}"))?;
    let tail = out.split_off(pos + 2);
    out.extend(parse(&text, &p)?);
    out.extend(tail);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_and_bools() {
        let got = parse("# grid\nalpha = 1,6\nno_timings = true\nforce-naive=false\n", "c").unwrap();
        let got: Vec<String> = got.into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(got, ["--alpha", "1,6", "--no-timings"]);
        assert!(parse("oops\n", "c").is_err());
    }

    #[test]
    fn config_goes_after_subcommand() {
        let dir = std::env::temp_dir().join(format!("qpad-config-{}", std::process::id()));
        fs::write(&dir, "seed = 5\n").unwrap();
        let args: Vec<OsString> =
            ["qpad", "--config", dir.to_str().unwrap(), "fit", "--seed", "7"].iter().map(OsString::from).collect();
        let got: Vec<String> = expand(args, &["fit"]).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        fs::remove_file(&dir).unwrap();
        assert_eq!(got, ["qpad", "fit", "--seed", "5", "--seed", "7"]);
    }
}
