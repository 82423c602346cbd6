//! `--config` support: a flat `key=value` file, or a run's `config.json`,
//! expanded into command-line flags placed before the user's own flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got '{raw}'", no + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", no + 1);
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Reads either format. A JSON file must carry an `args` object, as the
/// `config.json` of every run directory does.
pub fn load(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Some(args) = v.get("args").and_then(|a| a.as_object()) else {
            bail!("{} has no 'args' object", path.display());
        };
        return Ok(args
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.replace('_', "-"), s)
            })
            .collect());
    }
    parse_kv(&text)
}

fn config_path(argv: &[OsString]) -> Result<Option<OsString>> {
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return match argv.get(i + 1) {
                Some(p) => Ok(Some(p.clone())),
                None => bail!("--config needs a file argument"),
            };
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

fn given_on_command_line(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefixed = format!("--{key}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&prefixed)
    })
}

/// Returns `argv` with the config file's entries inserted as flags right
/// after the subcommand words. Keys already given on the command line are
/// skipped so that explicit flags always win.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let entries = load(Path::new(&path))?;
    let mut injected = Vec::new();
    for (key, value) in &entries {
        if key == "config" || given_on_command_line(&argv, key) {
            continue;
        }
        match value.as_str() {
            "true" => injected.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                injected.push(OsString::from(format!("--{key}")));
                injected.push(OsString::from(value));
            }
        }
    }
    let at = argv
        .iter()
        .skip(1)
        .position(|a| a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
        .unwrap_or(argv.len());
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let m = parse_kv("# run\nwidth = 2000\nlearning_rate=0.1 # eta\n\n").unwrap();
        assert_eq!(m["width"], "2000");
        assert_eq!(m["learning-rate"], "0.1");
        assert!(parse_kv("oops").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(
            &p,
            "width=10\nepsilon=0.1\nno-shuffle=true\nsynthetic=false\n",
        )
        .unwrap();
        let argv = os(&[
            "ibplab",
            "train",
            "--config",
            p.to_str().unwrap(),
            "--width",
            "20",
        ]);
        let out = expand(argv).unwrap();
        let s: Vec<String> = out
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(&s[..2], &["ibplab", "train"]);
        assert!(s.windows(2).any(|w| w == ["--epsilon", "0.1"]));
        assert!(s.contains(&"--no-shuffle".to_string()));
        assert!(!s.contains(&"--synthetic".to_string()));
        assert_eq!(s.iter().filter(|a| *a == "--width").count(), 1);
    }

    #[test]
    fn reads_run_config_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.json");
        std::fs::write(&p, r#"{"args": {"width": 64, "mode": "sgd"}, "other": 1}"#).unwrap();
        let m = load(&p).unwrap();
        assert_eq!(m["width"], "64");
        assert_eq!(m["mode"], "sgd");
    }
}
