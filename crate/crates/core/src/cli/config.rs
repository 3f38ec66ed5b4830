//! Flat `key = value` config files and run manifests.
//!
//! A config file is spliced into the argument list as `--key value` pairs
//! ahead of the user's own flags. Keys the user passes explicitly are
//! dropped from the file, so flags always win, also for repeatable flags.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Parses `key = value` lines; `#` starts a comment line. A key may repeat.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Ingest {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::Ingest {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("bad key `{k}`"),
            });
        }
        out.push((k.replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn flag_key(arg: &str) -> Option<&str> {
    let rest = arg.strip_prefix("--")?;
    Some(rest.split_once('=').map_or(rest, |(k, _)| k))
}

/// Rewrites `argv` so that the entries of every `--config FILE` come right
/// after the subcommand, minus keys the user sets on the command line.
pub fn splice_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut user = Vec::new();
    let mut files = Vec::new();
    let mut it = argv.into_iter();
    let mut head: Vec<String> = it.by_ref().take(2).collect();
    let rest: Vec<String> = it.collect();
    let mut i = 0;
    while i < rest.len() {
        let a = &rest[i];
        if a == "--config" {
            let path = rest
                .get(i + 1)
                .ok_or_else(|| Error::Config("--config needs a file".into()))?;
            files.push(path.clone());
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            files.push(p.to_string());
        } else {
            user.push(a.clone());
        }
        i += 1;
    }
    if head.len() < 2 || head[1].starts_with('-') {
        head.extend(user);
        return Ok(head);
    }
    let explicit: Vec<&str> = user.iter().filter_map(|a| flag_key(a)).collect();
    let mut spliced = Vec::new();
    for f in &files {
        let path = Path::new(f);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_config(&text, path)? {
            if !explicit.contains(&k.as_str()) {
                spliced.push(format!("--{k}"));
                spliced.push(v);
            }
        }
    }
    head.extend(spliced);
    head.extend(user);
    Ok(head)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A run manifest: metadata as `#` comments, then the resolved flags in
/// config-file form so the manifest can be fed back with `--config`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub values: Vec<(String, String)>,
    /// `(path, sha256)` of every input file.
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# tool = {}\n", env!("CARGO_PKG_NAME")));
        s.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("# subcommand = {}\n", self.subcommand));
        for (p, h) in &self.inputs {
            s.push_str(&format!("# input {p} sha256 {h}\n"));
        }
        for o in &self.outputs {
            s.push_str(&format!("# output {o}\n"));
        }
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join("manifest.txt");
        std::fs::write(&p, self.render()).map_err(|e| Error::io(&p, e))
    }
}
