//! Per-command bookkeeping: input hashing, output writing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON text: sorted object keys, two-space indentation, trailing newline.
pub fn json_text<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn jsonl_text<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        let v = serde_json::to_value(item)?;
        out.extend(serde_json::to_string(&v)?.into_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

pub struct Run {
    label: String,
    settings: Settings,
    out_dir: PathBuf,
    inputs: Vec<(FileDigest, PathBuf)>,
    outputs: Vec<FileDigest>,
}

impl Run {
    /// `label` names the manifest file, `<label>.manifest.json` inside `out_dir`.
    pub fn new(label: impl Into<String>, settings: &Settings, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(Run {
            label: label.into(),
            settings: settings.clone(),
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Reads and hashes an input artifact.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes =
            fs::read(path).with_context(|| format!("cannot read input {}", path.display()))?;
        self.inputs.push((
            FileDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            },
            fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
        ));
        Ok(bytes)
    }

    pub fn input_text(&mut self, path: &Path) -> Result<String> {
        let bytes = self.input(path)?;
        String::from_utf8(bytes).with_context(|| format!("{} is not valid UTF-8", path.display()))
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes `bytes` to `name` inside the output directory, refusing to touch an input.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.output_path(name);
        if let Ok(existing) = fs::canonicalize(&path) {
            if self.inputs.iter().any(|(_, p)| *p == existing) {
                bail!("output {} would overwrite an input", path.display());
            }
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let bytes = json_text(value)?;
        self.write(name, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<PathBuf> {
        let bytes = jsonl_text(items)?;
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            command: self.label.clone(),
            version: env!("CARGO_PKG_VERSION"),
            seed: self.settings.seed,
            config: self.settings.to_value(),
            inputs: self.inputs.into_iter().map(|(d, _)| d).collect(),
            outputs: self.outputs,
        };
        let path = self.out_dir.join(format!("{}.manifest.json", self.label));
        fs::write(&path, json_text(&manifest)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
