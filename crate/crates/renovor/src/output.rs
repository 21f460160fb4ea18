//! In-memory output sets and the run manifest.
//!
//! Commands assemble every output file in memory and only touch the output
//! directory once all stages succeeded, so a failing run leaves nothing
//! behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::metaimage::MetaImage;

pub const MANIFEST_FILE: &str = "run-manifest.json";

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `<stem>.mhd` and `<stem>.raw`.
    pub fn image(&mut self, stem: &str, img: &MetaImage) {
        let (header, raw) = img.encode(stem);
        self.files.push((format!("{stem}.mhd"), header));
        self.files.push((format!("{stem}.raw"), raw));
    }

    pub fn text(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content.into_bytes()));
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Write all files plus `run-manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, manifest: &Manifest) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            written.push(p);
        }
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, manifest.to_json())?;
        written.push(p);
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

/// Parameters and content hashes of one run. Execution settings that do not
/// change results (output directory, thread count) are not recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value, inputs: Vec<InputRecord>, outputs: &OutputSet) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            parameters,
            inputs,
            outputs: outputs
                .files()
                .iter()
                .map(|(file, bytes)| OutputRecord { file: file.clone(), sha256: sha256_hex(&[bytes]) })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_else(|_| unreachable!());
        s.push('\n');
        s
    }
}
