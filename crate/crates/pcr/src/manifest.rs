use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PcrError, Result};
use crate::formats;

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub created_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = formats::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| PcrError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn hashes(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

impl Manifest {
    pub fn new(stage: &str, config_hash: &str, seed: u64, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<Self> {
        Ok(Manifest {
            stage: stage.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            seed,
            inputs: hashes(inputs)?,
            outputs: hashes(outputs)?,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    /// Writes `<dir>/<stage>.manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.stage));
        formats::write_json(&path, self)?;
        Ok(path)
    }
}
