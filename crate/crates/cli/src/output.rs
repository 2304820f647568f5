//! Output directory handling, fingerprints and the provenance header.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Fingerprint {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fingerprint_file(path: &Path) -> Result<Fingerprint, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Fingerprint {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Everything that is not a primary output: versions, seed, a hash of the
/// run configuration, input and output fingerprints, and the wall clock.
#[derive(Debug, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config_hash: String,
    inputs: &'a [Fingerprint],
    outputs: &'a [Fingerprint],
    created_unix_ms: u128,
}

/// Single writer for one command's output directory.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<Fingerprint>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(Fingerprint {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Records a file some other writer produced inside the directory.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let mut f = fingerprint_file(&self.path(name))?;
        f.path = name.to_string();
        self.written.push(f);
        Ok(())
    }

    /// Writes `provenance.<command>.json` and returns the output fingerprints.
    pub fn finish<C: Serialize>(
        self,
        command: &str,
        seed: Option<u64>,
        config: &C,
        inputs: &[Fingerprint],
    ) -> Result<Vec<Fingerprint>, CliError> {
        let canonical = serde_json::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
        let created_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let p = Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: respctx::VERSION,
            command,
            seed,
            config_hash: sha256_hex(format!("{command}\n{canonical}").as_bytes()),
            inputs,
            outputs: &self.written,
            created_unix_ms,
        };
        let text = serde_json::to_string_pretty(&p).expect("provenance serializes");
        let path = self.path(&format!("provenance.{command}.json"));
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        Ok(self.written)
    }
}

/// Shortest representation that parses back to the same float.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
