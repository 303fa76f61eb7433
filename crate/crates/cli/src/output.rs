//! Result files: CSV tables, a text summary and a manifest with checksums.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliResult};

/// Collects the files written by one command so the manifest can list them.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    config: &'a ExperimentConfig,
    outputs: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error()).map_err(io_err(self.path(name)))?;
        self.write_text(name, &String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Records a file written through another path (e.g. tensor files).
    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    /// Writes `manifest.json` with the SHA-256 of every recorded file.
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
        self.written.sort();
        self.written.dedup();
        let outputs = self
            .written
            .iter()
            .map(|name| {
                let p = self.path(name);
                let bytes = fs::read(&p).map_err(io_err(&p))?;
                Ok(ManifestEntry {
                    file: name.clone(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = Manifest {
            command,
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            outputs,
        };
        let p = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(io_err(&p))?;
        Ok(p)
    }
}
