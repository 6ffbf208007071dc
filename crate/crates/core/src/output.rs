//! Self-describing output files: CSV tables and JSON-lines records that start
//! with a header naming the config hash, plus a versioned run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;

/// Version of the manifest layout.
pub const MANIFEST_VERSION: u32 = 1;
pub const TOOL: &str = "lorentz-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A table of pre-formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form; `NaN`, `inf` and `-inf` otherwise.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Empty cell for `None`.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn int<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// Writes the files of one run into a directory.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    config_json: String,
    config_hash: String,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut echo = config.clone();
        echo.threads = None;
        echo.out = PathBuf::new();
        Ok(Self {
            dir: dir.to_path_buf(),
            config_json: serde_json::to_string(&echo)?,
            config_hash: config.hash(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Files written so far, in order.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = BufWriter::new(File::create(&path)?);
        self.files.push(path);
        Ok(f)
    }

    /// CSV preceded by `#` lines with tool, version, config hash and config.
    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let (hash, json) = (self.config_hash.clone(), self.config_json.clone());
        let mut f = self.open(name)?;
        writeln!(f, "# {TOOL} {VERSION}")?;
        writeln!(f, "# config_hash: {hash}")?;
        writeln!(f, "# config: {json}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(self.files.last().cloned().expect("just pushed"))
    }

    /// JSON lines; the first line is a header object with the config.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<PathBuf> {
        let header = serde_json::json!({
            "header": {
                "tool": TOOL,
                "version": VERSION,
                "config_hash": self.config_hash,
                "config": serde_json::from_str::<serde_json::Value>(&self.config_json)?,
            }
        });
        let mut f = self.open(name)?;
        serde_json::to_writer(&mut f, &header)?;
        writeln!(f)?;
        for r in records {
            serde_json::to_writer(&mut f, r)?;
            writeln!(f)?;
        }
        f.flush()?;
        Ok(self.files.last().cloned().expect("just pushed"))
    }

    /// Pretty JSON document wrapped with the config header.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let doc = serde_json::json!({
            "tool": TOOL,
            "version": VERSION,
            "config_hash": self.config_hash,
            "config": serde_json::from_str::<serde_json::Value>(&self.config_json)?,
            "report": value,
        });
        let mut f = self.open(name)?;
        serde_json::to_writer_pretty(&mut f, &doc)?;
        writeln!(f)?;
        f.flush()?;
        Ok(self.files.last().cloned().expect("just pushed"))
    }

    /// `manifest.json` listing every file with its SHA-256. Unlike the data
    /// files it records wall time and thread count, so it differs between
    /// otherwise identical runs.
    pub fn write_manifest(&self, manifest: &Manifest) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, manifest)?;
        writeln!(f)?;
        f.flush()?;
        Ok(path)
    }

    /// Manifest entries for the files written so far.
    pub fn file_entries(&self) -> Result<Vec<FileEntry>> {
        self.files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)?;
                Ok(FileEntry {
                    name: p
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub config: RunConfig,
    /// Named seeds used by the run, e.g. the environment seed.
    pub seeds: Vec<(String, u64)>,
    pub threads: usize,
    pub wall_time_seconds: f64,
    /// Outcome of the run: `ok` or the error message.
    pub status: String,
    pub files: Vec<FileEntry>,
}
