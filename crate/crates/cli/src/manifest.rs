//! Run manifests: config echo, seeds and SHA-256 of every input and output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stablecvar::bayes::config_hash;

use crate::config::{Command, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub id: usize,
    /// Seed of the simulated series; absent for file input.
    pub data_seed: Option<u64>,
    pub chain_seeds: Vec<u64>,
    /// Input file and 0-based row range `[start, end)` of the batch.
    pub source: Option<String>,
    pub rows: Option<[usize; 2]>,
    pub normalization: Option<Vec<Normalization>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<FileRecord>,
    pub replicates: Vec<ReplicateRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn check_hash(path: &Path, expected: &str) -> CliResult<()> {
    let actual = sha256_file(path)?;
    if actual != expected {
        return Err(CliError::Manifest(format!(
            "{} has sha256 {actual}, manifest records {expected}",
            path.display()
        )));
    }
    Ok(())
}

impl Manifest {
    pub fn new(cmd: Command, config: &ExperimentConfig) -> CliResult<Self> {
        Ok(Manifest {
            tool: format!("stablecvar {}", env!("CARGO_PKG_VERSION")),
            command: cmd.name().into(),
            config_hash: config_hash(config)?,
            config: config.clone(),
            inputs: Vec::new(),
            replicates: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))?;
        let hash = config_hash(&m.config)?;
        if hash != m.config_hash {
            return Err(CliError::Manifest(format!(
                "config echo hashes to {hash}, manifest records {}",
                m.config_hash
            )));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| CliError::Manifest(e.to_string()))
    }

    /// Refuses input files whose contents changed since the run.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for f in &self.inputs {
            check_hash(Path::new(&f.path), &f.sha256)?;
        }
        Ok(())
    }

    /// Series CSVs listed among the outputs of the manifest at `path`,
    /// resolved against its directory and checked against their hashes.
    pub fn series_files(path: &Path) -> CliResult<Vec<PathBuf>> {
        let m = Self::read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut files = Vec::new();
        for f in m.outputs.iter().filter(|f| f.path.starts_with("series/")) {
            let p = dir.join(&f.path);
            check_hash(&p, &f.sha256)?;
            files.push(p);
        }
        if files.is_empty() {
            return Err(CliError::Manifest(format!("{} lists no series files", path.display())));
        }
        Ok(files)
    }
}

/// Output directory that records the hash of everything written to it.
pub struct OutputDir {
    root: PathBuf,
    records: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.records.push(FileRecord {
            path: rel.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Manifest(e.to_string()))? + "\n";
        self.write(rel, text.as_bytes())
    }

    /// Writes the config echo and the manifest itself.
    pub fn finish(mut self, mut manifest: Manifest) -> CliResult<Manifest> {
        let toml = manifest.config.to_toml()?;
        self.write("config.toml", toml.as_bytes())?;
        manifest.outputs = self.records;
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, manifest.to_json()?).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn tampered_config_echo_is_refused() {
        let m = Manifest::new(Command::Simulate, &preset(Command::Simulate)).unwrap();
        let text = m.to_json().unwrap();
        assert_eq!(Manifest::from_json(&text).unwrap(), m);
        let tampered = text.replacen("\"replicates\": 10", "\"replicates\": 11", 1);
        assert_ne!(tampered, text);
        assert!(matches!(Manifest::from_json(&tampered), Err(CliError::Manifest(_))));
    }

    #[test]
    fn config_floats_survive_the_echo_bit_exactly() {
        let mut cfg = preset(Command::BiasStudy);
        cfg.abc.epsilon = Some(0.1 + 0.2);
        cfg.fit.near_gaussian = 1.0 - f64::EPSILON;
        let m = Manifest::new(Command::BiasStudy, &cfg).unwrap();
        let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.config.abc.epsilon.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.config, cfg);
    }

    #[test]
    fn changed_input_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "x").unwrap();
        let mut m = Manifest::new(Command::Estimate, &preset(Command::Estimate)).unwrap();
        m.inputs.push(FileRecord {
            path: f.display().to_string(),
            sha256: sha256_file(&f).unwrap(),
        });
        m.verify_inputs().unwrap();
        std::fs::write(&f, "y").unwrap();
        assert!(matches!(m.verify_inputs(), Err(CliError::Manifest(_))));
    }
}
