use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::codebook::Codebook;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CodebookInfo {
    pub n0: usize,
    pub bits: u32,
    pub seed: u64,
    /// SHA-256 of the codebook header.
    pub hash: String,
}

impl CodebookInfo {
    pub fn of(cb: &Codebook<f64>) -> Result<Self> {
        Ok(Self { n0: cb.n0(), bits: cb.bits(), seed: cb.seed(), hash: cb.content_hash()? })
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub trial_seconds: Vec<f64>,
}

/// Record of one run: what was executed, with which seeds, and how long it took.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub trial_seeds: Vec<u64>,
    pub codebook: Option<CodebookInfo>,
    pub outputs: Vec<String>,
    pub timings: Timings,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            base_seed: config.scenario.seed,
            trial_seeds: Vec::new(),
            codebook: None,
            outputs: Vec::new(),
            timings: Timings::default(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
