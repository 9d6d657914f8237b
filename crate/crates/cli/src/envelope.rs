use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tierk::pricing::ScenarioConfig;

pub const TOOL: &str = "tierk";

/// Everything needed to rerun a command and compare its output.
#[derive(Debug, Serialize)]
pub struct OutputEnvelope<A: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the effective scenario (after command-line overrides).
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub rng: Option<&'static str>,
    pub args: A,
    pub result: R,
    pub csv: Option<PathBuf>,
}

impl<A: Serialize, R: Serialize> OutputEnvelope<A, R> {
    pub fn new(command: &'static str, args: A, result: R) -> Self {
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: None,
            seed: None,
            rng: None,
            args,
            result,
            csv: None,
        }
    }

    pub fn scenario(mut self, cfg: &ScenarioConfig) -> Self {
        self.config_hash = Some(config_hash(cfg));
        self
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self.rng = Some(tierk::simulator::RNG_ALGORITHM);
        self
    }

    pub fn csv(mut self, path: Option<PathBuf>) -> Self {
        self.csv = path;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    format!("sha256:{}", hex::encode(digest))
}
