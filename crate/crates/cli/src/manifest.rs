use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use stintlab::hmc::{Profile, SamplerConfig};
use stintlab::PriorSpec;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written once per output directory; holds everything needed to rerun.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub input: PathBuf,
    pub models: Vec<String>,
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub sampler: SamplerConfig,
    pub priors_path: Option<PathBuf>,
    /// The priors in effect, so the run does not depend on the override file.
    pub priors: PriorSpec,
    /// Last race lap used for training (forecast only).
    pub through_lap: Option<u32>,
    pub pit: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub engine_version: String,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
