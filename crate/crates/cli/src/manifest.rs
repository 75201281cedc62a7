use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snn_core::encoder::EncodingParams;
use snn_core::search::SearchConfig;
use snn_core::trainer::TrainConfig;

pub const MANIFEST: &str = "manifest.json";

/// A command with every default materialized; enough to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Resolved {
    Train {
        config: TrainConfig,
        data_dir: PathBuf,
        out: PathBuf,
    },
    Eval {
        models: PathBuf,
        n_test: usize,
        seed: u64,
        encoding: EncodingParams,
        config_id: String,
        data_dir: PathBuf,
        out: PathBuf,
    },
    Search {
        config: SearchConfig,
        n_train: usize,
        n_val: usize,
        validated: Option<PathBuf>,
        data_dir: PathBuf,
        out: PathBuf,
    },
    Report {
        inputs: Vec<PathBuf>,
        out: PathBuf,
    },
}

impl Resolved {
    pub fn out(&self) -> &Path {
        match self {
            Resolved::Train { out, .. }
            | Resolved::Eval { out, .. }
            | Resolved::Search { out, .. }
            | Resolved::Report { out, .. } => out,
        }
    }

    pub fn with_out(mut self, dir: PathBuf) -> Self {
        match &mut self {
            Resolved::Train { out, .. }
            | Resolved::Eval { out, .. }
            | Resolved::Search { out, .. }
            | Resolved::Report { out, .. } => *out = dir,
        }
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: Resolved,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub wall_clock_s: f64,
    pub toolkit_version: String,
}
