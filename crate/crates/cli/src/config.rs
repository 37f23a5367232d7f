use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dlgparse::decode::EdgeSet;
use dlgparse::eval::GoldMode;
use dlgparse::model::ModelConfig;
use dlgparse::predictor::Decoder;
use dlgparse::training::TrainConfig;

/// Fully resolved settings of one run; written next to its outputs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub min_freq: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decoder: Option<DecoderName>,
    pub edges: Option<EdgeSet>,
    pub dot: bool,
    pub gold_mode: GoldMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderName {
    Sequential,
    Greedy,
    Mst,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {}", path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {}", path.display(), e))
    }

    pub fn decoder(&self) -> Decoder {
        match self.decoder.unwrap_or(DecoderName::Sequential) {
            DecoderName::Sequential => Decoder::Sequential,
            DecoderName::Greedy => Decoder::Greedy,
            DecoderName::Mst => Decoder::Mst(self.edges.unwrap_or(EdgeSet::Forward)),
        }
    }

    /// Writes `resolved_config.json` into the output directory.
    pub fn persist(&self) -> Result<(), String> {
        let Some(dir) = &self.out else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {}", dir.display(), e))?;
        let path = dir.join("resolved_config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, text + "\n").map_err(|e| format!("cannot write {}: {}", path.display(), e))
    }
}
