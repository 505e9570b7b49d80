//! Encoded-feature directories written by `tben encode`.
//!
//! `index.json` lists one rank-1 TBNF vector per video and modality, sorted
//! by video id then modality:
//!
//! ```json
//! {
//!   "pipeline": "sap+tcbp",
//!   "proj_dim": 4096,
//!   "proj_seed": 0,
//!   "norm": "ssqrt",
//!   "entries": [
//!     { "video_id": "v00000", "modality": "rgb", "path": "rgb/v00000.tbnf", "dim": 4096 }
//!   ]
//! }
//! ```
//!
//! Wall-clock timings go to a separate `timing.json` so the index stays
//! byte-identical across runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{read_json, write_json};
use crate::tbnf::read_tensor;

pub const INDEX_FILE: &str = "index.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub modality: String,
    pub path: PathBuf,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub pipeline: String,
    pub proj_dim: usize,
    pub proj_seed: u64,
    pub norm: String,
    pub entries: Vec<IndexEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub video_id: String,
    pub modality: String,
    pub encode_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub median_ns: u64,
    pub entries: Vec<TimingEntry>,
}

impl FeatureIndex {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        read_json(dir.as_ref().join(INDEX_FILE))
    }

    pub fn save(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        self.entries
            .sort_by(|a, b| (&a.video_id, &a.modality).cmp(&(&b.video_id, &b.modality)));
        write_json(dir.as_ref().join(INDEX_FILE), self)
    }
}

/// Loaded vectors keyed by `(video_id, modality)`.
pub struct FeatureStore {
    vectors: BTreeMap<(String, String), Vec<f64>>,
}

impl FeatureStore {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index = FeatureIndex::load(dir)?;
        let mut vectors = BTreeMap::new();
        for e in index.entries {
            let t = read_tensor(dir.join(&e.path))?;
            if t.rank() != 1 {
                return Err(Error::Format(format!(
                    "{}: encoded features must be rank 1",
                    e.path.display()
                )));
            }
            vectors.insert((e.video_id, e.modality), t.into_data());
        }
        Ok(Self { vectors })
    }

    pub fn get(&self, video_id: &str, modality: &str) -> Option<&[f64]> {
        self.vectors
            .get(&(video_id.to_string(), modality.to_string()))
            .map(Vec::as_slice)
    }

    /// Concatenation of the given modalities in order, or `None` if any is
    /// missing.
    pub fn concat(&self, video_id: &str, modalities: &[String]) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for m in modalities {
            out.extend_from_slice(self.get(video_id, m)?);
        }
        Some(out)
    }
}
