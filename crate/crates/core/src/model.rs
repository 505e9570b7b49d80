//! Trained-head persistence.
//!
//! A model directory holds `model.json` plus one TBNF tensor per parameter:
//!
//! ```json
//! {
//!   "format": "tben-model",
//!   "version": 1,
//!   "mode": { "kind": "hier", "hierarchy": { "parent_of": [0, 0, 1] } },
//!   "input_dim": 1024,
//!   "output_dim": 5,
//!   "modalities": ["rgb"],
//!   "weights": "weights.tbnf",
//!   "bias": "bias.tbnf",
//!   "config": { "learning_rate": 0.01, "momentum": 0.9, ... }
//! }
//! ```
//!
//! `weights` is an `(H, C)` tensor of shape `output_dim x input_dim`, `bias`
//! a `(C)` vector. Parameters are stored as f32, so a reloaded head matches
//! the trained one to single precision.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::classifier::{HeadMode, LinearHead, TrainConfig};
use crate::error::{Error, Result};
use crate::manifest::{read_json, write_json};
use crate::tbnf::{read_tensor, write_tensor};
use crate::tensor::{Axis, Tensor};

pub const MODEL_FILE: &str = "model.json";
const FORMAT: &str = "tben-model";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub mode: HeadMode,
    pub input_dim: usize,
    pub output_dim: usize,
    pub modalities: Vec<String>,
    pub weights: String,
    pub bias: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct SavedModel {
    pub head: LinearHead,
    pub modalities: Vec<String>,
    pub config: TrainConfig,
}

pub fn save_model(dir: impl AsRef<Path>, model: &SavedModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let head = &model.head;
    let header = ModelHeader {
        format: FORMAT.into(),
        version: VERSION,
        mode: head.mode().clone(),
        input_dim: head.input_dim(),
        output_dim: head.output_dim(),
        modalities: model.modalities.clone(),
        weights: "weights.tbnf".into(),
        bias: "bias.tbnf".into(),
        config: model.config.clone(),
    };
    let w = Tensor::new(
        vec![head.output_dim(), head.input_dim()],
        vec![Axis::H, Axis::C],
        head.weights().iter().copied().collect(),
    )?;
    write_tensor(&w, dir.join(&header.weights))?;
    write_tensor(&Tensor::vector(head.bias().to_vec())?, dir.join(&header.bias))?;
    write_json(dir.join(MODEL_FILE), &header)
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<SavedModel> {
    let dir = dir.as_ref();
    let header: ModelHeader = read_json(dir.join(MODEL_FILE))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported model format {:?} version {}",
            header.format, header.version
        )));
    }
    let w = read_tensor(dir.join(&header.weights))?;
    let b = read_tensor(dir.join(&header.bias))?;
    if w.dims() != [header.output_dim, header.input_dim] || b.dims() != [header.output_dim] {
        return Err(Error::Dimension(format!(
            "model parameters {:?} / {:?} disagree with header {}x{}",
            w.dims(),
            b.dims(),
            header.output_dim,
            header.input_dim
        )));
    }
    let weights = Array2::from_shape_vec((header.output_dim, header.input_dim), w.into_data())
        .expect("shape checked above");
    let head = LinearHead::from_parts(weights, Array1::from(b.into_data()), header.mode)?;
    Ok(SavedModel {
        head,
        modalities: header.modalities,
        config: header.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Hierarchy;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mode = HeadMode::Hier {
            hierarchy: Hierarchy::new(vec![0, 0, 1]).unwrap(),
        };
        let weights = Array2::from_shape_fn((5, 3), |(i, j)| i as f64 * 0.5 - j as f64);
        let head = LinearHead::from_parts(weights, Array1::from(vec![0.25; 5]), mode).unwrap();
        let model = SavedModel {
            head,
            modalities: vec!["rgb".into()],
            config: TrainConfig::default(),
        };
        save_model(dir.path(), &model).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.head.weights(), model.head.weights());
        assert_eq!(back.head.bias(), model.head.bias());
        assert_eq!(back.head.mode(), model.head.mode());
        assert_eq!(back.modalities, model.modalities);
        assert_eq!(back.config, model.config);
    }

    #[test]
    fn rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MODEL_FILE), "{\"format\":\"other\"}").unwrap();
        assert!(load_model(dir.path()).is_err());
    }
}
