//! Per-video prediction files: JSON lines of
//! `{"id": "...", "label": 3, "parent": 0, "scores": [...]}`.
//!
//! `label` is the flat or child class, `parent` appears only for
//! hierarchical models. Flat scores are logits; hierarchical scores are
//! log joint probabilities over children.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::late_fuse;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub scores: Vec<f64>,
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut buf, p).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no predictions", path.display())));
    }
    Ok(out)
}

/// Weighted late fusion of several prediction sets over the same videos.
///
/// Output follows the order of the first set. The sets must cover identical
/// video ids with identical labels and score lengths.
pub fn fuse_predictions(sets: &[Vec<Prediction>], weights: Option<&[f64]>) -> Result<Vec<Prediction>> {
    let Some(first) = sets.first() else {
        return Err(Error::Data("no prediction sets to fuse".into()));
    };
    let mut indexed = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let mut map = BTreeMap::new();
        for p in set {
            if map.insert(p.id.as_str(), p).is_some() {
                return Err(Error::Data(format!("set {i}: duplicate video id {:?}", p.id)));
            }
        }
        indexed.push(map);
    }
    let reference: BTreeSet<&str> = indexed[0].keys().copied().collect();
    for (i, map) in indexed.iter().enumerate().skip(1) {
        let ids: BTreeSet<&str> = map.keys().copied().collect();
        if ids != reference {
            let missing: Vec<_> = reference.difference(&ids).take(5).collect();
            let extra: Vec<_> = ids.difference(&reference).take(5).collect();
            return Err(Error::Data(format!(
                "set {i} covers different videos than set 0: missing {missing:?}, extra {extra:?}"
            )));
        }
    }

    first
        .iter()
        .map(|p| {
            let mut scores = Vec::with_capacity(sets.len());
            for (i, map) in indexed.iter().enumerate() {
                let q = map[p.id.as_str()];
                if q.label != p.label || q.parent != p.parent {
                    return Err(Error::Label(format!(
                        "video {:?}: set {i} labels it {} but set 0 labels it {}",
                        p.id, q.label, p.label
                    )));
                }
                scores.push(q.scores.clone());
            }
            Ok(Prediction {
                id: p.id.clone(),
                label: p.label,
                parent: p.parent,
                scores: late_fuse(&scores, weights)?,
            })
        })
        .collect()
}

/// `(scores, label)` pairs for [`crate::metrics::evaluate`].
pub fn scored(preds: &[Prediction]) -> Vec<(Vec<f64>, usize)> {
    preds.iter().map(|p| (p.scores.clone(), p.label)).collect()
}
