//! Dataset manifest: one entry per video binding labels, a split and
//! per-modality tensor files.
//!
//! ```json
//! {
//!   "hierarchy_path": "hierarchy.json",
//!   "entries": [
//!     {
//!       "video_id": "v00000",
//!       "split": "train",
//!       "labels": { "flat": 5, "parent": 1, "child": 5 },
//!       "modalities": { "rgb": "videos/v00000.tbnf" }
//!     }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{Hierarchy, Label};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub split: Split,
    pub labels: LabelSet,
    pub modalities: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy_path: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn hierarchy(&self) -> Result<Option<Hierarchy>> {
        let Some(rel) = &self.hierarchy_path else {
            return Ok(None);
        };
        let path = self.resolve(rel);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let hierarchy = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        Ok(Some(hierarchy))
    }

    /// Unique ids, existing files, and labels consistent with the hierarchy.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Data(format!("duplicate video id {:?}", e.video_id)));
            }
            for (modality, rel) in &e.modalities {
                let p = self.resolve(rel);
                if !p.is_file() {
                    return Err(Error::Data(format!(
                        "video {:?} modality {modality:?}: missing file {}",
                        e.video_id,
                        p.display()
                    )));
                }
            }
        }
        if let Some(h) = self.hierarchy()? {
            for e in &self.entries {
                if let (Some(parent), Some(child)) = (e.labels.parent, e.labels.child) {
                    h.check_label(parent, child).map_err(|err| {
                        Error::Label(format!("video {:?}: {err}", e.video_id))
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Sorted modality tags present in any entry.
    pub fn modalities(&self) -> Vec<String> {
        let mut tags: Vec<String> = self
            .entries
            .iter()
            .flat_map(|e| e.modalities.keys().cloned())
            .collect();
        tags.sort();
        tags.dedup();
        tags
    }
}

impl ManifestEntry {
    /// Label for a head trained in flat or hierarchical mode.
    pub fn label(&self, hierarchical: bool) -> Result<Label> {
        if hierarchical {
            match (self.labels.parent, self.labels.child) {
                (Some(parent), Some(child)) => Ok(Label::Hier { parent, child }),
                _ => Err(Error::Label(format!(
                    "video {:?} lacks parent/child labels",
                    self.video_id
                ))),
            }
        } else {
            self.labels
                .flat
                .map(Label::Flat)
                .ok_or_else(|| Error::Label(format!("video {:?} lacks a flat label", self.video_id)))
        }
    }
}

pub(crate) fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, file: &str) -> ManifestEntry {
        ManifestEntry {
            video_id: id.into(),
            split: Split::Train,
            labels: LabelSet {
                flat: Some(1),
                parent: Some(0),
                child: Some(1),
            },
            modalities: BTreeMap::from([("rgb".to_string(), PathBuf::from(file))]),
        }
    }

    #[test]
    fn load_validates() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.tbnf"), b"x").unwrap();
        let path = dir.path().join("manifest.json");

        let good = Manifest {
            entries: vec![entry("a", "a.tbnf")],
            ..Manifest::default()
        };
        good.save(&path).unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded.entries, good.entries);
        assert_eq!(loaded.modalities(), vec!["rgb".to_string()]);

        let dup = Manifest {
            entries: vec![entry("a", "a.tbnf"), entry("a", "a.tbnf")],
            ..Manifest::default()
        };
        dup.save(&path).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::Data(_))));

        let missing = Manifest {
            entries: vec![entry("b", "b.tbnf")],
            ..Manifest::default()
        };
        missing.save(&path).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::Data(_))));
    }

    #[test]
    fn labels_checked_against_hierarchy() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.tbnf"), b"x").unwrap();
        write_json(dir.path().join("h.json"), &Hierarchy::new(vec![0, 1]).unwrap()).unwrap();
        let path = dir.path().join("manifest.json");
        let m = Manifest {
            hierarchy_path: Some("h.json".into()),
            entries: vec![entry("a", "a.tbnf")],
            ..Manifest::default()
        };
        m.save(&path).unwrap();
        // child 1 belongs to parent 1, entry says parent 0.
        assert!(matches!(Manifest::load(&path), Err(Error::Label(_))));
    }

    #[test]
    fn entry_labels() {
        let e = entry("a", "a.tbnf");
        assert_eq!(e.label(false).unwrap(), Label::Flat(1));
        assert_eq!(e.label(true).unwrap(), Label::Hier { parent: 0, child: 1 });
        let mut bare = e.clone();
        bare.labels = LabelSet::default();
        assert!(bare.label(true).is_err());
        assert!(bare.label(false).is_err());
    }
}
