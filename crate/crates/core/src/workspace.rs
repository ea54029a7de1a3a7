//! On-disk workspace holding every stage's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Granularity, Site};
use crate::ingest::{read_ingested, IngestManifest, Ingested};
use crate::util::sha256_hex;

pub const STAGE_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Filter,
    Cooc,
    Hierarchy,
    Mech,
    Compress,
    Relate,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Cooc,
        Stage::Hierarchy,
        Stage::Mech,
        Stage::Compress,
        Stage::Relate,
        Stage::Metrics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Cooc => "cooc",
            Stage::Hierarchy => "hierarchy",
            Stage::Mech => "mech",
            Stage::Compress => "compress",
            Stage::Relate => "relate",
            Stage::Metrics => "metrics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLog {
    pub stages: BTreeMap<Stage, StageRecord>,
}

/// File names inside a workspace.
pub mod files {
    pub const STAGES: &str = "stages.json";
    pub const INGEST: &str = "ingest.json";
    pub const DATA_DIR: &str = "data";
    pub const UNIVERSE: &str = "universe.json";
    pub const THRESHOLDS: &str = "thresholds.json";
    pub const TREE: &str = "tree.json";
    pub const GEOMETRY: &str = "geometry.json";
    pub const STATIC_MECH: &str = "mech/static.json";
    pub const MECH_CONFIG: &str = "mech/config.json";
    pub const MECH_DIR: &str = "mech/units";
    pub const COMPRESS_DIR: &str = "compress";
    pub const LABELS_DIR: &str = "labels";
    pub const METRICS: &str = "metrics.json";
    pub const LAYOUT: &str = "layout.json";
}

pub fn graph_key(site: Site, g: Granularity) -> String {
    format!("{}.{}", site.as_str(), g.as_str())
}

pub fn cooc_file(site: Site, g: Granularity) -> String {
    format!("cooc/{}.json", graph_key(site, g))
}

pub fn mech_file(unit: &str) -> String {
    format!("{}/{unit}.json", files::MECH_DIR)
}

pub fn compress_file(unit: &str) -> String {
    format!("{}/{unit}.json", files::COMPRESS_DIR)
}

pub fn labels_file(key: &str) -> String {
    format!(
        "{}/{}.json",
        files::LABELS_DIR,
        key.replace([':', '/'], "_")
    )
}

/// Deterministic JSON text used for every workspace file.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(config)?.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("workspace {}", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, to_json_text(value)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let path = self.path(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Relative paths of the JSON files in a workspace subdirectory, sorted.
    pub fn list(&self, dir: &str) -> Result<Vec<String>> {
        let path = self.path(dir);
        if !path.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let entry = entry.map_err(|e| Error::io(&path, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".json") {
                out.push(format!("{dir}/{name}"));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn log(&self) -> Result<StageLog> {
        if self.exists(files::STAGES) {
            self.read_json(files::STAGES)
        } else {
            Ok(StageLog::default())
        }
    }

    pub fn record<T: Serialize>(&self, stage: Stage, config: &T) -> Result<()> {
        let mut log = self.log()?;
        log.stages.insert(
            stage,
            StageRecord {
                version: STAGE_VERSION.into(),
                config_hash: config_hash(config)?,
            },
        );
        self.write_json(files::STAGES, &log)
    }

    /// Errors with every listed stage that has not completed.
    pub fn require(&self, stages: &[Stage]) -> Result<()> {
        let log = self.log()?;
        let missing: Vec<String> = stages
            .iter()
            .filter(|s| !log.stages.contains_key(s))
            .map(|s| s.as_str().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteWorkspace { stages: missing })
        }
    }

    pub fn ingested(&self) -> Result<Ingested> {
        self.require(&[Stage::Ingest])?;
        let manifest: IngestManifest = self.read_json(files::INGEST)?;
        read_ingested(&manifest, &self.path(files::DATA_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn require_lists_missing_stages() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::create(dir.path()).unwrap();
        ws.record(Stage::Ingest, &1).unwrap();
        match ws.require(&[Stage::Ingest, Stage::Hierarchy, Stage::Metrics]) {
            Err(Error::IncompleteWorkspace { stages }) => {
                assert_eq!(stages, vec!["hierarchy", "metrics"])
            }
            other => panic!("unexpected {other:?}"),
        }
        ws.require(&[Stage::Ingest]).unwrap();
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::create(dir.path()).unwrap();
        ws.write_json("a/b.json", &vec![1, 2]).unwrap();
        let v: Vec<i32> = ws.read_json("a/b.json").unwrap();
        assert_eq!(v, vec![1, 2]);
        assert_eq!(ws.list("a").unwrap(), vec!["a/b.json"]);
    }
}
