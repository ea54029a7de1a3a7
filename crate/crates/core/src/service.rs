//! Read-only query handlers over one bundle. Each returns the JSON body text.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use crate::bundle::{check_integrity, GraphBundle};
use crate::compress::{compress, CompressConfig, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::hierarchy::export_slice;
use crate::ids::{Granularity, Site};
use crate::ingest::CorpusStructure;
use crate::mechanism::{DynamicConfig, GateMode};
use crate::pipeline::MechContext;
use crate::workspace::{graph_key, to_json_text};

/// Cache key for on-demand dynamic views.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MechKey {
    pub unit: String,
    pub mode: GateMode,
    pub cap: usize,
    pub exclude: Vec<usize>,
}

pub struct GraphService {
    bundle: GraphBundle,
    corpus: CorpusStructure,
    cache: RwLock<BTreeMap<MechKey, Arc<String>>>,
}

/// Comma-separated unsigned integers; empty input is an empty list.
pub fn parse_id_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Value(format!("'{s}' is not a node id")))
        })
        .collect()
}

impl GraphService {
    pub fn new(bundle: GraphBundle) -> Result<Self> {
        check_integrity(&bundle)?;
        let corpus = bundle.mech_inputs.corpus_structure()?;
        Ok(Self {
            bundle,
            corpus,
            cache: RwLock::new(BTreeMap::new()),
        })
    }

    fn ctx(&self) -> MechContext<'_> {
        MechContext {
            inputs: &self.bundle.mech_inputs,
            corpus: &self.corpus,
        }
    }

    pub fn bundle(&self) -> &GraphBundle {
        &self.bundle
    }

    pub fn universe(&self) -> Result<String> {
        to_json_text(&self.bundle.universe)
    }

    pub fn graph(&self, granularity: &str, site: Option<&str>) -> Result<String> {
        let g: Granularity = granularity.parse()?;
        let site: Site = site.unwrap_or("src").parse()?;
        let key = graph_key(site, g);
        let graph = self
            .bundle
            .graphs
            .get(&key)
            .ok_or_else(|| Error::NotFound(format!("graph {key}")))?;
        to_json_text(graph)
    }

    pub fn tree(&self) -> Result<String> {
        to_json_text(&self.bundle.tree)
    }

    pub fn slice(&self, nodes: &str) -> Result<String> {
        to_json_text(&export_slice(&self.bundle.tree, &parse_id_list(nodes)?)?)
    }

    pub fn labels(&self, graph: &str) -> Result<String> {
        let l = self
            .bundle
            .labels
            .get(graph)
            .ok_or_else(|| Error::NotFound(format!("labels for {graph}")))?;
        to_json_text(l)
    }

    pub fn layout(&self) -> Result<String> {
        to_json_text(&self.bundle.layout)
    }

    pub fn metrics(&self) -> Result<String> {
        to_json_text(&self.bundle.metrics)
    }

    fn dynamic_config(&self, mode: GateMode) -> DynamicConfig {
        DynamicConfig {
            gate_mode: mode,
            ..self.bundle.mech_config.dynamic.clone()
        }
    }

    /// Uncompressed dynamic payload for a unit.
    pub fn mech_payload(&self, unit: &str, mode: Option<&str>) -> Result<String> {
        let mode = mode
            .map(str::parse)
            .transpose()?
            .unwrap_or(self.bundle.mech_config.dynamic.gate_mode);
        to_json_text(&self.ctx().dynamic(unit, &self.dynamic_config(mode))?)
    }

    /// Compressed dynamic view, computed on first request and cached.
    pub fn mech(
        &self,
        unit: &str,
        cap: Option<usize>,
        mode: Option<&str>,
        exclude: Option<&str>,
    ) -> Result<Arc<String>> {
        let mode = mode
            .map(str::parse)
            .transpose()?
            .unwrap_or(self.bundle.mech_config.dynamic.gate_mode);
        let mut exclude = exclude.map(parse_id_list).transpose()?.unwrap_or_default();
        exclude.sort_unstable();
        exclude.dedup();
        let key = MechKey {
            unit: unit.to_string(),
            mode,
            cap: cap.unwrap_or(DEFAULT_CAP),
            exclude,
        };
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let payload = self.ctx().dynamic(unit, &self.dynamic_config(mode))?;
        let config = CompressConfig {
            cap: key.cap,
            exclude: key.exclude.iter().copied().collect(),
        };
        let body = Arc::new(to_json_text(&compress(
            &payload,
            &self.bundle.tree,
            &config,
        )?)?);
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert(body.clone());
        Ok(body)
    }

    pub fn cached_views(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}
