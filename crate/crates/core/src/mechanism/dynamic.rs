use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::support::SupportMatrices;
use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity, Site};
use crate::ingest::{CorpusStructure, TokenActivationStore};
use crate::presence::ThresholdVector;

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_EDGE_CAP: usize = 400;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash, PartialOrd, Ord,
)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Token activation above `gate_tol`.
    #[default]
    Positive,
    /// Token activation above the feature's sentence threshold.
    Threshold,
}

impl std::str::FromStr for GateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Self::Positive),
            "threshold" => Ok(Self::Threshold),
            other => Err(Error::Config(format!("unknown gate mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConfig {
    pub gate_mode: GateMode,
    pub gate_tol: f64,
    pub epsilon: f64,
    /// Edges kept after ranking by F; `None` keeps every edge.
    pub edge_cap: Option<usize>,
    /// Restrict both endpoints to the retained universe.
    pub restrict_to_universe: bool,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            gate_mode: GateMode::Positive,
            gate_tol: 0.0,
            epsilon: DEFAULT_EPSILON,
            edge_cap: Some(DEFAULT_EDGE_CAP),
            restrict_to_universe: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEvidence {
    pub latent: usize,
    pub evidence: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechEdge {
    pub source: FeatureId,
    pub target: FeatureId,
    pub weight: f64,
    pub strongest_latent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strongest_caption: Option<String>,
    /// Nonzero latents only, ascending by latent id.
    pub evidence: Vec<LatentEvidence>,
}

impl MechEdge {
    pub fn evidence_for(&self, k: usize) -> f64 {
        self.evidence
            .iter()
            .find(|e| e.latent == k)
            .map_or(0.0, |e| e.evidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicMechanismGraph {
    pub kind: String,
    pub unit: String,
    pub granularity: Granularity,
    pub gate_mode: GateMode,
    pub gate_tol: f64,
    pub epsilon: f64,
    pub restricted: bool,
    pub num_tokens: usize,
    pub total_edges: usize,
    pub truncated: bool,
    /// Sorted by weight desc, then (source, target) asc.
    pub edges: Vec<MechEdge>,
}

impl DynamicMechanismGraph {
    pub fn edge(&self, source: FeatureId, target: FeatureId) -> Option<&MechEdge> {
        self.edges
            .iter()
            .find(|e| e.source == source && e.target == target)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Token activations of the three sites involved in one transcoder pass.
#[derive(Debug, Clone, Copy)]
pub struct MechStores<'a> {
    pub src: &'a TokenActivationStore,
    pub tgt: &'a TokenActivationStore,
    pub latent: &'a TokenActivationStore,
}

struct Gate<'a> {
    mode: GateMode,
    tol: f64,
    thresholds: Option<&'a ThresholdVector>,
    universe: Option<&'a [FeatureId]>,
}

impl Gate<'_> {
    fn open(&self, id: FeatureId, z: f64) -> bool {
        if self.universe.is_some_and(|u| u.binary_search(&id).is_err()) {
            return false;
        }
        match self.mode {
            GateMode::Positive => z > self.tol,
            GateMode::Threshold => self
                .thresholds
                .and_then(|t| t.theta(id))
                .is_some_and(|theta| z > theta),
        }
    }
}

/// E_{a,b,k} = sum over tokens i of g_src(i,a) * A+_{a,k} * t_{i,k} * G+_{b,k} * g_tgt(i,b),
/// with t the positive part of the latent activation. Per token the product is
/// evaluated left to right; tokens are summed in order; F sums E over ascending k.
/// `universe` must be sorted.
pub fn build_dynamic_graph(
    unit: &str,
    stores: MechStores<'_>,
    corpus: &CorpusStructure,
    supports: &SupportMatrices,
    universe: Option<&[FeatureId]>,
    thresholds: Option<&ThresholdVector>,
    config: &DynamicConfig,
) -> Result<DynamicMechanismGraph> {
    let (granularity, idx) = corpus
        .find_unit(unit)
        .ok_or_else(|| Error::NotFound(format!("unit '{unit}'")))?;
    if config.gate_mode == GateMode::Threshold && thresholds.is_none() {
        return Err(Error::Config(
            "threshold gating needs calibrated thresholds".into(),
        ));
    }
    let universe = if config.restrict_to_universe {
        universe
    } else {
        None
    };
    let gate = Gate {
        mode: config.gate_mode,
        tol: config.gate_tol,
        thresholds,
        universe,
    };

    let tokens: Vec<usize> = corpus
        .unit_tokens(granularity, idx)
        .into_iter()
        .filter(|&i| {
            !(stores.src.is_special(i) || stores.tgt.is_special(i) || stores.latent.is_special(i))
        })
        .collect();

    let mut evidence: BTreeMap<(u32, u32), BTreeMap<usize, f64>> = BTreeMap::new();
    for &i in &tokens {
        let src: Vec<u32> = stores
            .src
            .token(i)
            .iter()
            .filter(|e| gate.open(FeatureId::src(e.feature), e.value as f64))
            .map(|e| e.feature)
            .collect();
        let tgt: Vec<u32> = stores
            .tgt
            .token(i)
            .iter()
            .filter(|e| gate.open(FeatureId::tgt(e.feature), e.value as f64))
            .map(|e| e.feature)
            .collect();
        if src.is_empty() || tgt.is_empty() {
            continue;
        }
        for lat in stores.latent.token(i) {
            let t = (lat.value as f64).max(0.0);
            if t <= 0.0 {
                continue;
            }
            let k = lat.feature as usize;
            for &a in &src {
                let av = supports.a_pos.get(a as usize, k);
                if av <= 0.0 {
                    continue;
                }
                for &b in &tgt {
                    let gv = supports.g_pos.get(b as usize, k);
                    if gv <= 0.0 {
                        continue;
                    }
                    *evidence.entry((a, b)).or_default().entry(k).or_insert(0.0) += av * t * gv;
                }
            }
        }
    }

    let mut edges: Vec<MechEdge> = evidence
        .into_iter()
        .filter_map(|((a, b), per_k)| {
            let weight: f64 = per_k.values().sum();
            if weight <= 0.0 {
                return None;
            }
            let strongest_latent = per_k
                .iter()
                .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(x.0)))
                .map(|(&k, _)| k)
                .unwrap_or(0);
            let evidence = per_k
                .into_iter()
                .map(|(latent, e)| LatentEvidence {
                    latent,
                    evidence: e,
                    rho: e / (weight + config.epsilon),
                })
                .collect();
            Some(MechEdge {
                source: FeatureId::new(Site::Src, a),
                target: FeatureId::new(Site::Tgt, b),
                weight,
                strongest_latent,
                strongest_caption: None,
                evidence,
            })
        })
        .collect();
    edges.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then((x.source, x.target).cmp(&(y.source, y.target)))
    });
    let total_edges = edges.len();
    if let Some(cap) = config.edge_cap {
        edges.truncate(cap);
    }
    Ok(DynamicMechanismGraph {
        kind: "mechanism".into(),
        unit: unit.to_string(),
        granularity,
        gate_mode: config.gate_mode,
        gate_tol: config.gate_tol,
        epsilon: config.epsilon,
        restricted: universe.is_some(),
        num_tokens: tokens.len(),
        truncated: edges.len() < total_edges,
        total_edges,
        edges,
    })
}
