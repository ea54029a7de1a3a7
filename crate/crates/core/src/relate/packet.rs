use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cooc::CoocEdge;
use crate::ids::FeatureId;
use crate::ingest::{CorpusStructure, FeatureCatalog};
use crate::mechanism::{DynamicMechanismGraph, MechEdge};
use crate::presence::{SentenceScores, ThresholdVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Cooc,
    Mech,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cooc => "cooc",
            Self::Mech => "mech",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLine {
    pub sentence_id: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvidencePacket {
    pub id: String,
    pub kind: EdgeKind,
    pub source: FeatureId,
    pub target: FeatureId,
    pub source_description: String,
    pub target_description: String,
    pub joint: Vec<EvidenceLine>,
    pub source_only: Vec<EvidenceLine>,
    pub target_only: Vec<EvidenceLine>,
    /// Co-occurring units (cooc) or sentences carrying the edge (mech).
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
    /// J for co-occurrence edges, F for mechanism edges.
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    pub evidence_poor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacketLimits {
    pub joint: usize,
    pub contrast: usize,
}

impl Default for PacketLimits {
    fn default() -> Self {
        Self {
            joint: 6,
            contrast: 6,
        }
    }
}

/// Sentence scores and thresholds for the sites an edge touches.
#[derive(Clone, Copy)]
pub struct SentenceEvidence<'a> {
    pub corpus: &'a CorpusStructure,
    pub catalog: &'a FeatureCatalog,
    pub thresholds: &'a ThresholdVector,
    pub src: &'a SentenceScores,
    pub tgt: &'a SentenceScores,
}

impl SentenceEvidence<'_> {
    fn scores(&self, f: FeatureId) -> &SentenceScores {
        match f.site {
            crate::ids::Site::Src => self.src,
            crate::ids::Site::Tgt => self.tgt,
        }
    }

    fn score(&self, s: usize, f: FeatureId) -> f64 {
        self.scores(f).score(s, f.index)
    }

    fn present(&self, s: usize, f: FeatureId) -> bool {
        self.thresholds
            .theta(f)
            .is_some_and(|t| self.score(s, f) > t)
    }

    fn line(&self, s: usize, score: f64) -> EvidenceLine {
        let rec = self.corpus.sentence(s);
        EvidenceLine {
            sentence_id: rec.id.clone(),
            text: rec.text.clone(),
            score,
        }
    }
}

/// Score desc, then corpus order.
fn top(mut scored: Vec<(usize, f64)>, n: usize) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

pub fn cooc_packet_id(a: FeatureId, b: FeatureId) -> String {
    format!("cooc:{a}|{b}")
}

pub fn mech_packet_id(unit: &str, a: FeatureId, b: FeatureId) -> String {
    format!("mech:{unit}:{a}>{b}")
}

/// JOINT = sentences with both endpoints present ranked by min(m_a, m_b);
/// contrast = one-sided sentences ranked by the present endpoint's score.
pub fn build_cooc_packet(
    edge: &CoocEdge,
    ev: &SentenceEvidence<'_>,
    limits: PacketLimits,
) -> EdgeEvidencePacket {
    let (a, b) = (edge.source, edge.target);
    let mut joint = Vec::new();
    let mut a_only = Vec::new();
    let mut b_only = Vec::new();
    for s in 0..ev.corpus.num_sentences() {
        match (ev.present(s, a), ev.present(s, b)) {
            (true, true) => joint.push((s, ev.score(s, a).min(ev.score(s, b)))),
            (true, false) => a_only.push((s, ev.score(s, a))),
            (false, true) => b_only.push((s, ev.score(s, b))),
            (false, false) => {}
        }
    }
    let lines = |v: Vec<(usize, f64)>, n| {
        top(v, n)
            .into_iter()
            .map(|(s, x)| ev.line(s, x))
            .collect::<Vec<_>>()
    };
    let joint = lines(joint, limits.joint);
    EdgeEvidencePacket {
        id: cooc_packet_id(a, b),
        kind: EdgeKind::Cooc,
        source: a,
        target: b,
        source_description: ev.catalog.description(a).to_string(),
        target_description: ev.catalog.description(b).to_string(),
        evidence_poor: joint.is_empty(),
        joint,
        source_only: lines(a_only, limits.contrast),
        target_only: lines(b_only, limits.contrast),
        count: edge.count,
        jaccard: Some(edge.jaccard),
        weight: edge.jaccard,
        hint: None,
    }
}

/// Per-sentence dynamic graphs over the scope sentences, keyed by sentence index.
pub type SentenceGraphs = [(usize, DynamicMechanismGraph)];

/// JOINT = scope sentences carrying the edge, ranked by max_k E; contrast =
/// scope sentences where only one endpoint is present.
pub fn build_mech_packet(
    unit: &str,
    edge: &MechEdge,
    sentence_graphs: &SentenceGraphs,
    ev: &SentenceEvidence<'_>,
    hint: Option<String>,
    limits: PacketLimits,
) -> EdgeEvidencePacket {
    let (a, b) = (edge.source, edge.target);
    let mut joint = Vec::new();
    let mut carrying = BTreeSet::new();
    for (s, g) in sentence_graphs {
        if let Some(e) = g.edge(a, b) {
            let best = e.evidence.iter().map(|x| x.evidence).fold(0.0, f64::max);
            joint.push((*s, best));
            carrying.insert(*s);
        }
    }
    let mut a_only = Vec::new();
    let mut b_only = Vec::new();
    for (s, _) in sentence_graphs {
        if carrying.contains(s) {
            continue;
        }
        match (ev.present(*s, a), ev.present(*s, b)) {
            (true, false) => a_only.push((*s, ev.score(*s, a))),
            (false, true) => b_only.push((*s, ev.score(*s, b))),
            _ => {}
        }
    }
    let count = joint.len() as u64;
    let lines = |v: Vec<(usize, f64)>, n| {
        top(v, n)
            .into_iter()
            .map(|(s, x)| ev.line(s, x))
            .collect::<Vec<_>>()
    };
    let joint = lines(joint, limits.joint);
    EdgeEvidencePacket {
        id: mech_packet_id(unit, a, b),
        kind: EdgeKind::Mech,
        source: a,
        target: b,
        source_description: ev.catalog.description(a).to_string(),
        target_description: ev.catalog.description(b).to_string(),
        evidence_poor: joint.is_empty(),
        joint,
        source_only: lines(a_only, limits.contrast),
        target_only: lines(b_only, limits.contrast),
        count,
        jaccard: None,
        weight: edge.weight,
        hint,
    }
}
