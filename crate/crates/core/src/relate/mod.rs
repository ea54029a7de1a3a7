//! Evidence packets and validated relation labels for graph edges.

mod label;
mod packet;

pub use label::{
    fallback_label, label_edge, rule_violation, validate_label, EdgeLabel, LabelRules, LabelStatus,
};
pub use packet::{
    build_cooc_packet, build_mech_packet, cooc_packet_id, mech_packet_id, EdgeEvidencePacket,
    EdgeKind, EvidenceLine, PacketLimits, SentenceEvidence, SentenceGraphs,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::ExternalClient;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelateConfig {
    pub limits: PacketLimits,
    pub rules: LabelRules,
    /// Edges sent to the relator, highest weight first; the rest fall back.
    pub budget: Option<usize>,
    pub max_in_flight: usize,
    pub profile: Value,
}

impl Default for RelateConfig {
    fn default() -> Self {
        Self {
            limits: PacketLimits::default(),
            rules: LabelRules::default(),
            budget: None,
            max_in_flight: 4,
            profile: Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEdges {
    pub kind: String,
    pub graph_kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// In packet order.
    pub labels: Vec<EdgeLabel>,
    pub packets: Vec<EdgeEvidencePacket>,
}

impl LabeledEdges {
    pub fn label(&self, packet_id: &str) -> Option<&EdgeLabel> {
        self.labels.iter().find(|l| l.packet_id == packet_id)
    }
}

/// Labels every packet. Budget priority is weight desc, then packet id.
pub fn label_packets(
    packets: Vec<EdgeEvidencePacket>,
    kind: EdgeKind,
    unit: Option<String>,
    client: &dyn ExternalClient,
    config: &RelateConfig,
) -> Result<LabeledEdges> {
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by(|&x, &y| {
        packets[y]
            .weight
            .total_cmp(&packets[x].weight)
            .then(packets[x].id.cmp(&packets[y].id))
    });
    let budget = config.budget.unwrap_or(usize::MAX);
    let mut in_budget = vec![false; packets.len()];
    for &i in order.iter().take(budget) {
        in_budget[i] = true;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let labels = pool.install(|| {
        packets
            .par_iter()
            .zip(in_budget.par_iter())
            .map(|(p, &go)| {
                if go {
                    label_edge(p, client, &config.rules, &config.profile)
                } else {
                    fallback_label(p, &config.rules, client.id(), "outside labeling budget")
                }
            })
            .collect()
    });
    Ok(LabeledEdges {
        kind: "labels".into(),
        graph_kind: kind,
        unit,
        labels,
        packets,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::client::{ClientError, ClientRequest, StubClient};
    use crate::ids::FeatureId;

    fn packet(kind: EdgeKind, joint: &[&str], a: &str, b: &str) -> EdgeEvidencePacket {
        EdgeEvidencePacket {
            id: format!("{}:x", kind.as_str()),
            kind,
            source: FeatureId::src(0),
            target: FeatureId::src(1),
            source_description: a.into(),
            target_description: b.into(),
            joint: joint
                .iter()
                .enumerate()
                .map(|(i, t)| EvidenceLine {
                    sentence_id: format!("s{i}"),
                    text: t.to_string(),
                    score: 1.0,
                })
                .collect(),
            source_only: vec![],
            target_only: vec![],
            count: joint.len() as u64,
            jaccard: None,
            weight: 1.0,
            hint: None,
            evidence_poor: joint.is_empty(),
        }
    }

    struct Counting(AtomicUsize);
    impl ExternalClient for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn call(&self, _: &ClientRequest) -> std::result::Result<Value, ClientError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Transport("down".into()))
        }
    }

    #[test]
    fn stub_phrase_is_deterministic() {
        let p = packet(
            EdgeKind::Cooc,
            &[
                "Glaciers carve valleys near alpine lakes",
                "Alpine glaciers feed lakes",
            ],
            "glaciers and ice",
            "alpine slopes",
        );
        let l = label_edge(&p, &StubClient, &LabelRules::default(), &Value::Null);
        assert_eq!(l.status, LabelStatus::Accepted);
        assert_eq!(l.phrase, "glaciers co-occurs with alpine in lakes contexts");
        assert_eq!(
            l,
            label_edge(&p, &StubClient, &LabelRules::default(), &Value::Null)
        );
    }

    #[test]
    fn evidence_poor_packet_makes_no_call() {
        let client = Counting(AtomicUsize::new(0));
        let p = packet(EdgeKind::Mech, &[], "a thing", "b thing");
        let l = label_edge(&p, &client, &LabelRules::default(), &Value::Null);
        assert_eq!(l.status, LabelStatus::Fallback);
        assert_eq!(l.phrase, "supports");
        assert_eq!(client.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn transport_failure_retries_once_then_falls_back() {
        let client = Counting(AtomicUsize::new(0));
        let p = packet(EdgeKind::Cooc, &["x y"], "apples", "pears");
        let l = label_edge(&p, &client, &LabelRules::default(), &Value::Null);
        assert_eq!(l.status, LabelStatus::Fallback);
        assert_eq!(l.phrase, "co-occurs with");
        assert_eq!(client.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn stage_one_reject_records_justification() {
        let p = packet(
            EdgeKind::Cooc,
            &["nothing relevant here"],
            "volcano",
            "glacier",
        );
        let l = label_edge(&p, &StubClient, &LabelRules::default(), &Value::Null);
        assert_eq!(l.status, LabelStatus::Fallback);
        assert!(l.justification.starts_with("presence pass"));
    }

    #[test]
    fn validator_rules() {
        let rules = LabelRules::default();
        let p = packet(
            EdgeKind::Mech,
            &["x"],
            "detected place names",
            "national park references",
        );
        let check = |phrase: &str, kind| rule_violation(phrase, kind, &p, &rules);
        assert!(check("related to", EdgeKind::Cooc).is_some());
        assert!(check("detected place names", EdgeKind::Cooc).is_some());
        assert!(check("place names near parks", EdgeKind::Mech).is_some());
        assert!(check(
            "converts detected place names into park references",
            EdgeKind::Mech
        )
        .is_none());
        let mut hinted = p.clone();
        hinted.hint = Some("place drives park".into());
        assert!(rule_violation("place drives park", EdgeKind::Mech, &hinted, &rules).is_some());
        for kind in [EdgeKind::Cooc, EdgeKind::Mech] {
            let fb = fallback_label(&p, &rules, "stub", "x");
            let fb = EdgeLabel {
                kind,
                phrase: rules.fallback_phrase(kind).into(),
                ..fb
            };
            assert_eq!(validate_label(fb.clone(), &p, &rules), fb);
            assert!(rule_violation(rules.fallback_phrase(kind), kind, &p, &rules).is_none());
        }
    }

    #[test]
    fn budget_prioritizes_heavy_edges() {
        let mut light = packet(
            EdgeKind::Cooc,
            &["apples and pears", "apples with pears"],
            "apples",
            "pears",
        );
        light.id = "a".into();
        light.weight = 0.1;
        let mut heavy = light.clone();
        heavy.id = "b".into();
        heavy.weight = 0.9;
        let config = RelateConfig {
            budget: Some(1),
            ..RelateConfig::default()
        };
        let out = label_packets(
            vec![light, heavy],
            EdgeKind::Cooc,
            None,
            &StubClient,
            &config,
        )
        .unwrap();
        assert_eq!(out.labels[0].status, LabelStatus::Fallback);
        assert_eq!(out.labels[0].justification, "outside labeling budget");
        assert_eq!(out.labels[1].status, LabelStatus::Accepted);
    }
}
