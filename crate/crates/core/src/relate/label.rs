use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::packet::{EdgeEvidencePacket, EdgeKind};
use crate::client::{ClientError, ClientRequest, ExternalClient, Task};
use crate::ids::FeatureId;
use crate::util::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Accepted,
    Fallback,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub packet_id: String,
    pub kind: EdgeKind,
    pub source: FeatureId,
    pub target: FeatureId,
    pub phrase: String,
    pub directional: bool,
    pub status: LabelStatus,
    pub justification: String,
    pub provenance: String,
    /// Proposed phrase that failed validation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_phrase: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRules {
    pub generic_blocklist: Vec<String>,
    pub directional_verbs: Vec<String>,
    /// Token-set overlap above which a phrase counts as a copy of a description.
    pub copy_overlap: f64,
    pub cooc_fallback: String,
    pub mech_fallback: String,
}

impl Default for LabelRules {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            generic_blocklist: s(&[
                "related to",
                "associated with",
                "connected to",
                "linked to",
                "relates to",
                "is about",
                "has to do with",
                "involves",
            ]),
            directional_verbs: s(&[
                "activates",
                "builds",
                "causes",
                "converts",
                "drives",
                "enables",
                "feeds",
                "flags",
                "generates",
                "implies",
                "induces",
                "maps",
                "marks",
                "predicts",
                "produces",
                "promotes",
                "signals",
                "supports",
                "suppresses",
                "transforms",
                "triggers",
                "turns",
                "yields",
            ]),
            copy_overlap: 0.8,
            cooc_fallback: "co-occurs with".into(),
            mech_fallback: "supports".into(),
        }
    }
}

impl LabelRules {
    pub fn fallback_phrase(&self, kind: EdgeKind) -> &str {
        match kind {
            EdgeKind::Cooc => &self.cooc_fallback,
            EdgeKind::Mech => &self.mech_fallback,
        }
    }
}

fn normalized(text: &str) -> Vec<String> {
    words(text)
}

fn token_overlap(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = normalized(a).into_iter().collect();
    let b: BTreeSet<String> = normalized(b).into_iter().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// First rule the phrase breaks, if any. Configured fallback phrases always pass.
pub fn rule_violation(
    phrase: &str,
    kind: EdgeKind,
    packet: &EdgeEvidencePacket,
    rules: &LabelRules,
) -> Option<String> {
    if phrase == rules.fallback_phrase(kind) {
        return None;
    }
    let tokens = normalized(phrase);
    if tokens.is_empty() {
        return Some("empty phrase".into());
    }
    if let Some(g) = rules
        .generic_blocklist
        .iter()
        .find(|g| contains_run(&tokens, &normalized(g)))
    {
        return Some(format!("generic phrase '{g}'"));
    }
    for desc in [&packet.source_description, &packet.target_description] {
        let overlap = token_overlap(phrase, desc);
        if overlap > rules.copy_overlap {
            return Some(format!(
                "copies endpoint description (overlap {overlap:.2})"
            ));
        }
    }
    if kind == EdgeKind::Mech && !tokens.iter().any(|t| rules.directional_verbs.contains(t)) {
        return Some("no directional verb".into());
    }
    if let Some(h) = &packet.hint {
        if normalized(h) == tokens {
            return Some("copies the latent hint".into());
        }
    }
    None
}

/// Marks a proposed label rejected when it breaks a rule; other labels pass through.
pub fn validate_label(
    mut label: EdgeLabel,
    packet: &EdgeEvidencePacket,
    rules: &LabelRules,
) -> EdgeLabel {
    if label.status == LabelStatus::Accepted {
        if let Some(v) = rule_violation(&label.phrase, label.kind, packet, rules) {
            label.status = LabelStatus::Rejected;
            label.justification = format!("rejected: {v}");
        }
    }
    label
}

pub fn fallback_label(
    packet: &EdgeEvidencePacket,
    rules: &LabelRules,
    provenance: &str,
    why: impl Into<String>,
) -> EdgeLabel {
    EdgeLabel {
        packet_id: packet.id.clone(),
        kind: packet.kind,
        source: packet.source,
        target: packet.target,
        phrase: rules.fallback_phrase(packet.kind).to_string(),
        directional: packet.kind == EdgeKind::Mech,
        status: LabelStatus::Fallback,
        justification: why.into(),
        provenance: provenance.to_string(),
        rejected_phrase: None,
    }
}

fn call_with_retry(
    client: &dyn ExternalClient,
    request: &ClientRequest,
) -> Result<Value, ClientError> {
    match client.call(request) {
        Err(ClientError::Transport(e)) => {
            log::warn!("relator transport failure, retrying: {e}");
            client.call(request)
        }
        other => other,
    }
}

fn packet_payload(packet: &EdgeEvidencePacket) -> Value {
    json!({
        "kind": packet.kind.as_str(),
        "source": packet.source,
        "target": packet.target,
        "source_description": packet.source_description,
        "target_description": packet.target_description,
        "joint": packet.joint,
        "source_only": packet.source_only,
        "target_only": packet.target_only,
        "count": packet.count,
        "weight": packet.weight,
        "hint": packet.hint,
    })
}

/// Presence pass, then phrase proposal, then validation. Every failure path
/// ends in the conservative fallback relation.
pub fn label_edge(
    packet: &EdgeEvidencePacket,
    client: &dyn ExternalClient,
    rules: &LabelRules,
    profile: &Value,
) -> EdgeLabel {
    let id = client.id();
    if packet.evidence_poor {
        return fallback_label(packet, rules, id, "no joint evidence");
    }
    let payload = packet_payload(packet);
    let presence = ClientRequest {
        task: Task::RelatePresence,
        payload: payload.clone(),
        profile: profile.clone(),
    };
    match call_with_retry(client, &presence) {
        Ok(reply) if reply["supported"].as_bool() == Some(true) => {}
        Ok(reply) => {
            let why = reply["justification"]
                .as_str()
                .unwrap_or("presence pass failed");
            return fallback_label(packet, rules, id, format!("presence pass: {why}"));
        }
        Err(e) => return fallback_label(packet, rules, id, format!("presence pass: {e}")),
    }
    let request = ClientRequest {
        task: Task::RelatePhrase,
        payload,
        profile: profile.clone(),
    };
    let reply = match call_with_retry(client, &request) {
        Ok(r) => r,
        Err(e) => return fallback_label(packet, rules, id, format!("phrase: {e}")),
    };
    let Some(phrase) = reply["phrase"]
        .as_str()
        .map(str::trim)
        .filter(|p| !p.is_empty())
    else {
        return fallback_label(packet, rules, id, "phrase: empty reply");
    };
    let proposed = EdgeLabel {
        packet_id: packet.id.clone(),
        kind: packet.kind,
        source: packet.source,
        target: packet.target,
        phrase: phrase.to_string(),
        directional: packet.kind == EdgeKind::Mech,
        status: LabelStatus::Accepted,
        justification: reply["justification"].as_str().unwrap_or("").to_string(),
        provenance: id.to_string(),
        rejected_phrase: None,
    };
    let checked = validate_label(proposed, packet, rules);
    if checked.status == LabelStatus::Rejected {
        let mut fb = fallback_label(packet, rules, id, checked.justification);
        fb.rejected_phrase = Some(checked.phrase);
        return fb;
    }
    checked
}
