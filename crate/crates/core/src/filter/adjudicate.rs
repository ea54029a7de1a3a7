use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvidencePacket, ScreenLabel};
use crate::client::{ClientError, ClientRequest, ExternalClient, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distinctiveness {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub visible: bool,
    pub evidence_sentence_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relevance {
    pub belongs_here: bool,
    pub distinctiveness: Distinctiveness,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationResult {
    pub visibility: Visibility,
    pub relevance: Relevance,
}

impl AdjudicationResult {
    pub fn accepted(&self) -> bool {
        self.visibility.visible && self.relevance.belongs_here
    }
}

/// Flat wire form of a reply.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireReply {
    visible: bool,
    evidence_sentence_ids: Vec<String>,
    belongs_here: bool,
    distinctiveness: Distinctiveness,
    justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Adjudication {
    Decided {
        result: AdjudicationResult,
        client: String,
    },
    Indeterminate {
        reason: String,
        client: String,
    },
}

/// Parses and checks a reply against the packet it answers.
pub fn validate_reply(
    reply: &Value,
    packet: &EvidencePacket,
) -> std::result::Result<AdjudicationResult, String> {
    let wire: WireReply =
        serde_json::from_value(reply.clone()).map_err(|e| format!("reply schema: {e}"))?;
    if wire.visible && wire.evidence_sentence_ids.is_empty() {
        return Err("visible=true requires evidence sentence ids".into());
    }
    let known = packet.evidence_ids();
    if let Some(bad) = wire
        .evidence_sentence_ids
        .iter()
        .find(|id| !known.contains(id.as_str()))
    {
        return Err(format!("evidence id `{bad}` is not in the packet"));
    }
    if wire.justification.trim().is_empty() {
        return Err("justification is empty".into());
    }
    Ok(AdjudicationResult {
        visibility: Visibility {
            visible: wire.visible,
            evidence_sentence_ids: wire.evidence_sentence_ids,
        },
        relevance: Relevance {
            belongs_here: wire.belongs_here,
            distinctiveness: wire.distinctiveness,
            justification: wire.justification,
        },
    })
}

/// Sends one candidate packet. A schema-violating reply is retried once and
/// then marked indeterminate; transport failures surface as retryable errors.
pub fn adjudicate_feature(
    packet: &EvidencePacket,
    client: &dyn ExternalClient,
    profile: &Value,
) -> Result<Adjudication> {
    if packet.screen_label != ScreenLabel::Candidate {
        return Err(Error::Precondition(format!(
            "feature {} has screen label {:?} and is never sent",
            packet.feature, packet.screen_label
        )));
    }
    let request = ClientRequest {
        task: Task::Adjudicate,
        payload: serde_json::to_value(packet)?,
        profile: profile.clone(),
    };
    let mut last = String::new();
    for _ in 0..2 {
        let reply = client.call(&request).map_err(|e| match e {
            ClientError::Transport(m) => Error::Adjudicator {
                message: m,
                retryable: true,
            },
            other => Error::Adjudicator {
                message: other.to_string(),
                retryable: false,
            },
        })?;
        match validate_reply(&reply, packet) {
            Ok(result) => {
                return Ok(Adjudication::Decided {
                    result,
                    client: client.id().to_string(),
                })
            }
            Err(reason) => {
                log::warn!(
                    "feature {}: rejected adjudicator reply: {reason}",
                    packet.feature
                );
                last = reason;
            }
        }
    }
    Ok(Adjudication::Indeterminate {
        reason: last,
        client: client.id().to_string(),
    })
}
