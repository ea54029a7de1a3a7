//! The external decision/text client shared by adjudication, hierarchy
//! summaries, latent captions and edge labeling.
//!
//! Every request is `{"task", "payload", "profile"}` and every reply is a JSON
//! object whose schema depends on the task. Callers validate replies; clients
//! only move bytes.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Adjudicate,
    Summarize,
    CaptionLabel,
    RelatePresence,
    RelatePhrase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub task: Task,
    pub payload: Value,
    /// Run-level configuration passed through verbatim (e.g. the domain profile).
    #[serde(default)]
    pub profile: Value,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unsupported task {0:?}")]
    Unsupported(Task),
}

pub trait ExternalClient: Send + Sync {
    /// Recorded as provenance on every decision the client makes.
    fn id(&self) -> &str;

    fn call(&self, request: &ClientRequest) -> Result<Value, ClientError>;
}

/// JSON-over-HTTP client: POSTs the request to one endpoint and returns the reply body.
pub struct HttpClient {
    endpoint: String,
    id: String,
    inner: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        let endpoint = endpoint.into();
        let inner = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            id: format!("http:{endpoint}"),
            endpoint,
            inner,
        })
    }
}

impl ExternalClient for HttpClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, request: &ClientRequest) -> Result<Value, ClientError> {
        let response = self
            .inner
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ClientError::Transport(format!(
                "HTTP {}",
                response.status()
            )));
        }
        // A body that is not JSON is handed back as a string so the caller's
        // schema check rejects it.
        let text = response
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }
}

/// Deterministic rule-based client.
///
/// * adjudicate: the packet keyword (longest content word of the description)
///   must appear in at least two target evidence sentences; the feature belongs
///   when the keyword is more frequent in target than contrast evidence.
/// * summarize: the two most frequent content words of the leaf anchors.
/// * caption_label: `"<source keyword> to <target keyword>"`.
/// * relate_presence: both endpoint keywords appear in some JOINT line.
/// * relate_phrase: `"<a> co-occurs with <b> in <shared> contexts"` for
///   co-occurrence edges, `"<a> drives <b> via <shared>"` for mechanism edges,
///   where `<shared>` is the most frequent other content word of the JOINT lines.
#[derive(Debug, Clone, Default)]
pub struct StubClient;

impl StubClient {
    fn texts(v: &Value) -> Vec<String> {
        v.as_array()
            .map(|a| {
                a.iter()
                    .filter_map(|x| x["text"].as_str().map(str::to_owned))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn adjudicate(payload: &Value) -> Value {
        let description = payload["description"].as_str().unwrap_or("");
        let Some(kw) = util::keyword(description) else {
            return json!({
                "visible": false, "evidence_sentence_ids": [], "belongs_here": false,
                "distinctiveness": "low", "justification": "The description has no content word."
            });
        };
        let hits: Vec<Value> = payload["target_evidence"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|s| util::contains_word(s["text"].as_str().unwrap_or(""), &kw))
            .map(|s| s["sentence_id"].clone())
            .collect();
        let contrast_hits = Self::texts(&payload["contrast_evidence"])
            .iter()
            .filter(|t| util::contains_word(t, &kw))
            .count();
        let visible = hits.len() >= 2;
        let belongs = visible && hits.len() > contrast_hits;
        let distinctiveness = match contrast_hits {
            0 => "high",
            c if c * 2 < hits.len() => "medium",
            _ => "low",
        };
        json!({
            "visible": visible,
            "evidence_sentence_ids": if visible { hits.clone() } else { vec![] },
            "belongs_here": belongs,
            "distinctiveness": distinctiveness,
            "justification": format!("Keyword '{kw}' appears in {} target and {contrast_hits} contrast sentences.", hits.len()),
        })
    }

    fn summarize(payload: &Value) -> Value {
        let anchors: Vec<&str> = payload["leaf_anchors"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .collect();
        let label = util::frequent_words(anchors.iter().copied())
            .into_iter()
            .take(2)
            .map(|(w, _)| w)
            .collect::<Vec<_>>()
            .join(" ");
        json!({ "label": label })
    }

    fn caption_label(payload: &Value) -> Value {
        let first_kw = |key: &str| {
            payload[key]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_str)
                .find_map(util::keyword)
        };
        let label = match (first_kw("sources"), first_kw("targets")) {
            (Some(s), Some(t)) => format!("{s} to {t}"),
            (Some(s), None) => s,
            (None, Some(t)) => t,
            (None, None) => String::new(),
        };
        json!({ "label": label })
    }

    fn endpoint_keywords(payload: &Value) -> (Option<String>, Option<String>) {
        (
            util::keyword(payload["source_description"].as_str().unwrap_or("")),
            util::keyword(payload["target_description"].as_str().unwrap_or("")),
        )
    }

    fn relate_presence(payload: &Value) -> Value {
        let joint = Self::texts(&payload["joint"]);
        let (ka, kb) = Self::endpoint_keywords(payload);
        let supported = |kw: &Option<String>| {
            kw.as_ref()
                .is_some_and(|k| joint.iter().any(|t| util::contains_word(t, k)))
        };
        let ok = supported(&ka) && supported(&kb);
        json!({
            "supported": ok,
            "justification": if ok {
                "Both endpoint keywords occur in the joint evidence.".to_string()
            } else {
                "An endpoint keyword is absent from the joint evidence.".to_string()
            }
        })
    }

    fn relate_phrase(payload: &Value) -> Value {
        let joint = Self::texts(&payload["joint"]);
        let (ka, kb) = Self::endpoint_keywords(payload);
        let (ka, kb) = (ka.unwrap_or_default(), kb.unwrap_or_default());
        let shared = util::frequent_words(joint.iter().map(String::as_str))
            .into_iter()
            .map(|(w, _)| w)
            .find(|w| *w != ka && *w != kb)
            .unwrap_or_else(|| "shared".into());
        let mech = payload["kind"].as_str() == Some("mech");
        let phrase = if mech {
            format!("{ka} drives {kb} via {shared}")
        } else {
            format!("{ka} co-occurs with {kb} in {shared} contexts")
        };
        json!({
            "phrase": phrase,
            "directional": mech,
            "justification": format!("Joint evidence centres on '{shared}'."),
        })
    }
}

impl ExternalClient for StubClient {
    fn id(&self) -> &str {
        "stub"
    }

    fn call(&self, request: &ClientRequest) -> Result<Value, ClientError> {
        let p = &request.payload;
        Ok(match request.task {
            Task::Adjudicate => Self::adjudicate(p),
            Task::Summarize => Self::summarize(p),
            Task::CaptionLabel => Self::caption_label(p),
            Task::RelatePresence => Self::relate_presence(p),
            Task::RelatePhrase => Self::relate_phrase(p),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn serve_once(status: &str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let status = status.to_string();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body_in = vec![0u8; len];
            reader.read_exact(&mut body_in).unwrap();
            let req: Value = serde_json::from_slice(&body_in).unwrap();
            assert_eq!(req["task"], "summarize");
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        });
        format!("http://{addr}/")
    }

    fn summarize_request() -> ClientRequest {
        ClientRequest {
            task: Task::Summarize,
            payload: json!({"leaf_anchors": []}),
            profile: Value::Null,
        }
    }

    #[test]
    fn http_client_posts_and_parses_json() {
        let url = serve_once("200 OK", r#"{"label": "cell biology"}"#);
        let client = HttpClient::new(url, Duration::from_secs(5)).unwrap();
        let reply = client.call(&summarize_request()).unwrap();
        assert_eq!(reply["label"], "cell biology");
    }

    #[test]
    fn http_error_status_is_transport_failure() {
        let url = serve_once("503 Service Unavailable", "{}");
        let client = HttpClient::new(url, Duration::from_secs(5)).unwrap();
        assert!(matches!(
            client.call(&summarize_request()),
            Err(ClientError::Transport(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_transport_failure() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let client =
            HttpClient::new(format!("http://127.0.0.1:{port}/"), Duration::from_secs(2)).unwrap();
        assert!(matches!(
            client.call(&summarize_request()),
            Err(ClientError::Transport(_))
        ));
    }

    #[test]
    fn stub_summary_of_identical_anchors_is_those_words() {
        let reply = StubClient
            .call(&ClientRequest {
                task: Task::Summarize,
                payload: json!({"leaf_anchors": ["cell membrane", "cell membrane", "cell membrane"]}),
                profile: Value::Null,
            })
            .unwrap();
        assert_eq!(reply["label"], "cell membrane");
    }
}
