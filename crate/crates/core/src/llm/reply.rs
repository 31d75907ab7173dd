//! Extraction and validation of the structured reply.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmReply {
    pub reason: String,
    /// 0-based route index.
    pub choice: usize,
}

impl LlmReply {
    /// The documented reply shape, `{"reason": ..., "choice": "route N"}` with a 1-based label.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "reason": self.reason,
            "choice": format!("route {}", self.choice + 1),
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("no usable JSON object in reply: {0}")]
    Parse(String),
    #[error("choice `{label}` is not a route between 1 and {route_count}")]
    Range { label: String, route_count: usize },
}

/// First well-formed JSON object in `raw` that carries a `choice` key. Surrounding prose
/// and code fences are skipped.
fn first_choice_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if map.contains_key("choice") {
                return Some(map);
            }
        }
    }
    None
}

/// 1-based label from `"route 2"`, `"Route 2"`, `"2"` or `2`.
fn route_label(value: &Value) -> Result<i64, ReplyError> {
    match value {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| {
                n.as_f64()
                    .filter(|f| f.fract() == 0.0 && f.abs() < 1e15)
                    .map(|f| f as i64)
            })
            .ok_or_else(|| ReplyError::Parse(format!("choice `{n}` is not an integer"))),
        Value::String(s) => {
            let t = s.trim().to_ascii_lowercase();
            let t = t.strip_prefix("route").unwrap_or(&t).trim();
            t.parse::<i64>()
                .map_err(|_| ReplyError::Parse(format!("choice `{s}` does not name a route")))
        }
        other => Err(ReplyError::Parse(format!("choice has unsupported type: {other}"))),
    }
}

/// Parses a raw model reply. Never panics; every input maps to a reply or a typed error.
pub fn parse_reply(raw: &str, route_count: usize) -> Result<LlmReply, ReplyError> {
    let map = first_choice_object(raw).ok_or_else(|| {
        let head: String = raw.chars().take(80).collect();
        ReplyError::Parse(format!("no JSON object with a \"choice\" key in `{head}`"))
    })?;
    let label = route_label(&map["choice"])?;
    if label < 1 || label as u64 > route_count as u64 {
        return Err(ReplyError::Range {
            label: label.to_string(),
            route_count,
        });
    }
    let reason = match map.get("reason") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        _ => return Err(ReplyError::Parse("missing or empty \"reason\"".to_string())),
    };
    Ok(LlmReply {
        reason,
        choice: (label - 1) as usize,
    })
}
