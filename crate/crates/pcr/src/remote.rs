//! Client for external mask-fill servers.
//!
//! `POST {endpoint}/v1/fill-mask` with `{"tokens", "mask_indices",
//! "top_k"}`; the reply is `{"predictions", "model_id"}` where
//! `predictions[i]` ranks `top_k` tokens for `mask_indices[i]` with
//! non-increasing scores in `[0, 1]`.

use std::time::Duration;

use pcr_core::model::{Candidate, CodeGraphEmbedding, MaskFillBackend, MaskPrediction};
use pcr_core::prompt::{PromptInstance, SegmentKind};
use pcr_core::text::PAD;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("endpoint unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("protocol violation in `{field}`: {reason}")]
    Protocol { field: String, reason: String },
    #[error("scores for mask {mask} are not in descending order")]
    Ordering { mask: usize },
}

impl RemoteError {
    /// Whether repeating the call later may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, RemoteError::Unavailable { .. })
    }

    fn protocol(field: impl Into<String>, reason: impl Into<String>) -> Self {
        RemoteError::Protocol {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub attempts: u32,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            attempts: 3,
            timeout: Duration::from_secs(30),
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Serialize)]
struct FillMaskRequest<'a> {
    tokens: &'a [&'a str],
    mask_indices: &'a [usize],
    top_k: usize,
}

/// Reply of a server after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FillMaskReply {
    pub predictions: Vec<Vec<Candidate>>,
    pub model_id: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/v1/fill-mask") {
            base.to_string()
        } else {
            format!("{base}/v1/fill-mask")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, url, agent }
    }

    /// One validated round trip, retried on transport failures and
    /// server-side errors.
    pub fn fill_mask(&self, tokens: &[&str], mask_indices: &[usize], top_k: usize) -> Result<FillMaskReply, RemoteError> {
        let body = FillMaskRequest {
            tokens,
            mask_indices,
            top_k,
        };
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.config.backoff * (attempt - 1));
            }
            let mut response = match self.agent.post(&self.url).send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("fill-mask attempt {attempt} failed: {e}");
                    last = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = match response.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            if status >= 500 {
                last = format!("HTTP {status}");
                continue;
            }
            if status != 200 {
                return Err(RemoteError::protocol("status", format!("HTTP {status}: {text}")));
            }
            let value: Value =
                serde_json::from_str(&text).map_err(|e| RemoteError::protocol("body", e.to_string()))?;
            return validate_reply(&value, mask_indices.len(), top_k);
        }
        Err(RemoteError::Unavailable { attempts, last })
    }
}

/// Checks a decoded reply against the wire contract.
pub fn validate_reply(value: &Value, masks: usize, top_k: usize) -> Result<FillMaskReply, RemoteError> {
    let model_id = value
        .get("model_id")
        .and_then(Value::as_str)
        .ok_or_else(|| RemoteError::protocol("model_id", "missing or not a string"))?
        .to_string();
    let outer = value
        .get("predictions")
        .and_then(Value::as_array)
        .ok_or_else(|| RemoteError::protocol("predictions", "missing or not an array"))?;
    if outer.len() != masks {
        return Err(RemoteError::protocol(
            "predictions",
            format!("{} lists for {masks} masks", outer.len()),
        ));
    }
    let mut predictions = Vec::with_capacity(masks);
    for (i, inner) in outer.iter().enumerate() {
        let field = format!("predictions[{i}]");
        let inner = inner
            .as_array()
            .ok_or_else(|| RemoteError::protocol(&field, "not an array"))?;
        if inner.len() != top_k {
            return Err(RemoteError::protocol(&field, format!("{} candidates, expected {top_k}", inner.len())));
        }
        let mut candidates = Vec::with_capacity(top_k);
        for (j, c) in inner.iter().enumerate() {
            let token = c
                .get("token")
                .and_then(Value::as_str)
                .ok_or_else(|| RemoteError::protocol(format!("{field}[{j}].token"), "missing or not a string"))?;
            let score = c
                .get("score")
                .and_then(Value::as_f64)
                .ok_or_else(|| RemoteError::protocol(format!("{field}[{j}].score"), "missing or not a number"))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(RemoteError::protocol(format!("{field}[{j}].score"), format!("{score} outside [0, 1]")));
            }
            candidates.push(Candidate {
                token: token.to_string(),
                score,
            });
        }
        if candidates.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(RemoteError::Ordering { mask: i });
        }
        predictions.push(candidates);
    }
    Ok(FillMaskReply { predictions, model_id })
}

/// Tokens sent for an instance: everything except prefix padding and the
/// code slot, which a text-only server cannot use. Mask indices are
/// unaffected because masks precede both.
pub fn wire_tokens(instance: &PromptInstance) -> Vec<&str> {
    instance
        .segments
        .iter()
        .filter(|s| s.kind != SegmentKind::CodeGraph)
        .flat_map(|s| s.tokens.iter().map(String::as_str))
        .filter(|t| *t != PAD)
        .collect()
}

impl MaskFillBackend for RemoteBackend {
    type Error = RemoteError;

    fn predict(
        &self,
        instance: &PromptInstance,
        _code: &CodeGraphEmbedding,
        top_k: usize,
    ) -> Result<Vec<MaskPrediction>, RemoteError> {
        let tokens = wire_tokens(instance);
        let reply = self.fill_mask(&tokens, &instance.mask_positions, top_k)?;
        Ok(reply
            .predictions
            .into_iter()
            .zip(&instance.mask_positions)
            .map(|(candidates, &position)| MaskPrediction { position, candidates })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_ties_rejects_ascending() {
        let ok = json!({"model_id": "m", "predictions": [[{"token": "a", "score": 0.5}, {"token": "b", "score": 0.5}]]});
        assert_eq!(validate_reply(&ok, 1, 2).unwrap().predictions[0].len(), 2);
        let bad = json!({"model_id": "m", "predictions": [[{"token": "a", "score": 0.1}, {"token": "b", "score": 0.5}]]});
        assert!(matches!(validate_reply(&bad, 1, 2), Err(RemoteError::Ordering { mask: 0 })));
    }

    #[test]
    fn names_the_bad_field() {
        let v = json!({"model_id": "m", "predictions": [[{"token": "a", "score": 1.5}]]});
        match validate_reply(&v, 1, 1) {
            Err(RemoteError::Protocol { field, .. }) => assert_eq!(field, "predictions[0][0].score"),
            other => panic!("{other:?}"),
        }
        let v = json!({"predictions": []});
        assert!(matches!(validate_reply(&v, 0, 1), Err(RemoteError::Protocol { field, .. }) if field == "model_id"));
        let v = json!({"model_id": "m", "predictions": [[]]});
        assert!(matches!(validate_reply(&v, 2, 1), Err(RemoteError::Protocol { field, .. }) if field == "predictions"));
    }
}
