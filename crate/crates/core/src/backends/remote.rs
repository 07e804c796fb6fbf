//! Chat-completion backend. The operator payload is a prompt template; the
//! rendered prompt goes to one of several weighted endpoint profiles.

use std::time::Duration;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Backend, BackendConfig, GenerationError, GenerationFailure, GenerationRequest, GenerationResult};
use crate::population::AgentKind;

pub const API_KEY_ENV: &str = "ESCHER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointProfile {
    pub name: String,
    /// Full URL of the chat-completions endpoint.
    pub url: String,
    pub model: String,
    pub weight: f64,
    /// Extra request-body fields passed through untouched (thinking level etc).
    #[serde(default)]
    pub options: Map<String, Value>,
}

/// Index of a profile drawn with probability proportional to its weight.
pub fn pick_profile(profiles: &[EndpointProfile], rng: &mut dyn RngCore) -> usize {
    let total: f64 = profiles.iter().map(|p| p.weight).sum();
    let mut target = rng.random::<f64>() * total;
    for (i, p) in profiles.iter().enumerate() {
        if target < p.weight {
            return i;
        }
        target -= p.weight;
    }
    profiles.len() - 1
}

/// Fills a prompt template with the scored parents.
///
/// Recognised placeholders: `{{parents}}`, `{{target}}`, `{{count}}`. When the
/// template has no `{{parents}}` slot the parent block is appended.
pub fn render_prompt(template: &str, parents: &[(String, f64)], target: AgentKind) -> String {
    let mut block = String::new();
    for (i, (payload, score)) in parents.iter().enumerate() {
        block.push_str(&format!("### Candidate {} (score: {score})\n```\n{}\n```\n\n", i + 1, payload.trim_end()));
    }
    let block = block.trim_end().to_string();
    let mut out = template
        .replace("{{target}}", &target.to_string())
        .replace("{{count}}", &parents.len().to_string());
    if out.contains("{{parents}}") {
        out = out.replace("{{parents}}", &block);
    } else {
        out.push_str("\n\n");
        out.push_str(&block);
    }
    out
}

/// Pulls the candidate out of a model reply: the last fenced block if any,
/// otherwise the whole reply.
pub fn extract_payload(reply: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut rest = reply;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let Some(nl) = after.find('\n') else { break };
        let body = &after[nl + 1..];
        let Some(end) = body.find("```") else { break };
        blocks.push(&body[..end]);
        rest = &body[end + 3..];
    }
    let chosen = blocks.last().copied().unwrap_or(reply).trim();
    (!chosen.is_empty()).then(|| chosen.to_string())
}

#[derive(Debug)]
pub struct RemoteBackend {
    cfg: BackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(cfg: BackendConfig, api_key: impl Into<String>) -> Result<Self, GenerationError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GenerationError::Config(e.to_string()))?;
        Ok(Self {
            cfg,
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the API key from the environment.
    pub fn from_env(cfg: BackendConfig) -> Result<Self, GenerationError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GenerationError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(cfg, key)
    }

    fn attempt(
        &self,
        profile: &EndpointProfile,
        prompt: &str,
        req: &GenerationRequest<'_>,
    ) -> (Result<String, String>, u64, u64) {
        let mut body = Map::new();
        body.insert("model".into(), json!(profile.model));
        body.insert("messages".into(), json!([{ "role": "user", "content": prompt }]));
        body.insert("temperature".into(), json!(req.temperature));
        body.insert("max_tokens".into(), json!(req.max_output_tokens));
        for (k, v) in &profile.options {
            body.insert(k.clone(), v.clone());
        }
        let resp = self
            .client
            .post(&profile.url)
            .bearer_auth(&self.api_key)
            .timeout(if req.timeout.is_zero() { Duration::from_secs(1200) } else { req.timeout })
            .json(&Value::Object(body))
            .send();
        let resp = match resp {
            Ok(r) => r,
            Err(e) => return (Err(e.to_string()), 0, 0),
        };
        let status = resp.status();
        let value: Value = match resp.json() {
            Ok(v) => v,
            Err(e) => return (Err(format!("HTTP {status}: unreadable body: {e}")), 0, 0),
        };
        let usage = value.get("usage");
        let count = |key: &str| usage.and_then(|u| u.get(key)).and_then(Value::as_u64).unwrap_or(0);
        let (tin, tout) = (count("prompt_tokens"), count("completion_tokens"));
        if !status.is_success() {
            return (Err(format!("HTTP {status}")), tin, tout);
        }
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default();
        match extract_payload(content) {
            Some(p) => (Ok(p), tin, tout),
            None => (Err("empty completion".into()), tin, tout),
        }
    }
}

impl Backend for RemoteBackend {
    fn label(&self) -> &str {
        "remote"
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &mut dyn RngCore) -> Result<GenerationResult, GenerationFailure> {
        let profile = &self.cfg.profiles[pick_profile(&self.cfg.profiles, rng)];
        let prompt = render_prompt(&req.operator.payload, &req.parents, req.target_kind);
        let (mut tokens_in, mut tokens_out) = (0, 0);
        let mut last = String::new();
        let attempts = req.retries + 1;
        for _ in 0..attempts {
            let (outcome, tin, tout) = self.attempt(profile, &prompt, req);
            tokens_in += tin;
            tokens_out += tout;
            match outcome {
                Ok(payload) => {
                    return Ok(GenerationResult {
                        payload,
                        tokens_in,
                        tokens_out,
                        backend_label: profile.name.clone(),
                    })
                }
                Err(e) => {
                    log::warn!("generation attempt via {} failed: {e}", profile.name);
                    last = e;
                }
            }
        }
        Err(GenerationFailure {
            error: GenerationError::RetriesExhausted { attempts, last },
            tokens_in,
            tokens_out,
            backend_label: profile.name.clone(),
        })
    }
}
