use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, LlmError, LlmProvider, LlmProviderConfig};
use crate::http::{post_json, HttpFailure, RetryPolicy};
use crate::limiter::InFlightLimiter;

/// Chat-completions-style HTTP client.
pub struct RemoteLlm {
    config: LlmProviderConfig,
    base_url: String,
    api_key: Option<String>,
    limiter: InFlightLimiter,
}

impl RemoteLlm {
    pub fn from_config(config: LlmProviderConfig) -> Result<Self, LlmError> {
        let base_url = match &config.endpoint {
            Some(e) => e.clone(),
            None => std::env::var("LLM_BASE_URL").map_err(|_| {
                LlmError::Config("no LLM endpoint configured and LLM_BASE_URL is unset".into())
            })?,
        };
        let api_key = std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty());
        Ok(Self::new(config, base_url, api_key))
    }

    pub fn new(config: LlmProviderConfig, base_url: String, api_key: Option<String>) -> Self {
        let limiter = InFlightLimiter::new(config.max_in_flight);
        Self {
            config,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            limiter,
        }
    }
}

pub(crate) fn extract_content(v: &Value) -> Option<String> {
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_owned)
}

impl LlmProvider for RemoteLlm {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let policy = RetryPolicy {
            max_attempts: self.config.max_attempts.max(1),
            initial_backoff: Duration::from_millis(self.config.initial_backoff_ms),
        };
        let url = format!("{}/chat/completions", self.base_url);
        let _permit = self.limiter.acquire();
        let v = post_json(&url, self.api_key.as_deref(), &body, &policy).map_err(|f| match f {
            HttpFailure::Exhausted { attempts, message } => {
                LlmError::Transport { attempts, message }
            }
            HttpFailure::Rejected(m) => LlmError::Rejected(m),
        })?;
        extract_content(&v)
            .ok_or_else(|| LlmError::Rejected(format!("response has no message content: {v}")))
    }
}
