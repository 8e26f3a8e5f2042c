use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CognitionBackend, CompletionRequest, GatewayError, ModelTier};

/// Environment variable holding the bearer token for the remote endpoint.
pub const API_KEY_ENV: &str = "CIVITAS_API_KEY";

/// Chat-completion endpoint and the model used for each tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model_l: String,
    pub model_m: String,
    pub model_s: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl RemoteConfig {
    pub fn model(&self, tier: ModelTier) -> &str {
        match tier {
            ModelTier::L => &self.model_l,
            ModelTier::M => &self.model_m,
            ModelTier::S => &self.model_s,
        }
    }
}

/// Backend speaking the common chat-completion wire format.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// Reads the API key from [`API_KEY_ENV`] when set.
    pub fn new(config: RemoteConfig) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        RemoteBackend { config, api_key, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

impl CognitionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.config.model(req.tier),
            "temperature": 0,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.prompt},
            ],
        });
        let transport = |reason: String| GatewayError::Transport { task: req.task, reason };
        let mut call = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {k}"));
        }
        tracing::debug!(task = %req.task, agent = %req.agent, attempt = req.attempt, "remote completion");
        let mut resp = call.send_json(&body).map_err(|e| transport(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| transport(format!("unreadable response: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Schema { task: req.task, reason: "response has no choices[0].message.content".into() })
    }
}
