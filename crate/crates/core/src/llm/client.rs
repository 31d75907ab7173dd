//! OpenAI-compatible chat completions client with retries and a concurrency bound.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::PromptBundle;
use super::reply::{parse_reply, ReplyError};
use crate::agent::{uniform_choose, AgentState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60
}
fn default_concurrency() -> usize {
    8
}
fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}
fn default_backoff() -> u64 {
    500
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            base_url: "https://api.openai.com".to_string(),
            model_name: "gpt-4o-mini".to_string(),
            temperature: 0.0,
            max_retries: default_retries(),
            request_timeout_secs: default_timeout(),
            max_concurrent_requests: default_concurrency(),
            api_key_env: default_key_env(),
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("invalid LLM client config: {0}")]
    Config(String),
    #[error("environment variable {0} with the API key is not set")]
    MissingApiKey(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature must lie in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_retries < 1 {
            return Err(LlmError::Config("max_retries must be at least 1".into()));
        }
        if self.max_concurrent_requests < 1 {
            return Err(LlmError::Config("max_concurrent_requests must be at least 1".into()));
        }
        if self.base_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(LlmError::Config("base_url and model_name must be set".into()));
        }
        Ok(())
    }

    pub fn api_key(&self) -> Result<String, LlmError> {
        match std::env::var(&self.api_key_env) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(LlmError::MissingApiKey(self.api_key_env.clone())),
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/chat/completions")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Sends one chat request and returns the assistant's text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &LlmClientConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = config.api_key()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.request_timeout_secs)))
            .build()
            .into();
        Ok(HttpTransport {
            agent,
            url: config.endpoint(),
            api_key,
        })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let body: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("malformed completion body: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("completion has no choices".into()))
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePass<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a Gate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// One request/response pair, kept for the run's transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub attempt: u32,
    pub request: ChatRequest,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmDecision {
    pub choice: usize,
    pub reason: Option<String>,
    /// Retries were exhausted and the fallback rule picked the route.
    pub fallback: bool,
    pub exchanges: Vec<Exchange>,
}

pub struct LlmClient {
    config: LlmClientConfig,
    transport: Arc<dyn ChatTransport>,
    gate: Gate,
}

impl LlmClient {
    pub fn new(config: LlmClientConfig, transport: Arc<dyn ChatTransport>) -> Result<Self, LlmError> {
        config.validate()?;
        let gate = Gate::new(config.max_concurrent_requests);
        Ok(LlmClient {
            config,
            transport,
            gate,
        })
    }

    /// Client talking HTTP to the configured endpoint.
    pub fn http(config: LlmClientConfig) -> Result<Self, LlmError> {
        let transport = Arc::new(HttpTransport::new(&config)?);
        Self::new(config, transport)
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    fn send(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let _pass = self.gate.acquire();
        self.transport.complete(request)
    }

    /// Asks the model for a route. Transport, parse and range failures are retried with
    /// exponential backoff (the latter two with a corrective instruction appended); once
    /// retries are exhausted the agent repeats yesterday's route, or picks uniformly at
    /// random on its first day.
    pub fn choose<R: Rng + ?Sized>(&self, state: &AgentState, prompt: &PromptBundle, rng: &mut R) -> LlmDecision {
        let route_count = state.route_count();
        let mut messages = vec![
            ChatMessage::new("system", prompt.system_text.clone()),
            ChatMessage::new("user", prompt.user_text.clone()),
        ];
        let mut exchanges = Vec::new();
        let attempts = 1 + self.config.max_retries;
        for attempt in 1..=attempts {
            if attempt > 1 && self.config.backoff_ms > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 2).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let request = ChatRequest {
                model: self.config.model_name.clone(),
                messages: messages.clone(),
                temperature: self.config.temperature,
            };
            match self.send(&request) {
                Err(e) => {
                    log::warn!("agent {} attempt {attempt}: {e}", state.id);
                    exchanges.push(Exchange {
                        attempt,
                        request,
                        response: None,
                        error: Some(e.to_string()),
                    });
                }
                Ok(text) => match parse_reply(&text, route_count) {
                    Ok(reply) => {
                        exchanges.push(Exchange {
                            attempt,
                            request,
                            response: Some(text),
                            error: None,
                        });
                        return LlmDecision {
                            choice: reply.choice,
                            reason: Some(reply.reason),
                            fallback: false,
                            exchanges,
                        };
                    }
                    Err(e) => {
                        log::warn!("agent {} attempt {attempt}: {e}", state.id);
                        exchanges.push(Exchange {
                            attempt,
                            request,
                            response: Some(text.clone()),
                            error: Some(e.to_string()),
                        });
                        messages.push(ChatMessage::new("assistant", text));
                        messages.push(ChatMessage::new("user", corrective_instruction(&e, route_count)));
                    }
                },
            }
        }
        let choice = match &state.yesterday {
            Some(y) => y.chosen,
            None => uniform_choose(route_count, rng),
        };
        log::warn!(
            "agent {}: retries exhausted, falling back to route {}",
            state.id,
            choice + 1
        );
        LlmDecision {
            choice,
            reason: None,
            fallback: true,
            exchanges,
        }
    }
}

fn corrective_instruction(err: &ReplyError, route_count: usize) -> String {
    format!(
        "Your previous reply could not be used ({err}). Reply with only a JSON object with the keys \"reason\" \
         and \"choice\", where choice is a route between route 1 and route {route_count}."
    )
}
