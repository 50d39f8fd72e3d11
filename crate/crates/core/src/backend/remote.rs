//! Blocking client for a chat-completion endpoint that reports per-token
//! top-K log-probabilities.

use std::fmt;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};

use super::wire::{build_request_body, parse_response};
use super::{Backend, BackendConfig, BackendError, Generation, ScoreMode, ScoringRequest};

pub struct RemoteBackend {
    config: BackendConfig,
    api_key: Option<String>,
    client: Client,
}

// the key never reaches logs
impl fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint_url", &self.config.endpoint_url)
            .field("model_id", &self.config.model_id)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_s))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(&self.config.endpoint_url)
            .header(CONTENT_TYPE, "application/json")
            .json(body);
        if let Some(key) = &self.api_key {
            req = req.header(AUTHORIZATION, format!("Bearer {key}"));
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify)?;
        match status {
            401 | 403 => Err(BackendError::Auth { status }),
            s if s >= 400 => Err(BackendError::Http {
                status: s,
                body: text.chars().take(512).collect(),
            }),
            _ => Ok(text),
        }
    }
}

fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout(e.to_string())
    } else {
        BackendError::Transport(e.to_string())
    }
}

impl Backend for RemoteBackend {
    fn generate(&self, request: &ScoringRequest) -> Result<Generation, BackendError> {
        request.validate()?;
        let body = build_request_body(&self.config.model_id, self.config.top_logprobs_k, request)?;
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 1;
        let raw = loop {
            match self.post_once(&body) {
                Ok(raw) => break raw,
                Err(e) if e.is_retriable() && attempt < self.config.max_attempts => {
                    warn!(
                        "attempt {attempt}/{} failed: {e}; retrying in {backoff:?}",
                        self.config.max_attempts
                    );
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let parsed = parse_response(&raw)?;
        debug!("decoded {} logprob steps", parsed.trace.len());
        let trace = match request.mode {
            ScoreMode::FirstTokenOnly if parsed.trace.len() > 1 => {
                let first = parsed.trace.steps()[0].clone();
                let tok = parsed.trace.chosen_tokens()[0].clone();
                crate::uncertainty::GenerationTrace::new(vec![first], vec![tok])
                    .map_err(|e| BackendError::Malformed(e.to_string()))?
            }
            _ => parsed.trace,
        };
        Ok(Generation {
            trace,
            text: parsed.text,
        })
    }

    fn max_concurrency(&self) -> usize {
        self.config.max_concurrency
    }
}
