//! Scoring and answering backends.
//!
//! A backend turns a [`ScoringRequest`] (visual inputs plus a prompt) into a
//! [`Generation`]: the per-step token distributions and the decoded text.
//! Pipelines only ever see this trait; the remote chat-completion client and
//! the synthetic oracle both implement it.

mod fanout;
pub mod remote;
pub mod wire;

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{render_crop, SpatialCrop};
use crate::uncertainty::GenerationTrace;

pub use fanout::bounded_map;
pub use remote::RemoteBackend;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response has no `{field}`; enable per-token logprobs on the serving endpoint")]
    MissingLogprobs { field: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("could not encode visual input: {0}")]
    Encode(String),
}

impl BackendError {
    /// Transport-level failures that may succeed when retried.
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout(_))
    }
}

/// A decoded image shared by every visual cut from it. The PNG encoding is
/// produced at most once.
#[derive(Debug)]
pub struct SourceImage {
    raster: RgbImage,
    png: OnceLock<Vec<u8>>,
}

impl SourceImage {
    pub fn new(raster: RgbImage) -> Arc<Self> {
        Arc::new(Self {
            raster,
            png: OnceLock::new(),
        })
    }

    pub fn open(path: &Path) -> Result<Arc<Self>, image::ImageError> {
        Ok(Self::new(image::open(path)?.to_rgb8()))
    }

    pub fn raster(&self) -> &RgbImage {
        &self.raster
    }

    pub fn png(&self) -> Result<&[u8], BackendError> {
        if let Some(bytes) = self.png.get() {
            return Ok(bytes);
        }
        let bytes = encode_png(&self.raster)?;
        Ok(self.png.get_or_init(|| bytes))
    }
}

pub fn encode_png(raster: &RgbImage) -> Result<Vec<u8>, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    raster
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| BackendError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

/// One visual input of a request. Crops are rendered lazily, so backends
/// that never look at pixels (the oracle) pay nothing for them.
#[derive(Debug, Clone)]
pub enum Visual {
    Image(Arc<SourceImage>),
    Crop {
        source: Arc<SourceImage>,
        crop: SpatialCrop,
        target_side: u32,
    },
    Frame {
        ordinal: usize,
        path: PathBuf,
    },
}

impl Visual {
    /// MIME type and encoded bytes for transmission.
    pub fn encode(&self) -> Result<(&'static str, Vec<u8>), BackendError> {
        match self {
            Visual::Image(src) => Ok(("image/png", src.png()?.to_vec())),
            Visual::Crop {
                source,
                crop,
                target_side,
            } => {
                let raster = render_crop(source.raster(), crop, *target_side)
                    .map_err(|e| BackendError::Encode(e.to_string()))?;
                Ok(("image/png", encode_png(&raster)?))
            }
            Visual::Frame { path, .. } => {
                let bytes = std::fs::read(path)
                    .map_err(|e| BackendError::Encode(format!("{}: {e}", path.display())))?;
                let ext = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(|e| e.to_ascii_lowercase());
                let mime = match ext.as_deref() {
                    Some("jpg" | "jpeg") => "image/jpeg",
                    _ => "image/png",
                };
                Ok((mime, bytes))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    FullTrace,
    FirstTokenOnly,
}

#[derive(Debug, Clone)]
pub struct ScoringRequest {
    pub visuals: Vec<Visual>,
    pub prompt: String,
    pub max_new_tokens: u32,
    pub mode: ScoreMode,
    /// Candidate ordinal when the request scores a candidate; `None` for answering.
    pub candidate: Option<usize>,
}

impl ScoringRequest {
    pub fn new(visuals: Vec<Visual>, prompt: impl Into<String>, mode: ScoreMode) -> Self {
        Self {
            visuals,
            prompt: prompt.into(),
            max_new_tokens: match mode {
                ScoreMode::FullTrace => 16,
                ScoreMode::FirstTokenOnly => 1,
            },
            mode,
            candidate: None,
        }
    }

    pub fn for_candidate(mut self, index: usize) -> Self {
        self.candidate = Some(index);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub trace: GenerationTrace,
    pub text: String,
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &ScoringRequest) -> Result<Generation, BackendError>;

    fn score(&self, request: &ScoringRequest) -> Result<GenerationTrace, BackendError> {
        Ok(self.generate(request)?.trace)
    }

    /// Upper bound on requests this backend accepts in flight.
    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn generate(&self, request: &ScoringRequest) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

/// Scorer and answerer, possibly the same backend.
#[derive(Clone)]
pub struct BackendPair {
    pub scorer: Arc<dyn Backend>,
    pub answerer: Arc<dyn Backend>,
}

impl BackendPair {
    pub fn new(scorer: Arc<dyn Backend>, answerer: Arc<dyn Backend>) -> Self {
        Self { scorer, answerer }
    }

    pub fn shared(backend: Arc<dyn Backend>) -> Self {
        Self {
            scorer: backend.clone(),
            answerer: backend,
        }
    }
}

fn default_endpoint() -> String {
    "http://127.0.0.1:8000/v1/chat/completions".into()
}
fn default_top_k() -> u32 {
    20
}
fn default_one() -> usize {
    1
}
fn default_timeout() -> f64 {
    120.0
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_top_k")]
    pub top_logprobs_k: u32,
    #[serde(default = "default_one")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: default_endpoint(),
            model_id: String::new(),
            top_logprobs_k: default_top_k(),
            max_concurrency: default_one(),
            request_timeout_s: default_timeout(),
            api_key_env: None,
            max_attempts: default_attempts(),
            initial_backoff_ms: default_backoff(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency == 0 {
            return Err(BackendError::Config("max_concurrency must be >= 1".into()));
        }
        if self.top_logprobs_k == 0 {
            return Err(BackendError::Config("top_logprobs_k must be >= 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(BackendError::Config("max_attempts must be >= 1".into()));
        }
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return Err(BackendError::Config(
                "request_timeout_s must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Score every request with at most `backend.max_concurrency()` in flight.
/// Results come back in request order regardless of completion order.
pub fn score_all(
    backend: &dyn Backend,
    requests: &[ScoringRequest],
) -> Vec<Result<GenerationTrace, BackendError>> {
    bounded_map(requests.len(), backend.max_concurrency(), |i| {
        backend.score(&requests[i])
    })
}
