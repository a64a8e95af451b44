//! JSON-over-HTTP clients for a remote embedding scorer and evidence model.
//!
//! Wire format:
//! - `POST {relevance_url}/embed_text` `{"text": ...}` -> `{"embedding": [...]}`
//! - `POST {relevance_url}/embed_image` `{"image_b64": ...}` -> `{"embedding": [...]}`
//! - `POST {evidence_url}/evidence` `{"image_b64": ..., "question": ...}` -> `{"p_yes": ...}`
//!
//! Images travel as base64-encoded PNG.

use std::time::Duration;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{EvidenceBackend, RelevanceBackend};
use crate::error::{Error, Result};
use crate::grid::Tile;
use crate::image::{encode_png, ImageRef};
use crate::scoring::PrunedView;

/// Environment variable overriding [`RemoteConfig::relevance_url`].
pub const RELEVANCE_URL_ENV: &str = "REGIONZOOM_RELEVANCE_URL";
/// Environment variable overriding [`RemoteConfig::evidence_url`].
pub const EVIDENCE_URL_ENV: &str = "REGIONZOOM_EVIDENCE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub relevance_url: Option<String>,
    pub evidence_url: Option<String>,
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    pub max_request_bytes: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            relevance_url: None,
            evidence_url: None,
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 200,
            max_request_bytes: 32 << 20,
        }
    }
}

impl RemoteConfig {
    /// Applies endpoint overrides from the process environment.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var(RELEVANCE_URL_ENV) {
            self.relevance_url = Some(url);
        }
        if let Ok(url) = std::env::var(EVIDENCE_URL_ENV) {
            self.evidence_url = Some(url);
        }
        self
    }
}

#[derive(Debug, Clone)]
struct JsonClient {
    agent: Agent,
    base: String,
    retries: u32,
    backoff: Duration,
    max_request_bytes: usize,
    identity: String,
}

impl JsonClient {
    fn new(base: &str, cfg: &RemoteConfig, kind: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let base = base.trim_end_matches('/').to_owned();
        JsonClient {
            agent,
            identity: format!("remote-{kind}:{base}"),
            base,
            retries: cfg.retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            max_request_bytes: cfg.max_request_bytes,
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R> {
        let payload = serde_json::to_vec(body)?;
        if payload.len() > self.max_request_bytes {
            return Err(Error::backend(
                &self.identity,
                format!(
                    "request of {} bytes exceeds limit of {}",
                    payload.len(),
                    self.max_request_bytes
                ),
            ));
        }
        let url = format!("{}{}", self.base, route);
        let mut delay = self.backoff;
        let mut last_err = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let resp = self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(&payload[..]);
            match resp {
                Ok(mut resp) if resp.status().is_success() => {
                    return resp.body_mut().read_json::<R>().map_err(|e| {
                        Error::backend(&self.identity, format!("malformed response from {url}: {e}"))
                    });
                }
                Ok(resp) => last_err = format!("{url} returned HTTP {}", resp.status()),
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(Error::backend(
            &self.identity,
            format!("{last_err} (after {} attempts)", self.retries + 1),
        ))
    }
}

fn png_b64(image: &image::RgbImage) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(encode_png(image)?))
}

#[derive(Serialize)]
struct EmbedTextRequest<'a> {
    text: &'a str,
}

#[derive(Serialize)]
struct EmbedImageRequest {
    image_b64: String,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

#[derive(Serialize)]
struct EvidenceRequest<'a> {
    image_b64: String,
    question: &'a str,
}

#[derive(Deserialize)]
struct EvidenceResponse {
    p_yes: f64,
}

/// Embedding scorer served over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteRelevance {
    client: JsonClient,
}

impl RemoteRelevance {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        let url = cfg
            .relevance_url
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("remote relevance_url is not set".into()))?;
        Ok(RemoteRelevance {
            client: JsonClient::new(url, cfg, "relevance"),
        })
    }

    fn check(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::backend(
                &self.client.identity,
                "malformed response: embedding is empty or non-finite",
            ));
        }
        Ok(v)
    }
}

impl RelevanceBackend for RemoteRelevance {
    fn identity(&self) -> &str {
        &self.client.identity
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let r: EmbeddingResponse = self.client.post("/embed_text", &EmbedTextRequest { text })?;
        self.check(r.embedding)
    }

    fn embed_tile(&self, tile: &Tile, image: &dyn ImageRef) -> Result<Vec<f64>> {
        let image_b64 = png_b64(&tile.render(image))?;
        let r: EmbeddingResponse = self
            .client
            .post("/embed_image", &EmbedImageRequest { image_b64 })?;
        self.check(r.embedding)
    }
}

/// Yes-probability evidence model served over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteEvidence {
    client: JsonClient,
}

impl RemoteEvidence {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        let url = cfg
            .evidence_url
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("remote evidence_url is not set".into()))?;
        Ok(RemoteEvidence {
            client: JsonClient::new(url, cfg, "evidence"),
        })
    }
}

impl EvidenceBackend for RemoteEvidence {
    fn identity(&self) -> &str {
        &self.client.identity
    }

    fn p_yes(&self, view: &PrunedView, image: &dyn ImageRef, question: &str) -> Result<f64> {
        let image_b64 = png_b64(&view.render(image))?;
        let r: EvidenceResponse = self
            .client
            .post("/evidence", &EvidenceRequest { image_b64, question })?;
        if !(0.0..=1.0).contains(&r.p_yes) {
            return Err(Error::backend(
                &self.client.identity,
                format!("malformed response: p_yes {} outside [0, 1]", r.p_yes),
            ));
        }
        Ok(r.p_yes)
    }
}
