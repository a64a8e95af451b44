//! Pluggable scorers: a relevance model producing embeddings and an
//! evidence model producing a yes-probability for a rendered view.

mod cache;
pub mod oracle;
pub mod remote;

pub use cache::{CacheStats, EmbeddingCache};
pub use oracle::{OracleEvidence, OracleOptions, OracleRelevance, PlantedTarget};
pub use remote::{RemoteConfig, RemoteEvidence, RemoteRelevance};

use std::sync::Arc;

use crate::error::Result;
use crate::grid::Tile;
use crate::image::ImageRef;
use crate::scoring::PrunedView;

/// Encodes questions and tiles into a shared embedding space.
///
/// Must be deterministic per identity: the same input always yields the same
/// vector, since embeddings are cached under [`RelevanceBackend::identity`].
pub trait RelevanceBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
    fn embed_tile(&self, tile: &Tile, image: &dyn ImageRef) -> Result<Vec<f64>>;

    /// Set when the backend cannot take concurrent calls.
    fn requires_serial_calls(&self) -> bool {
        false
    }
}

/// Answers "can the relevant content be seen in this view" with a probability.
pub trait EvidenceBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn p_yes(&self, view: &PrunedView, image: &dyn ImageRef, question: &str) -> Result<f64>;

    fn requires_serial_calls(&self) -> bool {
        false
    }
}

/// The scorer pair used by a search, plus the shared tile-embedding cache.
#[derive(Clone)]
pub struct Backends {
    pub relevance: Arc<dyn RelevanceBackend>,
    pub evidence: Arc<dyn EvidenceBackend>,
    pub cache: Arc<EmbeddingCache>,
}

impl Backends {
    pub fn new(relevance: Arc<dyn RelevanceBackend>, evidence: Arc<dyn EvidenceBackend>) -> Self {
        Backends {
            relevance,
            evidence,
            cache: Arc::new(EmbeddingCache::new()),
        }
    }

    /// Oracle scorers for a planted-target scene.
    pub fn oracle(targets: &[PlantedTarget], opts: &oracle::OracleOptions) -> Self {
        Self::new(
            Arc::new(OracleRelevance::new(targets, opts.noise, opts.seed)),
            Arc::new(OracleEvidence::with_resolution(
                targets.to_vec(),
                opts.input_side,
                opts.min_resolved_px,
            )),
        )
    }

    pub fn remote(cfg: &RemoteConfig) -> Result<Self> {
        Ok(Self::new(
            Arc::new(RemoteRelevance::new(cfg)?),
            Arc::new(RemoteEvidence::new(cfg)?),
        ))
    }

    pub fn with_cache(mut self, cache: Arc<EmbeddingCache>) -> Self {
        self.cache = cache;
        self
    }
}
