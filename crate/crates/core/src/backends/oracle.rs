//! Deterministic overlap-based scorers driven by planted ground truth.
//!
//! The relevance oracle embeds text as the unit vector `(1, 0)` and a tile
//! as `(a, sqrt(1 - a^2))`, where `a` is the tile's best overlap fraction with
//! any planted target, so the cosine between them is exactly `a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvidenceBackend, RelevanceBackend};
use crate::error::{Error, Result};
use crate::grid::{Bbox, Tile};
use crate::image::ImageRef;
use crate::scoring::PrunedView;

/// Ground-truth object in a synthetic scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTarget {
    pub bbox: Bbox,
    pub label: String,
    pub color: [u8; 3],
}

/// Largest fraction of `tile` covered by any one target, in `[0, 1]`.
pub fn oracle_relevance(tile: &Bbox, targets: &[Bbox]) -> f64 {
    let area = tile.area();
    if area == 0 {
        return 0.0;
    }
    targets
        .iter()
        .map(|t| tile.overlap_area(t) as f64 / area as f64)
        .fold(0.0, f64::max)
}

/// Evidence for one target given the source coverage of a view and the
/// scale at which the evidence model sees it.
///
/// Returns 1.0 when the target is fully covered and its short side renders
/// at `min_resolved_px` or more; otherwise half the covered fraction.
/// `coverage` rectangles must be pairwise disjoint.
pub fn oracle_evidence(coverage: &[Bbox], scale: f64, target: &Bbox, min_resolved_px: f64) -> f64 {
    let area = target.area();
    if area == 0 {
        return 0.0;
    }
    let covered: u64 = coverage.iter().map(|c| c.overlap_area(target)).sum();
    let short = target.width().min(target.height()) as f64;
    if covered >= area && short * scale >= min_resolved_px {
        1.0
    } else {
        0.5 * covered as f64 / area as f64
    }
}

/// Targets whose label appears as a whole token in `question`.
pub fn named_targets<'a>(question: &str, targets: &'a [PlantedTarget]) -> Result<Vec<&'a PlantedTarget>> {
    let tokens: Vec<&str> = question
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .filter(|t| !t.is_empty())
        .collect();
    let named: Vec<_> = targets
        .iter()
        .filter(|t| tokens.contains(&t.label.as_str()))
        .collect();
    if named.is_empty() {
        return Err(Error::UnknownLabel(question.to_owned()));
    }
    Ok(named)
}

fn fnv1a(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn bbox_words(b: &Bbox) -> [u64; 4] {
    [b.x0 as u64, b.y0 as u64, b.x1 as u64, b.y1 as u64]
}

/// Overlap relevance with optional seeded additive noise `~ U(0, noise)`.
#[derive(Debug, Clone)]
pub struct OracleRelevance {
    targets: Vec<Bbox>,
    noise: f64,
    seed: u64,
    identity: String,
}

impl OracleRelevance {
    pub fn new(targets: &[PlantedTarget], noise: f64, seed: u64) -> Self {
        let targets: Vec<Bbox> = targets.iter().map(|t| t.bbox).collect();
        let digest = fnv1a(
            targets
                .iter()
                .flat_map(bbox_words)
                .chain([seed, noise.to_bits()]),
        );
        OracleRelevance {
            targets,
            noise,
            seed,
            identity: format!("oracle-relevance:{digest:016x}"),
        }
    }

    /// Relevance of one tile, including its noise draw.
    pub fn similarity(&self, tile: &Bbox) -> f64 {
        let base = oracle_relevance(tile, &self.targets);
        if self.noise <= 0.0 {
            return base;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(
            bbox_words(tile).into_iter().chain([self.seed]),
        ));
        (base + rng.random::<f64>() * self.noise).clamp(0.0, 1.0)
    }
}

impl RelevanceBackend for OracleRelevance {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn embed_text(&self, _text: &str) -> Result<Vec<f64>> {
        Ok(vec![1.0, 0.0])
    }

    fn embed_tile(&self, tile: &Tile, _image: &dyn ImageRef) -> Result<Vec<f64>> {
        let a = self.similarity(&tile.bbox);
        Ok(vec![a, (1.0 - a * a).max(0.0).sqrt()])
    }
}

/// Evidence oracle that sees each view resized so its long side equals
/// `input_side`, like a model with a fixed input resolution.
#[derive(Debug, Clone)]
pub struct OracleEvidence {
    targets: Vec<PlantedTarget>,
    pub input_side: u32,
    pub min_resolved_px: f64,
    identity: String,
}

pub const DEFAULT_INPUT_SIDE: u32 = 448;
pub const DEFAULT_MIN_RESOLVED_PX: f64 = 16.0;

/// Oracle tuning shared by the CLI config and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Upper bound of the additive relevance noise.
    pub noise: f64,
    pub seed: u64,
    pub input_side: u32,
    pub min_resolved_px: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            noise: 0.0,
            seed: 0,
            input_side: DEFAULT_INPUT_SIDE,
            min_resolved_px: DEFAULT_MIN_RESOLVED_PX,
        }
    }
}

impl OracleEvidence {
    pub fn new(targets: Vec<PlantedTarget>) -> Self {
        Self::with_resolution(targets, DEFAULT_INPUT_SIDE, DEFAULT_MIN_RESOLVED_PX)
    }

    pub fn with_resolution(targets: Vec<PlantedTarget>, input_side: u32, min_resolved_px: f64) -> Self {
        let digest = fnv1a(
            targets
                .iter()
                .flat_map(|t| bbox_words(&t.bbox))
                .chain([input_side as u64, min_resolved_px.to_bits()]),
        );
        OracleEvidence {
            targets,
            input_side,
            min_resolved_px,
            identity: format!("oracle-evidence:{digest:016x}"),
        }
    }

    pub fn view_scale(&self, view: &PrunedView) -> f64 {
        let long = view.width().max(view.height()).max(1);
        self.input_side as f64 / long as f64
    }
}

impl EvidenceBackend for OracleEvidence {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn p_yes(&self, view: &PrunedView, _image: &dyn ImageRef, question: &str) -> Result<f64> {
        let named = named_targets(question, &self.targets)?;
        let coverage = view.coverage();
        let scale = self.view_scale(view);
        Ok(named
            .iter()
            .map(|t| oracle_evidence(&coverage, scale, &t.bbox, self.min_resolved_px))
            .fold(0.0, f64::max))
    }
}
