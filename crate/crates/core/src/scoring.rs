//! Two-cue patch scoring.
//!
//! A patch is cut into `u_min` tiles. Tile relevance is the cosine between
//! question and tile embeddings; the patch relevance `g` averages the better
//! half of the tiles. The evidence model then sees a pruned view made of the
//! surviving tiles and returns `h`. The two are blended with a weight that
//! shifts toward `h` as depth grows, and the blend `f` is squashed to `s_hat`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{EmbeddingCache, EvidenceBackend, RelevanceBackend};
use crate::error::{Error, Result};
use crate::grid::{lattice_shape, tile_bbox, tile_region, Bbox, Region};
use crate::image::{gray_image, ImageRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// `s_hat = sigmoid(f)`.
    #[default]
    PlainSigmoid,
    /// `f` is z-scored against its sibling set before the sigmoid.
    SiblingStandardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub bias: f64,
    pub prune_relevance: bool,
    pub prune_evidence: bool,
    pub normalization: NormalizationMode,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            bias: 0.3,
            prune_relevance: true,
            prune_evidence: true,
            normalization: NormalizationMode::PlainSigmoid,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.bias) {
            return Err(Error::InvalidConfig(format!(
                "fusion bias must be in [0, 1), got {}",
                self.bias
            )));
        }
        Ok(())
    }
}

/// Scores of one patch at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub g: f64,
    pub h: f64,
    pub f: f64,
    pub s_hat: f64,
    pub depth: u32,
    /// Row-major indices into the patch's tile lattice, ascending.
    pub retained_tiles: Vec<usize>,
}

/// Cosine similarity.
pub fn tile_relevance(query: &[f64], tile: &[f64]) -> Result<f64> {
    if query.len() != tile.len() {
        return Err(Error::DimensionMismatch {
            query: query.len(),
            tile: tile.len(),
        });
    }
    let dot: f64 = query.iter().zip(tile).map(|(a, b)| a * b).sum();
    let nq = query.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nt = tile.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nq == 0.0 || nt == 0.0 || !nq.is_finite() || !nt.is_finite() {
        return Err(Error::DegenerateEmbedding(
            "embedding has zero or non-finite norm".into(),
        ));
    }
    Ok((dot / (nq * nt)).clamp(-1.0, 1.0))
}

/// Picks the tiles that survive relevance pruning and averages their scores.
///
/// With pruning on, the top `ceil(n / 2)` scores are kept (ties broken by
/// lower index). Returns `(g, retained)` with `retained` ascending.
pub fn relevance_from_scores(scores: &[f64], prune: bool) -> (f64, Vec<usize>) {
    assert!(!scores.is_empty(), "a patch has at least one tile");
    let mut retained: Vec<usize> = (0..scores.len()).collect();
    if prune {
        retained.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        retained.truncate(scores.len().div_ceil(2));
        retained.sort_unstable();
    }
    let g = retained.iter().map(|&i| scores[i]).sum::<f64>() / retained.len() as f64;
    (g, retained)
}

/// Relevance `g` of a patch and the tiles it retains.
#[allow(clippy::too_many_arguments)]
pub fn patch_relevance(
    patch: &Region,
    image: &dyn ImageRef,
    query_embedding: &[f64],
    backend: &dyn RelevanceBackend,
    cache: &EmbeddingCache,
    u_min: u32,
    params: &FusionParams,
) -> Result<(f64, Vec<usize>)> {
    let tiles = tile_region(patch, u_min);
    let scores = tiles
        .iter()
        .map(|tile| {
            let emb = cache.get_or_compute(backend.identity(), tile.bbox, u_min, || {
                backend.embed_tile(tile, image)
            })?;
            tile_relevance(query_embedding, &emb)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(relevance_from_scores(&scores, params.prune_relevance))
}

/// The evidence model's input: a patch's tile lattice with discarded tiles
/// grayed out and lattice rows and columns holding no retained tile removed.
///
/// Kept tiles keep their true source extents, so a view that retains every
/// tile is pixel-identical to the patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedView {
    pub source: Bbox,
    pub u_min: u32,
    pub lattice: (u32, u32),
    pub kept_rows: Vec<u32>,
    pub kept_cols: Vec<u32>,
    retained: Vec<bool>,
}

impl PrunedView {
    pub fn new(source: Bbox, u_min: u32, retained_tiles: &[usize]) -> Self {
        assert!(!retained_tiles.is_empty(), "pruned view needs a retained tile");
        let (rows, cols) = lattice_shape(&source, u_min);
        let mut retained = vec![false; (rows * cols) as usize];
        for &i in retained_tiles {
            retained[i] = true;
        }
        let kept_rows = (0..rows)
            .filter(|&r| (0..cols).any(|c| retained[(r * cols + c) as usize]))
            .collect();
        let kept_cols = (0..cols)
            .filter(|&c| (0..rows).any(|r| retained[(r * cols + c) as usize]))
            .collect();
        PrunedView {
            source,
            u_min,
            lattice: (rows, cols),
            kept_rows,
            kept_cols,
            retained,
        }
    }

    /// View over the whole patch with nothing pruned.
    pub fn full(source: Bbox, u_min: u32) -> Self {
        let (rows, cols) = lattice_shape(&source, u_min);
        let all: Vec<usize> = (0..(rows * cols) as usize).collect();
        Self::new(source, u_min, &all)
    }

    pub fn is_retained(&self, row: u32, col: u32) -> bool {
        self.retained[(row * self.lattice.1 + col) as usize]
    }

    fn tile(&self, row: u32, col: u32) -> Bbox {
        tile_bbox(&self.source, self.u_min, row, col)
    }

    pub fn width(&self) -> u32 {
        self.kept_cols.iter().map(|&c| self.tile(0, c).width()).sum()
    }

    pub fn height(&self) -> u32 {
        self.kept_rows.iter().map(|&r| self.tile(r, 0).height()).sum()
    }

    /// Source rectangles of the retained tiles, pairwise disjoint.
    pub fn coverage(&self) -> Vec<Bbox> {
        let mut out = Vec::new();
        for &r in &self.kept_rows {
            for &c in &self.kept_cols {
                if self.is_retained(r, c) {
                    out.push(self.tile(r, c));
                }
            }
        }
        out
    }

    pub fn render(&self, image: &dyn ImageRef) -> image::RgbImage {
        let mut out = gray_image(self.width(), self.height());
        let mut y = 0;
        for &r in &self.kept_rows {
            let mut x = 0;
            let mut row_h = 0;
            for &c in &self.kept_cols {
                let bbox = self.tile(r, c);
                if self.is_retained(r, c) {
                    image::imageops::replace(&mut out, &image.crop(bbox), x as i64, y as i64);
                }
                x += bbox.width();
                row_h = bbox.height();
            }
            y += row_h;
        }
        out
    }
}

pub fn pruned_view(patch: &Region, retained_tiles: &[usize], u_min: u32) -> PrunedView {
    PrunedView::new(patch.bbox, u_min, retained_tiles)
}

/// Evidence `h` for a view, validated to lie in `[0, 1]`.
pub fn model_evidence(
    view: &PrunedView,
    image: &dyn ImageRef,
    question: &str,
    backend: &dyn EvidenceBackend,
) -> Result<f64> {
    let h = backend.p_yes(view, image, question)?;
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::backend(
            backend.identity(),
            format!("yes-probability {h} outside [0, 1]"),
        ));
    }
    Ok(h)
}

/// Weight on the evidence term at depth `d`: `(1 - b)(1 - 2^(1 - d)) + b`.
pub fn depth_weight(depth: u32, bias: f64) -> f64 {
    assert!(depth >= 1, "depth starts at 1");
    let decay = 0.5f64.powi((depth - 1).min(i32::MAX as u32) as i32);
    (1.0 - bias) * (1.0 - decay) + bias
}

pub fn fuse(g: f64, h: f64, depth: u32, params: &FusionParams) -> f64 {
    let w = depth_weight(depth, params.bias);
    (1.0 - w) * g + w * h
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Siblings whose spread falls below this are treated as all equal.
pub const MIN_SIBLING_STD: f64 = 1e-9;

/// Normalizes one raw score. In standardized mode `siblings` must contain `f`.
pub fn normalize(f: f64, siblings: Option<&[f64]>, mode: NormalizationMode) -> f64 {
    match (mode, siblings) {
        (NormalizationMode::PlainSigmoid, _) | (_, None) => sigmoid(f),
        (NormalizationMode::SiblingStandardized, Some(sib)) => {
            let n = sib.len() as f64;
            let mean = sib.iter().sum::<f64>() / n;
            let var = sib.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let z = if sd < MIN_SIBLING_STD { 0.0 } else { (f - mean) / sd };
            sigmoid(z)
        }
    }
}

/// Normalizes a full sibling set at once.
pub fn normalize_all(raw: &[f64], mode: NormalizationMode) -> Vec<f64> {
    raw.iter().map(|&f| normalize(f, Some(raw), mode)).collect()
}

/// Scores patches of one image for one question.
pub struct Scorer<'a> {
    image: &'a dyn ImageRef,
    question: &'a str,
    relevance: &'a dyn RelevanceBackend,
    evidence: &'a dyn EvidenceBackend,
    cache: &'a EmbeddingCache,
    u_min: u32,
    params: FusionParams,
    query: Vec<f64>,
    parallel: bool,
}

impl<'a> Scorer<'a> {
    pub fn new(
        image: &'a dyn ImageRef,
        question: &'a str,
        relevance: &'a dyn RelevanceBackend,
        evidence: &'a dyn EvidenceBackend,
        cache: &'a EmbeddingCache,
        u_min: u32,
        params: FusionParams,
    ) -> Result<Self> {
        let query = relevance.embed_text(question)?;
        let parallel = !(relevance.requires_serial_calls() || evidence.requires_serial_calls());
        Ok(Scorer {
            image,
            question,
            relevance,
            evidence,
            cache,
            u_min,
            params,
            query,
            parallel,
        })
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    /// Raw scores for one patch; `s_hat` is the plain sigmoid of `f`.
    pub fn score(&self, region: &Region) -> Result<ScoreBundle> {
        let depth = region.depth.max(1);
        let (g, retained_tiles) = patch_relevance(
            region,
            self.image,
            &self.query,
            self.relevance,
            self.cache,
            self.u_min,
            &self.params,
        )?;
        let view = if self.params.prune_evidence {
            pruned_view(region, &retained_tiles, self.u_min)
        } else {
            PrunedView::full(region.bbox, self.u_min)
        };
        let h = model_evidence(&view, self.image, self.question, self.evidence)?;
        let f = fuse(g, h, depth, &self.params);
        Ok(ScoreBundle {
            g,
            h,
            f,
            s_hat: sigmoid(f),
            depth,
            retained_tiles,
        })
    }

    /// Scores a sibling set and normalizes it under the configured mode.
    pub fn score_siblings(&self, regions: &[Region]) -> Result<Vec<ScoreBundle>> {
        let mut bundles: Vec<ScoreBundle> = if self.parallel {
            regions.par_iter().map(|r| self.score(r)).collect::<Result<_>>()?
        } else {
            regions.iter().map(|r| self.score(r)).collect::<Result<_>>()?
        };
        let raw: Vec<f64> = bundles.iter().map(|b| b.f).collect();
        for (b, s) in bundles.iter_mut().zip(normalize_all(&raw, self.params.normalization)) {
            b.s_hat = s;
        }
        Ok(bundles)
    }
}
