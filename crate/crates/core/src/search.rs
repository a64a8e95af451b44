//! Best-first adaptive multi-branch zoom search.
//!
//! The nine top-level cells are scored and either committed or pushed onto a
//! max-priority frontier keyed by `s_hat`. Each pop either commits the node
//! (leaf size, depth cap, or sufficient evidence) or splits it 3x3, scores
//! the children, and pushes the ones that clear the keep threshold.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::grid::{min_search_unit, split3x3, BackboneClass, Bbox, Region};
use crate::image::ImageRef;
use crate::scoring::{FusionParams, ScoreBundle, Scorer};

/// How many children an expansion keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branching {
    /// Every child with `s_hat >= gamma`, at least one, at most `K_max`.
    #[default]
    Adaptive,
    /// Exactly the `k` best children, ignoring the threshold.
    Fixed(u32),
}

impl fmt::Display for Branching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branching::Adaptive => f.write_str("adaptive"),
            Branching::Fixed(k) => write!(f, "top{k}"),
        }
    }
}

impl FromStr for Branching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(Branching::Adaptive);
        }
        s.strip_prefix("top")
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|k| (1..=9).contains(k))
            .map(Branching::Fixed)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown branching `{s}`")))
    }
}

impl Serialize for Branching {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Branching {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Leaf size; picked from `backbone` and the image size when unset.
    pub u_min: Option<u32>,
    pub backbone: BackboneClass,
    #[serde(rename = "d_max")]
    pub max_depth: u32,
    /// Pop budget; `u64::MAX` means unbounded.
    #[serde(rename = "s_max")]
    pub max_steps: u64,
    #[serde(rename = "k_max")]
    pub max_children: u32,
    #[serde(rename = "gamma")]
    pub keep_threshold: f64,
    pub tau0: f64,
    #[serde(rename = "delta_tau")]
    pub tau_decay: f64,
    pub fusion: FusionParams,
    pub branching: Branching,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            u_min: None,
            backbone: BackboneClass::Other,
            max_depth: 50,
            max_steps: 60,
            max_children: 6,
            keep_threshold: 0.6,
            tau0: 1.0,
            tau_decay: 0.1,
            fusion: FusionParams::default(),
            branching: Branching::Adaptive,
        }
    }
}

impl SearchConfig {
    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(1..=9).contains(&self.max_children) {
            return bad(format!("k_max must be in [1, 9], got {}", self.max_children));
        }
        if !(self.keep_threshold > 0.0 && self.keep_threshold < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.keep_threshold));
        }
        // tau0 above 1 is accepted: it switches evidence stopping off.
        if !(self.tau0 > 0.0) {
            return bad(format!("tau0 must be positive, got {}", self.tau0));
        }
        if !(self.tau_decay >= 0.0) {
            return bad(format!("delta_tau must be non-negative, got {}", self.tau_decay));
        }
        if self.max_steps == 0 {
            return bad("s_max must be at least 1".into());
        }
        if self.max_depth == 0 {
            return bad("d_max must be at least 1".into());
        }
        if self.u_min == Some(0) {
            return bad("u_min must be at least 1".into());
        }
        if let Branching::Fixed(k) = self.branching {
            if !(1..=9).contains(&k) {
                return bad(format!("fixed branching k must be in [1, 9], got {k}"));
            }
        }
        self.fusion.validate()
    }

    pub fn resolve_u_min(&self, width: u32, height: u32) -> u32 {
        self.u_min
            .unwrap_or_else(|| min_search_unit(self.backbone, width, height))
    }
}

/// `tau0 - (d - 1) * delta_tau`, floored at zero.
pub fn evidence_threshold(depth: u32, tau0: f64, tau_decay: f64) -> f64 {
    (tau0 - (depth.saturating_sub(1)) as f64 * tau_decay).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LeafSize,
    DepthCap,
    Evidence,
    BudgetFlush,
    /// A side is below 3 px, so the 3x3 split is undefined.
    Indivisible,
}

/// First stopping criterion that holds, checked as leaf size, depth cap, evidence.
pub fn should_stop(region: &Region, bundle: &ScoreBundle, cfg: &SearchConfig, u_min: u32) -> Option<StopReason> {
    if region.max_side() <= u_min {
        Some(StopReason::LeafSize)
    } else if region.depth >= cfg.max_depth {
        Some(StopReason::DepthCap)
    } else if bundle.h >= evidence_threshold(region.depth, cfg.tau0, cfg.tau_decay) {
        Some(StopReason::Evidence)
    } else if !region.can_split() {
        Some(StopReason::Indivisible)
    } else {
        None
    }
}

/// Indices of the children to keep, best first.
///
/// `s_hat` ties go to the lower child index.
pub fn select_children(s_hat: &[f64], cfg: &SearchConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s_hat.len()).collect();
    order.sort_by(|&a, &b| s_hat[b].total_cmp(&s_hat[a]).then(a.cmp(&b)));
    match cfg.branching {
        Branching::Adaptive => {
            let mut keep: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| s_hat[i] >= cfg.keep_threshold)
                .collect();
            if keep.is_empty() {
                keep.extend(order.first());
            }
            keep.truncate(cfg.max_children as usize);
            keep
        }
        Branching::Fixed(k) => {
            order.truncate(k as usize);
            order
        }
    }
}

/// A scored node waiting on the frontier.
#[derive(Debug, Clone)]
pub struct FrontierNode {
    pub region: Region,
    pub bundle: ScoreBundle,
    pub seq: u64,
}

impl PartialEq for FrontierNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FrontierNode {}

impl PartialOrd for FrontierNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierNode {
    // Max-heap order: higher s_hat, then deeper, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bundle
            .s_hat
            .total_cmp(&other.bundle.s_hat)
            .then(self.region.depth.cmp(&other.region.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Compact record of a scored node for the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub path: Vec<u8>,
    pub bbox: Bbox,
    pub depth: u32,
    pub g: f64,
    pub h: f64,
    pub f: f64,
    pub s_hat: f64,
}

impl NodeRecord {
    fn new(region: &Region, b: &ScoreBundle) -> Self {
        NodeRecord {
            path: region.path.clone(),
            bbox: region.bbox,
            depth: region.depth,
            g: b.g,
            h: b.h,
            f: b.f,
            s_hat: b.s_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FrontierExhausted,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PopOutcome {
    Commit { reason: StopReason },
    Expand { children: Vec<NodeRecord>, kept: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Init {
        u_min: u32,
        roots: Vec<NodeRecord>,
        committed: Vec<(usize, StopReason)>,
        enqueued: Vec<usize>,
    },
    Pop {
        step: u64,
        node: NodeRecord,
        #[serde(flatten)]
        outcome: PopOutcome,
    },
    Finish {
        pops: u64,
        termination: Termination,
        flushed: Vec<NodeRecord>,
        selected: usize,
    },
}

/// Everything a search did, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    pub pops: u64,
    pub expansions: u64,
    pub termination: Termination,
}

impl SearchTrace {
    /// One JSON object per line: init, each pop, then finish.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<TraceEvent>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPatch {
    pub region: Region,
    pub bundle: ScoreBundle,
    pub reason: StopReason,
}

/// Committed regions in commit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSet {
    pub image_width: u32,
    pub image_height: u32,
    pub patches: Vec<SelectedPatch>,
}

impl SelectionSet {
    pub fn regions(&self) -> Vec<Region> {
        self.patches.iter().map(|p| p.region.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Result of expanding one node.
#[derive(Debug, Clone)]
pub struct Expansion {
    /// All nine children with normalized scores, in row-major order.
    pub children: Vec<(Region, ScoreBundle)>,
    /// Indices into `children` that were kept, best first.
    pub kept: Vec<usize>,
}

impl Expansion {
    pub fn kept_children(&self) -> impl Iterator<Item = &(Region, ScoreBundle)> {
        self.kept.iter().map(|&i| &self.children[i])
    }
}

/// Splits a node, scores its children at the next depth, and keeps a subset.
pub fn expand(node: &FrontierNode, scorer: &Scorer<'_>, cfg: &SearchConfig) -> Result<Expansion> {
    let regions = split3x3(&node.region)?;
    let bundles = scorer.score_siblings(&regions)?;
    let s_hat: Vec<f64> = bundles.iter().map(|b| b.s_hat).collect();
    let kept = select_children(&s_hat, cfg);
    Ok(Expansion {
        children: regions.into_iter().zip(bundles).collect(),
        kept,
    })
}

/// Runs the search and returns the committed regions with a full trace.
///
/// Deterministic for deterministic backends. Never returns an empty selection.
pub fn run_search(
    image: &dyn ImageRef,
    question: &str,
    backends: &Backends,
    cfg: &SearchConfig,
) -> Result<(SelectionSet, SearchTrace)> {
    cfg.validate()?;
    let (width, height) = (image.width(), image.height());
    if width < 3 || height < 3 {
        return Err(Error::ImageTooSmall { width, height });
    }
    let u_min = cfg.resolve_u_min(width, height);
    let scorer = Scorer::new(
        image,
        question,
        backends.relevance.as_ref(),
        backends.evidence.as_ref(),
        &backends.cache,
        u_min,
        cfg.fusion,
    )?;

    let mut selected = Vec::new();
    let mut events = Vec::new();
    let mut frontier = BinaryHeap::new();
    let mut seq = 0u64;

    let roots = split3x3(&Region::root(width, height))?;
    let root_scores = scorer.score_siblings(&roots)?;
    let considered: Vec<usize> = match cfg.branching {
        Branching::Adaptive => (0..roots.len()).collect(),
        Branching::Fixed(_) => {
            let s: Vec<f64> = root_scores.iter().map(|b| b.s_hat).collect();
            select_children(&s, cfg)
        }
    };
    let mut committed = Vec::new();
    let mut enqueued = Vec::new();
    for &i in &considered {
        let (region, bundle) = (&roots[i], &root_scores[i]);
        match should_stop(region, bundle, cfg, u_min) {
            Some(reason) => {
                committed.push((i, reason));
                selected.push(SelectedPatch {
                    region: region.clone(),
                    bundle: bundle.clone(),
                    reason,
                });
            }
            None => {
                enqueued.push(i);
                frontier.push(FrontierNode {
                    region: region.clone(),
                    bundle: bundle.clone(),
                    seq,
                });
                seq += 1;
            }
        }
    }
    events.push(TraceEvent::Init {
        u_min,
        roots: roots
            .iter()
            .zip(&root_scores)
            .map(|(r, b)| NodeRecord::new(r, b))
            .collect(),
        committed,
        enqueued,
    });

    let mut pops = 0u64;
    let mut expansions = 0u64;
    while pops < cfg.max_steps {
        let Some(node) = frontier.pop() else { break };
        pops += 1;
        let record = NodeRecord::new(&node.region, &node.bundle);
        if let Some(reason) = should_stop(&node.region, &node.bundle, cfg, u_min) {
            events.push(TraceEvent::Pop {
                step: pops,
                node: record,
                outcome: PopOutcome::Commit { reason },
            });
            selected.push(SelectedPatch {
                region: node.region,
                bundle: node.bundle,
                reason,
            });
            continue;
        }
        let expansion = expand(&node, &scorer, cfg)?;
        expansions += 1;
        events.push(TraceEvent::Pop {
            step: pops,
            node: record,
            outcome: PopOutcome::Expand {
                children: expansion
                    .children
                    .iter()
                    .map(|(r, b)| NodeRecord::new(r, b))
                    .collect(),
                kept: expansion.kept.clone(),
            },
        });
        for (region, bundle) in expansion.kept_children() {
            frontier.push(FrontierNode {
                region: region.clone(),
                bundle: bundle.clone(),
                seq,
            });
            seq += 1;
        }
    }

    let termination = if frontier.is_empty() {
        Termination::FrontierExhausted
    } else {
        Termination::BudgetExhausted
    };
    let mut flushed = Vec::new();
    if termination == Termination::BudgetExhausted {
        let mut remaining = frontier.into_sorted_vec();
        remaining.reverse();
        let mut take: Vec<FrontierNode> = remaining
            .iter()
            .filter(|n| n.bundle.s_hat >= cfg.keep_threshold)
            .take(cfg.max_children as usize)
            .cloned()
            .collect();
        if take.is_empty() && selected.is_empty() {
            take.extend(remaining.into_iter().next());
        }
        for node in take {
            flushed.push(NodeRecord::new(&node.region, &node.bundle));
            selected.push(SelectedPatch {
                region: node.region,
                bundle: node.bundle,
                reason: StopReason::BudgetFlush,
            });
        }
    }
    events.push(TraceEvent::Finish {
        pops,
        termination,
        flushed,
        selected: selected.len(),
    });
    debug_assert!(!selected.is_empty());

    Ok((
        SelectionSet {
            image_width: width,
            image_height: height,
            patches: selected,
        },
        SearchTrace {
            events,
            pops,
            expansions,
            termination,
        },
    ))
}

/// Depth needed to shrink `long_side` to `u_min`, and the node-count bound
/// `min(S_max, sum_{d < D} K_max^d)`.
pub fn node_bound(long_side: u64, u_min: u64, max_children: u64, max_steps: u64) -> (u32, u64) {
    assert!(u_min >= 1 && long_side >= u_min, "need long_side >= u_min >= 1");
    // smallest D with u_min * 3^D >= long_side, i.e. ceil(log3(long_side / u_min))
    let mut depth = 0u32;
    let mut reach = u_min as u128;
    while reach < long_side as u128 {
        reach *= 3;
        depth += 1;
    }
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(max_children as u128);
        if total >= max_steps as u128 {
            break;
        }
    }
    (depth, total.min(max_steps as u128) as u64)
}
