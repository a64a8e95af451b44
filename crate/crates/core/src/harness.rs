//! Synthetic planted-target scenes and the benchmark runner.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backends, OracleOptions, PlantedTarget};
use crate::error::{Error, Result};
use crate::grid::{split3x3, Bbox, Region};
use crate::image::ImageRef;
use crate::reassembly::{reassemble, ReassemblyOptions, Strategy};
use crate::search::{run_search, Branching, SearchConfig, SearchTrace, Termination};

pub const MIN_SCENE_SIDE: u32 = 243;
pub const MIN_TARGET_SIDE: u32 = 8;
pub const MAX_TARGET_SIDE: u32 = 64;
const PLACEMENT_ATTEMPTS: usize = 10_000;

const TARGET_COLORS: [[u8; 3]; 6] = [
    [230, 25, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
];

const GROUND: [[u8; 3]; 4] = [[96, 110, 72], [118, 104, 80], [84, 96, 88], [132, 124, 100]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub side: u32,
    pub n_targets: usize,
    /// Put every target wholly inside its own top-level cell.
    pub distinct_root_cells: bool,
}

/// A square procedural scene with planted targets on a textured ground.
///
/// Pixels are computed on access, so large scenes cost no memory until
/// rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub side: u32,
    pub targets: Vec<PlantedTarget>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SyntheticScene {
    /// Question naming every target, e.g. `"Where are T0 and T1?"`.
    pub fn question(&self) -> String {
        let labels: Vec<&str> = self.targets.iter().map(|t| t.label.as_str()).collect();
        match labels.as_slice() {
            [one] => format!("Where is {one}?"),
            _ => format!("Where are {}?", labels.join(" and ")),
        }
    }

    fn ground(&self, x: u32, y: u32) -> [u8; 3] {
        let field = mix(self.seed ^ mix(((x >> 6) as u64) << 32 | (y >> 6) as u64));
        let base = GROUND[(field & 3) as usize];
        let grain = mix(field ^ ((x as u64) << 32 | y as u64));
        let d = (grain & 15) as i16 - 8;
        base.map(|c| (c as i16 + d).clamp(0, 255) as u8)
    }
}

impl ImageRef for SyntheticScene {
    fn width(&self) -> u32 {
        self.side
    }

    fn height(&self) -> u32 {
        self.side
    }

    fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        for t in &self.targets {
            let b = t.bbox;
            if x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1 {
                return t.color;
            }
        }
        self.ground(x, y)
    }
}

/// Scene with `n_targets` non-overlapping targets placed anywhere.
pub fn generate_scene(seed: u64, side: u32, n_targets: usize) -> Result<SyntheticScene> {
    generate_scene_with(&SceneSpec {
        seed,
        side,
        n_targets,
        distinct_root_cells: false,
    })
}

pub fn generate_scene_with(spec: &SceneSpec) -> Result<SyntheticScene> {
    if spec.side < MIN_SCENE_SIDE {
        return Err(Error::SceneGeneration(format!(
            "side {} is below the minimum of {MIN_SCENE_SIDE}",
            spec.side
        )));
    }
    if spec.n_targets == 0 {
        return Err(Error::SceneGeneration("need at least one target".into()));
    }
    if spec.distinct_root_cells && spec.n_targets > 9 {
        return Err(Error::SceneGeneration(
            "at most nine targets fit in distinct top-level cells".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let roots = split3x3(&Region::root(spec.side, spec.side))?;
    let mut free_cells: Vec<usize> = (0..9).collect();
    let mut targets: Vec<PlantedTarget> = Vec::with_capacity(spec.n_targets);

    for idx in 0..spec.n_targets {
        let area = if spec.distinct_root_cells {
            let pick = rng.random_range(0..free_cells.len());
            roots[free_cells.swap_remove(pick)].bbox
        } else {
            Bbox::new(0, 0, spec.side, spec.side)
        };
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.random_range(MIN_TARGET_SIDE..=MAX_TARGET_SIDE);
            let h = rng.random_range(MIN_TARGET_SIDE..=MAX_TARGET_SIDE);
            if w > area.width() || h > area.height() {
                continue;
            }
            let x0 = rng.random_range(area.x0..=area.x1 - w);
            let y0 = rng.random_range(area.y0..=area.y1 - h);
            let bbox = Bbox::new(x0, y0, x0 + w, y0 + h);
            if targets.iter().all(|t| t.bbox.intersect(&bbox).is_none()) {
                placed = Some(bbox);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            Error::SceneGeneration(format!(
                "could not place target {idx} after {PLACEMENT_ATTEMPTS} attempts"
            ))
        })?;
        targets.push(PlantedTarget {
            bbox,
            label: format!("T{idx}"),
            color: TARGET_COLORS[idx % TARGET_COLORS.len()],
        });
    }
    Ok(SyntheticScene {
        seed: spec.seed,
        side: spec.side,
        targets,
    })
}

/// Fraction of `target` covered by the union of `regions`.
pub fn target_coverage(target: &Bbox, regions: &[Region]) -> f64 {
    let (w, h) = (target.width() as usize, target.height() as usize);
    if w == 0 || h == 0 {
        return 0.0;
    }
    let mut covered = vec![false; w * h];
    for r in regions {
        if let Some(i) = target.intersect(&r.bbox) {
            for y in i.y0..i.y1 {
                let row = (y - target.y0) as usize * w;
                covered[row + (i.x0 - target.x0) as usize..row + (i.x1 - target.x0) as usize].fill(true);
            }
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / (w * h) as f64
}

/// Fraction of targets at least `threshold` covered.
pub fn coverage_recall(targets: &[PlantedTarget], regions: &[Region], threshold: f64) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hit = targets
        .iter()
        .filter(|t| target_coverage(&t.bbox, regions) >= threshold)
        .count();
    hit as f64 / targets.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub search: SearchConfig,
    pub strategy: Strategy,
    pub oracle: OracleOptions,
    pub recall_threshold: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            search: SearchConfig {
                u_min: Some(224),
                max_steps: 60,
                ..SearchConfig::default()
            },
            strategy: Strategy::GlobalRelative,
            oracle: OracleOptions::default(),
            recall_threshold: 0.9,
        }
    }
}

/// Per-scene benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub seed: u64,
    pub side: u32,
    pub targets: usize,
    pub recall: f64,
    pub target_coverage: Vec<f64>,
    pub pops: u64,
    pub expansions: u64,
    pub selected: usize,
    pub termination: Termination,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub wall_ms: f64,
}

impl SceneRow {
    /// The row as JSON with the wall-clock time zeroed.
    pub fn deterministic_json(&self) -> String {
        let mut row = self.clone();
        row.wall_ms = 0.0;
        serde_json::to_string(&row).expect("row serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub scenes: usize,
    pub mean_recall: f64,
    pub median_recall: f64,
    pub mean_pops: f64,
    pub median_pops: f64,
    pub mean_wall_ms: f64,
    pub median_wall_ms: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl Aggregates {
    pub fn from_rows(rows: &[SceneRow]) -> Self {
        let recall: Vec<f64> = rows.iter().map(|r| r.recall).collect();
        let pops: Vec<f64> = rows.iter().map(|r| r.pops as f64).collect();
        let wall: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
        Aggregates {
            scenes: rows.len(),
            mean_recall: mean(&recall),
            median_recall: median(&recall),
            mean_pops: mean(&pops),
            median_pops: median(&pops),
            mean_wall_ms: mean(&wall),
            median_wall_ms: median(&wall),
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub branching: Branching,
    pub strategy: Strategy,
    pub config: BenchConfig,
    pub rows: Vec<SceneRow>,
    pub aggregates: Aggregates,
}

pub struct SceneOutcome {
    pub row: SceneRow,
    pub trace: SearchTrace,
}

/// Searches one scene with oracle scorers and reassembles the result.
pub fn run_scene(scene: &SyntheticScene, cfg: &BenchConfig) -> Result<SceneOutcome> {
    let start = Instant::now();
    let backends = Backends::oracle(&scene.targets, &cfg.oracle);
    let (selection, trace) = run_search(scene, &scene.question(), &backends, &cfg.search)?;
    let regions = selection.regions();
    let canvas = reassemble(
        scene,
        &regions,
        &ReassemblyOptions {
            strategy: cfg.strategy,
            tile_side: cfg.search.resolve_u_min(scene.side, scene.side),
            ..ReassemblyOptions::default()
        },
    )?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let target_coverage: Vec<f64> = scene
        .targets
        .iter()
        .map(|t| target_coverage(&t.bbox, &regions))
        .collect();
    Ok(SceneOutcome {
        row: SceneRow {
            seed: scene.seed,
            side: scene.side,
            targets: scene.targets.len(),
            recall: coverage_recall(&scene.targets, &regions, cfg.recall_threshold),
            target_coverage,
            pops: trace.pops,
            expansions: trace.expansions,
            selected: selection.len(),
            termination: trace.termination,
            canvas_width: canvas.image.width(),
            canvas_height: canvas.image.height(),
            wall_ms,
        },
        trace,
    })
}

/// Runs every scene on the rayon pool; rows come back in scene order.
pub fn run_benchmark(scenes: &[SyntheticScene], cfg: &BenchConfig) -> Result<(BenchmarkReport, Vec<SearchTrace>)> {
    if scenes.is_empty() {
        return Err(Error::InvalidConfig("benchmark needs at least one scene".into()));
    }
    cfg.search.validate()?;
    let outcomes: Vec<SceneOutcome> = scenes
        .par_iter()
        .map(|s| run_scene(s, cfg))
        .collect::<Result<_>>()?;
    let (rows, traces): (Vec<SceneRow>, Vec<SearchTrace>) =
        outcomes.into_iter().map(|o| (o.row, o.trace)).unzip();
    Ok((
        BenchmarkReport {
            schema_version: REPORT_SCHEMA_VERSION,
            branching: cfg.search.branching,
            strategy: cfg.strategy,
            config: cfg.clone(),
            aggregates: Aggregates::from_rows(&rows),
            rows,
        },
        traces,
    ))
}

/// Scenes for seeds `first_seed..first_seed + count`, generated in parallel.
pub fn generate_scenes(first_seed: u64, count: usize, side: u32, n_targets: usize, distinct_root_cells: bool) -> Result<Vec<SyntheticScene>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            generate_scene_with(&SceneSpec {
                seed: first_seed + i,
                side,
                n_targets,
                distinct_root_cells,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::materialize;

    #[test]
    fn scenes_are_deterministic() {
        let a = generate_scene(5, 1024, 2).unwrap();
        let b = generate_scene(5, 1024, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(materialize(&a).into_raw(), materialize(&b).into_raw());
        assert_ne!(a.targets, generate_scene(6, 1024, 2).unwrap().targets);
    }

    #[test]
    fn manifest_has_disjoint_targets() {
        let s = generate_scene(1, 2048, 3).unwrap();
        assert_eq!(s.targets.len(), 3);
        for (i, a) in s.targets.iter().enumerate() {
            let short = a.bbox.width().min(a.bbox.height());
            assert!((MIN_TARGET_SIDE..=MAX_TARGET_SIDE).contains(&short));
            for b in &s.targets[i + 1..] {
                assert!(a.bbox.intersect(&b.bbox).is_none());
            }
        }
    }

    #[test]
    fn small_target_area_fraction() {
        let s = generate_scene(3, 4096, 1).unwrap();
        let frac = s.targets[0].bbox.area() as f64 / (4096.0 * 4096.0);
        assert!(frac < 0.00025, "{frac}");
    }

    #[test]
    fn distinct_cells() {
        let s = generate_scene_with(&SceneSpec {
            seed: 9,
            side: 729,
            n_targets: 9,
            distinct_root_cells: true,
        })
        .unwrap();
        let roots = split3x3(&Region::root(729, 729)).unwrap();
        let mut cells: Vec<usize> = s
            .targets
            .iter()
            .map(|t| roots.iter().position(|r| r.bbox.contains(&t.bbox)).unwrap())
            .collect();
        cells.sort_unstable();
        assert_eq!(cells, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn generation_errors() {
        assert!(generate_scene(0, 100, 1).is_err());
        assert!(generate_scene(0, 1024, 0).is_err());
        // far more targets than fit
        assert!(matches!(generate_scene(0, 243, 400), Err(Error::SceneGeneration(_))));
    }

    #[test]
    fn coverage_of_union() {
        let t = Bbox::new(10, 10, 20, 20);
        let left = Region {
            bbox: Bbox::new(0, 0, 15, 30),
            depth: 1,
            path: vec![0],
        };
        let right = Region {
            bbox: Bbox::new(15, 0, 30, 15),
            depth: 1,
            path: vec![1],
        };
        assert!((target_coverage(&t, std::slice::from_ref(&left)) - 0.5).abs() < 1e-12);
        assert!((target_coverage(&t, &[left, right]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn aggregates_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[]), 0.0);
    }
}
