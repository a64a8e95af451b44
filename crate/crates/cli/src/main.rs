//! `regionzoom` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regionzoom::backends::PlantedTarget;
use regionzoom::harness::{generate_scene_with, generate_scenes, SceneSpec};
use regionzoom::image::{load_rgb, materialize};
use regionzoom::search::SelectionSet;
use regionzoom::{
    node_bound, reassemble, run_benchmark, run_search, Backends, BenchConfig, Branching, Error, ReassemblyOptions,
    Region, RunConfig, Strategy, SyntheticScene,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "regionzoom", version, about = "Query-driven region search over very large images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search an image for the regions relevant to a question and reassemble them.
    Search(SearchArgs),
    /// Rebuild a canvas from a saved selection.
    Reassemble(ReassembleArgs),
    /// Run the oracle benchmark over generated scenes.
    Bench(BenchArgs),
    /// Print the search depth and node bound for an image size.
    Bound(BoundArgs),
    /// Write a synthetic scene and its target manifest.
    Scene(SceneArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Oracle,
    Remote,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    /// Target manifest for the oracle backend.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the selected regions as JSON.
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long, default_value = "global")]
    strategy: Strategy,
    /// Also write canvas provenance as JSON.
    #[arg(long)]
    provenance: Option<PathBuf>,
}

#[derive(Args)]
struct ReassembleArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    selection: PathBuf,
    #[arg(long, default_value = "global")]
    strategy: Strategy,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    provenance: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long, default_value_t = 4096)]
    side: u32,
    #[arg(long, default_value_t = 1)]
    targets: usize,
    /// Place each target inside its own top-level cell.
    #[arg(long)]
    distinct_cells: bool,
    #[arg(long, default_value = "adaptive")]
    branching: Branching,
    #[arg(long, default_value = "global")]
    strategy: Strategy,
    /// First scene seed; scenes use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON run configuration; bench defaults apply to unset fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Directory for one trace file per scene.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    long_side: u64,
    #[arg(long)]
    u_min: u64,
    #[arg(long, default_value_t = 6)]
    k_max: u64,
    #[arg(long)]
    s_max: Option<u64>,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4096)]
    side: u32,
    #[arg(long, default_value_t = 1)]
    targets: usize,
    #[arg(long)]
    distinct_cells: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> regionzoom::Result<()> {
    fs::write(path, data).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn read(path: &Path) -> regionzoom::Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn save_png(path: &Path, image: &regionzoom::image::RgbImage) -> regionzoom::Result<()> {
    write(path, regionzoom::image::encode_png(image)?)
}

/// Accepts either a scene manifest or a bare list of targets.
fn load_targets(path: &Path) -> regionzoom::Result<Vec<PlantedTarget>> {
    let text = read(path)?;
    if let Ok(scene) = serde_json::from_str::<SyntheticScene>(&text) {
        return Ok(scene.targets);
    }
    Ok(serde_json::from_str(&text)?)
}

fn load_config(path: Option<&Path>) -> regionzoom::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn search(a: SearchArgs) -> regionzoom::Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.remote = cfg.remote.with_env_overrides();
    let image = load_rgb(&a.image)?;
    let backends = match a.backend {
        BackendKind::Oracle => {
            let manifest = a
                .targets
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("the oracle backend needs --targets".into()))?;
            Backends::oracle(&load_targets(manifest)?, &cfg.oracle)
        }
        BackendKind::Remote => Backends::remote(&cfg.remote)?,
    };
    let (selection, trace) = run_search(&image, &a.question, &backends, &cfg.search)?;
    let u_min = cfg.search.resolve_u_min(image.width(), image.height());
    let canvas = reassemble(
        &image,
        &selection.regions(),
        &ReassemblyOptions {
            strategy: a.strategy,
            tile_side: u_min,
            ..ReassemblyOptions::default()
        },
    )?;
    save_png(&a.out, &canvas.image)?;
    if let Some(p) = &a.trace {
        write(p, trace.to_jsonl())?;
    }
    if let Some(p) = &a.selection {
        write(p, serde_json::to_string_pretty(&selection)?)?;
    }
    if let Some(p) = &a.provenance {
        write(p, canvas.provenance_json())?;
    }
    Ok(json!({
        "selected": selection.len(),
        "pops": trace.pops,
        "termination": trace.termination,
        "u_min": u_min,
        "canvas": [canvas.image.width(), canvas.image.height()],
    }))
}

fn reassemble_cmd(a: ReassembleArgs) -> regionzoom::Result<serde_json::Value> {
    let image = load_rgb(&a.image)?;
    let selection: SelectionSet = serde_json::from_str(&read(&a.selection)?)?;
    if (selection.image_width, selection.image_height) != image.dimensions() {
        return Err(Error::InvalidConfig(format!(
            "selection was made on a {}x{} image, got {}x{}",
            selection.image_width,
            selection.image_height,
            image.width(),
            image.height()
        )));
    }
    // regions are rebuilt from their paths so edited boxes cannot drift
    let regions = selection
        .patches
        .iter()
        .map(|p| Region::from_path(image.width(), image.height(), &p.region.path))
        .collect::<regionzoom::Result<Vec<_>>>()?;
    let tile_side = regionzoom::min_search_unit(Default::default(), image.width(), image.height());
    let canvas = reassemble(
        &image,
        &regions,
        &ReassemblyOptions {
            strategy: a.strategy,
            tile_side,
            ..ReassemblyOptions::default()
        },
    )?;
    save_png(&a.out, &canvas.image)?;
    if let Some(p) = &a.provenance {
        write(p, canvas.provenance_json())?;
    }
    Ok(json!({
        "patches": regions.len(),
        "canvas": [canvas.image.width(), canvas.image.height()],
    }))
}

fn bench(a: BenchArgs) -> regionzoom::Result<serde_json::Value> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<BenchConfig>(&read(p)?)?,
        None => BenchConfig::default(),
    };
    cfg.search.branching = a.branching;
    cfg.strategy = a.strategy;
    let scenes = generate_scenes(a.seed, a.scenes, a.side, a.targets, a.distinct_cells)?;
    let (report, traces) = run_benchmark(&scenes, &cfg)?;
    write(&a.report, serde_json::to_string_pretty(&report)?)?;
    if let Some(dir) = &a.trace_dir {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        for (scene, trace) in scenes.iter().zip(&traces) {
            write(&dir.join(format!("scene-{}.jsonl", scene.seed)), trace.to_jsonl())?;
        }
    }
    Ok(serde_json::to_value(&report.aggregates)?)
}

fn bound(a: BoundArgs) -> regionzoom::Result<String> {
    if a.u_min == 0 || a.long_side == 0 || !(1..=9).contains(&a.k_max) {
        return Err(Error::InvalidConfig(
            "long side and u_min must be positive and k_max in [1, 9]".into(),
        ));
    }
    let (d, b) = node_bound(a.long_side, a.u_min, a.k_max, a.s_max.unwrap_or(u64::MAX));
    Ok(format!("D={d} bound={b}"))
}

fn scene(a: SceneArgs) -> regionzoom::Result<serde_json::Value> {
    let scene = generate_scene_with(&SceneSpec {
        seed: a.seed,
        side: a.side,
        n_targets: a.targets,
        distinct_root_cells: a.distinct_cells,
    })?;
    save_png(&a.out, &materialize(&scene))?;
    write(&a.manifest, serde_json::to_string_pretty(&scene)?)?;
    Ok(json!({ "question": scene.question(), "targets": scene.targets.len() }))
}

fn run(cli: Cli) -> regionzoom::Result<String> {
    Ok(match cli.command {
        Command::Search(a) => search(a)?.to_string(),
        Command::Reassemble(a) => reassemble_cmd(a)?.to_string(),
        Command::Bench(a) => bench(a)?.to_string(),
        Command::Bound(a) => bound(a)?,
        Command::Scene(a) => scene(a)?.to_string(),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
            ExitCode::FAILURE
        }
    }
}
