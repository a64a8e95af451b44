//! Query-driven hierarchical region search for ultra-high-resolution images.
//!
//! A search walks a 3x3 split tree over the image best-first, scoring each
//! node with a question-tile relevance cue and an evidence cue from a
//! pluggable answering model, and commits the regions that are small enough
//! or already sufficient. The committed regions are then reassembled into a
//! compact canvas that keeps each one in its original coarse position.
//!
//! ```no_run
//! use regionzoom::{generate_scene, run_search, reassemble, Backends, ReassemblyOptions, SearchConfig};
//!
//! let scene = generate_scene(0, 4096, 1)?;
//! let backends = Backends::oracle(&scene.targets, &Default::default());
//! let (selection, trace) = run_search(&scene, &scene.question(), &backends, &SearchConfig::default())?;
//! let canvas = reassemble(&scene, &selection.regions(), &ReassemblyOptions::default())?;
//! println!("{} pops, canvas {:?}", trace.pops, canvas.image.dimensions());
//! # Ok::<(), regionzoom::Error>(())
//! ```

pub mod backends;
pub mod config;
mod error;
pub mod grid;
pub mod harness;
pub mod image;
pub mod reassembly;
pub mod scoring;
pub mod search;

pub use backends::{Backends, EmbeddingCache, EvidenceBackend, OracleOptions, PlantedTarget, RelevanceBackend};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::{min_search_unit, split3x3, tile_region, BackboneClass, Bbox, Region, Tile};
pub use harness::{generate_scene, run_benchmark, BenchConfig, BenchmarkReport, SyntheticScene};
pub use image::{ImageRef, CANONICAL_GRAY};
pub use reassembly::{reassemble, Canvas, ReassemblyOptions, Strategy, UnmarkedFill};
pub use scoring::{FusionParams, NormalizationMode, ScoreBundle};
pub use search::{node_bound, run_search, Branching, SearchConfig, SearchTrace, SelectionSet, StopReason};
