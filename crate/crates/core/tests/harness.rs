//! Benchmark-runner behaviour on generated scenes.

use regionzoom::backends::PlantedTarget;
use regionzoom::harness::{generate_scenes, Aggregates};
use regionzoom::*;

fn with_branching(branching: Branching) -> BenchConfig {
    let mut cfg = BenchConfig::default();
    cfg.search.branching = branching;
    cfg
}

#[test]
fn central_target_is_found() {
    let scene = SyntheticScene {
        seed: 0,
        side: 4096,
        targets: vec![PlantedTarget {
            bbox: Bbox::new(2030, 2020, 2070, 2060),
            label: "T0".into(),
            color: [230, 25, 75],
        }],
    };
    let (report, _) = run_benchmark(&[scene], &BenchConfig::default()).unwrap();
    assert_eq!(report.rows[0].recall, 1.0);
}

#[test]
fn top1_finds_at_most_one_of_two_dispersed_targets() {
    let scenes = generate_scenes(40, 10, 4096, 2, true).unwrap();
    let (report, _) = run_benchmark(&scenes, &with_branching(Branching::Fixed(1))).unwrap();
    assert!(report.rows.iter().all(|r| r.recall <= 0.5));
}

#[test]
fn adaptive_recall_at_least_top1() {
    let scenes = generate_scenes(60, 10, 4096, 2, true).unwrap();
    let (adaptive, _) = run_benchmark(&scenes, &with_branching(Branching::Adaptive)).unwrap();
    let (top1, _) = run_benchmark(&scenes, &with_branching(Branching::Fixed(1))).unwrap();
    assert!(adaptive.aggregates.mean_recall >= top1.aggregates.mean_recall);
}

#[test]
fn raising_the_budget_never_lowers_recall() {
    let scenes = generate_scenes(80, 12, 4096, 2, false).unwrap();
    let mut last = 0.0;
    for s_max in [1, 3, 8, 20, 60] {
        let mut cfg = BenchConfig::default();
        cfg.search.max_steps = s_max;
        let (report, _) = run_benchmark(&scenes, &cfg).unwrap();
        assert!(report.aggregates.mean_recall >= last, "S_max={s_max}");
        last = report.aggregates.mean_recall;
    }
}

#[test]
fn report_aggregates_are_recomputable() {
    let scenes = generate_scenes(0, 5, 2048, 1, false).unwrap();
    let (report, traces) = run_benchmark(&scenes, &BenchConfig::default()).unwrap();
    assert_eq!(traces.len(), 5);
    assert_eq!(report.schema_version, 1);
    assert_eq!(Aggregates::from_rows(&report.rows), report.aggregates);
    for (row, scene) in report.rows.iter().zip(&scenes) {
        assert_eq!(row.seed, scene.seed);
        assert!((0.0..=1.0).contains(&row.recall));
    }
    let text = serde_json::to_string(&report).unwrap();
    let back: BenchmarkReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
}

#[test]
fn empty_benchmark_is_rejected() {
    assert!(run_benchmark(&[], &BenchConfig::default()).is_err());
}
