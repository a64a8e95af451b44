use std::path::Path;
use std::process::{Command, Output};

fn regionzoom(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regionzoom"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bound_prints_depth_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = regionzoom(&["bound", "--long-side", "20000", "--u-min", "224"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "D=5 bound=1555");
    let o = regionzoom(&["bound", "--long-side", "4096", "--u-min", "224", "--s-max", "20"], dir.path());
    assert_eq!(stdout(&o).trim(), "D=3 bound=20");
}

#[test]
fn search_writes_canvas_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = regionzoom(
        &["scene", "--seed", "2", "--side", "1024", "--targets", "1", "--out", "scene.png", "--manifest", "scene.json"],
        p,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(p.join("cfg.json"), r#"{"u_min": 112, "s_max": 30}"#).unwrap();
    let o = regionzoom(
        &[
            "search", "--image", "scene.png", "--question", "Where is T0?", "--config", "cfg.json",
            "--backend", "oracle", "--targets", "scene.json", "--out", "canvas.png", "--trace", "trace.jsonl",
            "--selection", "sel.json",
        ],
        p,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["u_min"], 112);
    assert!(summary["pops"].as_u64().unwrap() <= 30);
    let canvas = std::fs::read(p.join("canvas.png")).unwrap();
    assert_eq!(&canvas[1..4], b"PNG");
    let trace = std::fs::read_to_string(p.join("trace.jsonl")).unwrap();
    assert!(trace.lines().next().unwrap().contains("\"event\":\"init\""));

    for strategy in ["global", "relative", "sequential"] {
        let o = regionzoom(
            &["reassemble", "--image", "scene.png", "--selection", "sel.json", "--strategy", strategy, "--out", "re.png"],
            p,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_image_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = regionzoom(&["search", "--question", "q", "--out", "c.png"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn runtime_errors_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = regionzoom(
        &["search", "--image", "absent.png", "--question", "q", "--out", "c.png", "--targets", "t.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "io");
    assert!(err["error"].as_str().unwrap().contains("absent.png"));
}

#[test]
fn bench_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let report = format!("{name}.json");
        let traces = format!("{name}-traces");
        let o = regionzoom(
            &[
                "bench", "--scenes", "4", "--side", "2048", "--targets", "2", "--branching", "top2",
                "--strategy", "global", "--seed", "7", "--report", &report, "--trace-dir", &traces,
            ],
            p,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join(&report)).unwrap()).unwrap();
        for row in v["rows"].as_array_mut().unwrap() {
            row["wall_ms"] = 0.into();
        }
        let rows = serde_json::to_string(&v["rows"]).unwrap();
        let traces: Vec<Vec<u8>> = (7..11)
            .map(|s| std::fs::read(p.join(&traces).join(format!("scene-{s}.jsonl"))).unwrap())
            .collect();
        runs.push((rows, traces));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn bad_branching_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = regionzoom(&["bench", "--branching", "top12", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
