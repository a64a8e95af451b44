//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Run with `cargo test -p regionzoom --test acceptance`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionzoom::harness::{generate_scenes, BenchConfig, SceneRow};
use regionzoom::reassembly::{assign_coarse, build_mask, compress_cells, compress_mask};
use regionzoom::scoring::{depth_weight, normalize_all};
use regionzoom::search::evidence_threshold;
use regionzoom::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

// 1. closed-form weights, thresholds and the minimum search unit table
fn formulas() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    for (d, want) in [(1, 0.3), (2, 0.65)] {
        let got = depth_weight(d, 0.3);
        if (got - want).abs() > 1e-12 {
            bad.push(format!("omega({d})={got}"));
        }
    }
    for d in 1..=12u32 {
        let want = (1.0 - 0.1 * (d as f64 - 1.0)).max(0.0);
        let got = evidence_threshold(d, 1.0, 0.1);
        if (got - want).abs() > 1e-12 {
            bad.push(format!("tau({d})={got}"));
        }
    }
    let rows = [
        (BackboneClass::Onevision, 5000, 3000, 448),
        (BackboneClass::Onevision, 3500, 2000, 112),
        (BackboneClass::Other, 6000, 1000, 336),
        (BackboneClass::Other, 2000, 2000, 224),
        (BackboneClass::Onevision, 4000, 10, 448),
        (BackboneClass::Onevision, 3999, 3999, 112),
        (BackboneClass::Other, 5096, 5096, 224),
        (BackboneClass::Other, 10, 5097, 336),
    ];
    for (b, w, h, want) in rows {
        let got = min_search_unit(b, w, h);
        if got != want {
            bad.push(format!("u_min({b:?},{w},{h})={got}"));
        }
    }
    let el = t.elapsed();
    check(
        bad.is_empty() && within(el, Duration::from_secs(1)),
        format!("mismatches={bad:?} time={el:.2?}"),
    )
}

// 2. complexity bound; the pop check reuses the recall runs
fn bound(searches: &[(&str, &BenchConfig, &[SceneRow])]) -> Outcome {
    let t = Instant::now();
    let (d, b) = node_bound(20000, 224, 6, u64::MAX);
    let formula_ok = d == 5 && b == 1555;
    let el = t.elapsed();
    let mut worst = Vec::new();
    let mut violations = 0;
    for (name, cfg, rows) in searches {
        let k = cfg.search.max_children as u64;
        let u = cfg.search.u_min.expect("bench config pins u_min") as u64;
        let mut max_pops = 0;
        for r in rows.iter() {
            let (_, limit) = node_bound(r.side as u64, u, k, cfg.search.max_steps);
            if r.pops > limit {
                violations += 1;
            }
            max_pops = max_pops.max(r.pops);
        }
        let (_, limit) = node_bound(4096, u, k, cfg.search.max_steps);
        worst.push(format!("{name}:{max_pops}/{limit}"));
    }
    check(
        formula_ok && violations == 0 && within(el, Duration::from_secs(1)),
        format!(
            "node_bound(20000,224,K=6)=(D={d}, {b}); pop violations={violations}; max pops/bound {}; time={el:.2?}",
            worst.join(" ")
        ),
    )
}

fn enumerate_leaves(x0: u32, w: u32, y0: u32, h: u32, u_min: u32, out: &mut BTreeSet<Bbox>) {
    if w.max(h) <= u_min {
        out.insert(Bbox::new(x0, y0, x0 + w, y0 + h));
        return;
    }
    let cuts = |s: u32, len: u32| [s, s + len / 3, s + 2 * len / 3, s + len];
    let (xs, ys) = (cuts(x0, w), cuts(y0, h));
    for r in 0..3 {
        for c in 0..3 {
            enumerate_leaves(xs[c], xs[c + 1] - xs[c], ys[r], ys[r + 1] - ys[r], u_min, out);
        }
    }
}

// 3. with nothing able to stop or prune it, the search visits every leaf
fn exhaustive() -> Outcome {
    let t = Instant::now();
    let u_choices = [27, 81, 100, 243, 300];
    let scenes = match generate_scenes(1000, 10, 729, 2, false) {
        Ok(s) => s,
        Err(e) => return check(false, e.to_string()),
    };
    let mut matched = 0;
    let mut runs = 0;
    for (i, scene) in scenes.iter().enumerate() {
        let u_min = u_choices[i % u_choices.len()];
        let mut expected = BTreeSet::new();
        enumerate_leaves(0, 729, 0, 729, u_min, &mut expected);
        for (branching, gamma) in [(Branching::Fixed(9), 0.999), (Branching::Adaptive, 0.01)] {
            let cfg = SearchConfig {
                u_min: Some(u_min),
                max_depth: 50,
                max_steps: u64::MAX,
                max_children: 9,
                keep_threshold: gamma,
                tau0: 2.0,
                tau_decay: 0.0,
                branching,
                ..SearchConfig::default()
            };
            let backends = Backends::oracle(&scene.targets, &Default::default());
            runs += 1;
            match run_search(scene, &scene.question(), &backends, &cfg) {
                Ok((sel, _)) => {
                    let got: BTreeSet<Bbox> = sel.patches.iter().map(|p| p.region.bbox).collect();
                    if got == expected && sel.len() == expected.len() {
                        matched += 1;
                    }
                }
                Err(e) => eprintln!("exhaustive search failed: {e}"),
            }
        }
    }
    let el = t.elapsed();
    check(
        matched == runs && within(el, Duration::from_secs(10)),
        format!("{matched}/{runs} selections equal the enumerated leaf set; time={el:.2?}"),
    )
}

fn bench_config(norm: NormalizationMode, branching: Branching) -> BenchConfig {
    let mut cfg = BenchConfig::default();
    cfg.search.fusion.normalization = norm;
    cfg.search.branching = branching;
    cfg
}

fn run(scenes: &[SyntheticScene], cfg: &BenchConfig) -> Result<(BenchmarkReport, Duration)> {
    let t = Instant::now();
    let (report, _) = run_benchmark(scenes, cfg)?;
    Ok((report, t.elapsed()))
}

fn max_wall(rows: &[SceneRow]) -> f64 {
    rows.iter().map(|r| r.wall_ms).fold(0.0, f64::max)
}

// 6. layout invariants of the global canvas over random selections
fn random_selection(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Vec<Region> {
    let mut leaves = split3x3(&Region::root(width, height)).unwrap().to_vec();
    for _ in 0..rng.random_range(0..12) {
        let i = rng.random_range(0..leaves.len());
        if leaves[i].depth < 4 && leaves[i].can_split() {
            let r = leaves.swap_remove(i);
            leaves.extend(split3x3(&r).unwrap());
        }
    }
    let mut picked: Vec<Region> = leaves.into_iter().filter(|_| rng.random_bool(0.4)).collect();
    if picked.is_empty() {
        picked.push(Region::from_path(width, height, &[rng.random_range(0..9)]).unwrap());
    }
    picked
}

fn textured(rng: &mut ChaCha8Rng, width: u32, height: u32) -> ::image::RgbImage {
    // no pixel equals the fill gray
    let seed: u8 = rng.random();
    ::image::RgbImage::from_fn(width, height, |x, y| {
        let v = ((x * 7 + y * 13) as u8).wrapping_add(seed) % 100;
        ::image::Rgb([v, 200 - v, v / 2])
    })
}

fn reassembly_violations(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut errs = Vec::new();
    let (w, h) = (rng.random_range(81..700), rng.random_range(81..700));
    let img = textured(rng, w, h);
    let sel = random_selection(rng, w, h);
    let canvas = match reassemble(&img, &sel, &ReassemblyOptions::default()) {
        Ok(c) => c,
        Err(e) => return vec![format!("reassemble failed: {e}")],
    };
    let (hc, wc) = canvas.cell;
    if canvas.image.dimensions() != (3 * wc, 3 * hc) {
        errs.push(format!("canvas {:?} for cell {:?}", canvas.image.dimensions(), canvas.cell));
    }

    let groups = assign_coarse(&sel);
    for (i, row) in groups.iter().enumerate() {
        for (j, patches) in row.iter().enumerate() {
            if patches.is_empty() {
                continue;
            }
            let mask = build_mask(&[(i * 3 + j) as u8], patches).unwrap();
            let Some(compact) = compress_mask(&mask) else {
                errs.push("non-empty group compressed to nothing".into());
                continue;
            };
            let rows = compact.to_rows();
            if rows.iter().any(|r| !r.iter().any(|&c| c)) {
                errs.push("all-zero row after compaction".into());
            }
            for c in 0..compact.cols.len() {
                if !rows.iter().any(|r| r[c]) {
                    errs.push("all-zero column after compaction".into());
                }
            }
            if compress_cells(&rows).map(|m| m.to_rows()) != Some(rows.clone()) {
                errs.push("compress_mask is not idempotent".into());
            }
        }
    }

    // every patch lands in the slot of its own coarse cell
    let mut located = Vec::new();
    for r in &sel {
        let (ci, cj) = r.coarse_index().unwrap();
        let (cx, cy) = ((r.bbox.x0 + r.bbox.x1) / 2, (r.bbox.y0 + r.bbox.y1) / 2);
        match canvas.locate(cx, cy) {
            Some((x, y)) => {
                let slot = Bbox::new(cj as u32 * wc, ci as u32 * hc, (cj as u32 + 1) * wc, (ci as u32 + 1) * hc);
                if !slot.contains(&Bbox::new(x, y, x + 1, y + 1)) {
                    errs.push(format!("patch {:?} drawn outside slot ({ci},{cj})", r.path));
                }
                located.push((r, (x, y)));
            }
            None => errs.push(format!("patch {:?} missing from canvas", r.path)),
        }
    }
    // order within a coarse cell is kept on both axes
    for (a, pa) in &located {
        for (b, pb) in &located {
            if a.path[0] != b.path[0] {
                continue;
            }
            if a.bbox.x1 <= b.bbox.x0 && pa.0 > pb.0 {
                errs.push(format!("x order {:?} {:?}", a.path, b.path));
            }
            if a.bbox.y1 <= b.bbox.y0 && pa.1 > pb.1 {
                errs.push(format!("y order {:?} {:?}", a.path, b.path));
            }
        }
    }
    // gray everywhere outside the drawn content
    let content: Vec<Bbox> = canvas
        .slots
        .iter()
        .map(|s| {
            let p = &s.placement;
            let (x0, y0) = (s.slot.x0 + p.offset_x, s.slot.y0 + p.offset_y);
            Bbox::new(x0, y0, x0 + p.content_width, y0 + p.content_height)
        })
        .collect();
    let mut stray = 0;
    for (x, y, px) in canvas.image.enumerate_pixels() {
        let inside = content.iter().any(|b| x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1);
        if !inside && px.0 != CANONICAL_GRAY {
            stray += 1;
        }
    }
    if stray > 0 {
        errs.push(format!("{stray} non-gray pixels outside slots"));
    }
    errs
}

fn reassembly_properties() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    let mut first = None;
    for _ in 0..1000 {
        let errs = reassembly_violations(&mut rng);
        if !errs.is_empty() {
            failures += 1;
            first.get_or_insert(errs);
        }
    }
    let el = t.elapsed();
    check(
        failures == 0 && within(el, Duration::from_secs(60)),
        format!("{failures}/1000 selections failed{}; time={el:.2?}", first.map(|e| format!(" (first: {e:?})")).unwrap_or_default()),
    )
}

// 7. the plain sigmoid never reorders fused scores
fn rank_preservation() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let argsort = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    };
    for _ in 0..10_000 {
        let n = rng.random_range(1..=9);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let s = normalize_all(&f, NormalizationMode::PlainSigmoid);
        if argsort(&s) != argsort(&f) {
            violations += 1;
        }
    }
    let el = t.elapsed();
    check(
        violations == 0 && within(el, Duration::from_secs(10)),
        format!("{violations} violations over 10000 vectors; time={el:.2?}"),
    )
}

// 8. identical seeds give identical rows and traces, whatever the thread count
fn determinism() -> Outcome {
    let t = Instant::now();
    let cfg = BenchConfig::default();
    let run_once = |threads: usize| -> Result<(Vec<String>, Vec<String>)> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        pool.install(|| {
            let scenes = generate_scenes(0, 12, 4096, 2, false)?;
            let (report, traces) = run_benchmark(&scenes, &cfg)?;
            Ok((
                report.rows.iter().map(|r| r.deterministic_json()).collect(),
                traces.iter().map(|t| t.to_jsonl()).collect(),
            ))
        })
    };
    let (a, b) = match (run_once(1), run_once(8)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return check(false, e.to_string()),
    };
    let same_rows = a.0 == b.0;
    let same_traces = a.1 == b.1;
    check(
        same_rows && same_traces,
        format!("rows identical={same_rows} traces identical={same_traces} over 12 scenes; time={:.2?}", t.elapsed()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "formula exactness", formulas()));

    let norms = [NormalizationMode::SiblingStandardized, NormalizationMode::PlainSigmoid];
    let one = generate_scenes(0, 100, 4096, 1, false).expect("single-target scenes");
    let two = generate_scenes(0, 100, 4096, 2, true).expect("two-target scenes");

    let mut c4 = Vec::new();
    for norm in norms {
        let cfg = bench_config(norm, Branching::Adaptive);
        let (report, el) = run(&one, &cfg).expect("recall benchmark");
        c4.push((norm, cfg, report, el));
    }

    let mut c5 = Vec::new();
    for norm in norms {
        let mut arms = Vec::new();
        for br in [Branching::Adaptive, Branching::Fixed(1), Branching::Fixed(3)] {
            let cfg = bench_config(norm, br);
            let (report, el) = run(&two, &cfg).expect("ablation benchmark");
            arms.push((br, cfg, report, el));
        }
        c5.push((norm, arms));
    }

    let mut searches: Vec<(String, &BenchConfig, &[SceneRow])> = Vec::new();
    for (norm, cfg, report, _) in &c4 {
        searches.push((format!("{norm:?}/one"), cfg, &report.rows));
    }
    for (norm, arms) in &c5 {
        for (br, cfg, report, _) in arms {
            searches.push((format!("{norm:?}/{br}"), cfg, &report.rows));
        }
    }
    let named: Vec<(&str, &BenchConfig, &[SceneRow])> = searches.iter().map(|(n, c, r)| (n.as_str(), *c, *r)).collect();
    results.push((2, "complexity bound", bound(&named)));
    results.push((3, "exhaustive equivalence", exhaustive()));

    {
        let (_, _, report, el) = &c4[0];
        let recall = report.aggregates.mean_recall;
        let slowest = max_wall(&report.rows);
        results.push((
            4,
            "localization recall (sibling-standardized)",
            check(
                recall >= 0.95 && slowest < 5000.0,
                format!("recall={recall:.3} (>= 0.95) slowest scene={slowest:.0} ms; total={el:.2?}"),
            ),
        ));
        let (_, _, plain, _) = &c4[1];
        println!(
            "info: localization recall with plain sigmoid normalization = {:.3}",
            plain.aggregates.mean_recall
        );
    }

    {
        let mut pass = true;
        let mut parts = Vec::new();
        let mut total = Duration::ZERO;
        for (norm, arms) in &c5 {
            let r: Vec<f64> = arms.iter().map(|a| a.2.aggregates.mean_recall).collect();
            total += arms.iter().map(|a| a.3).sum::<Duration>();
            pass &= r[0] > r[1] && r[2] >= r[1];
            parts.push(format!("{norm:?}: adaptive={:.3} top1={:.3} top3={:.3}", r[0], r[1], r[2]));
        }
        pass &= total < Duration::from_secs(600);
        results.push((5, "dispersed-target ablation", check(pass, format!("{}; time={total:.2?}", parts.join("; ")))));
    }

    results.push((6, "reassembly properties", reassembly_properties()));
    results.push((7, "normalization rank preservation", rank_preservation()));
    results.push((8, "determinism", determinism()));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{tag}] {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
