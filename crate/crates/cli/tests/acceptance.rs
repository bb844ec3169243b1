//! End-to-end acceptance checks A1-A7. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jigsaw_core::eval::{evaluate, evaluate_with, Detection, EvalParams, MaskTarget};
use jigsaw_core::jigsaw::{add_baseline, add_logits, batch_loss, forward_channel, grad, make_sample, predict_amodal, Sample};
use jigsaw_core::mask::{rle_decode, rle_encode};
use jigsaw_core::pipeline::{compare_methods, generate_splits, relation_findings, train_head, RunConfig};
use jigsaw_core::relation::{prior_agreement, DEFAULT_MARGIN};
use jigsaw_core::scene::sample_scenes;
use jigsaw_core::{
    intersect, union, BinaryMask, CategorySpec, CompositionWeights, InstanceRecord, MaskStack, OcclusionPriorSpec, Scene,
    SceneConfig, Shape, Window,
};

const BENCHMARK: &str = include_str!("../../../configs/benchmark.json");
const TWO_CATEGORY: &str = include_str!("../../../configs/two_category.json");
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, title: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, title, pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let density = rng.random_range(0.05..0.9);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

fn benchmark(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json(BENCHMARK).unwrap();
    cfg.override_seed(seed);
    cfg
}

fn a1() -> Verdict {
    let start = Instant::now();
    let cfg = benchmark(11);
    let scenes = sample_scenes(&cfg.prior, &cfg.scene, 0, 400).unwrap();
    let records: Vec<&InstanceRecord> = scenes.iter().flat_map(|s| &s.instances).collect();
    let mut bad = 0;
    for r in &records {
        let joined = union(r.visible(), r.occluded()).unwrap();
        let shared = intersect(r.visible(), r.occluded()).unwrap();
        let round_trip = [r.amodal(), r.visible(), r.occluded()].iter().all(|m| rle_decode(&rle_encode(m)).unwrap() == **m);
        if joined != *r.amodal() || !shared.is_empty() || !round_trip {
            bad += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = 1000;
    for _ in 0..pairs {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let a = random_mask(&mut rng, w, h);
        let b = random_mask(&mut rng, w, h);
        let lhs = union(&a, &b).unwrap().area();
        let rhs = a.area() + b.area() - intersect(&a, &b).unwrap().area();
        if lhs != rhs || rle_decode(&rle_encode(&a)).unwrap() != a {
            bad += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = records.len() >= 1000 && bad == 0 && elapsed < Duration::from_secs(10);
    let detail = format!("{} instances, {pairs} random pairs, {bad} violations, {}", records.len(), secs(elapsed));
    verdict("A1", "mask algebra", pass, detail)
}

fn random_window(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Window {
    let (ww, wh) = (rng.random_range(1..=w), rng.random_range(1..=h));
    Window { row: rng.random_range(0..=h - wh), col: rng.random_range(0..=w - ww), width: ww, height: wh }
}

fn random_stack(rng: &mut ChaCha8Rng, n: usize, w: usize, h: usize, window: Window) -> MaskStack {
    let values = (0..n * window.pixels()).map(|_| rng.random_range(-8.0..8.0)).collect();
    let background = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
    MaskStack::windowed(n, w, h, window, values, background).unwrap()
}

fn a2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = benchmark(12);
    let scenes = sample_scenes(&cfg.prior, &cfg.scene, 0, 30).unwrap();
    let mut pairs: Vec<(MaskStack, MaskStack, usize)> = Vec::new();
    for s in &scenes {
        for k in 0..s.instances.len() {
            let sample = make_sample(s, k, &cfg.noise, cfg.n()).unwrap();
            pairs.push((sample.vm, sample.om, sample.category));
        }
    }
    for _ in 0..100 {
        let n = rng.random_range(1..6);
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
        let window = random_window(&mut rng, w, h);
        let vm = random_stack(&mut rng, n, w, h, window);
        let om = random_stack(&mut rng, n, w, h, window);
        pairs.push((vm, om, rng.random_range(0..n)));
    }
    let mut mismatches = 0;
    for (vm, om, t) in &pairs {
        let w = CompositionWeights::identity(vm.channels());
        let head = forward_channel(&w, vm, om, *t).unwrap();
        let add = add_logits(vm, om, *t).unwrap();
        let same_logits = head.dense_channel(0).iter().zip(add.dense_channel(0)).all(|(a, b)| a.to_bits() == b.to_bits());
        let same_masks = predict_amodal(&w, vm, om, *t, 0.5).unwrap() == add_baseline(vm, om, *t, 0.5).unwrap();
        if !(same_logits && same_masks) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = pairs.len() >= 100 && mismatches == 0 && elapsed < Duration::from_secs(5);
    let detail = format!("{} stack pairs, {mismatches} mismatches, {}", pairs.len(), secs(elapsed));
    verdict("A2", "identity head equals add baseline", pass, detail)
}

fn a3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = benchmark(13);
    let scenes = sample_scenes(&cfg.prior, &cfg.scene, 0, 6).unwrap();
    let real: Vec<Sample> = scenes
        .iter()
        .flat_map(|s| (0..s.instances.len()).map(move |k| (s, k)))
        .map(|(s, k)| make_sample(s, k, &cfg.noise, cfg.n()).unwrap())
        .collect();
    let configs = 12;
    let h = 1e-4;
    let mut worst = 0.0f64;
    for c in 0..configs {
        let (n, batch) = if c % 3 == 0 {
            (cfg.n(), real.iter().skip(c).take(4).cloned().collect::<Vec<_>>())
        } else {
            let n = rng.random_range(1..5);
            let (w, hh) = (rng.random_range(2..10), rng.random_range(2..10));
            let batch = (0..rng.random_range(1..5))
                .map(|_| {
                    let window = random_window(&mut rng, w, hh);
                    Sample {
                        vm: random_stack(&mut rng, n, w, hh, window),
                        om: random_stack(&mut rng, n, w, hh, window),
                        category: rng.random_range(0..n),
                        target: random_mask(&mut rng, w, hh),
                    }
                })
                .collect();
            (n, batch)
        };
        let params: Vec<f64> = (0..2 * n * n + n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = CompositionWeights::from_vec(n, &params).unwrap();
        let analytic = grad(&w, &batch).unwrap().to_vec();
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let up = batch_loss(&CompositionWeights::from_vec(n, &p).unwrap(), &batch).unwrap();
            p[k] -= 2.0 * h;
            let down = batch_loss(&CompositionWeights::from_vec(n, &p).unwrap(), &batch).unwrap();
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(analytic[k].abs());
            if scale > 0.0 {
                worst = worst.max((fd - analytic[k]).abs() / scale.max(1e-8));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-4 && elapsed < Duration::from_secs(30);
    verdict("A3", "gradient check", pass, format!("{configs} configurations, max relative error {worst:.2e}, {}", secs(elapsed)))
}

fn small_prior(rng: &mut ChaCha8Rng) -> OcclusionPriorSpec {
    let shapes = [Shape::Rectangle, Shape::Disk, Shape::Triangle];
    OcclusionPriorSpec {
        categories: (0..3)
            .map(|k| CategorySpec {
                id: k,
                name: format!("c{k}"),
                shape: shapes[k],
                size_range: [3, 9],
                depth_score: rng.random_range(0.0..2.0),
            })
            .collect(),
        depth_noise: rng.random_range(0.0..1.5),
    }
}

/// Noisy copies, duplicates, strays and empty masks with coarse scores so
/// that ties occur.
fn random_detections(rng: &mut ChaCha8Rng, scenes: &[Scene], target: MaskTarget) -> Vec<Detection> {
    let mut out = Vec::new();
    for s in scenes {
        for r in &s.instances {
            let copies = rng.random_range(0..3);
            for _ in 0..copies {
                let mut mask = target.of(r).morph(rng.random_range(-1..=1));
                let flips = rng.random_range(0..6);
                for _ in 0..flips {
                    let (y, x) = (rng.random_range(0..s.height()), rng.random_range(0..s.width()));
                    mask.set(y, x, !mask.get(y, x));
                }
                let category = if rng.random_bool(0.1) { rng.random_range(0..3) } else { r.category() };
                out.push(Detection { scene_index: s.index, category, mask, score: rng.random_range(0..6) as f64 / 5.0 });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let mask = if rng.random_bool(0.2) { BinaryMask::empty(s.width(), s.height()).unwrap() } else { random_mask(rng, s.width(), s.height()) };
            out.push(Detection { scene_index: s.index, category: rng.random_range(0..3), mask, score: rng.random_range(0..6) as f64 / 5.0 });
        }
    }
    out
}

fn a4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scene_count = 0;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for trial in 0..40u64 {
        let prior = small_prior(&mut rng);
        let cfg = SceneConfig { width: 14, height: 12, instances_per_scene: [2, 5], seed: trial };
        let scenes = sample_scenes(&prior, &cfg, 0, 2).unwrap();
        scene_count += scenes.len();
        for target in [MaskTarget::Amodal, MaskTarget::Visible, MaskTarget::Occluded] {
            let dets = random_detections(&mut rng, &scenes, target);
            for filter in [None, Some(0.15), Some(0.4)] {
                let got = evaluate(&dets, &scenes, target, filter).unwrap();
                let want = support::evaluate(&dets, &scenes, target, filter);
                worst = worst.max((got.ap - want.ap).abs()).max((got.ar - want.ar).abs());
                for (g, w) in got.per_category.iter().zip(&want.per_category) {
                    worst = worst.max((g.ap - w).abs());
                }
                if target == MaskTarget::Amodal {
                    let occluded = support::evaluate(&dets, &scenes, target, Some(0.15));
                    worst = worst.max((got.occluded_ap - occluded.ap).abs());
                }
                compared += 1;
            }
        }
    }

    // perfect detections
    let prior = small_prior(&mut rng);
    let cfg = SceneConfig { width: 14, height: 12, instances_per_scene: [2, 5], seed: 99 };
    let scenes = sample_scenes(&prior, &cfg, 0, 10).unwrap();
    let perfect: Vec<Detection> = scenes
        .iter()
        .flat_map(|s| s.instances.iter().map(move |r| Detection { scene_index: s.index, category: r.category(), mask: r.amodal().clone(), score: 1.0 }))
        .collect();
    let rep = evaluate(&perfect, &scenes, MaskTarget::Amodal, None).unwrap();
    let perfect_ok = rep.ap == 1.0 && rep.ar == 1.0;

    // one ground truth, one detection at IoU exactly 0.5
    let square = BinaryMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (2..6).contains(&c)).unwrap();
    let half = BinaryMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (2..4).contains(&c)).unwrap();
    let gt = InstanceRecord::from_occluders(0, square, &BinaryMask::empty(8, 8).unwrap(), 0.0).unwrap();
    let traced = vec![Scene { config: SceneConfig { width: 8, height: 8, instances_per_scene: [2, 2], seed: 0 }, index: 0, instances: vec![gt] }];
    let single = vec![Detection { scene_index: 0, category: 0, mask: half, score: 0.9 }];
    let lib = evaluate_with(&single, &traced, &EvalParams::new(MaskTarget::Amodal)).unwrap();
    let reference = support::evaluate(&single, &traced, MaskTarget::Amodal, None);
    let traced_ok = (lib.per_category[0].ap - 0.1).abs() < 1e-12 && (reference.per_category[0] - 0.1).abs() < 1e-12;

    let elapsed = start.elapsed();
    let pass = scene_count >= 50 && worst < 1e-9 && perfect_ok && traced_ok && elapsed < Duration::from_secs(60);
    let detail = format!(
        "{scene_count} scenes, {compared} comparisons, max |diff| {worst:.1e}, perfect {}, IoU-0.5 case AP {:.3}, {}",
        if perfect_ok { "1/1" } else { "wrong" },
        lib.per_category[0].ap,
        secs(elapsed)
    );
    verdict("A4", "evaluator matches reference", pass, detail)
}

struct BenchmarkRun {
    head_ap: f64,
    add_ap: f64,
    head_occ: f64,
    add_occ: f64,
    agreement: f64,
}

fn benchmark_runs() -> (Vec<BenchmarkRun>, Duration) {
    let start = Instant::now();
    let runs = SEEDS
        .iter()
        .map(|&seed| {
            let cfg = benchmark(seed);
            let (train, val) = generate_splits(&cfg).unwrap();
            let w = train_head(&cfg, &train).unwrap().weights;
            let cmp = compare_methods(&w, &cfg, &val).unwrap();
            let findings = relation_findings(&w, &[], cfg.eval.epsilon).unwrap();
            BenchmarkRun {
                head_ap: cmp.arcnn.amodal.ap,
                add_ap: cmp.arcnn_add.amodal.ap,
                head_occ: cmp.arcnn.amodal.occluded_ap,
                add_occ: cmp.arcnn_add.amodal.occluded_ap,
                agreement: prior_agreement(&findings, &cfg.prior, DEFAULT_MARGIN).unwrap(),
            }
        })
        .collect();
    (runs, start.elapsed())
}

fn a5(runs: &[BenchmarkRun], elapsed: Duration) -> Verdict {
    let wins = runs.iter().filter(|r| r.head_ap >= r.add_ap && r.head_occ >= r.add_occ).count();
    let summary: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3}/{:.3} occ {:.3}/{:.3}", r.head_ap, r.add_ap, r.head_occ, r.add_occ))
        .collect();
    let pass = wins >= 4 && elapsed < Duration::from_secs(600);
    let detail = format!("head beats add in {wins}/5 seeds (head/add: {}), {}", summary.join("; "), secs(elapsed));
    verdict("A5", "trained head beats add baseline", pass, detail)
}

fn a6(runs: &[BenchmarkRun], shared: Duration) -> Verdict {
    let start = Instant::now();
    let good = runs.iter().filter(|r| r.agreement >= 0.75).count();
    let mut recovered = 0;
    for &seed in &SEEDS {
        let mut cfg = RunConfig::from_json(TWO_CATEGORY).unwrap();
        cfg.override_seed(seed);
        let (train, _) = generate_splits(&cfg).unwrap();
        let w = train_head(&cfg, &train).unwrap().weights;
        let findings = relation_findings(&w, &[], cfg.eval.epsilon).unwrap();
        if prior_agreement(&findings, &cfg.prior, DEFAULT_MARGIN).unwrap() == 1.0 {
            recovered += 1;
        }
    }
    let elapsed = shared + start.elapsed();
    let agreements: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.agreement)).collect();
    let pass = good >= 4 && recovered >= 4 && elapsed < Duration::from_secs(600);
    let detail = format!(
        "agreement >= 0.75 in {good}/5 seeds ({}), two-category order recovered in {recovered}/5, {}",
        agreements.join(", "),
        secs(elapsed)
    );
    verdict("A6", "occlusion order recovered from weights", pass, detail)
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                out.insert(format!("{}/{k}", path.file_name().unwrap().to_string_lossy()), v);
            }
        } else {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    out
}

fn a7() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("benchmark.json");
    fs::write(&config, BENCHMARK).unwrap();
    let mut trees = Vec::new();
    let mut failures = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        for cmd in ["gen", "train", "eval", "report"] {
            let status = Command::new(env!("CARGO_BIN_EXE_jigsaw"))
                .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            if !status.status.success() {
                failures.push(format!("{name} {cmd}: {}", String::from_utf8_lossy(&status.stderr).trim()));
            }
        }
        trees.push(read_tree(&out));
    }
    let identical = trees[0] == trees[1];
    let expected = ["train_manifest.json", "val_manifest.json", "weights.json", "loss.csv", "eval_report.json", "findings.json"];
    let complete = expected.iter().all(|f| trees[0].contains_key(*f));
    let pass = failures.is_empty() && identical && complete;
    let detail = if failures.is_empty() {
        format!("{} artifacts, byte-identical: {identical}, {}", trees[0].len(), secs(start.elapsed()))
    } else {
        failures.join("; ")
    };
    verdict("A7", "pipeline is deterministic", pass, detail)
}

fn main() -> ExitCode {
    let mut verdicts = vec![a1(), a2(), a3(), a4()];
    let (runs, shared) = benchmark_runs();
    verdicts.push(a5(&runs, shared));
    verdicts.push(a6(&runs, shared));
    verdicts.push(a7());
    let mut failed = 0;
    for v in &verdicts {
        println!("{} {} {}: {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.title, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
