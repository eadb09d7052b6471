//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line with
//! its runtime and fails if the check or its time budget is missed.
//!
//! Run with `cargo test -p flame-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flame_cli::{cmd_eval, materialize, EvalArgs, LatencyOverride, SynthConfig};
use flame_core::labelmap::{decode_labelmap, encode_pgm};
use flame_core::synth::{simulate_experiment_with_mode, ObjectSpec, PredictorKind, Shape};
use flame_core::{
    cityscapes_input_index, frame_offset, simulate_experiment, ClassSet, ConfusionMatrix, EvalMode,
    EvalReport, FrameTiming, LabelMap, SceneSpec, SimPredictor, IGNORE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn criterion(id: u32, name: &str, budget: Duration, check: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|()| {
        if elapsed <= budget {
            Ok(())
        } else {
            Err(format!("took {elapsed:?}, budget {budget:?}"))
        }
    });
    match &outcome {
        Ok(()) => println!("[PASS] AC{id} {name} ({elapsed:.2?})"),
        Err(e) => println!("[FAIL] AC{id} {name} ({elapsed:.2?}): {e}"),
    }
    if let Err(e) = outcome {
        panic!("AC{id} {name}: {e}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- independent oracles -------------------------------------------------

/// Per-class (|GT ∩ Pred|, |GT ∪ Pred|) summed over pairs, by walking pixels.
fn pixel_set_counts(pairs: &[(LabelMap, LabelMap)], k: usize) -> Vec<(u64, u64)> {
    let mut out = vec![(0u64, 0u64); k];
    for (gt, pred) in pairs {
        for (&g, &p) in gt.values().iter().zip(pred.values()) {
            if g == IGNORE {
                continue;
            }
            for (c, slot) in out.iter_mut().enumerate() {
                let in_gt = g as usize == c;
                let in_pred = p as usize == c;
                if in_gt && in_pred {
                    slot.0 += 1;
                }
                if in_gt || in_pred {
                    slot.1 += 1;
                }
            }
        }
    }
    out
}

/// Mean of defined per-class ratios, summed in class order.
fn oracle_miou(counts: &[(u64, u64)]) -> f64 {
    let defined: Vec<f64> = counts
        .iter()
        .filter(|(_, u)| *u > 0)
        .map(|&(i, u)| i as f64 / u as f64)
        .collect();
    defined.iter().sum::<f64>() / defined.len() as f64
}

/// Rasterizes one axis-aligned rectangle on background 0, clipped.
fn raster_rect(width: u32, height: u32, x: i64, y: i64, w: u32, h: u32, class: u8) -> Vec<u8> {
    let mut v = Vec::with_capacity((width * height) as usize);
    for py in 0..height as i64 {
        for px in 0..width as i64 {
            let inside = px >= x && px < x + w as i64 && py >= y && py < y + h as i64;
            v.push(if inside { class } else { 0 });
        }
    }
    v
}

fn engine_counts(pairs: &[(LabelMap, LabelMap)], k: usize) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(k);
    for (g, p) in pairs {
        cm.accumulate(g, p).unwrap();
    }
    cm
}

// ---- fixtures ------------------------------------------------------------

fn moving_rect_scene(num_frames: u32) -> SceneSpec {
    SceneSpec {
        width: 64,
        height: 64,
        num_frames,
        num_classes: 2,
        objects: vec![ObjectSpec {
            class_id: 1,
            shape: Shape::Rectangle { w: 20, h: 10 },
            initial_position: Some((2, 20)),
            velocity: (2, 0),
        }],
        seed: 0,
    }
}

fn sim(kind: PredictorKind, latency_ms: f64) -> SimPredictor {
    SimPredictor::new(kind, latency_ms).unwrap()
}

fn flame_of(spec: &SceneSpec, kind: PredictorKind, latency_ms: f64) -> EvalReport {
    let timing = FrameTiming::uniform(60.0).unwrap();
    simulate_experiment(spec, &sim(kind, latency_ms), &timing).unwrap()
}

fn eval_args(
    dir: &Path,
    predictions: &Path,
    mode: EvalMode,
    latency: Option<LatencyOverride>,
) -> EvalArgs {
    EvalArgs {
        dataset: dir.join("dataset.json"),
        predictions: predictions.to_path_buf(),
        mode,
        out: None,
        jobs: 4,
        latency,
    }
}

fn without_mode(mut r: EvalReport) -> EvalReport {
    r.mode = EvalMode::Static;
    r
}

fn list_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

// ---- criteria ------------------------------------------------------------

#[test]
fn ac1_offset_table() {
    criterion(1, "offset table", Duration::from_secs(1), || {
        let cases = [
            (195.0, 4),
            (76.0, 2),
            (26.0, 1),
            (38.0, 1),
            (0.0, 0),
            (60.0, 1),
            (61.0, 2),
        ];
        for (l, k) in cases {
            let got = frame_offset(l, 60.0).map_err(|e| e.to_string())?;
            ensure(got == k, || {
                format!("frame_offset({l}, 60) = {got}, expected {k}")
            })?;
        }
        Ok(())
    });
}

#[test]
fn ac2_protocol_inversion() {
    criterion(2, "protocol inversion", Duration::from_secs(1), || {
        for (l, expected) in [(195.0, 16), (76.0, 18), (26.0, 19), (38.0, 19)] {
            let got = cityscapes_input_index(20, l, 60.0).map_err(|e| e.to_string())?;
            ensure(got == expected, || {
                format!("latency {l}: input {got}, expected {expected}")
            })?;
        }
        Ok(())
    });
}

#[test]
fn ac3_zero_latency_collapse() {
    criterion(3, "zero-latency collapse", Duration::from_secs(10), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        // Stale predictions on a moving 30-frame scene with ground truth
        // on every frame; forcing latency 0 must make the modes coincide.
        let mut scene = moving_rect_scene(30);
        scene.num_classes = 4;
        scene.objects.push(ObjectSpec {
            class_id: 3,
            shape: Shape::Rectangle { w: 6, h: 6 },
            initial_position: Some((50, 50)),
            velocity: (-1, -1),
        });
        let config = SynthConfig {
            scene: scene.clone(),
            interval_ms: 60.0,
            predictors: vec![
                sim(PredictorKind::DelayedOracle, 180.0),
                sim(PredictorKind::ExtrapolatingOracle, 120.0),
            ],
        };
        let out = materialize(&config, dir.path()).map_err(|e| e.to_string())?;
        for manifest in &out.prediction_manifests {
            let zero = Some(LatencyOverride::Constant(0.0));
            let flame = cmd_eval(&eval_args(
                dir.path(),
                manifest,
                EvalMode::Flame,
                zero.clone(),
            ))
            .map_err(|e| e.to_string())?;
            let stat = cmd_eval(&eval_args(dir.path(), manifest, EvalMode::Static, zero))
                .map_err(|e| e.to_string())?;
            ensure(
                flame.mode == EvalMode::Flame && stat.mode == EvalMode::Static,
                || "modes".into(),
            )?;
            ensure(without_mode(flame.clone()) == stat, || {
                format!("{}: flame {flame:?}\nstatic {stat:?}", manifest.display())
            })?;
            // Sanity: with the real latency the modes differ.
            let real = cmd_eval(&eval_args(dir.path(), manifest, EvalMode::Flame, None))
                .map_err(|e| e.to_string())?;
            ensure(real.miou != stat.miou, || "latency had no effect".into())?;
        }
        // Same property on the in-memory path.
        let timing = FrameTiming::uniform(60.0).unwrap();
        let p = sim(PredictorKind::DelayedOracle, 0.0);
        let flame = simulate_experiment_with_mode(&scene, &p, &timing, EvalMode::Flame)
            .map_err(|e| e.to_string())?;
        let stat = simulate_experiment_with_mode(&scene, &p, &timing, EvalMode::Static)
            .map_err(|e| e.to_string())?;
        ensure(without_mode(flame) == stat, || {
            "in-memory reports differ".into()
        })
    });
}

#[test]
fn ac4_oracle_equivalence() {
    criterion(4, "oracle equivalence", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut total_pairs = 0;
        for round in 0..40 {
            let k = rng.random_range(1..=5usize);
            let classes = ClassSet::new(k).unwrap();
            let (w, h) = (rng.random_range(1..=32u32), rng.random_range(1..=32u32));
            let n = rng.random_range(1..=6usize);
            let pairs: Vec<(LabelMap, LabelMap)> = (0..n)
                .map(|_| {
                    let len = (w * h) as usize;
                    let gt = (0..len)
                        .map(|_| {
                            if rng.random_bool(0.1) {
                                IGNORE
                            } else {
                                rng.random_range(0..k as u8)
                            }
                        })
                        .collect();
                    let pred = (0..len).map(|_| rng.random_range(0..k as u8)).collect();
                    (
                        LabelMap::new(w, h, gt, &classes).unwrap(),
                        LabelMap::new(w, h, pred, &classes).unwrap(),
                    )
                })
                .collect();
            total_pairs += n;
            // Every single pair, then the whole set.
            let singles = pairs.iter().map(std::slice::from_ref);
            for set in singles.chain(std::iter::once(&pairs[..])) {
                let cm = engine_counts(set, k);
                let oracle = pixel_set_counts(set, k);
                for (c, &(i, u)) in oracle.iter().enumerate() {
                    let got = cm.class_iou(c).unwrap();
                    ensure((got.intersection, got.union) == (i, u), || {
                        format!("round {round} class {c}: engine {got:?}, oracle ({i}, {u})")
                    })?;
                }
                match cm.miou() {
                    Ok(r) => ensure(r.miou == oracle_miou(&oracle), || {
                        format!(
                            "round {round}: miou {} vs oracle {}",
                            r.miou,
                            oracle_miou(&oracle)
                        )
                    })?,
                    Err(_) => ensure(oracle.iter().all(|&(_, u)| u == 0), || {
                        "spurious empty".into()
                    })?,
                }
            }
        }
        ensure(total_pairs >= 100, || format!("only {total_pairs} pairs"))
    });
}

#[test]
fn ac5_dataset_aggregation() {
    criterion(
        5,
        "dataset-level aggregation",
        Duration::from_secs(1),
        || {
            let cs = ClassSet::new(2).unwrap();
            let m = |v: &[u8]| LabelMap::new(4, 1, v.to_vec(), &cs).unwrap();
            // Image A: class 0 I=1 U=2, class 1 I=2 U=3. Image B: class 0 I=4 U=4.
            let a = (m(&[0, 1, 1, 1]), m(&[0, 0, 1, 1]));
            let b = (m(&[0, 0, 0, 0]), m(&[0, 0, 0, 0]));
            let per_image = |p: &(LabelMap, LabelMap)| {
                engine_counts(std::slice::from_ref(p), 2)
                    .miou()
                    .unwrap()
                    .miou
            };
            let mean_of_images = (per_image(&a) + per_image(&b)) / 2.0;
            let aggregate = engine_counts(&[a, b], 2).miou().unwrap().miou;
            // Aggregate: class 0 I=5 U=6, class 1 I=2 U=3.
            let expected = (5.0 / 6.0 + 2.0 / 3.0) / 2.0;
            ensure(aggregate == expected, || {
                format!("aggregate {aggregate}, expected {expected}")
            })?;
            ensure(mean_of_images != aggregate, || {
                "construction does not separate the two".into()
            })?;
            ensure(
                mean_of_images == ((0.5 + 2.0 / 3.0) / 2.0 + 1.0) / 2.0,
                || "per-image values".into(),
            )
        },
    );
}

/// Oracle FLAME of the stale predictor on the moving-rectangle scene at
/// offset `k`, from rectangles rasterized in the test.
fn oracle_translation_flame(num_frames: u32, k: u32) -> (Vec<(u64, u64)>, f64) {
    let cs = ClassSet::new(2).unwrap();
    let frame = |t: u32| {
        LabelMap::new(
            64,
            64,
            raster_rect(64, 64, 2 + 2 * t as i64, 20, 20, 10, 1),
            &cs,
        )
        .unwrap()
    };
    let pairs: Vec<_> = (0..num_frames - k)
        .map(|t| (frame(t + k), frame(t)))
        .collect();
    let counts = pixel_set_counts(&pairs, 2);
    let miou = oracle_miou(&counts);
    (counts, miou)
}

#[test]
fn ac6_analytic_translation() {
    criterion(
        6,
        "analytic translation check",
        Duration::from_secs(5),
        || {
            let spec = moving_rect_scene(20);
            let latency = 180.0;
            ensure(frame_offset(latency, 60.0).unwrap() == 3, || {
                "k != 3".into()
            })?;
            let report = flame_of(&spec, PredictorKind::DelayedOracle, latency);
            let pairs = report.pairs_evaluated as u64;
            ensure(pairs == 17, || format!("{pairs} pairs"))?;
            let c1 = report.class_iou(1).unwrap();
            // 140/260 exactly: each pair contributes I=140, U=260.
            ensure(
                c1.intersection == 140 * pairs && c1.union == 260 * pairs,
                || format!("{c1:?}"),
            )?;
            ensure(c1.intersection * 260 == c1.union * 140, || "ratio".into())?;
            let c0 = report.class_iou(0).unwrap();
            ensure(
                c0.intersection == (4096 - 260) * pairs && c0.union == (4096 - 140) * pairs,
                || format!("background {c0:?}"),
            )?;
            let (counts, oracle) = oracle_translation_flame(20, 3);
            ensure(
                counts == vec![(c0.intersection, c0.union), (c1.intersection, c1.union)],
                || format!("oracle counts {counts:?}"),
            )?;
            ensure(report.miou == oracle, || {
                format!("FLAME {} vs oracle {oracle}", report.miou)
            })?;

            // The same number through files and the eval command.
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let config = SynthConfig {
                scene: spec,
                interval_ms: 60.0,
                predictors: vec![sim(PredictorKind::DelayedOracle, latency)],
            };
            let out = materialize(&config, dir.path()).map_err(|e| e.to_string())?;
            let from_disk = cmd_eval(&eval_args(
                dir.path(),
                &out.prediction_manifests[0],
                EvalMode::Flame,
                None,
            ))
            .map_err(|e| e.to_string())?;
            // synth only writes predictions whose target frame exists, so the
            // disk run has no exclusions; the scored part must agree exactly.
            ensure(
                from_disk.miou == report.miou
                    && from_disk.per_class == report.per_class
                    && from_disk.pairs_evaluated == report.pairs_evaluated
                    && from_disk.offsets_histogram == report.offsets_histogram,
                || format!("disk {from_disk:?}\nmemory {report:?}"),
            )
        },
    );
}

#[test]
fn ac7_degradation_monotonicity() {
    criterion(
        7,
        "degradation monotonicity",
        Duration::from_secs(10),
        || {
            // 22 frames keep the rectangle unclipped: x + 20 <= 2 + 2*21 + 20 = 64.
            let spec = moving_rect_scene(22);
            let mut previous = f64::INFINITY;
            for k in 1..=9u32 {
                let r = flame_of(&spec, PredictorKind::DelayedOracle, 60.0 * k as f64);
                ensure(r.offsets_histogram.keys().eq([k].iter()), || {
                    format!("k={k}: offsets {:?}", r.offsets_histogram)
                })?;
                let c1 = r.class_iou(1).unwrap();
                let overlap = (20 - 2 * k as u64) * 10;
                let union = 2 * 200 - overlap;
                ensure(c1.intersection * union == c1.union * overlap, || {
                    format!("k={k}: class 1 {c1:?}, analytic {overlap}/{union}")
                })?;
                let (_, oracle) = oracle_translation_flame(22, k);
                ensure(r.miou == oracle, || {
                    format!("k={k}: {} vs oracle {oracle}", r.miou)
                })?;
                ensure(r.miou < previous, || {
                    format!("k={k}: {} not below {previous}", r.miou)
                })?;
                previous = r.miou;
            }
            Ok(())
        },
    );
}

#[test]
fn ac8_extrapolation_beats_stale() {
    criterion(
        8,
        "extrapolating oracle beats delayed oracle",
        Duration::from_secs(10),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut scenes = vec![moving_rect_scene(20)];
            while scenes.len() < 40 {
                let num_frames = 16;
                let n = rng.random_range(1..=3usize);
                let mut objects = Vec::new();
                for i in 0..n {
                    let (w, h) = (rng.random_range(3..=16u32), rng.random_range(3..=16u32));
                    let v = loop {
                        let v = (rng.random_range(-3..=3i64), rng.random_range(-3..=3i64));
                        if v != (0, 0) {
                            break v;
                        }
                    };
                    // Keep every object inside the frame for the whole scene.
                    let span = |vel: i64, size: u32| {
                        let lo = (-vel * (num_frames as i64 - 1)).max(0);
                        let hi = 64 - size as i64 - (vel * (num_frames as i64 - 1)).max(0);
                        (lo, hi)
                    };
                    let (xl, xh) = span(v.0, w);
                    let (yl, yh) = span(v.1, h);
                    if xl > xh || yl > yh {
                        break;
                    }
                    objects.push(ObjectSpec {
                        class_id: 1 + i as u8,
                        shape: Shape::Rectangle { w, h },
                        initial_position: Some((
                            rng.random_range(xl..=xh),
                            rng.random_range(yl..=yh),
                        )),
                        velocity: v,
                    });
                }
                if objects.len() == n {
                    scenes.push(SceneSpec {
                        width: 64,
                        height: 64,
                        num_frames,
                        num_classes: 4,
                        objects,
                        seed: 0,
                    });
                }
            }
            for (i, spec) in scenes.iter().enumerate() {
                for k in 1..=4u32 {
                    let latency = 60.0 * k as f64 - 7.0;
                    let oracle = flame_of(spec, PredictorKind::Oracle, latency).miou;
                    let extrap = flame_of(spec, PredictorKind::ExtrapolatingOracle, latency).miou;
                    let stale = flame_of(spec, PredictorKind::DelayedOracle, latency).miou;
                    ensure(extrap == 1.0 && oracle == 1.0, || {
                        format!("scene {i} k={k}: oracle {oracle}, extrapolating {extrap}")
                    })?;
                    ensure(extrap > stale, || {
                        format!("scene {i} k={k}: delayed {stale} not below 1")
                    })?;
                }
            }
            Ok(())
        },
    );
}

#[test]
fn ac9_determinism_and_round_trips() {
    criterion(
        9,
        "determinism and round-trips",
        Duration::from_secs(10),
        || {
            let mut scene = moving_rect_scene(30);
            scene.num_classes = 3;
            scene.seed = 17;
            scene.objects.push(ObjectSpec {
                class_id: 2,
                shape: Shape::Rectangle { w: 9, h: 7 },
                initial_position: None,
                velocity: (1, 1),
            });
            let config = SynthConfig {
                scene,
                interval_ms: 60.0,
                predictors: vec![
                    sim(PredictorKind::Oracle, 26.0),
                    sim(PredictorKind::DelayedOracle, 195.0),
                    sim(PredictorKind::ExtrapolatingOracle, 76.0),
                ],
            };
            let a = tempfile::tempdir().map_err(|e| e.to_string())?;
            let b = tempfile::tempdir().map_err(|e| e.to_string())?;
            materialize(&config, a.path()).map_err(|e| e.to_string())?;
            let out = materialize(&config, b.path()).map_err(|e| e.to_string())?;
            let files = list_files(a.path());
            ensure(files == list_files(b.path()), || "file sets differ".into())?;
            ensure(files.len() > 30, || format!("only {} files", files.len()))?;
            for f in &files {
                let (x, y) = (
                    fs::read(a.path().join(f)).unwrap(),
                    fs::read(b.path().join(f)).unwrap(),
                );
                ensure(x == y, || format!("{} differs between runs", f.display()))?;
            }

            // PGM round trip on random maps, including ignore pixels.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..50 {
                let k = rng.random_range(1..=255usize);
                let cs = ClassSet::new(k).unwrap();
                let (w, h) = (rng.random_range(1..40u32), rng.random_range(1..40u32));
                let vals = (0..w * h)
                    .map(|_| {
                        if rng.random_bool(0.1) {
                            IGNORE
                        } else {
                            rng.random_range(0..k as u8)
                        }
                    })
                    .collect();
                let m = LabelMap::new(w, h, vals, &cs).unwrap();
                let bytes = encode_pgm(&m).unwrap();
                ensure(decode_labelmap(&bytes, &cs).unwrap() == m, || {
                    "PGM round trip".into()
                })?;
            }

            // Report JSON round trip, through the file written by eval.
            let mut args = eval_args(
                b.path(),
                &out.prediction_manifests[1],
                EvalMode::Flame,
                None,
            );
            let report_path = b.path().join("report.json");
            args.out = Some(report_path.clone());
            let report = cmd_eval(&args).map_err(|e| e.to_string())?;
            let text = fs::read_to_string(&report_path).unwrap();
            let parsed = EvalReport::from_json(&text).map_err(|e| e.to_string())?;
            ensure(parsed == report, || "report JSON round trip".into())?;
            ensure(
                report.offsets_histogram == BTreeMap::from([(4, report.pairs_evaluated)]),
                || format!("offsets {:?}", report.offsets_histogram),
            )
        },
    );
}
