//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so every criterion reports even when an earlier
//! one fails; the process exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ug_core::backend::wire::parse_response;
use ug_core::backend::{
    Backend, BackendError, BackendPair, ScoreMode, ScoringRequest, SourceImage, Visual,
};
use ug_core::candidates::{grid_crops, uniform_frame_indices, ImageGeometry};
use ug_core::eval::{
    interval_iou, mean_iou, pearson, recall_at, run_item, LoadedMedia, Metric, PipelineConfigs,
    RunRecord, Selection,
};
use ug_core::selectors::{argmin_entropy, max_sum_subarray, mcq_prompt, ug_sample, SampleConfig};
use ug_core::synth::{
    plant_scene, synth_video, zoom_sweep, OracleBackend, OracleParams, SceneParams, World,
};
use ug_core::uncertainty::{
    brc_score, shannon_entropy, AliasSet, BinaryAliases, TokenDistribution, TokenProb,
};

struct Outcome {
    ok: bool,
    /// The only failing part is a stated expectation that is itself wrong.
    known: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        known: false,
        detail: detail.into(),
    }
}

/// Run JSONL from criteria 5 to 8, kept for the determinism rerun.
static FIRST_RUN: Mutex<Vec<(u32, Vec<String>)>> = Mutex::new(Vec::new());

fn jsonl(records: &[RunRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.elapsed_ms = 0;
            serde_json::to_string(&r).unwrap()
        })
        .collect()
}

fn brute_force_max(xs: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for s in 0..xs.len() {
        let mut acc = 0.0;
        for x in &xs[s..] {
            acc += x;
            best = best.max(acc);
        }
    }
    best
}

fn kadane_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=64);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r = max_sum_subarray(&xs).unwrap();
        let achieved = xs[r.start..=r.end].iter().fold(0.0, |a, v| a + v);
        if r.sum != brute_force_max(&xs) || achieved != r.sum {
            mismatches += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("1000 arrays, {mismatches} mismatches, {secs:.2}s"),
    )
}

fn random_distribution(rng: &mut ChaCha8Rng, tokens: &[&str]) -> TokenDistribution {
    let k = rng.gen_range(1..=tokens.len());
    let residual_share = if rng.gen_bool(0.5) {
        rng.gen_range(0.0..1.0)
    } else {
        0.0
    };
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.001..1.0)).collect();
    let total: f64 = weights.iter().sum::<f64>() + residual_share;
    let entries: Vec<TokenProb> = weights
        .iter()
        .zip(tokens)
        .map(|(w, t)| TokenProb::new(*t, w / total))
        .collect();
    let residual = (1.0 - entries.iter().map(|e| e.prob).sum::<f64>()).max(0.0);
    TokenDistribution::new(entries, residual).unwrap()
}

const VOCAB: [&str; 10] = [
    "A", "B", "C", "D", "yes", "no", "Yes", "▁no", "</s>", "maybe",
];

fn entropy_identities() -> Outcome {
    let uniform = TokenDistribution::new(
        ["A", "B", "C", "D"]
            .iter()
            .map(|t| TokenProb::new(*t, 0.25))
            .collect(),
        0.0,
    )
    .unwrap();
    let h_uniform = shannon_entropy(&uniform);
    let h_one_hot = shannon_entropy(&TokenDistribution::one_hot("A"));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..1000 {
        let d = random_distribution(&mut rng, &VOCAB);
        let m = d.entries().len() + usize::from(d.residual_mass() > 0.0);
        if shannon_entropy(&d) > (m as f64).ln() + 1e-12 {
            violations += 1;
        }
    }
    let ok = (h_uniform - 4f64.ln()).abs() <= 1e-9 && h_one_hot.abs() <= 1e-12 && violations == 0;
    outcome(
        ok,
        format!(
            "H(uniform4)-ln4 = {:.1e}, H(one-hot) = {h_one_hot}, {violations}/1000 above ln M",
            h_uniform - 4f64.ln()
        ),
    )
}

fn brc_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut out_of_range, mut asymmetric) = (0, 0);
    for _ in 0..1000 {
        let d = random_distribution(&mut rng, &VOCAB);
        let mut pool: Vec<&str> = VOCAB.to_vec();
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
        let split = rng.gen_range(1..pool.len());
        let yes_n = rng.gen_range(1..=split);
        let no_n = rng.gen_range(1..=pool.len() - split);
        let yes = AliasSet::new(pool[..yes_n].iter().copied());
        let no = AliasSet::new(pool[split..split + no_n].iter().copied());
        let aliases = match (yes, no) {
            (Ok(y), Ok(n)) => match BinaryAliases::new(y, n) {
                Ok(a) => a,
                // "no" and "▁no" normalise to the same alias
                Err(_) => continue,
            },
            _ => continue,
        };
        let s = brc_score(&d, &aliases);
        if !(-1.0..=1.0).contains(&s) {
            out_of_range += 1;
        }
        if brc_score(&d, &aliases.swapped()) != -s {
            asymmetric += 1;
        }
    }
    outcome(
        out_of_range == 0 && asymmetric == 0,
        format!("{out_of_range} out of [-1,1], {asymmetric} swap-negation failures"),
    )
}

fn covered(len: u32, spans: &[(u32, u32)]) -> bool {
    let mut spans = spans.to_vec();
    spans.sort_unstable();
    let mut reach = 0u32;
    for (start, side) in spans {
        if start > reach {
            return false;
        }
        reach = reach.max(start + side);
    }
    reach >= len
}

fn tiling_coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(16..=4096), rng.gen_range(16..=4096));
        let geom = ImageGeometry::new(w, h).unwrap();
        let crops = grid_crops(geom, 1.0 / 6.0, 0.5).unwrap();
        let in_bounds = crops.iter().all(|c| c.fits(geom));
        let mut xs: Vec<(u32, u32)> = crops.iter().map(|c| (c.x, c.side)).collect();
        let mut ys: Vec<(u32, u32)> = crops.iter().map(|c| (c.y, c.side)).collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        // crops form a full grid, so a pixel is covered iff its column and
        // its row are each covered
        let full_grid = crops.len() == xs.len() * ys.len();
        if !(in_bounds && full_grid && covered(w, &xs) && covered(h, &ys)) {
            failures.push(format!("{w}x{h}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("200 geometries, uncovered or out of bounds: {failures:?}"),
    )
}

const ZOOM_RATIOS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

fn zoom_reproduction() -> Outcome {
    let started = Instant::now();
    let scenes = SceneParams::default();
    let noisy = zoom_sweep(0..50, &ZOOM_RATIOS, &scenes, &OracleParams::default()).unwrap();
    let zooms: Vec<f64> = noisy.iter().map(|p| p.zoom).collect();
    let entropies: Vec<f64> = noisy.iter().map(|p| p.entropy).collect();
    let r = pearson(&entropies, &zooms).unwrap();
    let means: Vec<f64> = (0..ZOOM_RATIOS.len())
        .map(|i| {
            noisy
                .iter()
                .skip(i)
                .step_by(ZOOM_RATIOS.len())
                .map(|p| p.entropy)
                .sum::<f64>()
                / 50.0
        })
        .collect();
    let means_decrease = means.windows(2).all(|w| w[1] < w[0]);
    let clean = zoom_sweep(0..50, &ZOOM_RATIOS, &scenes, &OracleParams::noiseless()).unwrap();
    let monotone = clean
        .chunks(ZOOM_RATIOS.len())
        .all(|c| c.windows(2).all(|w| w[1].entropy <= w[0].entropy));
    let secs = started.elapsed().as_secs_f64();
    FIRST_RUN.lock().unwrap().push((
        5,
        noisy
            .iter()
            .map(|p| serde_json::to_string(p).unwrap())
            .collect(),
    ));
    outcome(
        r <= -0.8 && means_decrease && monotone && secs < 30.0,
        format!(
            "pearson(entropy, zoom) = {r:.4}, mean entropy by ratio {:?}, noiseless per-seed monotone = {monotone}, {secs:.1}s",
            means.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn oracle_pair(world: World, params: &OracleParams) -> BackendPair {
    BackendPair::shared(Arc::new(OracleBackend::new(world, params.clone()).unwrap()))
}

fn search_records() -> (Vec<RunRecord>, usize, usize) {
    let cfg = PipelineConfigs::default();
    let params = OracleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut records, mut centred, mut baseline_correct) = (Vec::new(), 0, 0);
    for seed in 1000..1200 {
        let (scene, image, item) = plant_scene(seed, &SceneParams::default()).unwrap();
        let source = SourceImage::new(image);
        let pair = oracle_pair(World::Scene(scene.clone()), &params);
        let out = run_item(
            &item,
            &LoadedMedia::Image(source.clone()),
            &pair,
            &cfg,
            "acceptance",
        );
        let (cx, cy) = scene.target_rect.center();
        if let Some(Selection::Crops { crops }) = &out.record.selection {
            if crops.first().is_some_and(|c| c.contains_point(cx, cy)) {
                centred += 1;
            }
        }
        // same oracle, a uniformly random grid crop instead of the least uncertain one
        let grid = grid_crops(
            scene.canvas,
            cfg.search.crop_fraction,
            cfg.search.stride_fraction,
        )
        .unwrap();
        let pick = grid[rng.gen_range(0..grid.len())];
        let answer = pair
            .answerer
            .generate(&ScoringRequest::new(
                vec![Visual::Crop {
                    source,
                    crop: pick,
                    target_side: scene.canvas.min_side(),
                }],
                mcq_prompt(&scene.question, &scene.options),
                ScoreMode::FullTrace,
            ))
            .unwrap();
        if answer.text == scene.gold_answer {
            baseline_correct += 1;
        }
        records.push(out.record);
    }
    (records, centred, baseline_correct)
}

fn accuracy(records: &[RunRecord]) -> f64 {
    let hits = records
        .iter()
        .filter(|r| matches!(r.metric, Metric::Correct { correct: true }))
        .count();
    hits as f64 / records.len() as f64
}

fn search_end_to_end() -> Outcome {
    let (records, centred, baseline_correct) = search_records();
    let n = records.len() as f64;
    let (hit_rate, acc, base) = (
        centred as f64 / n,
        accuracy(&records),
        baseline_correct as f64 / n,
    );
    FIRST_RUN.lock().unwrap().push((6, jsonl(&records)));
    outcome(
        hit_rate >= 0.95 && acc >= 0.90 && base <= 0.40,
        format!("200 scenes: target centre in winning crop {hit_rate:.3}, accuracy {acc:.3}, random-crop baseline {base:.3}"),
    )
}

fn frames_dir(kind: &str, seed: u64) -> PathBuf {
    Path::new("videos").join(format!("{kind}-{seed:05}"))
}

fn sample_records() -> (Vec<RunRecord>, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = OracleParams::default();
    let cfg = PipelineConfigs::default();
    let k1 = SampleConfig {
        top_k: 1,
        ..SampleConfig::default()
    };
    let (mut records, mut recall_sum, mut k1_mismatch) = (Vec::new(), 0.0, 0);
    for seed in 2000..2100u64 {
        // 32 consecutive frames of a 1024-frame video hold exactly 8 pool frames
        let j = rng.gen_range(0..=248usize);
        let items = synth_video(
            seed,
            1024,
            1.0,
            (4 * j, 4 * j + 31),
            &frames_dir("sample", seed),
        )
        .unwrap();
        assert_eq!(items.video.relevant_frames.len(), 8);
        let pair = oracle_pair(World::Video(items.video.clone()), &params);
        let media = LoadedMedia::Frames(items.frames.clone());
        let out = run_item(&items.mcq, &media, &pair, &cfg, "acceptance");
        if let Some(Selection::Frames { frames }) = &out.record.selection {
            let hit = items
                .video
                .relevant_frames
                .iter()
                .filter(|f| frames.contains(f))
                .count();
            recall_sum += hit as f64 / 8.0;
        }
        let single = ug_sample(
            &items.frames,
            &items.mcq.question,
            &items.mcq.options,
            &pair,
            &k1,
        )
        .unwrap();
        let pool = uniform_frame_indices(1024, k1.pool_size);
        if single.frames != vec![pool[argmin_entropy(&single.candidates).unwrap()]] {
            k1_mismatch += 1;
        }
        records.push(out.record);
    }
    let recall = recall_sum / records.len() as f64;
    (records, recall, k1_mismatch)
}

fn sample_end_to_end() -> Outcome {
    let (records, recall, k1_mismatch) = sample_records();
    FIRST_RUN.lock().unwrap().push((7, jsonl(&records)));
    outcome(
        recall >= 0.9 && k1_mismatch == 0,
        format!(
            "100 videos: mean recall {recall:.3}, accuracy {:.3}, k=1 mismatches {k1_mismatch}",
            accuracy(&records)
        ),
    )
}

fn ground_records(stride: usize) -> Vec<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = OracleParams::default();
    let mut cfg = PipelineConfigs::default();
    cfg.ground.stride = stride;
    (3000..3100u64)
        .map(|seed| {
            let total = rng.gen_range(400..=500usize);
            let len = rng.gen_range(180..=300usize);
            let start = rng.gen_range(0..=total - len);
            let items = synth_video(
                seed,
                total,
                3.0,
                (start, start + len - 1),
                &frames_dir("ground", seed),
            )
            .unwrap();
            let pair = oracle_pair(World::Video(items.video.clone()), &params);
            run_item(
                &items.grounding,
                &LoadedMedia::Frames(items.frames),
                &pair,
                &cfg,
                "acceptance",
            )
            .record
        })
        .collect()
}

fn ious(records: &[RunRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| match r.metric {
            Metric::Iou { iou } => iou,
            Metric::Correct { .. } => 0.0,
        })
        .collect()
}

fn ground_end_to_end() -> Outcome {
    let dense = ground_records(1);
    let sparse = ground_records(5);
    let (di, si) = (ious(&dense), ious(&sparse));
    let (dm, sm) = (mean_iou(&di).unwrap(), mean_iou(&si).unwrap());
    let r05 = recall_at(&di, 0.5).unwrap();
    let mut lines = jsonl(&dense);
    lines.extend(jsonl(&sparse));
    FIRST_RUN.lock().unwrap().push((8, lines));
    outcome(
        dm >= 0.85 && r05 == 1.0 && dm - sm <= 0.05,
        format!(
            "100 videos: mIoU {dm:.4}, R@0.5 {r05}, stride-5 mIoU {sm:.4} (drop {:.4})",
            dm - sm
        ),
    )
}

fn metric_oracles() -> Outcome {
    let iou = interval_iou((2.0, 8.0), (4.0, 10.0)).unwrap();
    let set = [0.31, 0.52, 0.69, 0.71];
    let tallies = (
        recall_at(&set, 0.3).unwrap(),
        recall_at(&set, 0.5).unwrap(),
        recall_at(&set, 0.7).unwrap(),
        mean_iou(&set).unwrap(),
    );
    let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 1.0, 4.0]).unwrap();
    let iou_ok = iou == 0.5;
    let tally_ok = tallies == (1.0, 0.75, 0.25, 0.5575);
    let pearson_ok = (r - 0.5).abs() <= 1e-12;
    let mut result = outcome(
        iou_ok && tally_ok && pearson_ok,
        format!(
            "iou = {iou} ({}), R@k/mIoU = {tallies:?} ({}), pearson([1,2,3],[2,1,4]) = {r} vs stated 0.5 ({})",
            if iou_ok { "ok" } else { "MISMATCH" },
            if tally_ok { "ok" } else { "MISMATCH" },
            if pearson_ok { "ok" } else { "MISMATCH" },
        ),
    );
    // 0.5 is the rank correlation of these points; the product-moment value
    // is 2/sqrt(28/3).
    result.known = iou_ok && tally_ok && (r - 2.0 / (28.0f64 / 3.0).sqrt()).abs() < 1e-12;
    result
}

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn wire_decoding() -> Outcome {
    let mut problems = Vec::new();
    for name in ["top5", "unlisted"] {
        let parsed = parse_response(&fixture(&format!("{name}.response.json"))).unwrap();
        let got = serde_json::to_string(&parsed.trace).unwrap();
        if got != fixture(&format!("{name}.trace.json")).trim_end() {
            problems.push(format!("{name}: decoded trace differs"));
        }
    }
    let top5 = parse_response(&fixture("top5.response.json")).unwrap();
    let residual = top5.trace.steps()[0].residual_mass();
    if (residual - 0.03).abs() > 1e-12 {
        problems.push(format!("top5 residual {residual}"));
    }
    for name in ["malformed_mass", "malformed_logprob"] {
        if !matches!(
            parse_response(&fixture(&format!("{name}.response.json"))),
            Err(BackendError::Malformed(_))
        ) {
            problems.push(format!("{name}: not rejected as malformed"));
        }
    }
    if !matches!(
        parse_response(&fixture("missing_logprobs.response.json")),
        Err(BackendError::MissingLogprobs { .. })
    ) {
        problems.push("missing_logprobs: not a capability error".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("2 golden traces byte-identical, top-5 residual {residual:.2}, 3 error fixtures classified")
        } else {
            problems.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let first: Vec<(u32, Vec<String>)> = FIRST_RUN.lock().unwrap().clone();
    let second: Vec<(u32, Vec<String>)> = vec![
        (
            5,
            zoom_sweep(
                0..50,
                &ZOOM_RATIOS,
                &SceneParams::default(),
                &OracleParams::default(),
            )
            .unwrap()
            .iter()
            .map(|p| serde_json::to_string(p).unwrap())
            .collect(),
        ),
        (6, jsonl(&search_records().0)),
        (7, jsonl(&sample_records().0)),
        (8, {
            let mut lines = jsonl(&ground_records(1));
            lines.extend(jsonl(&ground_records(5)));
            lines
        }),
    ];
    let mut differing = Vec::new();
    for (n, lines) in &second {
        match first.iter().find(|(m, _)| m == n) {
            Some((_, prev)) if prev == lines => {}
            _ => differing.push(*n),
        }
    }
    let total: usize = second.iter().map(|(_, l)| l.len()).sum();
    outcome(
        differing.is_empty(),
        format!(
            "{total} JSONL lines compared across criteria 5-8, differing criteria: {differing:?}"
        ),
    )
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        (1, "kadane equivalence", kadane_equivalence),
        (2, "entropy identities", entropy_identities),
        (3, "brc bounds and antisymmetry", brc_bounds),
        (4, "tiling coverage", tiling_coverage),
        (5, "zoom reproduction", zoom_reproduction),
        (6, "end-to-end search", search_end_to_end),
        (7, "end-to-end sample", sample_end_to_end),
        (8, "end-to-end ground", ground_end_to_end),
        (9, "metric oracles", metric_oracles),
        (10, "wire decoding", wire_decoding),
        (11, "determinism", determinism),
    ];
    let mut failed = 0;
    let mut unexpected = 0;
    for (n, name, check) in criteria {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let known = result.known;
        if !result.ok {
            failed += 1;
            if !known {
                unexpected += 1;
            }
        }
        println!(
            "criterion {n:>2} {} {name}: {}",
            match (result.ok, known) {
                (true, _) => "PASS",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            },
            result.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
