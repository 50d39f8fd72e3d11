use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ug_core::eval::{write_manifest, ManifestItem, Media};
use ug_core::synth::{plant_scene, synth_video, write_frames, World};

use crate::config::{RunConfig, SynthConfig};
use crate::error::{io_err, CliError};
use crate::run::WORLDS_DIR;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const IMAGES_DIR: &str = "images";
const VIDEOS_DIR: &str = "videos";

/// Distinct per-item seeds below 100000 so ids keep five digits.
fn item_seeds(seed: u64, stream: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = rng.gen_range(0..100_000u64);
        if seen.insert(s) {
            out.push(s);
        }
    }
    out
}

fn write_world(dir: &Path, id: &str, world: &World) -> Result<(), CliError> {
    let path = dir.join(WORLDS_DIR).join(format!("{id}.json"));
    let json = serde_json::to_string_pretty(world).expect("world serializes");
    std::fs::write(&path, json + "\n").map_err(io_err(&path))
}

fn prepare_dir(out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map_err(io_err(out))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Config(format!(
                "{} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
        for name in [IMAGES_DIR, VIDEOS_DIR, WORLDS_DIR] {
            let p = out.join(name);
            if p.is_dir() {
                std::fs::remove_dir_all(&p).map_err(io_err(&p))?;
            }
        }
        let m = out.join(MANIFEST_FILE);
        if m.is_file() {
            std::fs::remove_file(&m).map_err(io_err(&m))?;
        }
    }
    for name in [IMAGES_DIR, VIDEOS_DIR, WORLDS_DIR] {
        let p = out.join(name);
        std::fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    Ok(())
}

enum VideoKind {
    Ground,
    Sample,
}

fn video_item(
    out: &Path,
    synth: &SynthConfig,
    seed: u64,
    kind: VideoKind,
) -> Result<ManifestItem, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (total, fps, len) = match kind {
        VideoKind::Ground => {
            let total = rng.gen_range(synth.ground_frames.0..=synth.ground_frames.1);
            let (lo, hi) = synth.ground_event_frames;
            (total, synth.ground_fps, rng.gen_range(lo..=hi.min(total)))
        }
        VideoKind::Sample => (
            synth.sample_frames,
            synth.sample_fps,
            synth.sample_event_frames,
        ),
    };
    let start = rng.gen_range(0..=total - len);
    let prefix = match kind {
        VideoKind::Ground => "ground",
        VideoKind::Sample => "sample",
    };
    let rel = PathBuf::from(VIDEOS_DIR).join(format!("{prefix}-{seed:05}"));
    let items = synth_video(seed, total, fps, (start, start + len - 1), &out.join(&rel))
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_frames(&items.video, &items.frames).map_err(|e| CliError::Io(e.to_string()))?;
    let mut item = match kind {
        VideoKind::Ground => items.grounding,
        VideoKind::Sample => items.mcq,
    };
    item.media = Media::FramesDir {
        frames_dir: rel,
        fps,
    };
    write_world(out, &item.id, &World::Video(items.video))?;
    Ok(item)
}

/// Generate scenes and videos with their manifest and oracle sidecars.
pub fn cmd_synth(cfg: &RunConfig, force: bool) -> Result<PathBuf, CliError> {
    let seed = cfg
        .io
        .seed
        .ok_or_else(|| CliError::Config("synth needs a seed (--seed)".into()))?;
    let out = cfg
        .io
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory given (--out)".into()))?;
    let synth = &cfg.synth;
    synth.validate()?;
    prepare_dir(&out, force)?;

    let mut items = Vec::new();
    for s in item_seeds(seed, 0, synth.search_items) {
        let (scene, image, item) =
            plant_scene(s, &synth.scene).map_err(|e| CliError::Config(e.to_string()))?;
        let Media::Image { image: rel } = &item.media else {
            unreachable!("scenes are single images")
        };
        let path = out.join(rel);
        image
            .save(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        write_world(&out, &item.id, &World::Scene(scene))?;
        items.push(item);
    }
    for s in item_seeds(seed, 1, synth.ground_items) {
        items.push(video_item(&out, synth, s, VideoKind::Ground)?);
    }
    for s in item_seeds(seed, 2, synth.sample_items) {
        items.push(video_item(&out, synth, s, VideoKind::Sample)?);
    }
    let manifest = out.join(MANIFEST_FILE);
    write_manifest(&items, &manifest).map_err(io_err(&manifest))?;
    info!("wrote {} items to {}", items.len(), manifest.display());
    println!("{} items -> {}", items.len(), manifest.display());
    Ok(manifest)
}
