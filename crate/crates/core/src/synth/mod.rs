//! Seeded synthetic scenes and videos, plus an oracle backend whose
//! uncertainty falls as the evidence it is shown gets better.

mod oracle;
mod scene;
mod video;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{crop_visibility, OracleBackend, OracleParams, EOS_TOKEN, LETTERS};
pub use scene::{
    plant_scene, render_scene, zoom_series, zoom_sweep, Rect, SceneParams, SyntheticScene,
    ZoomPoint,
};
pub use video::{
    render_frame, synth_video, write_frames, SyntheticVideo, VideoItems, DEFAULT_POOL,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible geometry: {0}")]
    Geometry(String),
    #[error("invalid event interval {start}..={end} for {total} frames")]
    Interval {
        start: usize,
        end: usize,
        total: usize,
    },
    #[error("invalid oracle parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// Everything the oracle needs to know about one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum World {
    Scene(SyntheticScene),
    Video(SyntheticVideo),
}

impl World {
    pub fn seed(&self) -> u64 {
        match self {
            World::Scene(s) => s.seed,
            World::Video(v) => v.seed,
        }
    }
}

pub(crate) const COLORS: [(&str, [u8; 3]); 8] = [
    ("red", [220, 40, 40]),
    ("green", [40, 180, 60]),
    ("blue", [40, 80, 220]),
    ("yellow", [235, 210, 40]),
    ("magenta", [210, 50, 200]),
    ("cyan", [40, 200, 210]),
    ("orange", [240, 140, 30]),
    ("white", [245, 245, 245]),
];

/// Four colour names with `answer` at a random position; returns the options
/// and the gold letter.
pub(crate) fn color_options(rng: &mut impl rand::Rng, answer: usize) -> (Vec<String>, String) {
    use rand::seq::SliceRandom;
    let mut others: Vec<usize> = (0..COLORS.len()).filter(|&c| c != answer).collect();
    others.shuffle(rng);
    let mut picks = [answer, others[0], others[1], others[2]];
    picks.shuffle(rng);
    let gold = picks.iter().position(|&c| c == answer).unwrap_or(0);
    let options = picks.iter().map(|&c| COLORS[c].0.to_string()).collect();
    (options, LETTERS[gold].to_string())
}
