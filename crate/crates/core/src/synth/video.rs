use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{color_options, SynthError, COLORS};
use crate::candidates::{uniform_frame_indices, FrameSequence};
use crate::eval::{Gold, ManifestItem, Media, Task};

/// Pool size used to decide which frames a sampling item counts as relevant.
pub const DEFAULT_POOL: usize = 256;

const FRAME_W: u32 = 64;
const FRAME_H: u32 = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub seed: u64,
    pub total_frames: usize,
    pub fps: f64,
    /// Inclusive frame range during which the marker is visible.
    pub event_interval: (usize, usize),
    /// Frames of the default candidate pool that fall inside the event.
    pub relevant_frames: Vec<usize>,
    pub event_text: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold_answer: String,
    pub marker_color: [u8; 3],
    pub shade: u8,
}

impl SyntheticVideo {
    pub fn in_event(&self, frame: usize) -> bool {
        (self.event_interval.0..=self.event_interval.1).contains(&frame)
    }

    /// Event span in seconds, end exclusive.
    pub fn gold_seconds(&self) -> (f64, f64) {
        (
            self.event_interval.0 as f64 / self.fps,
            (self.event_interval.1 + 1) as f64 / self.fps,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoItems {
    pub video: SyntheticVideo,
    pub frames: FrameSequence,
    pub grounding: ManifestItem,
    pub mcq: ManifestItem,
}

/// Describe a video whose marker shows during `event` (inclusive frames).
/// Frame paths point into `frames_dir`; nothing is written until
/// [`write_frames`].
pub fn synth_video(
    seed: u64,
    total_frames: usize,
    fps: f64,
    event: (usize, usize),
    frames_dir: &Path,
) -> Result<VideoItems, SynthError> {
    if event.0 > event.1 || event.1 >= total_frames {
        return Err(SynthError::Interval {
            start: event.0,
            end: event.1,
            total: total_frames,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let color = rng.gen_range(0..COLORS.len());
    let (options, gold_answer) = color_options(&mut rng, color);
    let video = SyntheticVideo {
        seed,
        total_frames,
        fps,
        event_interval: event,
        relevant_frames: uniform_frame_indices(total_frames, DEFAULT_POOL)
            .into_iter()
            .filter(|&f| f >= event.0 && f <= event.1)
            .collect(),
        event_text: format!("a {} square appears", COLORS[color].0),
        question: "What is the color of the square that appears in the video?".into(),
        options,
        gold_answer,
        marker_color: COLORS[color].1,
        shade: rng.gen_range(30..=90),
    };
    let frames = FrameSequence::new(
        (0..total_frames)
            .map(|i| frames_dir.join(format!("frame_{i:05}.png")))
            .collect(),
        fps,
    )
    .map_err(|e| SynthError::Geometry(e.to_string()))?;
    let media = Media::FramesDir {
        frames_dir: frames_dir.to_path_buf(),
        fps,
    };
    let (g0, g1) = video.gold_seconds();
    let grounding = ManifestItem {
        id: format!("ground-{seed:05}"),
        task: Task::Grounding,
        media: media.clone(),
        question: video.event_text.clone(),
        options: Vec::new(),
        gold: Gold::Interval([g0, g1]),
    };
    let mcq = ManifestItem {
        id: format!("sample-{seed:05}"),
        task: Task::McqVideo,
        media,
        question: video.question.clone(),
        options: video.options.clone(),
        gold: Gold::Letter(video.gold_answer.clone()),
    };
    Ok(VideoItems {
        video,
        frames,
        grounding,
        mcq,
    })
}

pub fn render_frame(video: &SyntheticVideo, ordinal: usize) -> RgbImage {
    let base = video.shade;
    let mut img = RgbImage::from_fn(FRAME_W, FRAME_H, |x, y| {
        let v = base.saturating_add(((x + y) / 4) as u8);
        Rgb([v, v, v.saturating_add(10)])
    });
    // a drifting dot so consecutive frames differ
    let dx = (ordinal as u32 * 3) % (FRAME_W - 4);
    for y in 40..44 {
        for x in dx..dx + 4 {
            img.put_pixel(x, y, Rgb([200, 200, 200]));
        }
    }
    if video.in_event(ordinal) {
        for y in 12..28 {
            for x in 24..40 {
                img.put_pixel(x, y, Rgb(video.marker_color));
            }
        }
    }
    img
}

/// Write every frame of `video` as PNG at the paths of `frames`.
pub fn write_frames(video: &SyntheticVideo, frames: &FrameSequence) -> Result<(), SynthError> {
    for (i, path) in frames.frame_refs().iter().enumerate() {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        render_frame(video, i).save_with_format(path, image::ImageFormat::Png)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_seconds_by_division() {
        let v = synth_video(1, 90, 3.0, (30, 75), Path::new("v")).unwrap();
        let (s, e) = v.video.gold_seconds();
        assert_eq!(s, 10.0);
        assert_eq!(e, 76.0 / 3.0);
        assert_eq!(v.grounding.gold_interval(), Some((10.0, 76.0 / 3.0)));
        let whole = synth_video(2, 45, 3.0, (0, 44), Path::new("v")).unwrap();
        assert_eq!(whole.grounding.gold_interval(), Some((0.0, 15.0)));
    }

    #[test]
    fn relevant_frames_are_pool_frames_in_event() {
        let v = synth_video(5, 1024, 1.0, (400, 431), Path::new("v"))
            .unwrap()
            .video;
        assert_eq!(v.relevant_frames.len(), 8);
        assert!(v.relevant_frames.iter().all(|&f| v.in_event(f)));
    }

    #[test]
    fn bad_interval_rejected() {
        assert!(synth_video(1, 10, 1.0, (5, 10), Path::new("v")).is_err());
        assert!(synth_video(1, 10, 1.0, (6, 5), Path::new("v")).is_err());
    }

    #[test]
    fn frames_are_deterministic_and_marked() {
        let dir = tempfile::tempdir().unwrap();
        let a = synth_video(8, 12, 2.0, (3, 6), &dir.path().join("a")).unwrap();
        let b = synth_video(8, 12, 2.0, (3, 6), &dir.path().join("b")).unwrap();
        write_frames(&a.video, &a.frames).unwrap();
        write_frames(&b.video, &b.frames).unwrap();
        for (pa, pb) in a.frames.frame_refs().iter().zip(b.frames.frame_refs()) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        let seq = FrameSequence::from_dir(&dir.path().join("a"), 2.0).unwrap();
        assert_eq!(seq.len(), 12);
        assert_eq!(
            render_frame(&a.video, 4).get_pixel(30, 20).0,
            a.video.marker_color
        );
        assert_ne!(
            render_frame(&a.video, 8).get_pixel(30, 20).0,
            a.video.marker_color
        );
    }
}
