use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{color_options, OracleBackend, OracleParams, SynthError, World, COLORS};
use crate::backend::{Backend, BackendError, ScoreMode, ScoringRequest, SourceImage, Visual};
use crate::candidates::{ImageGeometry, SpatialCrop};
use crate::eval::{Gold, ManifestItem, Media, Task};
use crate::selectors::mcq_prompt;
use crate::uncertainty::mean_token_entropy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn area(&self) -> f64 {
        f64::from(self.w) * f64::from(self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x) + f64::from(self.w) / 2.0,
            f64::from(self.y) + f64::from(self.h) / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let ix = (f64::from(self.x + self.w).min(f64::from(other.x + other.w))
            - f64::from(self.x.max(other.x)))
        .max(0.0);
        let iy = (f64::from(self.y + self.h).min(f64::from(other.y + other.h))
            - f64::from(self.y.max(other.y)))
        .max(0.0);
        ix * iy
    }

    fn grown(&self, margin: u32) -> Rect {
        let x = self.x.saturating_sub(margin);
        let y = self.y.saturating_sub(margin);
        Rect {
            x,
            y,
            w: self.x + self.w + margin - x,
            h: self.y + self.h + margin - y,
        }
    }
}

impl From<SpatialCrop> for Rect {
    fn from(c: SpatialCrop) -> Self {
        Rect {
            x: c.x,
            y: c.y,
            w: c.side,
            h: c.side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub rect: Rect,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub min_canvas: u32,
    pub max_canvas: u32,
    pub distractor_count: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            min_canvas: 480,
            max_canvas: 960,
            distractor_count: 3,
        }
    }
}

/// A canvas with one small circle (the target) among other shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub canvas: ImageGeometry,
    pub target_rect: Rect,
    pub target_label: String,
    pub distractor_count: usize,
    pub gold_answer: String,
    pub question: String,
    pub options: Vec<String>,
    pub background: [u8; 3],
    pub target_color: [u8; 3],
    pub distractors: Vec<Shape>,
}

impl SyntheticScene {
    pub fn id(&self) -> String {
        format!("scene-{:05}", self.seed)
    }

    pub fn target_side(&self) -> u32 {
        self.target_rect.w.max(self.target_rect.h)
    }
}

fn target_side_range(min_side: u32) -> (u32, u32) {
    (min_side.div_ceil(20), min_side / 14)
}

/// Generate, render and describe one scene. Same seed, same bytes.
pub fn plant_scene(
    seed: u64,
    params: &SceneParams,
) -> Result<(SyntheticScene, RgbImage, ManifestItem), SynthError> {
    if params.min_canvas > params.max_canvas {
        return Err(SynthError::Geometry("min_canvas exceeds max_canvas".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(params.min_canvas..=params.max_canvas);
    let height = rng.gen_range(params.min_canvas..=params.max_canvas);
    let canvas =
        ImageGeometry::new(width, height).map_err(|e| SynthError::Geometry(e.to_string()))?;
    let (lo, hi) = target_side_range(canvas.min_side());
    if lo < 4 || lo > hi {
        return Err(SynthError::Geometry(format!(
            "canvas {width}x{height} too small for a target"
        )));
    }
    let side = rng.gen_range(lo..=hi);
    let target_rect = Rect {
        x: rng.gen_range(0..=width - side),
        y: rng.gen_range(0..=height - side),
        w: side,
        h: side,
    };
    let color = rng.gen_range(0..COLORS.len());
    let (options, gold_answer) = color_options(&mut rng, color);
    let shade = rng.gen_range(110u8..=140);

    let mut taken = vec![target_rect.grown(side)];
    let mut distractors = Vec::with_capacity(params.distractor_count);
    for _ in 0..params.distractor_count {
        let s = rng.gen_range(lo..=hi);
        let kind = if rng.gen_bool(0.5) {
            ShapeKind::Square
        } else {
            ShapeKind::Triangle
        };
        let c = COLORS[rng.gen_range(0..COLORS.len())].1;
        let placed = (0..200).find_map(|_| {
            let r = Rect {
                x: rng.gen_range(0..=width - s),
                y: rng.gen_range(0..=height - s),
                w: s,
                h: s,
            };
            taken
                .iter()
                .all(|t| t.intersection_area(&r) == 0.0)
                .then_some(r)
        });
        let rect =
            placed.ok_or_else(|| SynthError::Geometry("no room left for distractors".into()))?;
        taken.push(rect.grown(2));
        distractors.push(Shape {
            kind,
            rect,
            color: c,
        });
    }

    let scene = SyntheticScene {
        seed,
        canvas,
        target_rect,
        target_label: format!("{} circle", COLORS[color].0),
        distractor_count: params.distractor_count,
        gold_answer,
        question: "What is the color of the circle?".into(),
        options,
        background: [shade, shade, shade],
        target_color: COLORS[color].1,
        distractors,
    };
    let image = render_scene(&scene);
    let item = ManifestItem {
        id: scene.id(),
        task: Task::McqImage,
        media: Media::Image {
            image: format!("images/{}.png", scene.id()).into(),
        },
        question: scene.question.clone(),
        options: scene.options.clone(),
        gold: Gold::Letter(scene.gold_answer.clone()),
    };
    Ok((scene, image, item))
}

fn fill_shape(img: &mut RgbImage, shape: &Shape) {
    let r = shape.rect;
    let (cx, cy) = r.center();
    let half = f64::from(r.w) / 2.0;
    for py in r.y..(r.y + r.h).min(img.height()) {
        for px in r.x..(r.x + r.w).min(img.width()) {
            let (fx, fy) = (f64::from(px) + 0.5, f64::from(py) + 0.5);
            let inside = match shape.kind {
                ShapeKind::Square => true,
                ShapeKind::Circle => (fx - cx).powi(2) + (fy - cy).powi(2) <= half * half,
                // apex at top centre, base along the bottom edge
                ShapeKind::Triangle => {
                    let depth = (fy - f64::from(r.y)) / f64::from(r.h);
                    (fx - cx).abs() <= depth * half
                }
            };
            if inside {
                img.put_pixel(px, py, Rgb(shape.color));
            }
        }
    }
}

pub fn render_scene(scene: &SyntheticScene) -> RgbImage {
    let mut img = RgbImage::from_pixel(
        scene.canvas.width,
        scene.canvas.height,
        Rgb(scene.background),
    );
    for d in &scene.distractors {
        fill_shape(&mut img, d);
    }
    fill_shape(
        &mut img,
        &Shape {
            kind: ShapeKind::Circle,
            rect: scene.target_rect,
            color: scene.target_color,
        },
    );
    img
}

/// Square crops centred on the target, side `ratio × min(canvas)`, shifted
/// back inside the canvas where needed.
pub fn zoom_series(scene: &SyntheticScene, ratios: &[f64]) -> Vec<SpatialCrop> {
    let (w, h) = (scene.canvas.width, scene.canvas.height);
    let m = scene.canvas.min_side();
    let (cx, cy) = scene.target_rect.center();
    let place = |c: f64, side: u32, len: u32| {
        (c - f64::from(side) / 2.0)
            .round()
            .clamp(0.0, f64::from(len - side)) as u32
    };
    ratios
        .iter()
        .enumerate()
        .map(|(index, &r)| {
            let side = ((r.clamp(0.0, 1.0) * f64::from(m)).round() as u32).clamp(1, m);
            SpatialCrop {
                index,
                x: place(cx, side, w),
                y: place(cy, side, h),
                side,
            }
        })
        .collect()
}

/// Oracle entropy and answer correctness for one crop of a zoom series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomPoint {
    pub seed: u64,
    pub ratio: f64,
    /// Realized magnification: canvas short side over crop side. Differs
    /// from `1 / ratio` by pixel rounding.
    pub zoom: f64,
    pub entropy: f64,
    pub correct: bool,
}

/// Show the oracle each zoomed crop of each seed's scene.
pub fn zoom_sweep(
    seeds: impl IntoIterator<Item = u64>,
    ratios: &[f64],
    scene_params: &SceneParams,
    oracle_params: &OracleParams,
) -> Result<Vec<ZoomPoint>, SynthError> {
    let mut out = Vec::new();
    for seed in seeds {
        let (scene, image, _) = plant_scene(seed, scene_params)?;
        let source = SourceImage::new(image);
        let prompt = mcq_prompt(&scene.question, &scene.options);
        let crops = zoom_series(&scene, ratios);
        let min_side = scene.canvas.min_side();
        let gold = scene.gold_answer.clone();
        let oracle = OracleBackend::new(World::Scene(scene), oracle_params.clone())?;
        for (crop, &ratio) in crops.iter().zip(ratios) {
            let visuals = vec![Visual::Crop {
                source: Arc::clone(&source),
                crop: *crop,
                target_side: crop.side,
            }];
            let scored = ScoringRequest::new(visuals.clone(), prompt.clone(), ScoreMode::FullTrace)
                .for_candidate(crop.index);
            let entropy = mean_token_entropy(&oracle.score(&scored).map_err(to_synth)?);
            let answer = oracle
                .generate(&ScoringRequest::new(
                    visuals,
                    prompt.clone(),
                    ScoreMode::FullTrace,
                ))
                .map_err(to_synth)?;
            out.push(ZoomPoint {
                seed,
                ratio,
                zoom: f64::from(min_side) / f64::from(crop.side),
                entropy,
                correct: answer.text == gold,
            });
        }
    }
    Ok(out)
}

fn to_synth(e: BackendError) -> SynthError {
    SynthError::Params(e.to_string())
}
