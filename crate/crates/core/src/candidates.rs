//! Candidate generation: square sliding-window crops over an image, temporal
//! windows and uniform frame pools over a frame sequence.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("image geometry must be positive, got {width}x{height}")]
    EmptyGeometry { width: u32, height: u32 },
    #[error("{name} must lie in (0, 1], got {value}")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("crop side rounds to zero pixels")]
    ZeroCropSide,
    #[error("crop {crop:?} does not fit inside a {width}x{height} image")]
    CropOutOfBounds {
        crop: SpatialCrop,
        width: u32,
        height: u32,
    },
    #[error("target side must be at least 1 pixel")]
    ZeroTarget,
    #[error("frame sequence is empty")]
    EmptyFrames,
    #[error("fps must be finite and positive, got {0}")]
    BadFps(f64),
    #[error("failed to list frames in {path}: {source}")]
    FrameDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: u32,
    pub height: u32,
}

impl ImageGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self, CandidateError> {
        if width == 0 || height == 0 {
            return Err(CandidateError::EmptyGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn of(image: &RgbImage) -> Result<Self, CandidateError> {
        Self::new(image.width(), image.height())
    }

    pub fn min_side(&self) -> u32 {
        self.width.min(self.height)
    }
}

/// Square crop window with its top-left corner at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialCrop {
    pub index: usize,
    pub x: u32,
    pub y: u32,
    pub side: u32,
}

impl SpatialCrop {
    pub fn fits(&self, geom: ImageGeometry) -> bool {
        self.side >= 1
            && u64::from(self.x) + u64::from(self.side) <= u64::from(geom.width)
            && u64::from(self.y) + u64::from(self.side) <= u64::from(geom.height)
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        let (x0, y0) = (f64::from(self.x), f64::from(self.y));
        let s = f64::from(self.side);
        px >= x0 && px < x0 + s && py >= y0 && py < y0 + s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalWindow {
    pub index: usize,
    pub start_frame: usize,
    pub length: usize,
}

impl TemporalWindow {
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.length
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start_frame..self.end_frame()
    }
}

/// Ordered frames of a pre-extracted video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    frame_refs: Vec<PathBuf>,
    fps: f64,
}

impl FrameSequence {
    pub fn new(frame_refs: Vec<PathBuf>, fps: f64) -> Result<Self, CandidateError> {
        if frame_refs.is_empty() {
            return Err(CandidateError::EmptyFrames);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(CandidateError::BadFps(fps));
        }
        Ok(Self { frame_refs, fps })
    }

    /// Image files in `dir`, ordered lexicographically by file name.
    pub fn from_dir(dir: &Path, fps: f64) -> Result<Self, CandidateError> {
        let entries = std::fs::read_dir(dir).map_err(|source| CandidateError::FrameDir {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut frames = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| CandidateError::FrameDir {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            if is_raster_path(&path) {
                frames.push(path);
            }
        }
        frames.sort();
        Self::new(frames, fps)
    }

    pub fn frame_refs(&self) -> &[PathBuf] {
        &self.frame_refs
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frame_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_refs.is_empty()
    }
}

pub fn is_raster_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Window start offsets along one axis; the last window is pulled back so it
/// ends exactly at `len`.
fn axis_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if window >= len {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        if pos + window >= len {
            out.push(len - window);
            break;
        }
        out.push(pos);
        pos += stride;
    }
    out
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), CandidateError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(CandidateError::FractionOutOfRange { name, value })
    }
}

/// Square sliding-window crops in row-major order.
///
/// The crop side is `crop_fraction` of the smaller image dimension and the
/// stride is `stride_fraction` of the crop side. The last window on each axis
/// is clamped to the image edge, so every pixel is covered.
pub fn grid_crops(
    geom: ImageGeometry,
    crop_fraction: f64,
    stride_fraction: f64,
) -> Result<Vec<SpatialCrop>, CandidateError> {
    check_fraction("crop_fraction", crop_fraction)?;
    check_fraction("stride_fraction", stride_fraction)?;
    let side = (f64::from(geom.min_side()) * crop_fraction).round() as usize;
    if side == 0 {
        return Err(CandidateError::ZeroCropSide);
    }
    let stride = ((side as f64 * stride_fraction).round() as usize).max(1);
    let xs = axis_starts(geom.width as usize, side, stride);
    let ys = axis_starts(geom.height as usize, side, stride);
    let mut crops = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            crops.push(SpatialCrop {
                index: crops.len(),
                x: x as u32,
                y: y as u32,
                side: side as u32,
            });
        }
    }
    Ok(crops)
}

/// Midpoint-placed uniform sample of `pool_size` frame ordinals.
pub fn uniform_frame_indices(total_frames: usize, pool_size: usize) -> Vec<usize> {
    if total_frames <= pool_size {
        return (0..total_frames).collect();
    }
    let mut out: Vec<usize> = (0..pool_size)
        .map(|i| ((2 * i + 1) * total_frames) / (2 * pool_size))
        .collect();
    out.dedup();
    out
}

pub fn temporal_windows(
    total_frames: usize,
    window_len: usize,
    stride: usize,
) -> Vec<TemporalWindow> {
    if total_frames == 0 {
        return Vec::new();
    }
    let window_len = window_len.max(1);
    let length = window_len.min(total_frames);
    axis_starts(total_frames, window_len, stride.max(1))
        .into_iter()
        .enumerate()
        .map(|(index, start_frame)| TemporalWindow {
            index,
            start_frame,
            length,
        })
        .collect()
}

/// Half-open `[start, end)` seconds covered by a window.
pub fn window_to_seconds(window: &TemporalWindow, fps: f64) -> (f64, f64) {
    (
        window.start_frame as f64 / fps,
        window.end_frame() as f64 / fps,
    )
}

/// Extract a square crop and rescale it to `target_side` with bilinear
/// sampling (pixel-center aligned, edge-clamped).
pub fn render_crop(
    image: &RgbImage,
    crop: &SpatialCrop,
    target_side: u32,
) -> Result<RgbImage, CandidateError> {
    let geom = ImageGeometry::of(image)?;
    if !crop.fits(geom) {
        return Err(CandidateError::CropOutOfBounds {
            crop: *crop,
            width: geom.width,
            height: geom.height,
        });
    }
    if target_side == 0 {
        return Err(CandidateError::ZeroTarget);
    }
    let scale = f64::from(crop.side) / f64::from(target_side);
    let max_src = f64::from(crop.side - 1);
    // per-axis (lower index, weight of upper neighbour), shared by x and y
    let taps: Vec<(u32, f64)> = (0..target_side)
        .map(|d| {
            let s = ((f64::from(d) + 0.5) * scale - 0.5).clamp(0.0, max_src);
            let lo = s.floor();
            (lo as u32, s - lo)
        })
        .collect();
    let hi = |lo: u32| (lo + 1).min(crop.side - 1);

    let mut out = RgbImage::new(target_side, target_side);
    for (dy, &(y0, wy)) in taps.iter().enumerate() {
        let y1 = hi(y0);
        for (dx, &(x0, wx)) in taps.iter().enumerate() {
            let x1 = hi(x0);
            let p00 = image.get_pixel(crop.x + x0, crop.y + y0);
            let p10 = image.get_pixel(crop.x + x1, crop.y + y0);
            let p01 = image.get_pixel(crop.x + x0, crop.y + y1);
            let p11 = image.get_pixel(crop.x + x1, crop.y + y1);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - wx) + f64::from(p10[c]) * wx;
                let bottom = f64::from(p01[c]) * (1.0 - wx) + f64::from(p11[c]) * wx;
                px[c] = (top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(dx as u32, dy as u32, Rgb(px));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(w: u32, h: u32) -> ImageGeometry {
        ImageGeometry::new(w, h).unwrap()
    }

    #[test]
    fn exact_tiling() {
        let crops = grid_crops(geom(600, 600), 0.5, 1.0).unwrap();
        let origins: Vec<(u32, u32)> = crops.iter().map(|c| (c.x, c.y)).collect();
        assert_eq!(origins, vec![(0, 0), (300, 0), (0, 300), (300, 300)]);
        assert!(crops.iter().all(|c| c.side == 300));

        // half-side stride adds the midpoint on each axis
        let crops = grid_crops(geom(600, 600), 0.5, 0.5).unwrap();
        assert_eq!(crops.len(), 9);
    }

    #[test]
    fn default_grid_on_wide_image() {
        // positions enumerated by hand: x in 0..=1100 step 50, y in 0..=500 step 50
        let crops = grid_crops(geom(1200, 600), 1.0 / 6.0, 0.5).unwrap();
        assert_eq!(crops.len(), 23 * 11);
        assert!(crops.iter().all(|c| c.side == 100));
        assert_eq!(crops.last().map(|c| (c.x, c.y)), Some((1100, 500)));
        assert!(crops.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn whole_image_crop() {
        let crops = grid_crops(geom(100, 100), 1.0, 0.5).unwrap();
        assert_eq!(
            crops,
            vec![SpatialCrop {
                index: 0,
                x: 0,
                y: 0,
                side: 100
            }]
        );
    }

    #[test]
    fn last_window_is_clamped() {
        // side 40, stride 20 on 110 px: 0,20,40,60 then clamp to 70
        let crops = grid_crops(geom(110, 40), 1.0, 0.5).unwrap();
        let xs: Vec<u32> = crops.iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![0, 20, 40, 60, 70]);
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(matches!(
            grid_crops(geom(4, 4), 0.1, 0.5),
            Err(CandidateError::ZeroCropSide)
        ));
        assert!(grid_crops(geom(4, 4), 0.0, 0.5).is_err());
        assert!(grid_crops(geom(4, 4), 0.5, 1.5).is_err());
        assert!(ImageGeometry::new(0, 3).is_err());
    }

    #[test]
    fn uniform_indices_examples() {
        assert_eq!(uniform_frame_indices(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(uniform_frame_indices(4, 8), vec![0, 1, 2, 3]);
        assert_eq!(
            uniform_frame_indices(100, 10),
            vec![5, 15, 25, 35, 45, 55, 65, 75, 85, 95]
        );
    }

    #[test]
    fn temporal_window_examples() {
        let w = temporal_windows(5, 1, 1);
        assert_eq!(w.len(), 5);
        assert!(w
            .iter()
            .enumerate()
            .all(|(i, w)| w.start_frame == i && w.length == 1));

        let w = temporal_windows(20, 15, 1);
        let starts: Vec<usize> = w.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 1, 2, 3, 4, 5]);

        let w = temporal_windows(10, 15, 1);
        assert_eq!(
            w,
            vec![TemporalWindow {
                index: 0,
                start_frame: 0,
                length: 10
            }]
        );

        let w = temporal_windows(22, 15, 5);
        let starts: Vec<usize> = w.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 5, 7]);
    }

    #[test]
    fn seconds_mapping() {
        let w = |start_frame, length| TemporalWindow {
            index: 0,
            start_frame,
            length,
        };
        assert_eq!(window_to_seconds(&w(0, 15), 3.0), (0.0, 5.0));
        assert_eq!(window_to_seconds(&w(30, 15), 3.0), (10.0, 15.0));
        assert_eq!(window_to_seconds(&w(7, 1), 1.0), (7.0, 8.0));
    }

    #[test]
    fn frame_sequence_validation() {
        assert!(matches!(
            FrameSequence::new(vec![], 3.0),
            Err(CandidateError::EmptyFrames)
        ));
        assert!(FrameSequence::new(vec!["a.png".into()], 0.0).is_err());
        assert!(FrameSequence::new(vec!["a.png".into()], f64::NAN).is_err());
    }

    #[test]
    fn frames_from_dir_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "c.jpg", "notes.txt"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let seq = FrameSequence::from_dir(dir.path(), 2.0).unwrap();
        let names: Vec<_> = seq
            .frame_refs()
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, vec!["a.png", "b.png", "c.jpg"]);
    }

    #[test]
    fn identity_render() {
        let img = RgbImage::from_fn(5, 5, |x, y| Rgb([x as u8 * 40, y as u8 * 40, 7]));
        let crop = SpatialCrop {
            index: 0,
            x: 0,
            y: 0,
            side: 5,
        };
        assert_eq!(render_crop(&img, &crop, 5).unwrap(), img);
    }

    #[test]
    fn checkerboard_upscale() {
        // 2x2 [[0,255],[255,0]] to 4x4. Source coordinate for output d is
        // d/2 - 0.25 clamped to [0,1], i.e. taps (0,0) (0,.25) (0,.75) (1,0).
        let img = RgbImage::from_fn(2, 2, |x, y| {
            if (x + y) % 2 == 0 {
                Rgb([0, 0, 0])
            } else {
                Rgb([255, 255, 255])
            }
        });
        let crop = SpatialCrop {
            index: 0,
            x: 0,
            y: 0,
            side: 2,
        };
        let out = render_crop(&img, &crop, 4).unwrap();
        let expected: [[u8; 4]; 4] = [
            [0, 64, 191, 255],
            [64, 96, 159, 191],
            [191, 159, 96, 64],
            [255, 191, 64, 0],
        ];
        for (y, row) in expected.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                assert_eq!(out.get_pixel(x as u32, y as u32)[0], *v, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn single_pixel_crop_is_constant() {
        let img = RgbImage::from_fn(3, 3, |x, y| Rgb([(x * 3 + y) as u8 * 10, 1, 2]));
        let crop = SpatialCrop {
            index: 0,
            x: 1,
            y: 2,
            side: 1,
        };
        let out = render_crop(&img, &crop, 3).unwrap();
        assert!(out.pixels().all(|p| *p == *img.get_pixel(1, 2)));
    }

    #[test]
    fn render_rejects_out_of_bounds() {
        let img = RgbImage::new(4, 4);
        let crop = SpatialCrop {
            index: 0,
            x: 2,
            y: 0,
            side: 3,
        };
        assert!(matches!(
            render_crop(&img, &crop, 4),
            Err(CandidateError::CropOutOfBounds { .. })
        ));
    }

    proptest! {
        #[test]
        fn crops_in_bounds_and_ordered(w in 1u32..3000, h in 1u32..3000, frac in 0.05f64..1.0, stride in 0.1f64..1.0) {
            let g = geom(w, h);
            if let Ok(crops) = grid_crops(g, frac, stride) {
                prop_assert!(crops.iter().all(|c| c.fits(g)));
                let mut origins: Vec<(u32, u32)> = crops.iter().map(|c| (c.y, c.x)).collect();
                let sorted = { let mut s = origins.clone(); s.sort(); s };
                prop_assert_eq!(&origins, &sorted);
                origins.dedup();
                prop_assert_eq!(origins.len(), crops.len());
            }
        }

        #[test]
        fn frame_pool_strictly_increasing(total in 1usize..5000, pool in 1usize..600) {
            let idx = uniform_frame_indices(total, pool);
            prop_assert_eq!(idx.len(), total.min(pool));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < total));
        }

        #[test]
        fn windows_cover_timeline(total in 1usize..500, len in 1usize..40, stride in 1usize..20) {
            let ws = temporal_windows(total, len, stride);
            prop_assert!(ws.windows(2).all(|p| p[0].start_frame < p[1].start_frame));
            prop_assert!(ws.iter().all(|w| w.length >= 1 && w.end_frame() <= total));
            prop_assert_eq!(ws.last().unwrap().end_frame(), total);
            prop_assert_eq!(ws[0].start_frame, 0);
            let secs: Vec<f64> = ws.iter().map(|w| window_to_seconds(w, 3.0).0).collect();
            prop_assert!(secs.windows(2).all(|p| p[0] < p[1]));
        }
    }
}
