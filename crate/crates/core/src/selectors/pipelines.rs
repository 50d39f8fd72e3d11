use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    max_sum_subarray, top_k_lowest, CandidateRef, ScoreKind, ScoredCandidate, SelectionError,
};
use crate::backend::{
    score_all, Backend, BackendError, BackendPair, ScoreMode, ScoringRequest, SourceImage, Visual,
};
use crate::candidates::{
    grid_crops, temporal_windows, uniform_frame_indices, window_to_seconds, CandidateError,
    FrameSequence, ImageGeometry, SpatialCrop,
};
use crate::uncertainty::{brc_score, mean_token_entropy, BinaryAliases, UncertaintyError};

pub const MCQ_SUFFIX: &str = "Answer with the option's letter from the given choices directly.";

/// Yes/no prompt used to score temporal windows; `{event}` is replaced by the
/// event description.
pub const DEFAULT_GROUNDING_TEMPLATE: &str = "Given the action: {event}, is this action depicted in the video?\nA. yes\nB. no\nAnswer with the option's letter from the given choices directly.";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("answering failed: {0}")]
    Answer(#[source] BackendError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Aliases(#[from] UncertaintyError),
}

pub fn option_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// Multiple-choice prompt: question, lettered options, answer instruction.
pub fn mcq_prompt(question: &str, options: &[String]) -> String {
    let mut out = question.trim().to_string();
    for (i, opt) in options.iter().enumerate() {
        out.push('\n');
        out.push(option_letter(i));
        out.push_str(". ");
        out.push_str(opt);
    }
    out.push('\n');
    out.push_str(MCQ_SUFFIX);
    out
}

fn one_sixth() -> f64 {
    1.0 / 6.0
}
fn half() -> f64 {
    0.5
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(default = "one_sixth")]
    pub crop_fraction: f64,
    #[serde(default = "half")]
    pub stride_fraction: f64,
    #[serde(default = "one")]
    pub top_k_crops: usize,
    #[serde(default = "yes")]
    pub resize_crops: bool,
    #[serde(default)]
    pub include_original_in_answer: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            crop_fraction: one_sixth(),
            stride_fraction: half(),
            top_k_crops: 1,
            resize_crops: true,
            include_original_in_answer: false,
        }
    }
}

fn pool() -> usize {
    256
}
fn eight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    #[serde(default = "pool")]
    pub pool_size: usize,
    #[serde(default = "one")]
    pub window_len: usize,
    #[serde(default = "eight")]
    pub top_k: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            pool_size: 256,
            window_len: 1,
            top_k: 8,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.pool_size == 0 || self.window_len == 0 || self.top_k == 0 {
            return Err(PipelineError::Config(
                "pool_size, window_len and top_k must be >= 1".into(),
            ));
        }
        if self.top_k > self.pool_size {
            return Err(PipelineError::Config(format!(
                "top_k {} exceeds pool_size {}",
                self.top_k, self.pool_size
            )));
        }
        Ok(())
    }
}

fn fifteen() -> usize {
    15
}
fn yes_aliases() -> Vec<String> {
    vec!["A".into(), "yes".into()]
}
fn no_aliases() -> Vec<String> {
    vec!["B".into(), "no".into()]
}
fn template() -> String {
    DEFAULT_GROUNDING_TEMPLATE.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundConfig {
    #[serde(default = "fifteen")]
    pub window_len: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Overrides the frame sequence's own rate when set.
    #[serde(default)]
    pub fps: Option<f64>,
    #[serde(default = "yes_aliases")]
    pub yes_aliases: Vec<String>,
    #[serde(default = "no_aliases")]
    pub no_aliases: Vec<String>,
    #[serde(default = "template")]
    pub prompt_template: String,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            window_len: 15,
            stride: 1,
            fps: None,
            yes_aliases: yes_aliases(),
            no_aliases: no_aliases(),
            prompt_template: template(),
        }
    }
}

impl GroundConfig {
    pub fn aliases(&self) -> Result<BinaryAliases, PipelineError> {
        Ok(BinaryAliases::from_strs(
            &self.yes_aliases,
            &self.no_aliases,
        )?)
    }

    pub fn prompt(&self, event: &str) -> String {
        self.prompt_template.replace("{event}", event.trim())
    }
}

fn entropy_scores(
    backend: &dyn Backend,
    requests: &[ScoringRequest],
    candidates: impl Iterator<Item = CandidateRef>,
) -> Vec<ScoredCandidate> {
    score_all(backend, requests)
        .into_iter()
        .zip(candidates)
        .map(|(res, cand)| match res {
            Ok(trace) => {
                ScoredCandidate::scored(cand, ScoreKind::Entropy, mean_token_entropy(&trace))
            }
            Err(e) => {
                warn!("candidate {} unscored: {e}", cand.index());
                ScoredCandidate::unscored(cand, ScoreKind::Entropy)
            }
        })
        .collect()
}

fn unscored_count(candidates: &[ScoredCandidate]) -> usize {
    candidates.iter().filter(|c| !c.is_scored()).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub answer: String,
    /// Selected crops in row-major order; empty in degraded mode.
    pub winners: Vec<SpatialCrop>,
    pub candidates: Vec<ScoredCandidate>,
    /// Every candidate failed and the answer came from the full image.
    pub degraded: bool,
    pub unscored: usize,
}

/// Score every sliding-window crop (shown next to the full image) by mean
/// token entropy, keep the lowest-entropy crop(s), answer from them.
pub fn ug_search(
    image: &Arc<SourceImage>,
    question: &str,
    options: &[String],
    backends: &BackendPair,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::Config("empty question".into()));
    }
    if cfg.top_k_crops == 0 {
        return Err(PipelineError::Config("top_k_crops must be >= 1".into()));
    }
    let geom = ImageGeometry::of(image.raster())?;
    let crops = grid_crops(geom, cfg.crop_fraction, cfg.stride_fraction)?;
    let prompt = mcq_prompt(question, options);
    let crop_visual = |crop: &SpatialCrop| Visual::Crop {
        source: image.clone(),
        crop: *crop,
        target_side: if cfg.resize_crops {
            geom.min_side()
        } else {
            crop.side
        },
    };

    let requests: Vec<ScoringRequest> = crops
        .iter()
        .map(|c| {
            ScoringRequest::new(
                vec![Visual::Image(image.clone()), crop_visual(c)],
                prompt.clone(),
                ScoreMode::FullTrace,
            )
            .for_candidate(c.index)
        })
        .collect();
    let candidates = entropy_scores(
        &*backends.scorer,
        &requests,
        crops.iter().map(|c| CandidateRef::Spatial(*c)),
    );
    let unscored = unscored_count(&candidates);

    let (winners, visuals, degraded) = match top_k_lowest(&candidates, cfg.top_k_crops) {
        Ok(picked) => {
            let winners: Vec<SpatialCrop> = picked.iter().map(|&i| crops[i]).collect();
            let mut visuals = Vec::with_capacity(winners.len() + 1);
            if cfg.include_original_in_answer {
                visuals.push(Visual::Image(image.clone()));
            }
            visuals.extend(winners.iter().map(crop_visual));
            (winners, visuals, false)
        }
        Err(SelectionError::NothingScored) => {
            warn!("no crop could be scored; answering on the full image");
            (Vec::new(), vec![Visual::Image(image.clone())], true)
        }
        Err(e) => return Err(e.into()),
    };

    let answer = backends
        .answerer
        .generate(&ScoringRequest::new(visuals, prompt, ScoreMode::FullTrace))
        .map_err(PipelineError::Answer)?
        .text;
    Ok(SearchOutcome {
        answer,
        winners,
        candidates,
        degraded,
        unscored,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub answer: String,
    /// Frame ordinals given to the answerer, ascending.
    pub frames: Vec<usize>,
    pub candidates: Vec<ScoredCandidate>,
    pub degraded: bool,
    pub unscored: usize,
}

fn frame_visuals(frames: &FrameSequence, ordinals: &[usize]) -> Vec<Visual> {
    ordinals
        .iter()
        .map(|&ordinal| Visual::Frame {
            ordinal,
            path: frames.frame_refs()[ordinal].clone(),
        })
        .collect()
}

/// Score each candidate window from a uniform frame pool by mean token
/// entropy, keep the `top_k` least uncertain and answer once over their frames
/// in temporal order.
///
/// Windows tile the pool without overlap; with `window_len = 1` each pooled
/// frame is its own candidate.
pub fn ug_sample(
    frames: &FrameSequence,
    question: &str,
    options: &[String],
    backends: &BackendPair,
    cfg: &SampleConfig,
) -> Result<SampleOutcome, PipelineError> {
    cfg.validate()?;
    if question.trim().is_empty() {
        return Err(PipelineError::Config("empty question".into()));
    }
    let pool = uniform_frame_indices(frames.len(), cfg.pool_size);
    let windows = temporal_windows(pool.len(), cfg.window_len, cfg.window_len);
    let prompt = mcq_prompt(question, options);
    let requests: Vec<ScoringRequest> = windows
        .iter()
        .map(|w| {
            ScoringRequest::new(
                frame_visuals(frames, &pool[w.frames()]),
                prompt.clone(),
                ScoreMode::FullTrace,
            )
            .for_candidate(w.index)
        })
        .collect();
    let candidates = entropy_scores(
        &*backends.scorer,
        &requests,
        windows.iter().map(|w| CandidateRef::Temporal(*w)),
    );
    let unscored = unscored_count(&candidates);

    let (selected, degraded) = match top_k_lowest(&candidates, cfg.top_k) {
        Ok(picked) => {
            let mut ordinals: Vec<usize> = picked
                .iter()
                .flat_map(|&i| pool[windows[i].frames()].iter().copied())
                .collect();
            ordinals.sort_unstable();
            ordinals.dedup();
            (ordinals, false)
        }
        Err(SelectionError::NothingScored) => {
            warn!("no frame window could be scored; falling back to uniform frames");
            (uniform_frame_indices(frames.len(), cfg.top_k), true)
        }
        Err(e) => return Err(e.into()),
    };

    let answer = backends
        .answerer
        .generate(&ScoringRequest::new(
            frame_visuals(frames, &selected),
            prompt,
            ScoreMode::FullTrace,
        ))
        .map_err(PipelineError::Answer)?
        .text;
    Ok(SampleOutcome {
        answer,
        frames: selected,
        candidates,
        degraded,
        unscored,
    })
}

/// Predicted event span in seconds, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub subarray_sum: f64,
    pub window_indices: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundOutcome {
    pub interval: GroundingInterval,
    /// Per-window BRC, unscored windows as 0.
    pub scores: Vec<f64>,
    pub candidates: Vec<ScoredCandidate>,
    pub unscored: usize,
}

/// Score sliding windows by binary response confidence and return the
/// maximum-sum contiguous run of windows as a time interval.
pub fn ug_ground(
    frames: &FrameSequence,
    event_text: &str,
    scorer: &dyn Backend,
    cfg: &GroundConfig,
) -> Result<GroundOutcome, PipelineError> {
    if event_text.trim().is_empty() {
        return Err(PipelineError::Config("empty event text".into()));
    }
    if cfg.window_len == 0 || cfg.stride == 0 {
        return Err(PipelineError::Config(
            "window_len and stride must be >= 1".into(),
        ));
    }
    let fps = cfg.fps.unwrap_or_else(|| frames.fps());
    if !(fps.is_finite() && fps > 0.0) {
        return Err(CandidateError::BadFps(fps).into());
    }
    let aliases = cfg.aliases()?;
    let windows = temporal_windows(frames.len(), cfg.window_len, cfg.stride);
    if windows.is_empty() {
        return Err(SelectionError::EmptyScores.into());
    }
    let prompt = cfg.prompt(event_text);
    let all: Vec<usize> = (0..frames.len()).collect();
    let requests: Vec<ScoringRequest> = windows
        .iter()
        .map(|w| {
            ScoringRequest::new(
                frame_visuals(frames, &all[w.frames()]),
                prompt.clone(),
                ScoreMode::FirstTokenOnly,
            )
            .for_candidate(w.index)
        })
        .collect();

    let candidates: Vec<ScoredCandidate> = score_all(scorer, &requests)
        .into_iter()
        .zip(&windows)
        .map(|(res, w)| {
            let cand = CandidateRef::Temporal(*w);
            match res {
                Ok(trace) => ScoredCandidate::scored(
                    cand,
                    ScoreKind::Brc,
                    brc_score(trace.first_step(), &aliases),
                ),
                Err(e) => {
                    warn!("window {} unscored, counted as 0: {e}", w.index);
                    ScoredCandidate::unscored(cand, ScoreKind::Brc)
                }
            }
        })
        .collect();
    let scores: Vec<f64> = candidates.iter().map(|c| c.score.unwrap_or(0.0)).collect();
    let best = max_sum_subarray(&scores)?;
    let (start_s, _) = window_to_seconds(&windows[best.start], fps);
    let (_, end_s) = window_to_seconds(&windows[best.end], fps);
    Ok(GroundOutcome {
        interval: GroundingInterval {
            start_s,
            end_s,
            subarray_sum: best.sum,
            window_indices: (best.start, best.end),
        },
        scores,
        unscored: unscored_count(&candidates),
        candidates,
    })
}
