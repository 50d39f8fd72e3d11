//! Selection primitives over scored candidates and the three
//! score-then-answer pipelines built on them.

mod pipelines;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{SpatialCrop, TemporalWindow};

pub use pipelines::{
    mcq_prompt, option_letter, ug_ground, ug_sample, ug_search, GroundConfig, GroundOutcome,
    GroundingInterval, PipelineError, SampleConfig, SampleOutcome, SearchConfig, SearchOutcome,
    DEFAULT_GROUNDING_TEMPLATE, MCQ_SUFFIX,
};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("no candidate could be scored")]
    NothingScored,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("score sequence is empty")]
    EmptyScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateRef {
    Spatial(SpatialCrop),
    Temporal(TemporalWindow),
}

impl CandidateRef {
    pub fn index(&self) -> usize {
        match self {
            CandidateRef::Spatial(c) => c.index,
            CandidateRef::Temporal(w) => w.index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Entropy,
    Brc,
}

/// A candidate with its uncertainty score; `score` is `None` when the
/// backend failed for this candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: CandidateRef,
    pub score: Option<f64>,
    pub kind: ScoreKind,
}

impl ScoredCandidate {
    pub fn scored(candidate: CandidateRef, kind: ScoreKind, score: f64) -> Self {
        Self {
            candidate,
            score: Some(score),
            kind,
        }
    }

    pub fn unscored(candidate: CandidateRef, kind: ScoreKind) -> Self {
        Self {
            candidate,
            score: None,
            kind,
        }
    }

    pub fn is_scored(&self) -> bool {
        self.score.is_some()
    }
}

fn scored_positions(candidates: &[ScoredCandidate]) -> Vec<(usize, f64)> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.score.map(|s| (i, s)))
        .collect()
}

/// Position of the lowest score among scored candidates; ties go to the
/// earliest position.
pub fn argmin_entropy(candidates: &[ScoredCandidate]) -> Result<usize, SelectionError> {
    scored_positions(candidates)
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, b)) if b <= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
        .ok_or(SelectionError::NothingScored)
}

/// Positions of the `k` lowest scores, returned in ascending position order.
pub fn top_k_lowest(
    candidates: &[ScoredCandidate],
    k: usize,
) -> Result<Vec<usize>, SelectionError> {
    if k == 0 {
        return Err(SelectionError::ZeroK);
    }
    let mut scored = scored_positions(candidates);
    if scored.is_empty() {
        return Err(SelectionError::NothingScored);
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = scored.into_iter().take(k).map(|(i, _)| i).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Inclusive index range of a maximum-sum contiguous run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subarray {
    pub start: usize,
    pub end: usize,
    pub sum: f64,
}

/// Kadane's scan with a restart whenever the running sum is not positive;
/// the best range only moves on a strict improvement.
pub fn max_sum_subarray(scores: &[f64]) -> Result<Subarray, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::EmptyScores);
    }
    let mut max_sum = f64::NEG_INFINITY;
    let mut current_sum = 0.0;
    let (mut start, mut end, mut temp_start) = (0, 0, 0);
    for (i, &s) in scores.iter().enumerate() {
        if current_sum <= 0.0 {
            current_sum = s;
            temp_start = i;
        } else {
            current_sum += s;
        }
        if current_sum > max_sum {
            max_sum = current_sum;
            start = temp_start;
            end = i;
        }
    }
    Ok(Subarray {
        start,
        end,
        sum: max_sum,
    })
}
