use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::manifest::{LoadedMedia, ManifestItem, Task};
use super::metrics::{interval_iou, normalize_answer};
use super::record::{Metric, Prediction, RunRecord, Selection};
use crate::backend::{bounded_map, BackendPair};
use crate::selectors::{
    ug_ground, ug_sample, ug_search, GroundConfig, PipelineError, SampleConfig, ScoredCandidate,
    SearchConfig,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfigs {
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub ground: GroundConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemOutcome {
    pub record: RunRecord,
    /// Answering failed at the backend, or no candidate could be scored.
    pub backend_failure: bool,
}

type Graded = (Vec<Option<f64>>, Selection, Prediction, Metric);

fn scores(cands: &[ScoredCandidate]) -> Vec<Option<f64>> {
    cands.iter().map(|c| c.score).collect()
}

fn failed_metric(task: Task) -> Metric {
    match task {
        Task::Grounding => Metric::Iou { iou: 0.0 },
        _ => Metric::Correct { correct: false },
    }
}

fn mcq_metric(item: &ManifestItem, answer: &str) -> Metric {
    Metric::Correct {
        correct: normalize_answer(answer, item.options.len())
            .zip(item.gold_letter())
            .is_some_and(|(a, g)| a == g),
    }
}

/// Run the pipeline matching the item's task and grade it.
pub fn run_item(
    item: &ManifestItem,
    media: &LoadedMedia,
    backends: &BackendPair,
    cfg: &PipelineConfigs,
    config_hash: &str,
) -> ItemOutcome {
    let started = Instant::now();
    let mut flags = Vec::new();
    let mut backend_failure = false;
    let result: Result<Graded, PipelineError> = match (item.task, media) {
        (Task::McqImage, LoadedMedia::Image(img)) => {
            ug_search(img, &item.question, &item.options, backends, &cfg.search).map(|o| {
                if o.degraded {
                    flags.push("degraded".into());
                    backend_failure = true;
                }
                if o.unscored > 0 {
                    flags.push(format!("unscored={}", o.unscored));
                }
                let metric = mcq_metric(item, &o.answer);
                (
                    scores(&o.candidates),
                    Selection::Crops { crops: o.winners },
                    Prediction::Answer(o.answer),
                    metric,
                )
            })
        }
        (Task::McqVideo, LoadedMedia::Frames(frames)) => {
            ug_sample(frames, &item.question, &item.options, backends, &cfg.sample).map(|o| {
                if o.degraded {
                    flags.push("degraded".into());
                    backend_failure = true;
                }
                if o.unscored > 0 {
                    flags.push(format!("unscored={}", o.unscored));
                }
                let metric = mcq_metric(item, &o.answer);
                (
                    scores(&o.candidates),
                    Selection::Frames { frames: o.frames },
                    Prediction::Answer(o.answer),
                    metric,
                )
            })
        }
        (Task::Grounding, LoadedMedia::Frames(frames)) => {
            ug_ground(frames, &item.question, &*backends.scorer, &cfg.ground).map(|o| {
                if o.unscored > 0 {
                    flags.push(format!("unscored={}", o.unscored));
                    if o.unscored == o.scores.len() {
                        backend_failure = true;
                    }
                }
                let iv = o.interval;
                let iou = item
                    .gold_interval()
                    .and_then(|g| interval_iou((iv.start_s, iv.end_s), g).ok())
                    .unwrap_or(0.0);
                (
                    scores(&o.candidates),
                    Selection::Windows {
                        window_indices: iv.window_indices,
                        interval: "half-open".into(),
                    },
                    Prediction::Interval([iv.start_s, iv.end_s]),
                    Metric::Iou { iou },
                )
            })
        }
        _ => Err(PipelineError::Config(format!(
            "media does not match task {}",
            item.task.as_str()
        ))),
    };
    let (scores, selection, prediction, metric) = match result {
        Ok((s, sel, p, m)) => (s, Some(sel), Some(p), m),
        Err(e) => {
            if matches!(e, PipelineError::Answer(_)) {
                backend_failure = true;
            }
            warn!("item {} failed: {e}", item.id);
            flags.push(format!("error={e}"));
            (Vec::new(), None, None, failed_metric(item.task))
        }
    };
    ItemOutcome {
        record: RunRecord {
            item_id: item.id.clone(),
            config_hash: config_hash.to_string(),
            scores,
            selection,
            prediction,
            metric,
            elapsed_ms: started.elapsed().as_millis() as u64,
            flags,
        },
        backend_failure,
    }
}

fn error_outcome(item: &ManifestItem, config_hash: &str, message: String) -> ItemOutcome {
    warn!("item {} skipped: {message}", item.id);
    ItemOutcome {
        record: RunRecord {
            item_id: item.id.clone(),
            config_hash: config_hash.to_string(),
            scores: Vec::new(),
            selection: None,
            prediction: None,
            metric: failed_metric(item.task),
            elapsed_ms: 0,
            flags: vec![format!("error={message}")],
        },
        backend_failure: false,
    }
}

/// Evaluate items with up to `items_in_flight` running at once. Media paths
/// resolve against `base_dir`; `backends_for` supplies each item's backends.
/// Outcomes come back in item order.
pub fn run_items<P>(
    items: &[ManifestItem],
    base_dir: &Path,
    backends_for: P,
    cfg: &PipelineConfigs,
    config_hash: &str,
    items_in_flight: usize,
) -> Vec<ItemOutcome>
where
    P: Fn(&ManifestItem) -> Result<BackendPair, String> + Sync,
{
    bounded_map(items.len(), items_in_flight, |i| {
        let item = &items[i];
        let media = match item.load_media(base_dir) {
            Ok(m) => m,
            Err(e) => return error_outcome(item, config_hash, e),
        };
        let backends = match backends_for(item) {
            Ok(b) => b,
            Err(e) => return error_outcome(item, config_hash, e),
        };
        let out = run_item(item, &media, &backends, cfg, config_hash);
        info!("item {} done in {} ms", item.id, out.record.elapsed_ms);
        out
    })
}
