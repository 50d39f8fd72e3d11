use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ug_core::backend::BackendConfig;
use ug_core::eval::PipelineConfigs;
use ug_core::synth::{OracleParams, SceneParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Remote,
    /// Synthetic oracle; needs the `worlds/` sidecars written by `ug synth`.
    Oracle,
}

/// Item seeds are distinct five-digit numbers.
pub const MAX_ITEMS: usize = 100_000;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub items_in_flight: usize,
    /// Items allowed to fail at the backend before the run is abandoned.
    #[serde(default)]
    pub max_backend_failures: usize,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            out: None,
            seed: None,
            items_in_flight: 1,
            max_backend_failures: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub search_items: usize,
    pub ground_items: usize,
    pub sample_items: usize,
    pub scene: SceneParams,
    pub sample_frames: usize,
    pub sample_fps: f64,
    pub sample_event_frames: usize,
    /// Inclusive range the grounding video length is drawn from.
    pub ground_frames: (usize, usize),
    pub ground_fps: f64,
    pub ground_event_frames: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            search_items: 0,
            ground_items: 0,
            sample_items: 0,
            scene: SceneParams::default(),
            sample_frames: 1024,
            sample_fps: 1.0,
            sample_event_frames: 32,
            ground_frames: (400, 500),
            ground_fps: 3.0,
            ground_event_frames: (180, 300),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(format!("synth: {m}")));
        if [self.search_items, self.ground_items, self.sample_items]
            .iter()
            .any(|&n| n > MAX_ITEMS)
        {
            return bad("at most 100000 items of each kind");
        }
        if self.sample_event_frames == 0 || self.sample_event_frames > self.sample_frames {
            return bad("sample_event_frames must be in 1..=sample_frames");
        }
        let (lo, hi) = self.ground_frames;
        let (elo, ehi) = self.ground_event_frames;
        if lo == 0 || lo > hi {
            return bad("ground_frames must be a non-empty range of positive lengths");
        }
        if elo == 0 || elo > ehi || ehi > lo {
            return bad("ground_event_frames must be a non-empty range within the shortest video");
        }
        for fps in [self.sample_fps, self.ground_fps] {
            if !(fps.is_finite() && fps > 0.0) {
                return bad("fps must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateConfig {
    pub ratios: Vec<f64>,
    pub seeds: u64,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        Self {
            ratios: vec![1.0, 0.5, 0.25, 0.125],
            seeds: 50,
        }
    }
}

fn info() -> String {
    "info".into()
}

/// Everything a run needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub scorer: BackendConfig,
    /// Defaults to the scorer.
    #[serde(default)]
    pub answerer: Option<BackendConfig>,
    #[serde(default)]
    pub pipelines: PipelineConfigs,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub correlate: CorrelateConfig,
    #[serde(default = "info")]
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields that determine run output; paths and logging are left out so
    /// the same run in another directory fingerprints the same.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Fp<'a> {
            backend: BackendKind,
            scorer: &'a BackendConfig,
            answerer: &'a BackendConfig,
            pipelines: &'a PipelineConfigs,
            oracle: Option<&'a OracleParams>,
        }
        ug_core::eval::config_hash(&Fp {
            backend: self.backend,
            scorer: &self.scorer,
            answerer: self.answerer.as_ref().unwrap_or(&self.scorer),
            pipelines: &self.pipelines,
            oracle: (self.backend == BackendKind::Oracle).then_some(&self.oracle),
        })
    }
}
