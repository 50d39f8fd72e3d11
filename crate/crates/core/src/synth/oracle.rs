use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::Rect;
use super::{SynthError, World};
use crate::backend::{Backend, BackendError, Generation, ScoreMode, ScoringRequest, Visual};
use crate::uncertainty::{shannon_entropy, GenerationTrace, TokenDistribution, TokenProb};

pub const LETTERS: [&str; 4] = ["A", "B", "C", "D"];
pub const EOS_TOKEN: &str = "</s>";

fn ln4() -> f64 {
    4f64.ln()
}
fn floor() -> f64 {
    0.05
}
fn sigma() -> f64 {
    0.05
}
fn brc_sigma() -> f64 {
    0.2
}
fn gain() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    #[serde(default = "ln4")]
    pub entropy_ceiling: f64,
    #[serde(default = "floor")]
    pub entropy_floor: f64,
    #[serde(default = "sigma")]
    pub noise_sigma: f64,
    #[serde(default = "brc_sigma")]
    pub brc_noise_sigma: f64,
    #[serde(default = "gain")]
    pub zoom_gain: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            entropy_ceiling: ln4(),
            entropy_floor: floor(),
            noise_sigma: sigma(),
            brc_noise_sigma: brc_sigma(),
            zoom_gain: gain(),
        }
    }
}

impl OracleParams {
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            brc_noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Params(m.into()));
        if !(self.entropy_floor >= 0.0 && self.entropy_floor < self.entropy_ceiling) {
            return bad("need 0 <= entropy_floor < entropy_ceiling");
        }
        if self.entropy_ceiling > ln4() + 1e-12 {
            return bad("entropy_ceiling cannot exceed ln 4 over a four-letter vocabulary");
        }
        if !(self.noise_sigma >= 0.0 && self.brc_noise_sigma >= 0.0)
            || !self.noise_sigma.is_finite()
            || !self.brc_noise_sigma.is_finite()
        {
            return bad("noise sigmas must be finite and >= 0");
        }
        if !(self.zoom_gain.is_finite() && self.zoom_gain > 0.0) {
            return bad("zoom_gain must be > 0");
        }
        Ok(())
    }
}

/// How much of the target a region shows, discounted when the region is
/// large relative to the target.
pub fn crop_visibility(target: &Rect, region: &Rect, region_side: f64, zoom_gain: f64) -> f64 {
    let covered = target.intersection_area(region) / target.area();
    let target_side = f64::from(target.w.max(target.h));
    covered * (target_side / region_side * zoom_gain).min(1.0)
}

/// `(1-λ)·onehot(mode) + λ·uniform` over `tokens`, with λ chosen so the
/// entropy matches `target`.
fn distribution_with_entropy(tokens: &[&str], mode: usize, target: f64) -> TokenDistribution {
    let n = tokens.len() as f64;
    let build = |lambda: f64| {
        let entries = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let p = if i == mode {
                    1.0 - lambda + lambda / n
                } else {
                    lambda / n
                };
                TokenProb::new(*t, p)
            })
            .collect();
        TokenDistribution::new(entries, 0.0).expect("mixture of valid distributions")
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shannon_entropy(&build(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    build(0.5 * (lo + hi))
}

/// Deterministic stand-in for a multimodal model, answering from the
/// geometry of what it is shown rather than the pixels.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    world: World,
    params: OracleParams,
}

impl OracleBackend {
    pub fn new(world: World, params: OracleParams) -> Result<Self, SynthError> {
        params.validate()?;
        Ok(Self { world, params })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn rng(&self, request: &ScoringRequest) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.world.seed());
        rng.set_stream(request.candidate.map_or(u64::MAX, |c| c as u64));
        rng
    }

    fn frames(request: &ScoringRequest) -> Result<Vec<usize>, BackendError> {
        request
            .visuals
            .iter()
            .map(|v| match v {
                Visual::Frame { ordinal, .. } => Ok(*ordinal),
                _ => Err(BackendError::InvalidRequest(
                    "video oracle expects frame visuals".into(),
                )),
            })
            .collect()
    }

    /// Visibility of the answer-bearing evidence in `request`, in [0, 1].
    pub fn visibility(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        if request.visuals.is_empty() {
            return Err(BackendError::InvalidRequest(
                "oracle needs at least one visual".into(),
            ));
        }
        match &self.world {
            World::Scene(scene) => {
                let full = Rect {
                    x: 0,
                    y: 0,
                    w: scene.canvas.width,
                    h: scene.canvas.height,
                };
                let gain = self.params.zoom_gain;
                request.visuals.iter().try_fold(0.0f64, |best, v| {
                    let vis = match v {
                        Visual::Image(_) => crop_visibility(
                            &scene.target_rect,
                            &full,
                            f64::from(scene.canvas.min_side()),
                            gain,
                        ),
                        Visual::Crop { crop, .. } => crop_visibility(
                            &scene.target_rect,
                            &Rect::from(*crop),
                            f64::from(crop.side),
                            gain,
                        ),
                        Visual::Frame { .. } => {
                            return Err(BackendError::InvalidRequest(
                                "scene oracle cannot score video frames".into(),
                            ))
                        }
                    };
                    Ok(best.max(vis))
                })
            }
            World::Video(video) => {
                let frames = Self::frames(request)?;
                let inside = frames.iter().filter(|&&f| video.in_event(f)).count();
                Ok(inside as f64 / frames.len() as f64)
            }
        }
    }

    fn gold_index(&self) -> usize {
        let gold = match &self.world {
            World::Scene(s) => &s.gold_answer,
            World::Video(v) => &v.gold_answer,
        };
        LETTERS.iter().position(|l| l == gold).unwrap_or(0)
    }

    fn answer(&self, request: &ScoringRequest) -> Result<Generation, BackendError> {
        let v = self.visibility(request)?;
        let mut rng = self.rng(request);
        let p = &self.params;
        let noise = Normal::new(0.0, p.noise_sigma)
            .map_err(|e| BackendError::Config(e.to_string()))?
            .sample(&mut rng);
        let wrong = rng.gen_range(1..LETTERS.len());
        let target = (p.entropy_ceiling - (p.entropy_ceiling - p.entropy_floor) * v + noise)
            .clamp(p.entropy_floor, p.entropy_ceiling);
        let gold = self.gold_index();
        let mode = if v > 0.5 {
            gold
        } else {
            (gold + wrong) % LETTERS.len()
        };
        let first = distribution_with_entropy(&LETTERS, mode, target);
        let mut with_eos = LETTERS.to_vec();
        with_eos.push(EOS_TOKEN);
        let second = distribution_with_entropy(&with_eos, LETTERS.len(), target);
        let trace = GenerationTrace::new(
            vec![first, second],
            vec![LETTERS[mode].to_string(), EOS_TOKEN.to_string()],
        )
        .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Generation {
            trace,
            text: LETTERS[mode].to_string(),
        })
    }

    fn yes_no(&self, request: &ScoringRequest) -> Result<Generation, BackendError> {
        let video = match &self.world {
            World::Video(v) => v,
            World::Scene(_) => {
                return Err(BackendError::InvalidRequest(
                    "scene oracle has no yes/no questions".into(),
                ))
            }
        };
        let frames = Self::frames(request)?;
        if frames.is_empty() {
            return Err(BackendError::InvalidRequest(
                "oracle needs at least one visual".into(),
            ));
        }
        let hit = frames.iter().any(|&f| video.in_event(f));
        let mut rng = self.rng(request);
        let noise = Normal::new(0.0, self.params.brc_noise_sigma)
            .map_err(|e| BackendError::Config(e.to_string()))?
            .sample(&mut rng);
        let s = ((if hit { 1.0 } else { -1.0 }) + noise).clamp(-1.0, 1.0);
        let dist = TokenDistribution::new(
            vec![
                TokenProb::new("A", (1.0 + s) / 2.0),
                TokenProb::new("B", (1.0 - s) / 2.0),
            ],
            0.0,
        )
        .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let tok = if s >= 0.0 { "A" } else { "B" };
        Ok(Generation {
            trace: GenerationTrace::new(vec![dist], vec![tok.to_string()])
                .map_err(|e| BackendError::Malformed(e.to_string()))?,
            text: tok.to_string(),
        })
    }
}

impl Backend for OracleBackend {
    fn generate(&self, request: &ScoringRequest) -> Result<Generation, BackendError> {
        request.validate()?;
        match request.mode {
            ScoreMode::FullTrace => self.answer(request),
            ScoreMode::FirstTokenOnly => self.yes_no(request),
        }
    }
}
