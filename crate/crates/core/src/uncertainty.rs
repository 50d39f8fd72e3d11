//! Output-uncertainty measures over per-step token distributions.
//!
//! Entropies are in nats. A backend that only reports its top-K alternatives
//! leaves some probability mass unaccounted for; that leftover is carried as a
//! single residual pseudo-outcome so the mass always sums to one.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of the total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("probability for token {token:?} out of range: {value}")]
    ProbabilityOutOfRange { token: String, value: f64 },
    #[error("residual mass out of range: {0}")]
    ResidualOutOfRange(f64),
    #[error("probability mass sums to {0}, expected 1")]
    MassSum(f64),
    #[error("duplicate token {0:?} in distribution")]
    DuplicateToken(String),
    #[error("generation trace is empty")]
    EmptyTrace,
    #[error("trace has {steps} steps but {tokens} chosen tokens")]
    LengthMismatch { steps: usize, tokens: usize },
    #[error("chosen token {token:?} at step {step} is not covered by the step distribution")]
    ChosenTokenMissing { step: usize, token: String },
    #[error("alias set is empty")]
    EmptyAliases,
    #[error("alias {0:?} appears on both sides of the yes/no split")]
    OverlappingAliases(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

impl TokenProb {
    pub fn new(token: impl Into<String>, prob: f64) -> Self {
        Self {
            token: token.into(),
            prob,
        }
    }
}

/// Probability mass of a single decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct TokenDistribution {
    entries: Vec<TokenProb>,
    residual_mass: f64,
}

#[derive(Deserialize)]
struct RawDistribution {
    entries: Vec<TokenProb>,
    #[serde(default)]
    residual_mass: f64,
}

impl TryFrom<RawDistribution> for TokenDistribution {
    type Error = UncertaintyError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        TokenDistribution::new(raw.entries, raw.residual_mass)
    }
}

impl TokenDistribution {
    pub fn new(entries: Vec<TokenProb>, residual_mass: f64) -> Result<Self, UncertaintyError> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut total = 0.0;
        for e in &entries {
            if !(0.0..=1.0).contains(&e.prob) {
                return Err(UncertaintyError::ProbabilityOutOfRange {
                    token: e.token.clone(),
                    value: e.prob,
                });
            }
            if !seen.insert(e.token.as_str()) {
                return Err(UncertaintyError::DuplicateToken(e.token.clone()));
            }
            total += e.prob;
        }
        if !(0.0..=1.0).contains(&residual_mass) {
            return Err(UncertaintyError::ResidualOutOfRange(residual_mass));
        }
        total += residual_mass;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(UncertaintyError::MassSum(total));
        }
        Ok(Self {
            entries,
            residual_mass,
        })
    }

    /// All mass on `token`.
    pub fn one_hot(token: impl Into<String>) -> Self {
        Self {
            entries: vec![TokenProb::new(token, 1.0)],
            residual_mass: 0.0,
        }
    }

    pub fn entries(&self) -> &[TokenProb] {
        &self.entries
    }

    pub fn residual_mass(&self) -> f64 {
        self.residual_mass
    }

    pub fn prob_of(&self, token: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.token == token)
            .map(|e| e.prob)
    }

    /// Token with the highest reported probability; ties go to the earliest entry.
    pub fn mode(&self) -> Option<&TokenProb> {
        self.entries
            .iter()
            .fold(None, |best: Option<&TokenProb>, e| match best {
                Some(b) if b.prob >= e.prob => Some(b),
                _ => Some(e),
            })
    }
}

/// Per-step distributions of one generated sequence, end-of-sequence step included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace")]
pub struct GenerationTrace {
    steps: Vec<TokenDistribution>,
    chosen_tokens: Vec<String>,
}

#[derive(Deserialize)]
struct RawTrace {
    steps: Vec<TokenDistribution>,
    chosen_tokens: Vec<String>,
}

impl TryFrom<RawTrace> for GenerationTrace {
    type Error = UncertaintyError;

    fn try_from(raw: RawTrace) -> Result<Self, Self::Error> {
        GenerationTrace::new(raw.steps, raw.chosen_tokens)
    }
}

impl GenerationTrace {
    pub fn new(
        steps: Vec<TokenDistribution>,
        chosen_tokens: Vec<String>,
    ) -> Result<Self, UncertaintyError> {
        if steps.is_empty() {
            return Err(UncertaintyError::EmptyTrace);
        }
        if steps.len() != chosen_tokens.len() {
            return Err(UncertaintyError::LengthMismatch {
                steps: steps.len(),
                tokens: chosen_tokens.len(),
            });
        }
        for (i, (dist, tok)) in steps.iter().zip(&chosen_tokens).enumerate() {
            if dist.prob_of(tok).is_none() && dist.residual_mass() <= 0.0 {
                return Err(UncertaintyError::ChosenTokenMissing {
                    step: i,
                    token: tok.clone(),
                });
            }
        }
        Ok(Self {
            steps,
            chosen_tokens,
        })
    }

    pub fn steps(&self) -> &[TokenDistribution] {
        &self.steps
    }

    pub fn chosen_tokens(&self) -> &[String] {
        &self.chosen_tokens
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_step(&self) -> &TokenDistribution {
        &self.steps[0]
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of one step, counting the residual as one extra outcome.
pub fn shannon_entropy(dist: &TokenDistribution) -> f64 {
    let h = -dist.entries.iter().map(|e| plogp(e.prob)).sum::<f64>() - plogp(dist.residual_mass);
    // -0.0 for one-hot inputs
    h.max(0.0)
}

/// Mean per-step entropy over the whole trace.
pub fn mean_token_entropy(trace: &GenerationTrace) -> f64 {
    // running mean: a trace of identical steps reproduces the step entropy bit-for-bit
    let mut mean = 0.0;
    for (k, step) in trace.steps.iter().enumerate() {
        let h = shannon_entropy(step);
        mean += (h - mean) / (k as f64 + 1.0);
    }
    mean
}

/// Canonical form used for alias matching: surrounding whitespace and
/// tokenizer word-boundary markers removed, then case-folded.
pub fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| c.is_whitespace() || c == '\u{2581}' || c == '\u{0120}')
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasSet(Vec<String>);

impl AliasSet {
    pub fn new<I, S>(aliases: I) -> Result<Self, UncertaintyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = aliases
            .into_iter()
            .map(|a| normalize_token(a.as_ref()))
            .filter(|a| !a.is_empty())
            .collect();
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(UncertaintyError::EmptyAliases);
        }
        Ok(Self(out))
    }

    pub fn matches(&self, token: &str) -> bool {
        let norm = normalize_token(token);
        self.0.contains(&norm)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

/// Total probability of entries matching any alias.
pub fn token_prob_lookup(dist: &TokenDistribution, aliases: &AliasSet) -> f64 {
    let mut matched: Vec<f64> = dist
        .entries
        .iter()
        .filter(|e| aliases.matches(&e.token))
        .map(|e| e.prob)
        .collect();
    // order-independent summation
    matched.sort_by(f64::total_cmp);
    matched.iter().sum::<f64>().min(1.0)
}

/// Disjoint yes/no alias sets for binary response confidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryAliases {
    yes: AliasSet,
    no: AliasSet,
}

impl BinaryAliases {
    pub fn new(yes: AliasSet, no: AliasSet) -> Result<Self, UncertaintyError> {
        if let Some(shared) = yes.0.iter().find(|a| no.0.contains(a)) {
            return Err(UncertaintyError::OverlappingAliases(shared.clone()));
        }
        Ok(Self { yes, no })
    }

    pub fn from_strs<S: AsRef<str>>(yes: &[S], no: &[S]) -> Result<Self, UncertaintyError> {
        Self::new(AliasSet::new(yes)?, AliasSet::new(no)?)
    }

    pub fn yes(&self) -> &AliasSet {
        &self.yes
    }

    pub fn no(&self) -> &AliasSet {
        &self.no
    }

    pub fn swapped(&self) -> Self {
        Self {
            yes: self.no.clone(),
            no: self.yes.clone(),
        }
    }
}

/// Binary response confidence: P(yes) - P(no) at a single step.
pub fn brc_score(dist: &TokenDistribution, aliases: &BinaryAliases) -> f64 {
    token_prob_lookup(dist, &aliases.yes) - token_prob_lookup(dist, &aliases.no)
}
