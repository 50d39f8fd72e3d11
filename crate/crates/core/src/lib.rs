//! Uncertainty-guided candidate selection for multimodal language models.
//!
//! Candidate visual inputs (image crops, frames, temporal windows) are scored
//! by the model's output uncertainty and the least uncertain ones are kept
//! for answering. See the crate README for an overview.

pub mod backend;
pub mod candidates;
pub mod eval;
pub mod selectors;
pub mod synth;
pub mod uncertainty;
