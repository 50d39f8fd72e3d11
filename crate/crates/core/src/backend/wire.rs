//! Chat-completion wire format: request bodies and per-token logprob decoding.

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ScoreMode, ScoringRequest};
use crate::uncertainty::{GenerationTrace, TokenDistribution, TokenProb, MASS_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAlternative {
    pub token: String,
    pub logprob: f64,
}

/// One generated token with its reported top alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireStep {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<WireAlternative>,
}

fn prob_from_logprob(token: &str, logprob: f64) -> Result<f64, BackendError> {
    if logprob.is_nan() || logprob > 0.0 {
        return Err(BackendError::Malformed(format!(
            "logprob {logprob} for token {token:?} is not <= 0"
        )));
    }
    Ok(logprob.exp())
}

/// Convert per-step `(token, logprob)` lists into a trace. Mass not covered by
/// the reported alternatives becomes the residual; a sampled token missing
/// from its own alternatives list is added to it; repeated token strings are
/// merged.
pub fn decode_trace(steps: &[WireStep]) -> Result<GenerationTrace, BackendError> {
    if steps.is_empty() {
        return Err(BackendError::Malformed("no generated tokens".into()));
    }
    let mut dists = Vec::with_capacity(steps.len());
    let mut chosen = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let mut entries: Vec<TokenProb> = Vec::with_capacity(step.top_logprobs.len() + 1);
        for alt in &step.top_logprobs {
            let p = prob_from_logprob(&alt.token, alt.logprob)?;
            match entries.iter_mut().find(|e| e.token == alt.token) {
                Some(e) => e.prob += p,
                None => entries.push(TokenProb::new(alt.token.clone(), p)),
            }
        }
        if !entries.iter().any(|e| e.token == step.token) {
            let p = prob_from_logprob(&step.token, step.logprob)?;
            entries.push(TokenProb::new(step.token.clone(), p));
        }
        let total: f64 = entries.iter().map(|e| e.prob).sum();
        if total > 1.0 + MASS_TOLERANCE {
            return Err(BackendError::Malformed(format!(
                "step {i}: probabilities sum to {total}"
            )));
        }
        let residual = (1.0 - total).max(0.0);
        let dist = TokenDistribution::new(entries, residual)
            .map_err(|e| BackendError::Malformed(format!("step {i}: {e}")))?;
        dists.push(dist);
        chosen.push(step.token.clone());
    }
    GenerationTrace::new(dists, chosen).map_err(|e| BackendError::Malformed(e.to_string()))
}

/// Inverse of [`decode_trace`] for traces whose chosen tokens are reported.
pub fn encode_trace(trace: &GenerationTrace) -> Option<Vec<WireStep>> {
    trace
        .steps()
        .iter()
        .zip(trace.chosen_tokens())
        .map(|(dist, tok)| {
            let p = dist.prob_of(tok)?;
            Some(WireStep {
                token: tok.clone(),
                logprob: p.ln(),
                top_logprobs: dist
                    .entries()
                    .iter()
                    .map(|e| WireAlternative {
                        token: e.token.clone(),
                        logprob: e.prob.ln(),
                    })
                    .collect(),
            })
        })
        .collect()
}

pub fn data_uri(mime: &str, bytes: &[u8]) -> String {
    format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )
}

/// JSON body for one greedy chat-completion call requesting top-K logprobs.
pub fn build_request_body(
    model_id: &str,
    top_logprobs_k: u32,
    request: &ScoringRequest,
) -> Result<Value, BackendError> {
    let mut content = Vec::with_capacity(request.visuals.len() + 1);
    for visual in &request.visuals {
        let (mime, bytes) = visual.encode()?;
        content.push(json!({
            "type": "image_url",
            "image_url": { "url": data_uri(mime, &bytes) },
        }));
    }
    content.push(json!({ "type": "text", "text": request.prompt }));
    let max_tokens = match request.mode {
        ScoreMode::FirstTokenOnly => 1,
        ScoreMode::FullTrace => request.max_new_tokens,
    };
    Ok(json!({
        "model": model_id,
        "messages": [{ "role": "user", "content": content }],
        "max_tokens": max_tokens,
        "temperature": 0.0,
        "logprobs": true,
        "top_logprobs": top_logprobs_k,
    }))
}

/// Decoded completion: message text plus the per-token trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub trace: GenerationTrace,
}

pub fn parse_response(body: &str) -> Result<ChatResponse, BackendError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Malformed(format!("response is not JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| BackendError::Malformed("missing `choices[0]`".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let content = match choice.pointer("/logprobs/content") {
        Some(Value::Array(items)) => items,
        _ => {
            return Err(BackendError::MissingLogprobs {
                field: "choices[0].logprobs.content".into(),
            })
        }
    };
    let steps: Vec<WireStep> = content
        .iter()
        .enumerate()
        .map(|(i, item)| {
            serde_json::from_value(item.clone())
                .map_err(|e| BackendError::Malformed(format!("logprobs.content[{i}]: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let trace = decode_trace(&steps)?;
    Ok(ChatResponse { text, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(token: &str, logprob: f64, alts: &[(&str, f64)]) -> WireStep {
        WireStep {
            token: token.into(),
            logprob,
            top_logprobs: alts
                .iter()
                .map(|(t, l)| WireAlternative {
                    token: (*t).into(),
                    logprob: *l,
                })
                .collect(),
        }
    }

    #[test]
    fn log_one_is_one_hot() {
        let t = decode_trace(&[step("A", 0.0, &[("A", 0.0)])]).unwrap();
        assert_eq!(t.steps()[0], TokenDistribution::one_hot("A"));
    }

    #[test]
    fn even_split_has_no_residual() {
        let l = 0.5f64.ln();
        let t = decode_trace(&[step("A", l, &[("A", l), ("B", l)])]).unwrap();
        let d = &t.steps()[0];
        assert!((d.prob_of("A").unwrap() - 0.5).abs() < 1e-15);
        assert!((d.prob_of("B").unwrap() - 0.5).abs() < 1e-15);
        assert!(d.residual_mass() < 1e-15);
    }

    #[test]
    fn residual_fills_missing_mass() {
        let t = decode_trace(&[step("A", 0.7f64.ln(), &[("A", 0.7f64.ln())])]).unwrap();
        assert!((t.steps()[0].residual_mass() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sampled_token_without_alternatives() {
        let t = decode_trace(&[step("A", 0.6f64.ln(), &[])]).unwrap();
        assert!((t.steps()[0].prob_of("A").unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(t.chosen_tokens(), &["A".to_string()]);
    }

    #[test]
    fn rejects_excess_mass_and_positive_logprobs() {
        let l = 0.7f64.ln();
        assert!(matches!(
            decode_trace(&[step("A", l, &[("A", l), ("B", l)])]),
            Err(BackendError::Malformed(_))
        ));
        assert!(matches!(
            decode_trace(&[step("A", 0.1, &[])]),
            Err(BackendError::Malformed(_))
        ));
        assert!(matches!(decode_trace(&[]), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let body = r#"{"choices":[{"message":{"content":"A"}}]}"#;
        match parse_response(body) {
            Err(BackendError::MissingLogprobs { field }) => {
                assert_eq!(field, "choices[0].logprobs.content")
            }
            other => panic!("unexpected {other:?}"),
        }
        let body = r#"{"choices":[{"message":{"content":"A"},"logprobs":null}]}"#;
        assert!(matches!(
            parse_response(body),
            Err(BackendError::MissingLogprobs { .. })
        ));
        assert!(matches!(
            parse_response(r#"{"choices":[]}"#),
            Err(BackendError::Malformed(_))
        ));
    }

    #[test]
    fn request_body_shape() {
        let req = ScoringRequest::new(vec![], "Which?", ScoreMode::FirstTokenOnly);
        let body = build_request_body("m", 5, &req).unwrap();
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["top_logprobs"], 5);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["content"][0]["text"], "Which?");
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(weights in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 1..8), 1..6),
                                 residual in 0.0f64..0.5) {
            let mut steps = Vec::new();
            let mut chosen = Vec::new();
            for w in &weights {
                let total: f64 = w.iter().sum::<f64>() / (1.0 - residual);
                let entries: Vec<TokenProb> = w.iter().enumerate()
                    .map(|(i, x)| TokenProb::new(format!("tok{i}"), x / total)).collect();
                let res = (1.0 - entries.iter().map(|e| e.prob).sum::<f64>()).max(0.0);
                chosen.push(entries[0].token.clone());
                steps.push(TokenDistribution::new(entries, res).unwrap());
            }
            let trace = GenerationTrace::new(steps, chosen).unwrap();
            let back = decode_trace(&encode_trace(&trace).unwrap()).unwrap();
            prop_assert_eq!(back.chosen_tokens(), trace.chosen_tokens());
            for (a, b) in back.steps().iter().zip(trace.steps()) {
                prop_assert_eq!(a.entries().len(), b.entries().len());
                for (x, y) in a.entries().iter().zip(b.entries()) {
                    prop_assert_eq!(&x.token, &y.token);
                    prop_assert!((x.prob - y.prob).abs() < 1e-12);
                }
                prop_assert!((a.residual_mass() - b.residual_mass()).abs() < 1e-12);
            }
        }

        #[test]
        fn decoded_distributions_are_valid(raw in prop::collection::vec(
            (prop::collection::vec(-12.0f64..0.0, 1..10), 0usize..10), 1..5)) {
            // arbitrary logprobs rescaled so each step's mass stays <= 1
            let steps: Vec<WireStep> = raw.iter().map(|(lps, pick)| {
                let total: f64 = lps.iter().map(|l| l.exp()).sum();
                let shift = if total > 1.0 { total.ln() } else { 0.0 };
                let alts: Vec<WireAlternative> = lps.iter().enumerate()
                    .map(|(i, l)| WireAlternative { token: format!("t{i}"), logprob: l - shift }).collect();
                let c = &alts[pick % alts.len()];
                WireStep { token: c.token.clone(), logprob: c.logprob, top_logprobs: alts.clone() }
            }).collect();
            let trace = decode_trace(&steps).unwrap();
            for d in trace.steps() {
                let sum: f64 = d.entries().iter().map(|e| e.prob).sum::<f64>() + d.residual_mass();
                prop_assert!((sum - 1.0).abs() <= MASS_TOLERANCE);
            }
        }
    }
}
