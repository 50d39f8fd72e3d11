use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("degenerate interval [{0}, {1}]")]
    DegenerateInterval(f64, f64),
    #[error("metric over an empty record set")]
    Empty,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
}

fn check_interval(a: (f64, f64)) -> Result<(), MetricError> {
    if a.0.is_finite() && a.1.is_finite() && a.1 > a.0 {
        Ok(())
    } else {
        Err(MetricError::DegenerateInterval(a.0, a.1))
    }
}

/// Intersection over union of two time intervals.
pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> Result<f64, MetricError> {
    check_interval(a)?;
    check_interval(b)?;
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn recall_at(ious: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if ious.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = ious.iter().filter(|&&v| v >= threshold).count();
    Ok(hits as f64 / ious.len() as f64)
}

pub fn mean_iou(ious: &[f64]) -> Result<f64, MetricError> {
    if ious.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

pub fn mcq_accuracy(correct: &[bool]) -> Result<f64, MetricError> {
    if correct.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// Option letter named by a free-form answer.
///
/// The first token (split on whitespace and punctuation) that is a single
/// uppercase letter among the first `n_options` letters wins; failing that, an
/// answer that is nothing but one letter counts in either case.
pub fn normalize_answer(text: &str, n_options: usize) -> Option<char> {
    let in_range = |c: char| c.is_ascii_uppercase() && ((c as u8 - b'A') as usize) < n_options;
    let mut tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty());
    if let Some(c) = tokens.find_map(|t| {
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if in_range(c) => Some(c),
            _ => None,
        }
    }) {
        return Some(c);
    }
    let stripped: String = text.chars().filter(|c| c.is_alphanumeric()).collect();
    let mut chars = stripped.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if in_range(c.to_ascii_uppercase()) => Some(c.to_ascii_uppercase()),
        _ => None,
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricError::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
