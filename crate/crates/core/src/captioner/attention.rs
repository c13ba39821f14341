use log::warn;

use crate::anchors::TemporalSegment;
use crate::error::{Error, Result};
use crate::tensor_engine::{Graph, Real, Var};
use crate::tep::ProposalPrediction;

/// Fallback descriptiveness of a clip that no prediction covers.
pub const NEUTRAL_DESCRIPTIVENESS: f64 = 0.5;

/// Indices of predictions whose segment contains the center of clip `clip`.
pub fn covering_predictions(predictions: &[ProposalPrediction], clip: usize, num_clips: usize) -> Vec<usize> {
    let t = (clip as f64 + 0.5) / num_clips as f64;
    predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.segment.contains(t))
        .map(|(i, _)| i)
        .collect()
}

/// Mean `p_des` of the predictions covering the clip center, or
/// [`NEUTRAL_DESCRIPTIVENESS`] when none does.
pub fn clip_descriptiveness(predictions: &[ProposalPrediction], clip: usize, num_clips: usize) -> f64 {
    let idx = covering_predictions(predictions, clip, num_clips);
    if idx.is_empty() {
        warn!("clip {clip} is not covered by any proposal; using neutral descriptiveness");
        return NEUTRAL_DESCRIPTIVENESS;
    }
    idx.iter().map(|&i| predictions[i].p_des).sum::<f64>() / idx.len() as f64
}

/// Clips whose centers fall inside `segment`; the clip nearest to the
/// segment center when the segment is narrower than one clip.
pub fn clips_in_segment(segment: &TemporalSegment, num_clips: usize) -> Vec<usize> {
    let inside: Vec<usize> = (0..num_clips)
        .filter(|&i| segment.contains((i as f64 + 0.5) / num_clips as f64))
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    let nearest = (segment.center() * num_clips as f64).floor() as isize;
    vec![nearest.clamp(0, num_clips as isize - 1) as usize]
}

/// Normalized attention weights `s_i / Σ s`; uniform when every score is zero.
pub fn attention_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("attention over zero clips".into()));
    }
    if let Some(s) = scores.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput(format!("attention score {s} is not a finite non-negative value")));
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        warn!("all attention scores are zero; using uniform weights");
        return Ok(vec![1.0 / scores.len() as f64; scores.len()]);
    }
    Ok(scores.iter().map(|s| s / total).collect())
}

/// Weighted sum of the rows of `features` `[N×D]`, weights fixed from
/// `scores`. Gradient reaches the features only.
pub fn attention_pool<T: Real>(g: &mut Graph<T>, features: Var, scores: &[f64]) -> Result<Var> {
    let rows = g.shape(features).first().copied().unwrap_or(0);
    if g.shape(features).len() != 2 || rows != scores.len() {
        return Err(Error::Shape(format!(
            "{} attention scores for clip features {:?}",
            scores.len(),
            g.shape(features)
        )));
    }
    let w: Vec<T> = attention_weights(scores)?.into_iter().map(T::from_f64).collect();
    let w = g.constant(crate::tensor_engine::Tensor::vector(w));
    g.matmul(w, features)
}

/// As [`attention_pool`] but with differentiable scores `[N]`, so the
/// caption loss also trains whatever produced them.
pub fn attention_pool_through<T: Real>(g: &mut Graph<T>, features: Var, scores: Var) -> Result<Var> {
    let total: f64 = g.data(scores).iter().map(|s| s.as_f64()).sum();
    if total == 0.0 {
        let n = g.value(scores).len();
        return attention_pool(g, features, &vec![0.0; n]);
    }
    let w = g.normalize(scores);
    g.matmul(w, features)
}
