//! Default temporal boxes, offset decoding, temporal IoU and label assignment.
//!
//! All times are normalized to `[0, 1]` per video.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub center: f64,
    pub width: f64,
    pub layer: usize,
    pub cell: usize,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSegment {
    pub t_start: f64,
    pub t_end: f64,
}

impl TemporalSegment {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start < t_end) {
            return Err(Error::InvalidInput(format!(
                "segment start {t_start} must precede end {t_end}"
            )));
        }
        Ok(TemporalSegment { t_start, t_end })
    }

    pub fn from_center_width(center: f64, width: f64) -> Self {
        TemporalSegment {
            t_start: center - width / 2.0,
            t_end: center + width / 2.0,
        }
    }

    pub fn center(&self) -> f64 {
        (self.t_start + self.t_end) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn clamped(&self) -> Self {
        TemporalSegment {
            t_start: self.t_start.clamp(0.0, 1.0),
            t_end: self.t_end.clamp(0.0, 1.0),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

/// Anchors of one feature map of length `len`, cell-major then ratio:
/// `center = (t + 0.5) / len`, `width = r / len`.
pub fn build_anchor_grid(len: usize, ratios: &[f64], layer: usize) -> Result<Vec<Anchor>> {
    if len == 0 {
        return Err(Error::InvalidInput("feature map length must be positive".into()));
    }
    if ratios.is_empty() {
        return Err(Error::InvalidInput("anchor ratio set is empty".into()));
    }
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::InvalidInput(format!("anchor ratio {r} is not positive")));
    }
    let n = len as f64;
    Ok((0..len)
        .flat_map(|t| {
            ratios.iter().map(move |&r| Anchor {
                center: (t as f64 + 0.5) / n,
                width: r / n,
                layer,
                cell: t,
                ratio: r,
            })
        })
        .collect())
}

/// Refined center/width and the clamped segment for one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decoded {
    pub center: f64,
    pub width: f64,
    pub segment: TemporalSegment,
}

/// `φ_c = μ_c + α1·μ_w·Δc`, `φ_w = μ_w·exp(α2·Δw)`; the segment is
/// `φ_c ± φ_w/2` clamped to `[0, 1]`.
pub fn decode(anchor: &Anchor, dc: f64, dw: f64, alpha1: f64, alpha2: f64) -> Decoded {
    let center = anchor.center + alpha1 * anchor.width * dc;
    let width = anchor.width * (alpha2 * dw).exp();
    Decoded {
        center,
        width,
        segment: TemporalSegment::from_center_width(center, width).clamped(),
    }
}

/// Inverse of [`decode`] before clamping.
pub fn encode_offsets(anchor: &Anchor, center: f64, width: f64, alpha1: f64, alpha2: f64) -> (f64, f64) {
    (
        (center - anchor.center) / (alpha1 * anchor.width),
        (width / anchor.width).ln() / alpha2,
    )
}

pub fn tiou(a: &TemporalSegment, b: &TemporalSegment) -> f64 {
    let inter = (a.t_end.min(b.t_end) - a.t_start.max(b.t_start)).max(0.0);
    let union = a.t_end.max(b.t_end) - a.t_start.min(b.t_start);
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorLabel {
    pub positive: bool,
    /// Highest-tIoU ground truth (lowest index on ties); `None` only when
    /// there is no ground truth at all.
    pub matched: Option<usize>,
    pub tiou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelAssignment {
    pub labels: Vec<AnchorLabel>,
}

impl LabelAssignment {
    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|l| l.positive).count()
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, &AnchorLabel)> {
        self.labels.iter().enumerate().filter(|(_, l)| l.positive)
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.labels[i].positive
    }
}

/// Matches each proposal to its highest-tIoU ground truth and marks it
/// positive when that tIoU exceeds `threshold`. Several proposals may match
/// the same ground truth.
pub fn assign_labels(proposals: &[TemporalSegment], ground_truth: &[TemporalSegment], threshold: f64) -> LabelAssignment {
    if ground_truth.is_empty() {
        warn!("no ground truth segments; every proposal is negative");
        return LabelAssignment {
            labels: vec![
                AnchorLabel {
                    positive: false,
                    matched: None,
                    tiou: 0.0,
                };
                proposals.len()
            ],
        };
    }
    let labels = proposals
        .iter()
        .map(|p| {
            let mut best = (0, tiou(p, &ground_truth[0]));
            for (j, gt) in ground_truth.iter().enumerate().skip(1) {
                let v = tiou(p, gt);
                if v > best.1 {
                    best = (j, v);
                }
            }
            AnchorLabel {
                positive: best.1 > threshold,
                matched: Some(best.0),
                tiou: best.1,
            }
        })
        .collect::<Vec<_>>();
    let assignment = LabelAssignment { labels };
    for (j, _) in ground_truth.iter().enumerate() {
        if !assignment.positives().any(|(_, l)| l.matched == Some(j)) {
            log::debug!("ground truth {j} has no positive proposal");
        }
    }
    assignment
}
