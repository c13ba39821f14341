use std::collections::BTreeMap;

use super::TIOU_SLACK;
use crate::anchors::{tiou, TemporalSegment};
use crate::error::{Error, Result};

/// Recall thresholds 0.50, 0.55, ..., 0.95.
pub fn recall_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArAnCurve {
    pub points: Vec<(usize, f64)>,
    pub auc: f64,
}

/// Recall averaged over [`recall_thresholds`] when keeping the first `an`
/// proposals of every video. Ground truth is pooled across videos.
pub fn average_recall(
    predicted: &BTreeMap<String, Vec<TemporalSegment>>,
    ground_truth: &BTreeMap<String, Vec<TemporalSegment>>,
    an: usize,
) -> f64 {
    let thresholds = recall_thresholds();
    let mut hits = vec![0usize; thresholds.len()];
    let mut total = 0usize;
    for (video, gts) in ground_truth {
        total += gts.len();
        let kept = predicted.get(video).map_or(&[][..], |p| &p[..an.min(p.len())]);
        for g in gts {
            let best = kept.iter().map(|p| tiou(p, g)).fold(0.0, f64::max);
            for (h, &tau) in hits.iter_mut().zip(&thresholds) {
                if !kept.is_empty() && best >= tau - TIOU_SLACK {
                    *h += 1;
                }
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    hits.iter().map(|&h| h as f64 / total as f64).sum::<f64>() / thresholds.len() as f64
}

/// AR at each AN of `an_grid` (proposals already ranked per video) and the
/// trapezoidal area under the curve divided by the AN range.
pub fn ar_an_curve(
    predicted: &BTreeMap<String, Vec<TemporalSegment>>,
    ground_truth: &BTreeMap<String, Vec<TemporalSegment>>,
    an_grid: &[usize],
) -> Result<ArAnCurve> {
    if ground_truth.values().all(|g| g.is_empty()) {
        return Err(Error::InvalidInput("AR-AN needs at least one ground-truth segment".into()));
    }
    if an_grid.is_empty() || an_grid[0] == 0 || an_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "AN grid must be non-empty, positive and strictly increasing".into(),
        ));
    }
    let points: Vec<(usize, f64)> = an_grid
        .iter()
        .map(|&an| (an, average_recall(predicted, ground_truth, an)))
        .collect();
    let auc = if points.len() == 1 {
        points[0].1
    } else {
        let area: f64 = points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0)
            .sum();
        area / (points[points.len() - 1].0 - points[0].0) as f64
    };
    Ok(ArAnCurve { points, auc })
}
