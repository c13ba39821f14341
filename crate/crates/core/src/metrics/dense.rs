use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{bleu, meteor_lite, tokenize, CiderD, TIOU_SLACK};
use crate::anchors::{tiou, TemporalSegment};
use crate::error::{Error, Result};

pub const DENSE_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

/// One captioned segment; ground truth carries confidence 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseCaption {
    pub t_start: f64,
    pub t_end: f64,
    pub sentence: String,
    pub confidence: f64,
}

impl DenseCaption {
    pub fn segment(&self) -> TemporalSegment {
        TemporalSegment {
            t_start: self.t_start,
            t_end: self.t_end,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaptionMetric {
    Bleu(usize),
    MeteorLite,
    CiderD,
}

impl CaptionMetric {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "bleu1" => CaptionMetric::Bleu(1),
            "bleu2" => CaptionMetric::Bleu(2),
            "bleu3" => CaptionMetric::Bleu(3),
            "bleu4" => CaptionMetric::Bleu(4),
            "meteor_lite" | "meteor" => CaptionMetric::MeteorLite,
            "cider_d" | "cider" => CaptionMetric::CiderD,
            other => return Err(Error::InvalidInput(format!("unknown caption metric `{other}`"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            CaptionMetric::Bleu(n) => format!("bleu{n}"),
            CaptionMetric::MeteorLite => "meteor_lite".into(),
            CaptionMetric::CiderD => "cider_d".into(),
        }
    }
}

pub type DenseCaptionSet = BTreeMap<String, Vec<DenseCaption>>;

/// Per-threshold scores and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseReport {
    pub per_threshold: Vec<(f64, f64)>,
    pub mean: f64,
}

/// Each kept prediction is scored against the pooled sentences of every
/// ground-truth segment of its video with tIoU ≥ τ (0 if there are none).
/// Scores are averaged per video, then over the ground-truth videos.
/// CIDEr-D document frequencies come from the ground-truth corpus.
pub fn dense_caption_map(
    predicted: &DenseCaptionSet,
    ground_truth: &DenseCaptionSet,
    metric: CaptionMetric,
    thresholds: &[f64],
    top_k: usize,
) -> Result<DenseReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("no tIoU thresholds".into()));
    }
    let cider = matches!(metric, CaptionMetric::CiderD).then(|| {
        let corpus: Vec<Vec<Vec<String>>> = ground_truth
            .values()
            .flatten()
            .map(|c| vec![tokenize(&c.sentence)])
            .collect();
        CiderD::new(&corpus)
    });
    let score = |cand: &[String], refs: &[Vec<String>]| -> Result<f64> {
        if refs.is_empty() {
            return Ok(0.0);
        }
        match metric {
            CaptionMetric::Bleu(n) => bleu(cand, refs, n),
            CaptionMetric::MeteorLite => meteor_lite(cand, refs),
            CaptionMetric::CiderD => Ok(cider.as_ref().expect("built above").score(cand, refs)),
        }
    };

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let mut video_sum = 0.0;
        for (video, gts) in ground_truth {
            let Some(preds) = predicted.get(video) else {
                continue;
            };
            let ranked = ranked_top_k(preds, top_k);
            if ranked.is_empty() {
                continue;
            }
            let mut sum = 0.0;
            for p in &ranked {
                let refs: Vec<Vec<String>> = gts
                    .iter()
                    .filter(|g| tiou(&p.segment(), &g.segment()) >= tau - TIOU_SLACK)
                    .map(|g| tokenize(&g.sentence))
                    .collect();
                sum += score(&tokenize(&p.sentence), &refs)?;
            }
            video_sum += sum / ranked.len() as f64;
        }
        let v = if ground_truth.is_empty() {
            0.0
        } else {
            video_sum / ground_truth.len() as f64
        };
        per_threshold.push((tau, v));
    }
    let mean = per_threshold.iter().map(|(_, v)| v).sum::<f64>() / per_threshold.len() as f64;
    Ok(DenseReport { per_threshold, mean })
}

fn ranked_top_k(preds: &[DenseCaption], top_k: usize) -> Vec<&DenseCaption> {
    let mut ranked: Vec<&DenseCaption> = preds.iter().collect();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    ranked.truncate(top_k);
    ranked
}
