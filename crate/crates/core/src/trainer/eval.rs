use std::collections::BTreeMap;

use rayon::prelude::*;

use super::model::{attention_feature, clip_scores, Model};
use crate::anchors::TemporalSegment;
use crate::dataio::{Dataset, PredictionRecord, Video};
use crate::error::Result;
use crate::metrics::{ar_an_curve, dense_caption_map, ArAnCurve, CaptionMetric, DenseCaption, DenseCaptionSet, DenseReport, DENSE_THRESHOLDS};
use crate::tep::{self, fuse_and_select};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub an_min: usize,
    pub an_max: usize,
    /// Captioned proposals per video.
    pub top_k: usize,
    pub thresholds: Vec<f64>,
    pub metrics: Vec<CaptionMetric>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            an_min: 1,
            an_max: 100,
            top_k: 1000,
            thresholds: DENSE_THRESHOLDS.to_vec(),
            metrics: vec![
                CaptionMetric::Bleu(1),
                CaptionMetric::Bleu(2),
                CaptionMetric::Bleu(3),
                CaptionMetric::Bleu(4),
                CaptionMetric::MeteorLite,
                CaptionMetric::CiderD,
            ],
        }
    }
}

impl EvalConfig {
    pub fn an_grid(&self) -> Vec<usize> {
        (self.an_min..=self.an_max).collect()
    }
}

/// Every proposal ranked by fused score, at most `top_k`, no threshold.
pub fn propose(model: &Model, video: &Video, top_k: usize) -> Result<Vec<PredictionRecord>> {
    let preds = model.predict(video)?;
    Ok(fuse_and_select(&preds, model.tep.lambda0, f64::NEG_INFINITY, usize::MAX)
        .into_iter()
        .filter(|s| preds[s.index].segment.width() > 0.0)
        .take(top_k)
        .map(|s| PredictionRecord {
            t_start: preds[s.index].segment.t_start,
            t_end: preds[s.index].segment.t_end,
            sentence: None,
            confidence: s.confidence,
        })
        .collect())
}

/// Proposals above the selection threshold, best first, each captioned from
/// its attention-pooled segment.
pub fn caption_video(model: &Model, video: &Video, top_k: usize) -> Result<Vec<PredictionRecord>> {
    let preds = model.predict(video)?;
    let scores = clip_scores(&preds, video.num_clips());
    let (mut g, bound) = model.inference_graph();
    let selected = tep::fuse_and_select(&preds, model.tep.lambda0, model.tep.select_threshold, top_k);
    let mut out = Vec::with_capacity(selected.len());
    for s in selected {
        let segment = preds[s.index].segment;
        if segment.width() <= 0.0 {
            continue;
        }
        let feature = attention_feature(video, &segment, &scores)?;
        let words = model.caption_feature(&mut g, &bound, &video.attributes, &feature)?;
        out.push(PredictionRecord {
            t_start: segment.t_start,
            t_end: segment.t_end,
            sentence: Some(model.vocab.decode(&words)),
            confidence: s.confidence,
        });
    }
    Ok(out)
}

pub fn ground_truth_segments(data: &Dataset) -> BTreeMap<String, Vec<TemporalSegment>> {
    data.videos.iter().map(|v| (v.id.clone(), v.ground_truth())).collect()
}

pub fn ground_truth_captions(data: &Dataset) -> DenseCaptionSet {
    data.videos
        .iter()
        .map(|v| {
            let caps = v
                .annotations
                .iter()
                .map(|a| DenseCaption {
                    t_start: a.t_start,
                    t_end: a.t_end,
                    sentence: a.sentence.clone(),
                    confidence: 1.0,
                })
                .collect();
            (v.id.clone(), caps)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub curve: ArAnCurve,
    pub dense: Vec<(CaptionMetric, DenseReport)>,
}

/// Proposal AR-AN and dense-captioning scores of `model` on `data`.
/// Videos are processed in parallel; results do not depend on scheduling.
pub fn evaluate(model: &Model, data: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let per_video = data
        .videos
        .par_iter()
        .map(|v| {
            let proposals = propose(model, v, cfg.an_max)?;
            let captions = if cfg.metrics.is_empty() {
                Vec::new()
            } else {
                caption_video(model, v, cfg.top_k)?
            };
            Ok((v.id.clone(), proposals, captions))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut segments = BTreeMap::new();
    let mut captions = DenseCaptionSet::new();
    for (id, props, caps) in per_video {
        segments.insert(
            id.clone(),
            props
                .iter()
                .map(|r| TemporalSegment {
                    t_start: r.t_start,
                    t_end: r.t_end,
                })
                .collect(),
        );
        captions.insert(
            id,
            caps.into_iter()
                .map(|r| DenseCaption {
                    t_start: r.t_start,
                    t_end: r.t_end,
                    sentence: r.sentence.unwrap_or_default(),
                    confidence: r.confidence,
                })
                .collect(),
        );
    }
    let curve = ar_an_curve(&segments, &ground_truth_segments(data), &cfg.an_grid())?;
    let gt = ground_truth_captions(data);
    let dense = cfg
        .metrics
        .iter()
        .map(|&m| Ok((m, dense_caption_map(&captions, &gt, m, &cfg.thresholds, cfg.top_k)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { curve, dense })
}
