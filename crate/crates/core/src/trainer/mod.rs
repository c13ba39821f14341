//! Caption pretraining on ground-truth segments, reward targets for the
//! descriptiveness head, the joint detection-and-captioning step, and
//! evaluation.

mod eval;
mod model;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use eval::{caption_video, evaluate, ground_truth_captions, ground_truth_segments, propose, EvalConfig, EvalReport};
pub use model::{attention_feature, clip_scores, mean_pool, Model};

use crate::anchors::LabelAssignment;
use crate::captioner::{self, attention_pool, attention_pool_through, covering_predictions, clips_in_segment};
use crate::dataio::{Dataset, Video};
use crate::error::{Error, Result};
use crate::metrics::{bleu, meteor_lite, tokenize, CaptionMetric, CiderD};
use crate::tensor_engine::{adam_update, clip_grad_norm, AdamConfig, BoundParams, Graph, OptimizerState, Tensor, Var};
use crate::tep::{self, ProposalPrediction};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the proposal loss in the joint objective.
    pub lambda1: f64,
    /// Weight of the captioning loss in the joint objective.
    pub lambda2: f64,
    pub adam: AdamConfig,
    /// Learning rate of caption pretraining.
    pub pretrain_lr: f64,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Selected proposals captioned per joint step.
    pub joint_topk: usize,
    /// Save a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 20.0,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            pretrain_lr: 5e-3,
            epochs: 30,
            pretrain_epochs: 30,
            seed: 7,
            clip_norm: 5.0,
            joint_topk: 4,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.adam.lr >= 0.0 && self.pretrain_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("gradient clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// One optimization step. Fields that do not apply to a phase are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phase: String,
    pub step: u64,
    pub epoch: usize,
    pub video: String,
    pub l_event: f64,
    pub l_tcr: f64,
    pub l_des: f64,
    pub l_tep: f64,
    pub l_sg: f64,
    pub total: f64,
    pub mean_reward: f64,
    pub n_pos: usize,
    pub n_selected: usize,
    pub grad_norm: f64,
}

impl TrainLog {
    fn new(phase: &str, video: &str) -> Self {
        TrainLog {
            phase: phase.into(),
            step: 0,
            epoch: 0,
            video: video.into(),
            l_event: 0.0,
            l_tcr: 0.0,
            l_des: 0.0,
            l_tep: 0.0,
            l_sg: 0.0,
            total: 0.0,
            mean_reward: 0.0,
            n_pos: 0,
            n_selected: 0,
            grad_norm: 0.0,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }
}

/// Sentence-level reward in `[0, 1]` against one reference.
#[derive(Clone, Debug)]
pub struct RewardScorer {
    metric: CaptionMetric,
    cider: Option<CiderD>,
}

impl RewardScorer {
    /// CIDEr-D document frequencies come from the dataset's annotations.
    pub fn new(metric: CaptionMetric, data: &Dataset) -> Self {
        let cider = matches!(metric, CaptionMetric::CiderD).then(|| {
            let corpus: Vec<Vec<Vec<String>>> = data
                .videos
                .iter()
                .flat_map(|v| v.annotations.iter().map(|a| vec![tokenize(&a.sentence)]))
                .collect();
            CiderD::new(&corpus)
        });
        RewardScorer { metric, cider }
    }

    pub fn metric(&self) -> CaptionMetric {
        self.metric
    }

    pub fn score(&self, candidate: &str, reference: &str) -> f64 {
        let cand = tokenize(candidate);
        let refs = [tokenize(reference)];
        let v = match self.metric {
            CaptionMetric::Bleu(n) => bleu(&cand, &refs, n).unwrap_or(0.0),
            CaptionMetric::MeteorLite => meteor_lite(&cand, &refs).unwrap_or(0.0),
            CaptionMetric::CiderD => self.cider.as_ref().expect("built for CIDEr-D").score(&cand, &refs) / 10.0,
        };
        v.clamp(0.0, 1.0)
    }
}

/// Reward of every proposal: positives are greedily captioned from their
/// attention-pooled segment and scored against their matched sentence;
/// negatives get 0.
#[allow(clippy::too_many_arguments)]
pub fn compute_rewards(
    model: &Model,
    g: &mut Graph<f32>,
    bound: &BoundParams,
    video: &Video,
    predictions: &[ProposalPrediction],
    assignment: &LabelAssignment,
    scores: &[f64],
    scorer: &RewardScorer,
) -> Result<Vec<f64>> {
    let mut rewards = vec![0.0; predictions.len()];
    for (i, label) in assignment.positives() {
        let matched = label.matched.expect("positive has a match");
        let feature = attention_feature(video, &predictions[i].segment, scores)?;
        let words = model.caption_feature(g, bound, &video.attributes, &feature)?;
        rewards[i] = scorer.score(&model.vocab.decode(&words), &video.annotations[matched].sentence);
    }
    Ok(rewards)
}

/// Mean reward of greedy captions of every ground-truth segment, pooled
/// with the current descriptiveness attention.
pub fn ground_truth_reward(model: &Model, data: &Dataset, scorer: &RewardScorer) -> Result<f64> {
    let (mut g, bound) = model.inference_graph();
    let mut sum = 0.0;
    let mut n = 0usize;
    for video in &data.videos {
        let preds = model.predict(video)?;
        let scores = clip_scores(&preds, video.num_clips());
        for a in &video.annotations {
            let feature = attention_feature(video, &a.segment(), &scores)?;
            let words = model.caption_feature(&mut g, &bound, &video.attributes, &feature)?;
            sum += scorer.score(&model.vocab.decode(&words), &a.sentence);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("dataset has no annotations".into()));
    }
    Ok(sum / n as f64)
}

/// Cross-entropy training of the captioner on every ground-truth
/// (segment, sentence) pair, one pair per step, segment features mean-pooled.
pub fn pretrain_sg(
    model: &mut Model,
    data: &Dataset,
    cfg: &TrainConfig,
    opt: &mut OptimizerState<f32>,
    rng: &mut ChaCha8Rng,
    mut sink: impl FnMut(&TrainLog, &Model, &OptimizerState<f32>, &ChaCha8Rng) -> Result<()>,
) -> Result<()> {
    if data.num_annotations() == 0 {
        return Err(Error::InvalidInput("caption pretraining needs annotated videos".into()));
    }
    opt.config = AdamConfig {
        lr: cfg.pretrain_lr,
        ..cfg.adam
    };
    let mut step = opt.t;
    for epoch in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..data.videos.len()).collect();
        order.shuffle(rng);
        for &vi in &order {
            let video = &data.videos[vi];
            model.check_video(video)?;
            for a in &video.annotations {
                let mut log = pretrain_step(model, video, a, cfg, opt)?;
                step += 1;
                log.step = step;
                log.epoch = epoch;
                sink(&log, model, opt, rng)?;
            }
        }
    }
    Ok(())
}

fn pretrain_step(
    model: &mut Model,
    video: &Video,
    annotation: &crate::dataio::Annotation,
    cfg: &TrainConfig,
    opt: &mut OptimizerState<f32>,
) -> Result<TrainLog> {
    let sg_params = model.params.filter_prefix("sg.");
    let feature = mean_pool(video, &annotation.segment());
    let sentence = model.vocab.encode(&annotation.sentence, model.sg.max_len);
    let mut g = Graph::new();
    let bound = sg_params.bind(&mut g);
    let (a, f) = captioner::caption_inputs(&mut g, &video.attributes, &feature);
    let loss = captioner::caption_xe_loss(&mut g, &bound, a, f, &sentence)?;
    g.backward(loss)?;
    let mut grads = sg_params.grads_from(&g, &bound);
    let norm = clip_grad_norm(&mut grads, cfg.clip_norm);
    adam_update(&mut model.params, &grads, opt)?;
    let mut log = TrainLog::new("pretrain", &video.id);
    log.l_sg = g.item(loss) as f64;
    log.total = log.l_sg;
    log.grad_norm = norm;
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// Proposal and captioning losses.
    Joint,
    /// Proposal loss only; no captions are sampled.
    ProposalOnly,
}

/// One video of joint training followed by a single Adam update over all
/// parameters.
pub fn joint_train_step(
    model: &mut Model,
    video: &Video,
    cfg: &TrainConfig,
    opt: &mut OptimizerState<f32>,
    rng: &mut ChaCha8Rng,
    scorer: &RewardScorer,
    kind: StepKind,
) -> Result<TrainLog> {
    model.check_video(video)?;
    let gt = video.ground_truth();
    let mut g = Graph::<f32>::new();
    let bound = model.params.bind(&mut g);
    let out = tep::tep_forward(&mut g, &bound, &video.features, &model.tep, model.anchors())?;
    let preds = out.predictions.clone();
    let assignment = tep::assign(&preds, model.anchors(), &gt, &model.tep);
    let scores = clip_scores(&preds, video.num_clips());
    let (mut ig, ibound) = model.inference_graph();
    let rewards = compute_rewards(model, &mut ig, &ibound, video, &preds, &assignment, &scores, scorer)?;
    let tep_loss = tep::tep_loss(&mut g, &out, &assignment, &gt, &rewards, &model.tep)?;

    let mut log = TrainLog::new(
        match kind {
            StepKind::Joint => "joint",
            StepKind::ProposalOnly => "proposal",
        },
        &video.id,
    );
    log.n_pos = assignment.num_positive();
    log.mean_reward = if log.n_pos == 0 {
        0.0
    } else {
        assignment.positives().map(|(i, _)| rewards[i]).sum::<f64>() / log.n_pos as f64
    };

    let weighted_tep = g.scale(tep_loss.total, cfg.lambda1 as f32);
    let mut total = weighted_tep;
    let mut l_sg = 0.0;
    if kind == StepKind::Joint {
        let terms = scst_terms(model, video, &mut g, &bound, &out.des, &preds, &assignment, &scores, scorer, rng, (&mut ig, &ibound), cfg.joint_topk)?;
        log.n_selected = terms.len();
        if terms.is_empty() {
            log::debug!("video {}: no selected proposal overlaps ground truth; caption loss is zero", video.id);
        } else {
            let stacked = g.concat(&terms)?;
            let sg = g.mean(stacked);
            l_sg = g.item(sg) as f64;
            let weighted = g.scale(sg, cfg.lambda2 as f32);
            total = g.add(total, weighted)?;
        }
    }
    g.backward(total)?;
    let mut grads = model.params.grads_from(&g, &bound);
    log.grad_norm = clip_grad_norm(&mut grads, cfg.clip_norm);
    opt.config = cfg.adam;
    adam_update(&mut model.params, &grads, opt)?;

    let item = |v: Var| g.item(v) as f64;
    log.l_event = item(tep_loss.event);
    log.l_tcr = item(tep_loss.tcr);
    log.l_des = item(tep_loss.des);
    log.l_tep = log.l_event + model.tep.alpha * log.l_tcr + model.tep.beta * log.l_des;
    log.l_sg = l_sg;
    log.total = cfg.lambda1 * log.l_tep + cfg.lambda2 * l_sg;
    Ok(log)
}

/// Self-critical loss of each selected proposal that overlaps a ground
/// truth, sampled on the training graph and baselined by a greedy decode.
#[allow(clippy::too_many_arguments)]
fn scst_terms(
    model: &Model,
    video: &Video,
    g: &mut Graph<f32>,
    bound: &BoundParams,
    des: &Var,
    preds: &[ProposalPrediction],
    assignment: &LabelAssignment,
    scores: &[f64],
    scorer: &RewardScorer,
    rng: &mut ChaCha8Rng,
    (ig, ibound): (&mut Graph<f32>, &BoundParams),
    top_k: usize,
) -> Result<Vec<Var>> {
    let selected = tep::fuse_and_select(preds, model.tep.lambda0, model.tep.select_threshold, top_k);
    let mut terms = Vec::new();
    for s in selected {
        let label = assignment.labels[s.index];
        let Some(matched) = label.matched.filter(|_| label.tiou > 0.0) else {
            continue;
        };
        let reference = &video.annotations[matched].sentence;
        let segment = preds[s.index].segment;
        let feature = if model.sg.attention_passthrough {
            let clips = clips_in_segment(&segment, video.num_clips());
            let x = g.constant(model::clip_matrix(video, &clips));
            let mut parts = Vec::with_capacity(clips.len());
            for &c in &clips {
                let idx = covering_predictions(preds, c, video.num_clips());
                parts.push(if idx.is_empty() {
                    g.constant(Tensor::vector(vec![captioner::NEUTRAL_DESCRIPTIVENESS as f32]))
                } else {
                    let picked = g.gather(*des, idx)?;
                    g.mean(picked)
                });
            }
            let s = g.concat(&parts)?;
            attention_pool_through(g, x, s)?
        } else {
            let clips = clips_in_segment(&segment, video.num_clips());
            let x = g.constant(model::clip_matrix(video, &clips));
            let s: Vec<f64> = clips.iter().map(|&c| scores[c]).collect();
            attention_pool(g, x, &s)?
        };
        let feature_values: Vec<f64> = g.data(feature).iter().map(|&x| x as f64).collect();
        let greedy = model.caption_feature(ig, ibound, &video.attributes, &feature_values)?;
        let r_greedy = scorer.score(&model.vocab.decode(&greedy), reference);
        let a = g.constant(Tensor::vector(video.attributes.iter().map(|&x| x as f32).collect()));
        let sample = captioner::sample_decode(g, bound, a, feature, model.sg.max_len, rng)?;
        let r_sample = scorer.score(&model.vocab.decode(&sample.words), reference);
        terms.push(captioner::scst_loss(g, &sample, r_sample, r_greedy));
    }
    Ok(terms)
}

/// Joint training for `cfg.epochs` epochs, one video per step in a
/// shuffled order.
pub fn train_joint(
    model: &mut Model,
    data: &Dataset,
    cfg: &TrainConfig,
    opt: &mut OptimizerState<f32>,
    rng: &mut ChaCha8Rng,
    kind: StepKind,
    mut sink: impl FnMut(&TrainLog, &Model, &OptimizerState<f32>, &ChaCha8Rng) -> Result<()>,
) -> Result<()> {
    let scorer = RewardScorer::new(model.sg.reward_metric, data);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.videos.len()).collect();
        order.shuffle(rng);
        for &vi in &order {
            let mut log = joint_train_step(model, &data.videos[vi], cfg, opt, rng, &scorer, kind)?;
            log.step = opt.t;
            log.epoch = epoch;
            sink(&log, model, opt, rng)?;
        }
    }
    Ok(())
}
