//! Single-shot temporal event proposal network.
//!
//! Two base convolutions reduce the clip sequence to half length, a stack of
//! stride-2 anchor convolutions builds progressively coarser feature maps, and
//! a fully connected head on every anchor-layer cell predicts, per anchor
//! ratio, event/background logits, center and width offsets, and a
//! descriptiveness logit.

use log::warn;
use rand::Rng;

use crate::anchors::{self, Anchor, LabelAssignment, TemporalSegment};
use crate::error::{Error, Result};
use crate::tensor_engine::{self as te, BoundParams, Graph, ParamStore, Real, Tensor, Var};

/// Outputs per anchor: event logit, background logit, Δc, Δw, descriptiveness logit.
const OUTPUTS_PER_ANCHOR: usize = 5;
const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct TepConfig {
    /// Clip count `T_f` of every input sequence.
    pub input_len: usize,
    /// Clip feature width `D0`.
    pub input_dim: usize,
    /// Filters of the two base layers.
    pub base_filters: [usize; 2],
    pub anchor_layers: usize,
    pub anchor_filters: usize,
    pub ratios: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Weight of the coordinate regression loss.
    pub alpha: f64,
    /// Weight of the descriptiveness loss.
    pub beta: f64,
    /// Weight of `p_des` in the fused ranking score.
    pub lambda0: f64,
    pub select_threshold: f64,
    pub select_topk: usize,
    pub match_threshold: f64,
    /// Negatives kept per positive in the event loss; `None` uses every
    /// proposal.
    pub hard_negative_ratio: Option<f64>,
    /// Negatives kept when a video has no positive.
    pub hard_negative_cap: usize,
    /// Label proposals by their default anchor segment instead of the decoded
    /// one.
    pub match_on_defaults: bool,
}

impl Default for TepConfig {
    fn default() -> Self {
        TepConfig {
            input_len: 128,
            input_dim: 32,
            base_filters: [64, 128],
            anchor_layers: 5,
            anchor_filters: 64,
            ratios: vec![1.0, 1.25, 1.5],
            alpha1: 0.1,
            alpha2: 0.1,
            alpha: 0.5,
            beta: 10.0,
            lambda0: 0.2,
            select_threshold: 0.5,
            select_topk: 1000,
            match_threshold: 0.7,
            hard_negative_ratio: Some(3.0),
            hard_negative_cap: 128,
            match_on_defaults: false,
        }
    }
}

impl TepConfig {
    /// Full-size network: 512/1024 base filters, nine 512-filter anchor layers.
    pub fn paper(input_len: usize, input_dim: usize) -> Self {
        TepConfig {
            input_len,
            input_dim,
            base_filters: [512, 1024],
            anchor_layers: 9,
            anchor_filters: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = 1usize
            .checked_shl(self.anchor_layers as u32 + 1)
            .ok_or_else(|| Error::Config(format!("{} anchor layers is too many", self.anchor_layers)))?;
        if self.input_len < need {
            return Err(Error::Config(format!(
                "input length {} is shorter than 2^(L+1) = {need} for {} anchor layers",
                self.input_len, self.anchor_layers
            )));
        }
        if self.anchor_layers == 0 {
            return Err(Error::Config("at least one anchor layer is required".into()));
        }
        if self.input_dim == 0 || self.anchor_filters == 0 || self.base_filters.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config(format!("bad anchor ratios {:?}", self.ratios)));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::Config("offset scales must be positive".into()));
        }
        let weights = [self.alpha, self.beta, self.lambda0];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if let Some(r) = self.hard_negative_ratio {
            if !(r > 0.0) {
                return Err(Error::Config("hard negative ratio must be positive".into()));
            }
        }
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(Error::Config("match threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Temporal lengths of the anchor-layer feature maps.
    pub fn anchor_layer_lengths(&self) -> Vec<usize> {
        let base = te::conv1d_output_len(self.input_len, KERNEL, 2, 1);
        let mut out = Vec::with_capacity(self.anchor_layers);
        let mut len = base;
        for _ in 0..self.anchor_layers {
            len = te::conv1d_output_len(len, KERNEL, 2, 1);
            out.push(len);
        }
        out
    }

    pub fn num_proposals(&self) -> usize {
        self.anchor_layer_lengths().iter().sum::<usize>() * self.ratios.len()
    }

    /// Every anchor, layer-major, then cell, then ratio.
    pub fn anchors(&self) -> Result<Vec<Anchor>> {
        let mut out = Vec::with_capacity(self.num_proposals());
        for (j, len) in self.anchor_layer_lengths().into_iter().enumerate() {
            out.extend(anchors::build_anchor_grid(len, &self.ratios, j)?);
        }
        Ok(out)
    }

    fn head_outputs(&self) -> usize {
        self.ratios.len() * OUTPUTS_PER_ANCHOR
    }

    fn layer_shapes(&self) -> Vec<(String, [usize; 3])> {
        let mut v = vec![
            ("tep.conv1".to_string(), [KERNEL, self.input_dim, self.base_filters[0]]),
            ("tep.conv2".to_string(), [KERNEL, self.base_filters[0], self.base_filters[1]]),
        ];
        let mut c_in = self.base_filters[1];
        for j in 0..self.anchor_layers {
            v.push((format!("tep.anchor{j}"), [KERNEL, c_in, self.anchor_filters]));
            c_in = self.anchor_filters;
        }
        v
    }
}

/// Fresh parameters: Xavier-uniform weights, zero biases.
pub fn init_params<T: Real, R: Rng + ?Sized>(cfg: &TepConfig, rng: &mut R) -> ParamStore<T> {
    let mut p = ParamStore::new();
    for (name, [k, c_in, c_out]) in cfg.layer_shapes() {
        p.insert(format!("{name}.w"), te::xavier_uniform(&[k, c_in, c_out], k * c_in, k * c_out, rng));
        p.insert(format!("{name}.b"), Tensor::zeros(&[c_out]));
    }
    let out = cfg.head_outputs();
    for j in 0..cfg.anchor_layers {
        p.insert(
            format!("tep.head{j}.w"),
            te::xavier_uniform(&[cfg.anchor_filters, out], cfg.anchor_filters, out, rng),
        );
        p.insert(format!("tep.head{j}.b"), Tensor::zeros(&[out]));
    }
    p
}

pub fn param_count(cfg: &TepConfig) -> usize {
    let convs: usize = cfg
        .layer_shapes()
        .iter()
        .map(|(_, [k, c_in, c_out])| k * c_in * c_out + c_out)
        .sum();
    convs + cfg.anchor_layers * (cfg.anchor_filters + 1) * cfg.head_outputs()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalPrediction {
    /// Decoded segment, clamped to `[0, 1]`.
    pub segment: TemporalSegment,
    /// Refined center before clamping.
    pub center: f64,
    /// Refined width before clamping.
    pub width: f64,
    /// Raw `[event, background]` logits.
    pub cls_logits: [f64; 2],
    pub p_event: f64,
    pub p_des: f64,
    pub anchor: usize,
}

impl ProposalPrediction {
    pub fn p_bk(&self) -> f64 {
        1.0 - self.p_event
    }
}

/// Graph handles of one forward pass plus the extracted values.
#[derive(Clone, Debug)]
pub struct TepOutput {
    /// `[N×2]` event/background logits.
    pub cls_logits: Var,
    /// `[N]` center of the clamped segment.
    pub center: Var,
    /// `[N]` width of the clamped segment.
    pub width: Var,
    /// `[N]` descriptiveness scores in `(0, 1)`.
    pub des: Var,
    pub predictions: Vec<ProposalPrediction>,
}

/// Runs the network over one `[T_f×D0]` clip sequence.
pub fn tep_forward<T: Real>(
    g: &mut Graph<T>,
    params: &BoundParams,
    features: &Tensor<T>,
    cfg: &TepConfig,
    anchors: &[Anchor],
) -> Result<TepOutput> {
    if features.shape() != [cfg.input_len, cfg.input_dim] {
        return Err(Error::Shape(format!(
            "features {:?} do not match configured input [{}, {}]",
            features.shape(),
            cfg.input_len,
            cfg.input_dim
        )));
    }
    if anchors.len() != cfg.num_proposals() {
        return Err(Error::InvalidInput(format!(
            "{} anchors supplied for {} proposals",
            anchors.len(),
            cfg.num_proposals()
        )));
    }
    let x = g.constant(features.clone());
    let conv = |g: &mut Graph<T>, x: Var, name: &str, stride: usize| -> Result<Var> {
        let w = params.get(&format!("{name}.w"))?;
        let b = params.get(&format!("{name}.b"))?;
        let y = te::conv1d_forward(g, x, w, b, stride, 1)?;
        Ok(g.relu(y))
    };
    let h = conv(g, x, "tep.conv1", 1)?;
    let mut h = conv(g, h, "tep.conv2", 2)?;
    let mut heads = Vec::with_capacity(cfg.anchor_layers);
    for j in 0..cfg.anchor_layers {
        h = conv(g, h, &format!("tep.anchor{j}"), 2)?;
        let w = params.get(&format!("tep.head{j}.w"))?;
        let b = params.get(&format!("tep.head{j}.b"))?;
        heads.push(te::fully_connected(g, h, w, b)?);
    }
    let flat = g.concat(&heads)?;

    // Head rows are [cell][ratio][output], so anchor i's block starts at 5i.
    let n = anchors.len();
    let at = |k: usize| (0..n).map(move |i| i * OUTPUTS_PER_ANCHOR + k);
    let cls_idx: Vec<usize> = (0..n).flat_map(|i| [i * OUTPUTS_PER_ANCHOR, i * OUTPUTS_PER_ANCHOR + 1]).collect();
    let cls = g.gather(flat, cls_idx)?;
    let cls_logits = g.reshape(cls, vec![n, 2])?;
    let dc = g.gather(flat, at(2).collect())?;
    let dw = g.gather(flat, at(3).collect())?;
    let des_logit = g.gather(flat, at(4).collect())?;
    let des = g.sigmoid(des_logit);

    let mu_c: Vec<T> = anchors.iter().map(|a| T::from_f64(a.center)).collect();
    let mu_w: Vec<T> = anchors.iter().map(|a| T::from_f64(a.width)).collect();
    let shift_scale: Vec<T> = anchors.iter().map(|a| T::from_f64(cfg.alpha1 * a.width)).collect();
    let shift = g.mul_const(dc, shift_scale)?;
    let phi_c = g.add_const(shift, &mu_c)?;
    let dw_scaled = g.scale(dw, T::from_f64(cfg.alpha2));
    let growth = g.exp(dw_scaled);
    let phi_w = g.mul_const(growth, mu_w)?;

    let half = g.scale(phi_w, T::from_f64(0.5));
    let start = g.sub(phi_c, half)?;
    let end = g.add(phi_c, half)?;
    let start = g.clamp(start, T::zero(), T::one());
    let end = g.clamp(end, T::zero(), T::one());
    let both = g.add(start, end)?;
    let center = g.scale(both, T::from_f64(0.5));
    let width = g.sub(end, start)?;

    let (cls_v, pc, pw, s, e, d) = (
        g.data(cls_logits),
        g.data(phi_c),
        g.data(phi_w),
        g.data(start),
        g.data(end),
        g.data(des),
    );
    let predictions = (0..n)
        .map(|i| {
            let (le, lb) = (cls_v[2 * i].as_f64(), cls_v[2 * i + 1].as_f64());
            ProposalPrediction {
                segment: TemporalSegment {
                    t_start: s[i].as_f64(),
                    t_end: e[i].as_f64(),
                },
                center: pc[i].as_f64(),
                width: pw[i].as_f64(),
                cls_logits: [le, lb],
                p_event: te::sigmoid(le - lb),
                p_des: d[i].as_f64(),
                anchor: i,
            }
        })
        .collect();
    Ok(TepOutput {
        cls_logits,
        center,
        width,
        des,
        predictions,
    })
}

/// Labels every prediction against the ground truth, by decoded segment or
/// by default anchor segment depending on the config.
pub fn assign(predictions: &[ProposalPrediction], anchors: &[Anchor], ground_truth: &[TemporalSegment], cfg: &TepConfig) -> LabelAssignment {
    let segments: Vec<TemporalSegment> = if cfg.match_on_defaults {
        anchors
            .iter()
            .map(|a| TemporalSegment::from_center_width(a.center, a.width).clamped())
            .collect()
    } else {
        predictions.iter().map(|p| p.segment).collect()
    };
    anchors::assign_labels(&segments, ground_truth, cfg.match_threshold)
}

/// `0.5x²` for `|x| < 1`, else `|x| − 0.5`.
pub fn smooth_l1(x: f64) -> f64 {
    te::smooth_l1(x)
}

/// Mean softmax loss over positives and the kept negatives.
pub fn event_loss<T: Real>(g: &mut Graph<T>, out: &TepOutput, assignment: &LabelAssignment, cfg: &TepConfig) -> Result<Var> {
    let labels: Vec<usize> = assignment
        .labels
        .iter()
        .map(|l| if l.positive { 0 } else { 1 })
        .collect();
    let losses = g.xent_rows(out.cls_logits, labels)?;
    let Some(ratio) = cfg.hard_negative_ratio else {
        return Ok(g.mean(losses));
    };
    let values = g.data(losses);
    let mut keep: Vec<usize> = assignment.positives().map(|(i, _)| i).collect();
    let n_pos = keep.len();
    let mut negatives: Vec<usize> = (0..assignment.labels.len())
        .filter(|&i| !assignment.is_positive(i))
        .collect();
    negatives.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let quota = if n_pos == 0 {
        cfg.hard_negative_cap
    } else {
        (ratio * n_pos as f64).ceil() as usize
    };
    keep.extend(negatives.into_iter().take(quota));
    if keep.is_empty() {
        return Ok(g.scalar(T::zero()));
    }
    keep.sort_unstable();
    let picked = g.gather(losses, keep)?;
    Ok(g.mean(picked))
}

/// Smooth L1 between the positive proposals' center/width and those of their
/// matched ground truth, averaged over positives.
pub fn tcr_loss<T: Real>(
    g: &mut Graph<T>,
    out: &TepOutput,
    assignment: &LabelAssignment,
    ground_truth: &[TemporalSegment],
) -> Result<Var> {
    let pos: Vec<(usize, usize)> = assignment
        .positives()
        .map(|(i, l)| (i, l.matched.expect("positive has a match")))
        .collect();
    if pos.is_empty() {
        warn!("no positive proposals; coordinate loss is zero");
        return Ok(g.scalar(T::zero()));
    }
    let idx: Vec<usize> = pos.iter().map(|&(i, _)| i).collect();
    let g_c: Vec<T> = pos.iter().map(|&(_, m)| T::from_f64(-ground_truth[m].center())).collect();
    let g_w: Vec<T> = pos.iter().map(|&(_, m)| T::from_f64(-ground_truth[m].width())).collect();
    let c = g.gather(out.center, idx.clone())?;
    let w = g.gather(out.width, idx)?;
    let dc = g.add_const(c, &g_c)?;
    let dw = g.add_const(w, &g_w)?;
    let lc = g.smooth_l1(dc);
    let lw = g.smooth_l1(dw);
    let s = g.add(lc, lw)?;
    let s = g.sum(s);
    Ok(g.scale(s, T::from_f64(1.0 / pos.len() as f64)))
}

/// Mean squared distance between `p_des` and the per-proposal reward targets.
pub fn descriptiveness_loss<T: Real>(g: &mut Graph<T>, out: &TepOutput, rewards: &[f64]) -> Result<Var> {
    let n = g.value(out.des).len();
    if rewards.len() != n {
        return Err(Error::Shape(format!("{} rewards for {n} proposals", rewards.len())));
    }
    if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidInput(format!("reward {r} outside [0, 1]")));
    }
    let neg: Vec<T> = rewards.iter().map(|&r| T::from_f64(-r)).collect();
    let d = g.add_const(out.des, &neg)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

#[derive(Clone, Copy, Debug)]
pub struct TepLoss {
    pub total: Var,
    pub event: Var,
    pub tcr: Var,
    pub des: Var,
}

/// `L_event + α·L_tcr + β·L_des`. Rewards are constants.
pub fn tep_loss<T: Real>(
    g: &mut Graph<T>,
    out: &TepOutput,
    assignment: &LabelAssignment,
    ground_truth: &[TemporalSegment],
    rewards: &[f64],
    cfg: &TepConfig,
) -> Result<TepLoss> {
    let event = event_loss(g, out, assignment, cfg)?;
    let tcr = tcr_loss(g, out, assignment, ground_truth)?;
    let des = descriptiveness_loss(g, out, rewards)?;
    let a = g.scale(tcr, T::from_f64(cfg.alpha));
    let b = g.scale(des, T::from_f64(cfg.beta));
    let total = g.add(event, a)?;
    let total = g.add(total, b)?;
    Ok(TepLoss { total, event, tcr, des })
}

/// `p_event + λ0·p_des`.
pub fn fused_score(p: &ProposalPrediction, lambda0: f64) -> f64 {
    p.p_event + lambda0 * p.p_des
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selected {
    pub index: usize,
    pub confidence: f64,
}

/// Proposals whose fused score exceeds `threshold`, best first, at most
/// `top_k`. Ties keep anchor order.
pub fn fuse_and_select(predictions: &[ProposalPrediction], lambda0: f64, threshold: f64, top_k: usize) -> Vec<Selected> {
    rank_by_score(predictions.iter().map(|p| fused_score(p, lambda0)), threshold, top_k)
}

pub(crate) fn rank_by_score(scores: impl Iterator<Item = f64>, threshold: f64, top_k: usize) -> Vec<Selected> {
    let mut v: Vec<Selected> = scores
        .enumerate()
        .filter(|&(_, s)| s > threshold)
        .map(|(index, confidence)| Selected { index, confidence })
        .collect();
    v.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(std::cmp::Ordering::Equal));
    v.truncate(top_k);
    v
}
