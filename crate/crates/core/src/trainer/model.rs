use rand::Rng;

use crate::anchors::{Anchor, TemporalSegment};
use crate::captioner::{self, attention_weights, clip_descriptiveness, clips_in_segment, CaptionerConfig, Vocabulary};
use crate::dataio::{Checkpoint, RunConfig, Video};
use crate::error::{Error, Result};
use crate::tensor_engine::{BoundParams, Graph, ParamStore, Tensor};
use crate::tep::{self, ProposalPrediction, TepConfig};

/// Both networks with one shared parameter store (`tep.*` and `sg.*`).
#[derive(Clone, Debug)]
pub struct Model {
    pub tep: TepConfig,
    pub sg: CaptionerConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore<f32>,
    anchors: Vec<Anchor>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(tep_cfg: TepConfig, mut sg: CaptionerConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        tep_cfg.validate()?;
        sg.vocab_size = vocab.len();
        sg.feat_dim = tep_cfg.input_dim;
        sg.validate()?;
        let mut params = tep::init_params(&tep_cfg, rng);
        params.merge(&captioner::init_params(&sg, rng));
        let anchors = tep_cfg.anchors()?;
        Ok(Model {
            tep: tep_cfg,
            sg,
            vocab,
            params,
            anchors,
        })
    }

    /// Wraps existing parameters after checking names and shapes against a
    /// fresh initialization of the same configuration.
    pub fn from_params(tep_cfg: TepConfig, sg: CaptionerConfig, vocab: Vocabulary, params: ParamStore<f32>) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let reference = Self::new(tep_cfg, sg, vocab, &mut rng)?;
        if reference.params.len() != params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, configuration expects {}",
                params.len(),
                reference.params.len()
            )));
        }
        for (name, t) in reference.params.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter `{name}`")))?;
            if got.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "parameter `{name}` has shape {:?}, configuration expects {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Model { params, ..reference })
    }

    /// Rebuilds a model from a checkpoint written by the CLI, using `cfg`
    /// for the network shapes and the vocabulary stored in its metadata.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<Self> {
        let vocab_json = ckpt
            .metadata
            .get("vocab")
            .ok_or_else(|| Error::Format("checkpoint has no vocabulary".into()))?;
        let vocab: Vocabulary =
            serde_json::from_str(vocab_json).map_err(|e| Error::Format(format!("checkpoint vocabulary: {e}")))?;
        Self::from_params(cfg.tep.clone(), cfg.sg.clone(), vocab, ckpt.params.clone())
    }

    /// The configuration stored in a checkpoint's metadata.
    pub fn stored_config(ckpt: &Checkpoint) -> Result<RunConfig> {
        let text = ckpt
            .metadata
            .get("config")
            .ok_or_else(|| Error::Format("checkpoint has no stored configuration".into()))?;
        RunConfig::from_json_str(text)
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub(crate) fn check_video(&self, video: &Video) -> Result<()> {
        if video.features.shape() != [self.tep.input_len, self.tep.input_dim] {
            return Err(Error::Shape(format!(
                "video `{}` has features {:?}, the model expects [{}, {}]",
                video.id,
                video.features.shape(),
                self.tep.input_len,
                self.tep.input_dim
            )));
        }
        if video.attributes.len() != self.sg.attr_dim {
            return Err(Error::Shape(format!(
                "video `{}` has {} attributes, the model expects {}",
                video.id,
                video.attributes.len(),
                self.sg.attr_dim
            )));
        }
        Ok(())
    }

    /// Proposal predictions for every anchor, without gradients.
    pub fn predict(&self, video: &Video) -> Result<Vec<ProposalPrediction>> {
        self.check_video(video)?;
        let mut g = Graph::new();
        let bound = self.params.bind_frozen(&mut g);
        Ok(tep::tep_forward(&mut g, &bound, &video.features, &self.tep, &self.anchors)?.predictions)
    }

    /// Greedy caption of a pooled feature on an inference graph.
    pub fn caption_feature(&self, g: &mut Graph<f32>, bound: &BoundParams, attributes: &[f64], feature: &[f64]) -> Result<Vec<usize>> {
        let (a, f) = captioner::caption_inputs(g, attributes, feature);
        captioner::greedy_decode(g, bound, a, f, self.sg.max_len)
    }

    /// A graph holding frozen copies of the parameters.
    pub fn inference_graph(&self) -> (Graph<f32>, BoundParams) {
        let mut g = Graph::new();
        let bound = self.params.bind_frozen(&mut g);
        (g, bound)
    }
}

/// Mean of the clip rows inside `segment`.
pub fn mean_pool(video: &Video, segment: &TemporalSegment) -> Vec<f64> {
    let clips = clips_in_segment(segment, video.num_clips());
    weighted_pool(video, &clips, &vec![1.0 / clips.len() as f64; clips.len()])
}

/// Descriptiveness of every clip of the video.
pub fn clip_scores(predictions: &[ProposalPrediction], num_clips: usize) -> Vec<f64> {
    (0..num_clips)
        .map(|i| clip_descriptiveness(predictions, i, num_clips))
        .collect()
}

/// Attention-weighted mean of the clips inside `segment`.
pub fn attention_feature(video: &Video, segment: &TemporalSegment, scores: &[f64]) -> Result<Vec<f64>> {
    let clips = clips_in_segment(segment, video.num_clips());
    let s: Vec<f64> = clips.iter().map(|&c| scores[c]).collect();
    Ok(weighted_pool(video, &clips, &attention_weights(&s)?))
}

fn weighted_pool(video: &Video, clips: &[usize], weights: &[f64]) -> Vec<f64> {
    let d = video.features.shape()[1];
    let rows = video.clip_rows(clips);
    let mut out = vec![0.0; d];
    for (row, &w) in rows.chunks(d).zip(weights) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    out
}

pub(crate) fn clip_matrix(video: &Video, clips: &[usize]) -> Tensor<f32> {
    let d = video.features.shape()[1];
    let data = video.clip_rows(clips).into_iter().map(|x| x as f32).collect();
    Tensor::new(vec![clips.len(), d], data).expect("non-empty clip range")
}
