//! Run configuration: a flat JSON object with dotted keys. Unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::synth::SynthSpec;
use crate::captioner::CaptionerConfig;
use crate::error::{Error, Result};
use crate::metrics::CaptionMetric;
use crate::tep::TepConfig;
use crate::trainer::{EvalConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub tep: TepConfig,
    pub sg: CaptionerConfig,
    /// Vocabulary file (JSON token list) used instead of the corpus words.
    pub vocab_path: Option<PathBuf>,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthSpec,
}

fn bad(key: &str, v: &Value, want: &str) -> Error {
    Error::Config(format!("`{key}` must be {want}, got {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(key, v, "a number"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| bad(key, v, "a non-negative integer"))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64().ok_or_else(|| bad(key, v, "a non-negative integer"))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, v, "a boolean"))
}

fn as_f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| bad(key, v, "an array of numbers"))?
        .iter()
        .map(|x| as_f64(key, x))
        .collect()
}

fn metric(key: &str, v: &Value) -> Result<CaptionMetric> {
    let s = v.as_str().ok_or_else(|| bad(key, v, "a metric name"))?;
    CaptionMetric::parse(s).map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let map = value
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object of dotted keys".into()))?;
        let mut cfg = RunConfig::default();
        cfg.apply(map)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn apply(&mut self, map: &Map<String, Value>) -> Result<()> {
        for (key, v) in map {
            self.set(key, v)?;
        }
        self.validate()
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let k = key;
        match key {
            "tep.input_len" => self.tep.input_len = as_usize(k, v)?,
            "tep.input_dim" => self.tep.input_dim = as_usize(k, v)?,
            "tep.base_filters" => {
                let f: Vec<usize> = v
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| bad(k, v, "a two-element array"))?
                    .iter()
                    .map(|x| as_usize(k, x))
                    .collect::<Result<_>>()?;
                self.tep.base_filters = [f[0], f[1]];
            }
            "tep.anchor_layers" => self.tep.anchor_layers = as_usize(k, v)?,
            "tep.anchor_filters" => self.tep.anchor_filters = as_usize(k, v)?,
            "tep.ratios" => self.tep.ratios = as_f64_list(k, v)?,
            "tep.alpha1" => self.tep.alpha1 = as_f64(k, v)?,
            "tep.alpha2" => self.tep.alpha2 = as_f64(k, v)?,
            "tep.alpha" => self.tep.alpha = as_f64(k, v)?,
            "tep.beta" => self.tep.beta = as_f64(k, v)?,
            "tep.lambda0" => self.tep.lambda0 = as_f64(k, v)?,
            "tep.select_threshold" => self.tep.select_threshold = as_f64(k, v)?,
            "tep.select_topk" => self.tep.select_topk = as_usize(k, v)?,
            "tep.match_threshold" => self.tep.match_threshold = as_f64(k, v)?,
            "tep.hard_negative_ratio" => {
                self.tep.hard_negative_ratio = if v.is_null() { None } else { Some(as_f64(k, v)?) }
            }
            "tep.hard_negative_cap" => self.tep.hard_negative_cap = as_usize(k, v)?,
            "tep.match_on_defaults" => self.tep.match_on_defaults = as_bool(k, v)?,
            "sg.attr_dim" => self.sg.attr_dim = as_usize(k, v)?,
            "sg.embed" => self.sg.embed = as_usize(k, v)?,
            "sg.hidden" => self.sg.hidden = as_usize(k, v)?,
            "sg.max_len" => self.sg.max_len = as_usize(k, v)?,
            "sg.attention_passthrough" => self.sg.attention_passthrough = as_bool(k, v)?,
            "sg.reward_metric" => {
                self.sg.reward_metric = match metric(k, v)? {
                    m @ (CaptionMetric::MeteorLite | CaptionMetric::Bleu(4) | CaptionMetric::CiderD) => m,
                    _ => return Err(bad(k, v, "one of meteor_lite, bleu4, cider_d")),
                }
            }
            "sg.vocab_path" => {
                self.vocab_path = if v.is_null() {
                    None
                } else {
                    Some(PathBuf::from(v.as_str().ok_or_else(|| bad(k, v, "a path string"))?))
                }
            }
            "train.lambda1" => self.train.lambda1 = as_f64(k, v)?,
            "train.lambda2" => self.train.lambda2 = as_f64(k, v)?,
            "train.lr" => self.train.adam.lr = as_f64(k, v)?,
            "train.beta1" => self.train.adam.beta1 = as_f64(k, v)?,
            "train.beta2" => self.train.adam.beta2 = as_f64(k, v)?,
            "train.eps" => self.train.adam.eps = as_f64(k, v)?,
            "train.pretrain_lr" => self.train.pretrain_lr = as_f64(k, v)?,
            "train.epochs" => self.train.epochs = as_usize(k, v)?,
            "train.pretrain_epochs" => self.train.pretrain_epochs = as_usize(k, v)?,
            "train.seed" => self.train.seed = as_u64(k, v)?,
            "train.clip_norm" => self.train.clip_norm = as_f64(k, v)?,
            "train.joint_topk" => self.train.joint_topk = as_usize(k, v)?,
            "train.checkpoint_every" => self.train.checkpoint_every = as_u64(k, v)?,
            "eval.an_min" => self.eval.an_min = as_usize(k, v)?,
            "eval.an_max" => self.eval.an_max = as_usize(k, v)?,
            "eval.top_k" => self.eval.top_k = as_usize(k, v)?,
            "eval.thresholds" => self.eval.thresholds = as_f64_list(k, v)?,
            "eval.metrics" => {
                self.eval.metrics = v
                    .as_array()
                    .ok_or_else(|| bad(k, v, "an array of metric names"))?
                    .iter()
                    .map(|x| metric(k, x))
                    .collect::<Result<_>>()?
            }
            "synth.num_videos" => self.synth.num_videos = as_usize(k, v)?,
            "synth.t_f" => self.synth.num_clips = as_usize(k, v)?,
            "synth.d0" => self.synth.feature_dim = as_usize(k, v)?,
            "synth.prototypes" => self.synth.prototypes = as_usize(k, v)?,
            "synth.events_min" => self.synth.events_min = as_usize(k, v)?,
            "synth.events_max" => self.synth.events_max = as_usize(k, v)?,
            "synth.sigma" => self.synth.sigma = as_f64(k, v)?,
            "synth.grid_aligned" => self.synth.grid_aligned = as_bool(k, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.tep.validate()?;
        self.train.validate()?;
        if self.sg.max_len == 0 || self.sg.embed == 0 || self.sg.hidden == 0 || self.sg.attr_dim == 0 {
            return Err(Error::Config("captioner widths and max_len must be positive".into()));
        }
        if self.eval.an_min == 0 || self.eval.an_min > self.eval.an_max {
            return Err(Error::Config(format!(
                "AN range {}..={} is empty or starts at zero",
                self.eval.an_min, self.eval.an_max
            )));
        }
        Ok(())
    }

    /// Every key with its effective value, in key order.
    pub fn to_map(&self) -> BTreeMap<String, Value> {
        let metric_names: Vec<String> = self.eval.metrics.iter().map(|m| m.name()).collect();
        let entries = [
            ("tep.input_len", json!(self.tep.input_len)),
            ("tep.input_dim", json!(self.tep.input_dim)),
            ("tep.base_filters", json!(self.tep.base_filters)),
            ("tep.anchor_layers", json!(self.tep.anchor_layers)),
            ("tep.anchor_filters", json!(self.tep.anchor_filters)),
            ("tep.ratios", json!(self.tep.ratios)),
            ("tep.alpha1", json!(self.tep.alpha1)),
            ("tep.alpha2", json!(self.tep.alpha2)),
            ("tep.alpha", json!(self.tep.alpha)),
            ("tep.beta", json!(self.tep.beta)),
            ("tep.lambda0", json!(self.tep.lambda0)),
            ("tep.select_threshold", json!(self.tep.select_threshold)),
            ("tep.select_topk", json!(self.tep.select_topk)),
            ("tep.match_threshold", json!(self.tep.match_threshold)),
            ("tep.hard_negative_ratio", json!(self.tep.hard_negative_ratio)),
            ("tep.hard_negative_cap", json!(self.tep.hard_negative_cap)),
            ("tep.match_on_defaults", json!(self.tep.match_on_defaults)),
            ("sg.attr_dim", json!(self.sg.attr_dim)),
            ("sg.embed", json!(self.sg.embed)),
            ("sg.hidden", json!(self.sg.hidden)),
            ("sg.max_len", json!(self.sg.max_len)),
            ("sg.attention_passthrough", json!(self.sg.attention_passthrough)),
            ("sg.reward_metric", json!(self.sg.reward_metric.name())),
            ("sg.vocab_path", json!(self.vocab_path)),
            ("train.lambda1", json!(self.train.lambda1)),
            ("train.lambda2", json!(self.train.lambda2)),
            ("train.lr", json!(self.train.adam.lr)),
            ("train.beta1", json!(self.train.adam.beta1)),
            ("train.beta2", json!(self.train.adam.beta2)),
            ("train.eps", json!(self.train.adam.eps)),
            ("train.pretrain_lr", json!(self.train.pretrain_lr)),
            ("train.epochs", json!(self.train.epochs)),
            ("train.pretrain_epochs", json!(self.train.pretrain_epochs)),
            ("train.seed", json!(self.train.seed)),
            ("train.clip_norm", json!(self.train.clip_norm)),
            ("train.joint_topk", json!(self.train.joint_topk)),
            ("train.checkpoint_every", json!(self.train.checkpoint_every)),
            ("eval.an_min", json!(self.eval.an_min)),
            ("eval.an_max", json!(self.eval.an_max)),
            ("eval.top_k", json!(self.eval.top_k)),
            ("eval.thresholds", json!(self.eval.thresholds)),
            ("eval.metrics", json!(metric_names)),
            ("synth.num_videos", json!(self.synth.num_videos)),
            ("synth.t_f", json!(self.synth.num_clips)),
            ("synth.d0", json!(self.synth.feature_dim)),
            ("synth.prototypes", json!(self.synth.prototypes)),
            ("synth.events_min", json!(self.synth.events_min)),
            ("synth.events_max", json!(self.synth.events_max)),
            ("synth.sigma", json!(self.synth.sigma)),
            ("synth.grid_aligned", json!(self.synth.grid_aligned)),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_map()).expect("config serializes")
    }

    /// SHA-256 of the model-defining keys (`tep.*` and `sg.*`).
    pub fn model_hash(&self) -> String {
        let model: BTreeMap<String, Value> = self
            .to_map()
            .into_iter()
            .filter(|(k, _)| k.starts_with("tep.") || (k.starts_with("sg.") && k != "sg.vocab_path"))
            .collect();
        let digest = Sha256::digest(serde_json::to_string(&model).expect("config serializes").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
