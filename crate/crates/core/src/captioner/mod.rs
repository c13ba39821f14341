//! Attribute-augmented LSTM captioner.
//!
//! The attribute vector is fed at the first step and the pooled segment
//! feature at the second; words start at the third step with `BOS`. Only
//! word steps produce outputs.

mod attention;
mod vocab;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

pub use attention::{
    attention_pool, attention_pool_through, attention_weights, clip_descriptiveness, clips_in_segment,
    covering_predictions, NEUTRAL_DESCRIPTIVENESS,
};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};

use crate::error::{Error, Result};
use crate::metrics::CaptionMetric;
use crate::tensor_engine::{self as te, BoundParams, Graph, LstmParams, ParamStore, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionerConfig {
    pub vocab_size: usize,
    /// Attribute width `K`.
    pub attr_dim: usize,
    /// Pooled feature width `D0`.
    pub feat_dim: usize,
    pub embed: usize,
    pub hidden: usize,
    pub max_len: usize,
    /// Let caption gradients flow through the attention weights.
    pub attention_passthrough: bool,
    pub reward_metric: CaptionMetric,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        CaptionerConfig {
            vocab_size: 0,
            attr_dim: 16,
            feat_dim: 32,
            embed: 64,
            hidden: 64,
            max_len: 20,
            attention_passthrough: false,
            reward_metric: CaptionMetric::MeteorLite,
        }
    }
}

impl CaptionerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= UNK {
            return Err(Error::Config(format!(
                "vocabulary of {} tokens has no words beyond the reserved ids",
                self.vocab_size
            )));
        }
        if [self.attr_dim, self.feat_dim, self.embed, self.hidden].contains(&0) {
            return Err(Error::Config("captioner widths must be positive".into()));
        }
        Ok(())
    }
}

/// Xavier-uniform weights, zero biases except the LSTM forget gate at +1.
pub fn init_params<T: Real, R: Rng + ?Sized>(cfg: &CaptionerConfig, rng: &mut R) -> ParamStore<T> {
    let (v, e, h) = (cfg.vocab_size, cfg.embed, cfg.hidden);
    let mut p = ParamStore::new();
    p.insert("sg.embed", te::xavier_uniform(&[v, e], v, e, rng));
    p.insert("sg.attr.w", te::xavier_uniform(&[cfg.attr_dim, e], cfg.attr_dim, e, rng));
    p.insert("sg.attr.b", Tensor::zeros(&[e]));
    p.insert("sg.feat.w", te::xavier_uniform(&[cfg.feat_dim, e], cfg.feat_dim, e, rng));
    p.insert("sg.feat.b", Tensor::zeros(&[e]));
    p.insert("sg.lstm.wx", te::xavier_uniform(&[e, 4 * h], e, 4 * h, rng));
    p.insert("sg.lstm.wh", te::xavier_uniform(&[h, 4 * h], h, 4 * h, rng));
    let mut b = vec![T::zero(); 4 * h];
    b[h..2 * h].iter_mut().for_each(|x| *x = T::one());
    p.insert("sg.lstm.b", Tensor::vector(b));
    p.insert("sg.out.w", te::xavier_uniform(&[h, v], h, v, rng));
    p.insert("sg.out.b", Tensor::zeros(&[v]));
    p
}

pub fn param_count(cfg: &CaptionerConfig) -> usize {
    let (v, e, h) = (cfg.vocab_size, cfg.embed, cfg.hidden);
    v * e + (cfg.attr_dim + 1) * e + (cfg.feat_dim + 1) * e + (e + h + 1) * 4 * h + (h + 1) * v
}

/// Recurrent state after the attribute and feature steps.
#[derive(Clone, Copy, Debug)]
pub struct Primed {
    h: Var,
    c: Var,
}

struct Cell {
    lstm: LstmParams,
    embed: Var,
    out_w: Var,
    out_b: Var,
    embed_dim: usize,
    vocab: usize,
}

impl Cell {
    fn bind<T: Real>(g: &Graph<T>, p: &BoundParams) -> Result<Self> {
        let embed = p.get("sg.embed")?;
        let shape = g.shape(embed);
        let (vocab, embed_dim) = (shape[0], shape[1]);
        Ok(Cell {
            lstm: LstmParams {
                wx: p.get("sg.lstm.wx")?,
                wh: p.get("sg.lstm.wh")?,
                b: p.get("sg.lstm.b")?,
            },
            embed,
            out_w: p.get("sg.out.w")?,
            out_b: p.get("sg.out.b")?,
            embed_dim,
            vocab,
        })
    }

    /// Feeds `word` and returns the next state and output logits.
    fn word_step<T: Real>(&self, g: &mut Graph<T>, state: Primed, word: usize) -> Result<(Primed, Var)> {
        if word >= self.vocab {
            return Err(Error::InvalidInput(format!(
                "token id {word} outside vocabulary of {}",
                self.vocab
            )));
        }
        let x = g.gather(self.embed, (word * self.embed_dim..(word + 1) * self.embed_dim).collect())?;
        let (h, c) = te::lstm_step(g, x, state.h, state.c, &self.lstm)?;
        let logits = te::fully_connected(g, h, self.out_w, self.out_b)?;
        Ok((Primed { h, c }, logits))
    }
}

/// Runs the attribute step then the feature step from a zero state.
pub fn prime<T: Real>(g: &mut Graph<T>, p: &BoundParams, attributes: Var, feature: Var) -> Result<Primed> {
    let cell = Cell::bind(g, p)?;
    let hidden = g.shape(cell.lstm.wh)[0];
    let h0 = g.constant(Tensor::zeros(&[hidden]));
    let c0 = g.constant(Tensor::zeros(&[hidden]));
    let a = te::fully_connected(g, attributes, p.get("sg.attr.w")?, p.get("sg.attr.b")?)?;
    let (h, c) = te::lstm_step(g, a, h0, c0, &cell.lstm)?;
    let f = te::fully_connected(g, feature, p.get("sg.feat.w")?, p.get("sg.feat.b")?)?;
    let (h, c) = te::lstm_step(g, f, h, c, &cell.lstm)?;
    Ok(Primed { h, c })
}

/// Teacher-forced `−log Pr(sentence)` summed over word steps. `sentence`
/// holds word ids and must end with `EOS`.
pub fn caption_xe_loss<T: Real>(
    g: &mut Graph<T>,
    p: &BoundParams,
    attributes: Var,
    feature: Var,
    sentence: &[usize],
) -> Result<Var> {
    if sentence.last() != Some(&EOS) {
        return Err(Error::InvalidInput("target sentence must end with EOS".into()));
    }
    let cell = Cell::bind(g, p)?;
    if let Some(&bad) = sentence.iter().find(|&&w| w >= cell.vocab) {
        return Err(Error::InvalidInput(format!(
            "token id {bad} outside vocabulary of {}",
            cell.vocab
        )));
    }
    let mut state = prime(g, p, attributes, feature)?;
    let mut logits = Vec::with_capacity(sentence.len());
    let mut prev = BOS;
    for &w in sentence {
        let (next, l) = cell.word_step(g, state, prev)?;
        logits.push(l);
        state = next;
        prev = w;
    }
    let stacked = g.concat(&logits)?;
    let stacked = g.reshape(stacked, vec![sentence.len(), cell.vocab])?;
    let per_step = g.xent_rows(stacked, sentence.to_vec())?;
    Ok(g.sum(per_step))
}

fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Most likely word at every step until `EOS` or `max_len` words. The
/// returned ids exclude `EOS`.
pub fn greedy_decode<T: Real>(
    g: &mut Graph<T>,
    p: &BoundParams,
    attributes: Var,
    feature: Var,
    max_len: usize,
) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Ok(Vec::new());
    }
    let cell = Cell::bind(g, p)?;
    let mut state = prime(g, p, attributes, feature)?;
    let mut out = Vec::new();
    let mut prev = BOS;
    while out.len() < max_len {
        let (next, logits) = cell.word_step(g, state, prev)?;
        let w = argmax(g.data(logits));
        if w == EOS {
            break;
        }
        out.push(w);
        state = next;
        prev = w;
    }
    Ok(out)
}

/// A sampled sentence and its differentiable log-probability.
#[derive(Clone, Debug)]
pub struct SampledSentence {
    /// Word ids without the terminating `EOS`.
    pub words: Vec<usize>,
    /// `log p` of every drawn token, including `EOS` when drawn.
    pub step_log_probs: Vec<Var>,
    /// Sum of `step_log_probs`, shape `[1]`.
    pub log_prob: Var,
}

/// Draws one word per step from the softmax of the output logits.
pub fn sample_decode<T: Real, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    p: &BoundParams,
    attributes: Var,
    feature: Var,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledSentence> {
    let cell = Cell::bind(g, p)?;
    let mut state = prime(g, p, attributes, feature)?;
    let mut words = Vec::new();
    let mut step_log_probs = Vec::new();
    let mut prev = BOS;
    while words.len() < max_len {
        let (next, logits) = cell.word_step(g, state, prev)?;
        let w = sample_softmax(g.data(logits), rng)?;
        let nll = g.xent_rows(logits, vec![w])?;
        step_log_probs.push(g.neg(nll));
        if w == EOS {
            break;
        }
        words.push(w);
        state = next;
        prev = w;
    }
    let log_prob = if step_log_probs.is_empty() {
        g.constant(Tensor::scalar(T::zero()))
    } else {
        let all = g.concat(&step_log_probs)?;
        let s = g.sum(all);
        g.reshape(s, vec![1])?
    };
    Ok(SampledSentence {
        words,
        step_log_probs,
        log_prob,
    })
}

/// One draw from `softmax(logits)`.
pub fn sample_softmax<T: Real, R: Rng + ?Sized>(logits: &[T], rng: &mut R) -> Result<usize> {
    let max = logits.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|x| (x.as_f64() - max).exp()).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidInput(format!("cannot sample from logits: {e}")))?;
    Ok(dist.sample(rng))
}

/// Self-critical loss `−(r_sample − r_greedy)·log p(sample)`.
pub fn scst_loss<T: Real>(g: &mut Graph<T>, sample: &SampledSentence, r_sample: f64, r_greedy: f64) -> Var {
    g.scale(sample.log_prob, T::from_f64(r_greedy - r_sample))
}

/// Inputs of one caption as graph constants.
pub fn caption_inputs<T: Real>(g: &mut Graph<T>, attributes: &[f64], feature: &[f64]) -> (Var, Var) {
    let a = g.constant(Tensor::vector(attributes.iter().map(|&x| T::from_f64(x)).collect()));
    let f = g.constant(Tensor::vector(feature.iter().map(|&x| T::from_f64(x)).collect()));
    (a, f)
}
