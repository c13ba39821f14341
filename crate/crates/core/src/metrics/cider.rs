use std::collections::HashMap;

use rayon::prelude::*;

use super::bleu::ngram_counts;

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type NGram = Vec<String>;

/// CIDEr-D with document frequencies fixed by a reference corpus, where each
/// key (one segment) contributes a document.
#[derive(Clone, Debug)]
pub struct CiderD {
    df: HashMap<NGram, f64>,
    log_num_keys: f64,
}

struct TfIdf {
    vecs: Vec<HashMap<NGram, f64>>,
    norms: Vec<f64>,
    len: usize,
}

impl CiderD {
    pub fn new(corpus: &[Vec<Vec<String>>]) -> Self {
        let mut df: HashMap<NGram, f64> = HashMap::new();
        for refs in corpus {
            let mut seen: std::collections::HashSet<&[String]> = Default::default();
            for r in refs {
                for n in 1..=MAX_N {
                    seen.extend(ngram_counts(r, n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_insert(0.0) += 1.0;
            }
        }
        CiderD {
            df,
            log_num_keys: (corpus.len().max(1) as f64).ln(),
        }
    }

    pub fn num_keys(&self) -> usize {
        self.log_num_keys.exp().round() as usize
    }

    pub fn document_frequency(&self, ngram: &[String]) -> f64 {
        self.df.get(ngram).copied().unwrap_or(0.0)
    }

    fn vectorize(&self, tokens: &[String]) -> TfIdf {
        let mut vecs = Vec::with_capacity(MAX_N);
        let mut norms = Vec::with_capacity(MAX_N);
        for n in 1..=MAX_N {
            let v: HashMap<NGram, f64> = ngram_counts(tokens, n)
                .into_iter()
                .map(|(g, c)| {
                    let idf = self.log_num_keys - self.document_frequency(g).max(1.0).ln();
                    (g.to_vec(), c as f64 * idf)
                })
                .collect();
            norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
            vecs.push(v);
        }
        TfIdf {
            vecs,
            norms,
            len: tokens.len(),
        }
    }

    fn similarity(hyp: &TfIdf, refr: &TfIdf) -> [f64; MAX_N] {
        let delta = hyp.len as f64 - refr.len as f64;
        let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
        let mut out = [0.0; MAX_N];
        for n in 0..MAX_N {
            let dot: f64 = hyp.vecs[n]
                .iter()
                .filter_map(|(g, &h)| refr.vecs[n].get(g).map(|&r| h.min(r) * r))
                .sum();
            if hyp.norms[n] != 0.0 && refr.norms[n] != 0.0 {
                out[n] = dot / (hyp.norms[n] * refr.norms[n]) * penalty;
            }
        }
        out
    }

    /// Score in `[0, 10]` of one candidate against its references.
    pub fn score(&self, candidate: &[String], references: &[Vec<String>]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let hyp = self.vectorize(candidate);
        let mut per_n = [0.0; MAX_N];
        for r in references {
            let sim = Self::similarity(&hyp, &self.vectorize(r));
            for n in 0..MAX_N {
                per_n[n] += sim[n];
            }
        }
        let m = references.len() as f64;
        per_n.iter().map(|s| s / m).sum::<f64>() / MAX_N as f64 * 10.0
    }
}

/// Mean CIDEr-D over keys, with document frequencies from `references`.
pub fn cider_d(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    let scorer = CiderD::new(references);
    let total: f64 = candidates
        .par_iter()
        .zip(references.par_iter())
        .map(|(c, r)| scorer.score(c, r))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / candidates.len() as f64
}
