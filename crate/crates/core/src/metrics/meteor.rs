//! METEOR restricted to exact unigram matches.
//!
//! The alignment maximizes matches, then minimizes chunks, where a chunk is a
//! maximal run of matches adjacent and in the same order in both sentences.
//! No stemming, synonym or paraphrase stages.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Matches and minimum chunk count of the best exact alignment.
pub fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut cand = Vec::with_capacity(candidate.len());
    let mut refr = Vec::with_capacity(reference.len());
    for (words, out) in [(candidate, &mut cand), (reference, &mut refr)] {
        for w in words {
            let n = ids.len();
            out.push(*ids.entry(w.as_str()).or_insert(n));
        }
    }
    let vocab = ids.len();

    let mut cand_count = vec![0usize; vocab];
    let mut ref_count = vec![0usize; vocab];
    cand.iter().for_each(|&w| cand_count[w] += 1);
    refr.iter().for_each(|&w| ref_count[w] += 1);
    let target: Vec<usize> = (0..vocab).map(|w| cand_count[w].min(ref_count[w])).collect();
    let matches: usize = target.iter().sum();
    if matches == 0 {
        return (0, 0);
    }
    // suffix[i][w]: occurrences of w in cand[i..].
    let mut suffix = vec![vec![0usize; vocab]; cand.len() + 1];
    for i in (0..cand.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        suffix[i][cand[i]] += 1;
    }
    let mut search = ChunkSearch {
        cand: &cand,
        refr: &refr,
        target: &target,
        suffix: &suffix,
        memo: HashMap::new(),
    };
    let words = refr.len().div_ceil(64).max(1);
    let chunks = search.run(0, None, &mut vec![0u64; words]);
    (matches, chunks)
}

struct ChunkSearch<'a> {
    cand: &'a [usize],
    refr: &'a [usize],
    target: &'a [usize],
    suffix: &'a [Vec<usize>],
    memo: HashMap<(usize, usize, Vec<u64>), usize>,
}

impl ChunkSearch<'_> {
    fn used_count(&self, used: &[u64], w: usize) -> usize {
        self.refr
            .iter()
            .enumerate()
            .filter(|&(j, &r)| r == w && used[j / 64] >> (j % 64) & 1 == 1)
            .count()
    }

    /// Minimum chunks for `cand[i..]` given the reference position matched
    /// to `cand[i-1]` and the set of used reference positions.
    fn run(&mut self, i: usize, prev: Option<usize>, used: &mut Vec<u64>) -> usize {
        if i == self.cand.len() {
            return 0;
        }
        let key = (i, prev.unwrap_or(usize::MAX), used.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let w = self.cand[i];
        let need = self.target[w] - self.used_count(used, w);
        let mut best = usize::MAX;
        if self.suffix[i + 1][w] >= need {
            best = self.run(i + 1, None, used);
        }
        if need > 0 {
            for j in 0..self.refr.len() {
                if self.refr[j] != w || used[j / 64] >> (j % 64) & 1 == 1 {
                    continue;
                }
                used[j / 64] |= 1 << (j % 64);
                let cont = prev.is_some_and(|p| p + 1 == j);
                let rest = self.run(i + 1, Some(j), used);
                used[j / 64] &= !(1 << (j % 64));
                if rest != usize::MAX {
                    best = best.min(rest + usize::from(!cont));
                }
            }
        }
        self.memo.insert(key, best);
        best
    }
}

fn score_one(candidate: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = align(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// Best score over the references.
pub fn meteor_lite(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::InvalidInput("METEOR needs at least one reference".into()));
    }
    Ok(references
        .iter()
        .map(|r| score_one(candidate, r))
        .fold(0.0, f64::max))
}
