//! Brute-force metric oracles shared by the integration tests. None of
//! this reuses library code: n-grams by linear scan, METEOR-lite alignments
//! by exhaustive enumeration, AR by direct counting.
#![allow(dead_code)]

pub const TOL: f64 = 1e-9;

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

pub fn ngrams(t: &[String], n: usize) -> Vec<&[String]> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| &t[i..i + n]).collect()
}

pub fn count(list: &[&[String]], g: &[String]) -> usize {
    list.iter().filter(|x| **x == g).count()
}

pub fn brute_bleu(cand: &[String], refs: &[Vec<String>], max_n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cg = ngrams(cand, n);
        if cg.is_empty() {
            return 0.0;
        }
        let mut distinct: Vec<&[String]> = Vec::new();
        for g in &cg {
            if !distinct.contains(g) {
                distinct.push(g);
            }
        }
        let clipped: usize = distinct
            .iter()
            .map(|g| {
                let max_ref = refs.iter().map(|r| count(&ngrams(r, n), g)).max().unwrap_or(0);
                count(&cg, g).min(max_ref)
            })
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / cg.len() as f64).ln();
    }
    let c = cand.len() as f64;
    let mut r = refs[0].len() as f64;
    for x in refs {
        let l = x.len() as f64;
        if (l - c).abs() < (r - c).abs() || ((l - c).abs() == (r - c).abs() && l < r) {
            r = l;
        }
    }
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

/// Every partial one-to-one matching of equal words, reduced to the best
/// (max matches, then min chunks).
pub fn brute_alignment(cand: &[String], refr: &[String]) -> (usize, usize) {
    fn go(i: usize, cand: &[String], refr: &[String], used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == cand.len() {
            let m = pairs.len();
            let chunks = if m == 0 {
                0
            } else {
                1 + pairs.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
            };
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        go(i + 1, cand, refr, used, pairs, best);
        for j in 0..refr.len() {
            if !used[j] && refr[j] == cand[i] {
                used[j] = true;
                pairs.push((i, j));
                go(i + 1, cand, refr, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    go(0, cand, refr, &mut vec![false; refr.len()], &mut Vec::new(), &mut best);
    (best.0, if best.0 == 0 { 0 } else { best.1 })
}

pub fn brute_meteor(cand: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter()
        .map(|r| {
            let (m, chunks) = brute_alignment(cand, r);
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / cand.len() as f64;
            let rc = m as f64 / r.len() as f64;
            let f = 10.0 * p * rc / (rc + 9.0 * p);
            f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
        })
        .fold(0.0, f64::max)
}

/// CIDEr-D written out term by term: tf·(ln K − ln max(1, df)) vectors,
/// clipped dot product, Gaussian length penalty with σ = 6, ×10.
pub fn brute_cider(cand: &[String], refs: &[Vec<String>], corpus: &[Vec<Vec<String>>]) -> f64 {
    let k = corpus.len() as f64;
    let df = |g: &[String]| -> f64 {
        corpus
            .iter()
            .filter(|doc| doc.iter().any(|r| r.windows(g.len()).any(|w| w == g)))
            .count() as f64
    };
    let vector = |t: &[String], n: usize| -> Vec<(Vec<String>, f64)> {
        let all = ngrams(t, n);
        let mut out: Vec<(Vec<String>, f64)> = Vec::new();
        for g in &all {
            if out.iter().all(|(x, _)| x.as_slice() != *g) {
                let tf = count(&all, g) as f64;
                out.push((g.to_vec(), tf * (k.ln() - df(g).max(1.0).ln())));
            }
        }
        out
    };
    let norm = |v: &[(Vec<String>, f64)]| v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for n in 1..=4 {
        let h = vector(cand, n);
        let mut acc = 0.0;
        for r in refs {
            let rv = vector(r, n);
            let mut dot = 0.0;
            for (g, hv) in &h {
                if let Some((_, x)) = rv.iter().find(|(y, _)| y == g) {
                    dot += hv.min(*x) * x;
                }
            }
            let (nh, nr) = (norm(&h), norm(&rv));
            if nh > 0.0 && nr > 0.0 {
                let d = cand.len() as f64 - r.len() as f64;
                acc += dot / (nh * nr) * (-(d * d) / 72.0).exp();
            }
        }
        total += acc / refs.len() as f64;
    }
    total / 4.0 * 10.0
}

pub fn tiou_oracle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    inter / union
}

pub fn brute_ar(pred: &[Vec<(f64, f64)>], gt: &[Vec<(f64, f64)>], an: usize) -> f64 {
    let mut sum = 0.0;
    for k in 0..10 {
        let tau = 0.5 + 0.05 * k as f64;
        let (mut hit, mut tot) = (0, 0);
        for (p, g) in pred.iter().zip(gt) {
            for s in g {
                tot += 1;
                if p.iter().take(an).any(|q| tiou_oracle(*q, *s) >= tau - 1e-9) {
                    hit += 1;
                }
            }
        }
        sum += hit as f64 / tot as f64;
    }
    sum / 10.0
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}
