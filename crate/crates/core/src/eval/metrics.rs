use crate::data::{tokenize, DataError};

/// ROUGE-L recall weight.
pub const ROUGE_BETA: f64 = 1.2;

/// Text normalization applied before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Normalize {
    /// Drop punctuation-only tokens as well.
    pub strip_punctuation: bool,
}

impl Normalize {
    pub fn tokens(self, text: &str) -> Vec<String> {
        let mut toks = tokenize(text);
        if self.strip_punctuation {
            toks.retain(|t| t.chars().any(|c| c.is_alphanumeric()));
        }
        toks
    }
}

fn lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure of token sequences.
pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], reference: &[T]) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs(pred, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let r = l / reference.len() as f64;
    let p = l / pred.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// Best ROUGE-L of `pred` against any reference.
pub fn rouge_l(pred: &str, refs: &[String], norm: Normalize) -> f64 {
    let p = norm.tokens(pred);
    refs.iter()
        .map(|r| rouge_l_tokens(&p, &norm.tokens(r)))
        .fold(0.0, f64::max)
}

/// Corpus BLEU-1: clipped unigram precision times the brevity penalty, with
/// the reference length closest to each prediction (shorter wins ties).
pub fn bleu_1(pairs: &[(String, Vec<String>)], norm: Normalize) -> Result<f64, DataError> {
    if pairs.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let (mut matched, mut cand, mut reflen) = (0usize, 0usize, 0usize);
    for (pred, refs) in pairs {
        let p = norm.tokens(pred);
        let rs: Vec<Vec<String>> = refs.iter().map(|r| norm.tokens(r)).collect();
        let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        for t in &p {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (tok, n) in counts {
            let max_ref = rs
                .iter()
                .map(|r| r.iter().filter(|t| t.as_str() == tok).count())
                .max()
                .unwrap_or(0);
            matched += n.min(max_ref);
        }
        cand += p.len();
        reflen += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| (len.abs_diff(p.len()), len))
            .unwrap_or(0);
    }
    if cand == 0 {
        return Ok(0.0);
    }
    let precision = matched as f64 / cand as f64;
    let bp = if cand > reflen {
        1.0
    } else {
        (1.0 - reflen as f64 / cand as f64).exp()
    };
    Ok(bp * precision)
}

/// Passage indices sorted by descending score; equal scores keep index order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Mean average precision and mean reciprocal rank over queries with at
/// least one relevant passage. Returns `None` when no query qualifies.
pub fn map_mrr(judgments: &[(Vec<f64>, Vec<bool>)]) -> Option<(f64, f64)> {
    let (mut ap_sum, mut rr_sum, mut n) = (0.0, 0.0, 0usize);
    for (scores, relevant) in judgments {
        assert_eq!(scores.len(), relevant.len(), "scores and relevance differ in length");
        if !relevant.iter().any(|&r| r) {
            continue;
        }
        let (mut hits, mut ap, mut rr) = (0usize, 0.0, 0.0);
        for (rank, &i) in ranking(scores).iter().enumerate() {
            if relevant[i] {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
                if hits == 1 {
                    rr = 1.0 / (rank + 1) as f64;
                }
            }
        }
        ap_sum += ap / hits as f64;
        rr_sum += rr;
        n += 1;
    }
    (n > 0).then(|| (ap_sum / n as f64, rr_sum / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// One point per distinct probability, in descending threshold order.
    pub points: Vec<PrPoint>,
    pub max_f1: f64,
    pub best_threshold: f64,
    /// Explains dropped points, if any.
    pub note: Option<String>,
}

/// Sweeps thresholds at every distinct probability, predicting positive
/// when `p >= threshold`. Points with undefined precision or recall are
/// dropped.
pub fn pr_curve_max_f1(probs: &[f64], labels: &[bool]) -> PrCurve {
    assert_eq!(probs.len(), labels.len(), "probabilities and labels differ in length");
    let mut thresholds: Vec<f64> = probs.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count();
    let mut points = Vec::new();
    let mut dropped = 0;
    for &thr in &thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&p, &l) in probs.iter().zip(labels) {
            if p >= thr {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        if positives == 0 || tp + fp == 0 {
            dropped += 1;
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        points.push(PrPoint {
            threshold: thr,
            precision,
            recall,
            f1,
        });
    }
    let mut best: Option<PrPoint> = None;
    for p in &points {
        if best.is_none_or(|b| p.f1 > b.f1) {
            best = Some(*p);
        }
    }
    let note = if positives == 0 {
        Some("no positive labels; precision and recall are undefined".to_string())
    } else if positives == labels.len() {
        Some("no negative labels; the curve is degenerate".to_string())
    } else if dropped > 0 {
        Some(format!("{dropped} thresholds with undefined precision dropped"))
    } else {
        None
    };
    PrCurve {
        max_f1: best.map_or(0.0, |b| b.f1),
        best_threshold: best.map_or(f64::NAN, |b| b.threshold),
        points,
        note,
    }
}

/// Whitespace-token exact match after normalization.
pub fn exact_match(pred: &str, refs: &[String], norm: Normalize) -> bool {
    let p = norm.tokens(pred);
    refs.iter().any(|r| norm.tokens(r) == p)
}
