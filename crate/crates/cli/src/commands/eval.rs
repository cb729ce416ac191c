use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use masque::data::{read_jsonl, RawExample};
use masque::eval::{bleu_1, exact_match, map_mrr, pr_curve_max_f1, rouge_l, Normalize};

use super::decode::Prediction;
use crate::files::{read_corpus, write_text};
use crate::{CliError, EvalArgs};

const METRICS: [&str; 7] = ["rouge", "bleu", "map", "mrr", "f1", "em", "copy"];

/// Style whose reference defines the `copy` metric.
const COPY_STYLE: &str = "qa";

/// One report row: metric name, number of scored items, value.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub metric: &'static str,
    pub n: usize,
    pub value: f64,
}

fn parse_metrics(list: &str) -> Result<Vec<&'static str>, CliError> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let known = METRICS
            .iter()
            .find(|m| **m == name)
            .ok_or_else(|| CliError::Invalid(format!("unknown metric {name:?}; expected some of {}", METRICS.join(","))))?;
        if !out.contains(known) {
            out.push(*known);
        }
    }
    if out.is_empty() {
        return Err(CliError::Invalid("--metrics names no metric".into()));
    }
    Ok(out)
}

fn contains_span(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Scores predictions against the corpus they were decoded from.
///
/// Text metrics use the answerable examples that have a reference in the
/// prediction's style; `copy` is the share of answerable examples whose
/// prediction contains the `qa` reference as a contiguous span.
pub fn score(preds: &[Prediction], corpus: &[RawExample], metrics: &[&'static str], norm: Normalize) -> Result<Vec<Score>, CliError> {
    let by_id: HashMap<&str, &RawExample> = corpus.iter().map(|e| (e.query_id.as_str(), e)).collect();
    let mut joined = Vec::with_capacity(preds.len());
    for p in preds {
        let ex = by_id
            .get(p.query_id.as_str())
            .ok_or_else(|| CliError::Invalid(format!("prediction for unknown query_id {:?}", p.query_id)))?;
        joined.push((p, *ex));
    }
    let text_pairs: Vec<(&Prediction, &Vec<String>)> = joined
        .iter()
        .filter(|(_, ex)| ex.answerable)
        .filter_map(|(p, ex)| ex.answers.get(&p.style).filter(|r| !r.is_empty()).map(|r| (*p, r)))
        .collect();
    let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };

    let mut rows = Vec::new();
    let mut ranking = None;
    for &metric in metrics {
        match metric {
            "rouge" => {
                let xs: Vec<f64> = text_pairs.iter().map(|(p, r)| rouge_l(&p.answer, r, norm)).collect();
                rows.push(Score { metric: "rouge_l", n: xs.len(), value: mean(&xs) });
            }
            "bleu" => {
                let pairs: Vec<(String, Vec<String>)> =
                    text_pairs.iter().map(|(p, r)| (p.answer.clone(), (*r).clone())).collect();
                let value = if pairs.is_empty() { f64::NAN } else { bleu_1(&pairs, norm)? };
                rows.push(Score { metric: "bleu_1", n: pairs.len(), value });
            }
            "em" => {
                let xs: Vec<f64> = text_pairs
                    .iter()
                    .map(|(p, r)| f64::from(u8::from(exact_match(&p.answer, r, norm))))
                    .collect();
                rows.push(Score { metric: "exact_match", n: xs.len(), value: mean(&xs) });
            }
            "copy" => {
                let xs: Vec<f64> = joined
                    .iter()
                    .filter(|(_, ex)| ex.answerable)
                    .filter_map(|(p, ex)| ex.reference(COPY_STYLE).map(|r| (p, r)))
                    .map(|(p, r)| f64::from(u8::from(contains_span(&norm.tokens(&p.answer), &norm.tokens(r)))))
                    .collect();
                rows.push(Score { metric: "copy_accuracy", n: xs.len(), value: mean(&xs) });
            }
            "map" | "mrr" => {
                let (n, map, mrr) = *ranking.get_or_insert_with(|| {
                    let judged: Vec<(Vec<f64>, Vec<bool>)> = joined
                        .iter()
                        .filter(|(p, ex)| !p.passage_scores.is_empty() && ex.passages.iter().any(|q| q.is_selected))
                        .map(|(p, ex)| {
                            let rel: Vec<bool> = ex.passages.iter().map(|q| q.is_selected).collect();
                            let k = p.passage_scores.len().min(rel.len());
                            (p.passage_scores[..k].to_vec(), rel[..k].to_vec())
                        })
                        .collect();
                    let (map, mrr) = map_mrr(&judged).unwrap_or((f64::NAN, f64::NAN));
                    (judged.len(), map, mrr)
                });
                let value = if metric == "map" { map } else { mrr };
                rows.push(Score { metric, n, value });
            }
            "f1" => {
                let (probs, labels): (Vec<f64>, Vec<bool>) = joined
                    .iter()
                    .filter_map(|(p, ex)| p.answer_prob.map(|a| (a, ex.answerable)))
                    .unzip();
                let (f1, thr) = if probs.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    let curve = pr_curve_max_f1(&probs, &labels);
                    if let Some(note) = &curve.note {
                        log::warn!("{note}");
                    }
                    (curve.max_f1, curve.best_threshold)
                };
                rows.push(Score { metric: "max_f1", n: probs.len(), value: f1 });
                rows.push(Score { metric: "f1_threshold", n: probs.len(), value: thr });
            }
            other => unreachable!("metric {other} was validated"),
        }
    }
    Ok(rows)
}

fn load_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    Ok(read_jsonl(path)?)
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let metrics = parse_metrics(&args.metrics)?;
    let norm = Normalize { strip_punctuation: args.strip_punctuation };
    let corpus = read_corpus(&args.data)?;
    let main = score(&load_predictions(&args.pred)?, &corpus, &metrics, norm)?;
    let other = match &args.compare {
        Some(path) => Some(score(&load_predictions(path)?, &corpus, &metrics, norm)?),
        None => None,
    };

    let mut csv = String::new();
    match &other {
        None => {
            csv.push_str("metric,n,value\n");
            for s in &main {
                let _ = writeln!(csv, "{},{},{}", s.metric, s.n, s.value);
            }
        }
        Some(other) => {
            csv.push_str("metric,n,value,compare_n,compare_value,delta\n");
            for (s, o) in main.iter().zip(other) {
                let _ = writeln!(csv, "{},{},{},{},{},{}", s.metric, s.n, s.value, o.n, o.value, o.value - s.value);
            }
        }
    }
    write_text(&args.out, &csv)?;
    print!("{csv}");
    Ok(())
}
