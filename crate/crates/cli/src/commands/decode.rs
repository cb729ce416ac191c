use std::fmt::Write as _;
use std::path::Path;

use masque::config::RunConfig;
use masque::data::{encode_example, write_jsonl, Vocabulary};
use masque::training::load_checkpoint;
use masque::RankerSource;
use serde::{Deserialize, Serialize};

use crate::files::{read_corpus, read_json, write_text, CONFIG_FILE, VOCAB_FILE};
use crate::{CliError, DecodeArgs};

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_id: String,
    pub style: String,
    pub answer: String,
    #[serde(default)]
    pub no_answer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passage_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reader_digest: Option<String>,
}

pub fn run(args: DecodeArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.answerable_threshold) {
        return Err(CliError::Invalid(format!(
            "--answerable-threshold must lie in [0, 1], got {}",
            args.answerable_threshold
        )));
    }
    let ckpt = load_checkpoint::<f64>(&args.ckpt)?;
    let vocab: Vocabulary = read_json(&args.ckpt.join(VOCAB_FILE))?;
    let cfg: RunConfig = read_json(&args.ckpt.join(CONFIG_FILE))?;
    if vocab.style_id(&args.style).is_none() {
        return Err(CliError::Invalid(format!(
            "--style {:?} is not one of the trained styles {:?}",
            args.style,
            vocab.styles()
        )));
    }
    let corpus = read_corpus(&args.data)?;
    let limits = cfg.data.limits();
    let params = ckpt.state.ema_params(&ckpt.params);
    let source = if args.gold_ranker { RankerSource::Gold } else { RankerSource::Live };

    let mut preds = Vec::with_capacity(corpus.len());
    let mut trace = String::new();
    for raw in &corpus {
        let ex = encode_example(raw, &vocab, &args.style, &limits)?;
        let inf = ckpt.model.infer(&params, &ex, &vocab, limits.t_max, source)?;
        let no_answer = inf.answer_prob < args.answerable_threshold;
        preds.push(Prediction {
            query_id: raw.query_id.clone(),
            style: args.style.clone(),
            answer: if no_answer { String::new() } else { inf.decoded.answer() },
            no_answer,
            answer_prob: Some(inf.answer_prob),
            passage_scores: inf.beta.clone(),
            ranker: Some(if args.gold_ranker { "gold" } else { "live" }.into()),
            reader_digest: args.debug.then(|| format!("{:016x}", inf.reader_digest)),
        });
        if args.trace.is_some() {
            for rec in inf.decoded.trace.records() {
                let _ = writeln!(trace, "{rec}");
            }
        }
    }
    write_jsonl(&args.out, &preds)?;
    if let Some(path) = &args.trace {
        write_text(Path::new(path), &trace)?;
    }
    let abstained = preds.iter().filter(|p| p.no_answer).count();
    log::info!(
        "decoded {} examples in style {:?} ({} below the answerability threshold)",
        preds.len(),
        args.style,
        abstained
    );
    Ok(())
}
