use serde::Serialize;
use serde_json::{json, Value};

use super::{Decoder, Sources};
use crate::data::vocab::{EOS, UNK};
use crate::data::{EncodedExample, Vocabulary};
use crate::reader::ReaderOutput;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamStore, Result, Var};

const TOP: usize = 3;

/// Which mixture component contributed most to an emitted token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TokenSource {
    Generated,
    CopiedQuestion,
    /// Passage index.
    CopiedPassage(usize),
}

impl TokenSource {
    pub fn tag(self) -> &'static str {
        match self {
            TokenSource::Generated => "gen",
            TokenSource::CopiedQuestion => "copy_q",
            TokenSource::CopiedPassage(_) => "copy_p",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub t: usize,
    pub token_id: usize,
    pub token: String,
    pub lambda: [f64; 3],
    /// `(question position, weight)`.
    pub top_q: Vec<(usize, f64)>,
    /// `(passage, position in passage, weight)` under combined attention.
    pub top_p: Vec<(usize, usize, f64)>,
    pub source: TokenSource,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeTrace {
    pub query_id: String,
    pub style: String,
    pub steps: Vec<DecodeStep>,
    /// No EOS was produced within the length budget.
    pub truncated: bool,
}

impl DecodeTrace {
    /// One JSON object per step.
    pub fn records(&self) -> Vec<Value> {
        self.steps
            .iter()
            .map(|s| {
                let mut v = json!({
                    "query_id": self.query_id,
                    "style": self.style,
                    "t": s.t,
                    "token_id": s.token_id,
                    "token": s.token,
                    "lambda": s.lambda,
                    "top_q": s.top_q.iter().map(|&(p, w)| json!([p, w])).collect::<Vec<_>>(),
                    "top_p": s.top_p.iter().map(|&(k, p, w)| json!([k, p, w])).collect::<Vec<_>>(),
                    "source": s.source.tag(),
                    "truncated": self.truncated,
                });
                if let TokenSource::CopiedPassage(k) = s.source {
                    v["passage"] = json!(k);
                }
                v
            })
            .collect()
    }
}

/// Regroups per-step records into traces; consecutive records with the same
/// query id and style form one trace.
pub fn traces_from_records(records: &[Value]) -> std::result::Result<Vec<DecodeTrace>, String> {
    let mut out: Vec<DecodeTrace> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let field = |key: &str| r.get(key).ok_or_else(|| format!("record {}: missing {key:?}", i + 1));
        let text = |key: &str| -> std::result::Result<String, String> {
            field(key)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("record {}: {key:?} must be a string", i + 1))
        };
        let uint = |v: &Value, key: &str| {
            v.as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| format!("record {}: {key:?} must be a non-negative integer", i + 1))
        };
        let float = |v: &Value, key: &str| v.as_f64().ok_or_else(|| format!("record {}: {key:?} must be a number", i + 1));
        let pairs = |key: &str| -> std::result::Result<Vec<Vec<Value>>, String> {
            field(key)?
                .as_array()
                .ok_or_else(|| format!("record {}: {key:?} must be an array", i + 1))?
                .iter()
                .map(|e| e.as_array().cloned().ok_or_else(|| format!("record {}: {key:?} entries must be arrays", i + 1)))
                .collect()
        };

        let query_id = text("query_id")?;
        let style = text("style")?;
        let lambda_v = field("lambda")?
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| format!("record {}: \"lambda\" must have three entries", i + 1))?;
        let mut lambda = [0.0; 3];
        for (slot, v) in lambda.iter_mut().zip(lambda_v) {
            *slot = float(v, "lambda")?;
        }
        let top_q = pairs("top_q")?
            .iter()
            .map(|e| match e.as_slice() {
                [p, w] => Ok((uint(p, "top_q")?, float(w, "top_q")?)),
                _ => Err(format!("record {}: \"top_q\" entries are [position, weight]", i + 1)),
            })
            .collect::<std::result::Result<_, _>>()?;
        let top_p = pairs("top_p")?
            .iter()
            .map(|e| match e.as_slice() {
                [k, p, w] => Ok((uint(k, "top_p")?, uint(p, "top_p")?, float(w, "top_p")?)),
                _ => Err(format!("record {}: \"top_p\" entries are [passage, position, weight]", i + 1)),
            })
            .collect::<std::result::Result<_, _>>()?;
        let source = match text("source")?.as_str() {
            "gen" => TokenSource::Generated,
            "copy_q" => TokenSource::CopiedQuestion,
            "copy_p" => TokenSource::CopiedPassage(uint(field("passage")?, "passage")?),
            other => return Err(format!("record {}: unknown source {other:?}", i + 1)),
        };
        let step = DecodeStep {
            t: uint(field("t")?, "t")?,
            token_id: r.get("token_id").and_then(Value::as_u64).unwrap_or(0) as usize,
            token: text("token")?,
            lambda,
            top_q,
            top_p,
            source,
        };
        let truncated = field("truncated")?
            .as_bool()
            .ok_or_else(|| format!("record {}: \"truncated\" must be a boolean", i + 1))?;
        match out.last_mut() {
            Some(tr) if tr.query_id == query_id && tr.style == style => tr.steps.push(step),
            _ => out.push(DecodeTrace {
                query_id,
                style,
                steps: vec![step],
                truncated,
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Emitted extended ids, without EOS.
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    pub trace: DecodeTrace,
}

impl DecodeOutput {
    pub fn answer(&self) -> String {
        self.tokens.join(" ")
    }
}

fn row<T: Scalar>(g: &Graph<T>, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|x| x.as_f64()).collect()
}

fn top_k(xs: &[f64], mask: &[bool]) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..xs.len()).filter(|&i| mask[i]).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    idx.into_iter().take(TOP).map(|i| (i, xs[i])).collect()
}

/// Greedy decoding from the style token, at most `t_max - 1` steps.
///
/// Each step takes the argmax of the final distribution (ties go to the
/// lowest id) and feeds it back, extended-only ids as UNK.
#[allow(clippy::too_many_arguments)]
pub fn greedy_decode<T: Scalar>(
    g: &mut Graph<T>,
    ps: &ParamStore<T>,
    decoder: &Decoder,
    reader: &ReaderOutput,
    beta: Var,
    ex: &EncodedExample,
    vocab: &Vocabulary,
    t_max: usize,
) -> Result<DecodeOutput> {
    let passages = ex.passage_ext_concat();
    let sources = Sources {
        question: &ex.question_ext,
        passages: &passages,
        v_ext: ex.ext_vocab.len(),
    };
    let starts: Vec<usize> = {
        let mut s = vec![0; ex.k()];
        for (l, &k) in reader.k_of_l.iter().enumerate().rev() {
            s[k] = l;
        }
        s
    };
    let common = vocab.common_size();
    let mut inputs = vec![ex.style_id];
    let mut out = DecodeOutput {
        ids: Vec::new(),
        tokens: Vec::new(),
        trace: DecodeTrace {
            query_id: ex.query_id.clone(),
            style: ex.style.clone(),
            truncated: true,
            ..DecodeTrace::default()
        },
    };
    for t in 0..t_max.saturating_sub(1) {
        let s = decoder.states(g, ps, reader, &inputs)?;
        let last = g.narrow(s, 0, inputs.len() - 1, 1)?;
        let mix = decoder.output(g, ps, last, reader, beta, sources)?;
        let p = row(g, mix.p);
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        let lambda = row(g, mix.lambda);
        let alpha_q = row(g, mix.alpha_q);
        let alpha_p = row(g, mix.alpha_p);

        let p_v = g.value(mix.p_v).data()[best].as_f64();
        let from_q: f64 = (0..alpha_q.len()).filter(|&j| sources.question[j] == best).map(|j| alpha_q[j]).sum();
        let mut per_passage = vec![0.0; ex.k()];
        for (l, &k) in reader.k_of_l.iter().enumerate() {
            if passages[l] == best {
                per_passage[k] += alpha_p[l];
            }
        }
        let from_p: f64 = per_passage.iter().sum();
        let contrib = [lambda[0] * p_v, lambda[1] * from_q, lambda[2] * from_p];
        let source = if contrib[0] >= contrib[1] && contrib[0] >= contrib[2] {
            TokenSource::Generated
        } else if contrib[1] >= contrib[2] {
            TokenSource::CopiedQuestion
        } else {
            let mut k = 0;
            for (i, &m) in per_passage.iter().enumerate() {
                if m > per_passage[k] {
                    k = i;
                }
            }
            TokenSource::CopiedPassage(k)
        };

        let token = ex.ext_vocab.surface(vocab, best).unwrap_or("<unk>").to_string();
        out.trace.steps.push(DecodeStep {
            t,
            token_id: best,
            token: token.clone(),
            lambda: [lambda[0], lambda[1], lambda[2]],
            top_q: top_k(&alpha_q, &reader.q_mask),
            top_p: top_k(&alpha_p, &reader.p_mask_all)
                .into_iter()
                .map(|(l, w)| (reader.k_of_l[l], l - starts[reader.k_of_l[l]], w))
                .collect(),
            source,
        });
        if best == EOS {
            out.trace.truncated = false;
            break;
        }
        out.ids.push(best);
        out.tokens.push(token);
        inputs.push(if best < common { best } else { UNK });
    }
    Ok(out)
}
