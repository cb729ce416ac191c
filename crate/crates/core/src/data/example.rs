use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::vocab::{ExtendedVocab, Vocabulary, BOS, EOS, PAD, UNK};
use super::{tokenize, DataError};

/// One passage with its relevance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub text: String,
    #[serde(with = "int_bool")]
    pub is_selected: bool,
}

/// A question with passages, per-style reference answers and an
/// answerability label, as stored in the dataset JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExample {
    pub query_id: String,
    pub question: String,
    pub passages: Vec<Passage>,
    #[serde(default)]
    pub answers: BTreeMap<String, Vec<String>>,
    #[serde(with = "int_bool")]
    pub answerable: bool,
}

impl RawExample {
    /// Styles with at least one reference answer.
    pub fn styles_with_references(&self) -> impl Iterator<Item = &str> {
        self.answers
            .iter()
            .filter(|(_, refs)| !refs.is_empty())
            .map(|(s, _)| s.as_str())
    }

    pub fn reference(&self, style: &str) -> Option<&str> {
        self.answers.get(style).and_then(|r| r.first()).map(String::as_str)
    }
}

mod int_bool {
    use super::*;

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u64),
        Bool(bool),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match Flag::deserialize(d)? {
            Flag::Bool(b) => Ok(b),
            Flag::Int(0) => Ok(false),
            Flag::Int(1) => Ok(true),
            Flag::Int(n) => Err(serde::de::Error::custom(format!("expected 0 or 1, got {n}"))),
        }
    }
}

/// Truncation limits and passage count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataLimits {
    /// Passages per example (K).
    pub k: usize,
    /// Question tokens kept.
    pub j_max: usize,
    /// Passage tokens kept, before the BOS token is prepended.
    pub l_max: usize,
    /// Target length including the style token and EOS.
    pub t_max: usize,
}

impl Default for DataLimits {
    fn default() -> Self {
        Self {
            k: 3,
            j_max: 20,
            l_max: 30,
            t_max: 20,
        }
    }
}

/// Token ids of one passage; slot 0 is always BOS.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPassage {
    /// Embedding ids (words outside V map to UNK).
    pub ids: Vec<usize>,
    /// Extended-vocabulary ids used as copy targets.
    pub ext_ids: Vec<usize>,
    /// `true` for real tokens, `false` for padding.
    pub mask: Vec<bool>,
    /// Filler passage added because the example had fewer than K.
    pub filler: bool,
}

/// Id-level form of a training or evaluation instance for one style.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub query_id: String,
    pub style: String,
    pub style_id: usize,
    pub question: Vec<usize>,
    pub question_ext: Vec<usize>,
    pub question_mask: Vec<bool>,
    /// Exactly K passages.
    pub passages: Vec<EncodedPassage>,
    /// `[style, answer..., EOS]` in extended ids, padded with PAD.
    pub target: Vec<usize>,
    /// Which target positions are scored: never position 0, never padding,
    /// and nothing at all for unanswerable examples.
    pub target_mask: Vec<bool>,
    pub answerable: bool,
    pub relevance: Vec<bool>,
    pub ext_vocab: ExtendedVocab,
}

/// Encodes an example for `style` under `limits`.
///
/// A reference answer for `style` is required when the example is answerable.
pub fn encode_example(
    ex: &RawExample,
    vocab: &Vocabulary,
    style: &str,
    limits: &DataLimits,
) -> Result<EncodedExample, DataError> {
    let style_id = vocab
        .style_id(style)
        .ok_or_else(|| DataError::UnknownStyle(style.to_string()))?;
    let mut ext = ExtendedVocab::new(vocab);

    let mut q_tokens = tokenize(&ex.question);
    q_tokens.truncate(limits.j_max);
    if q_tokens.is_empty() {
        return Err(DataError::Invalid(format!("{}: empty question", ex.query_id)));
    }
    let question: Vec<usize> = q_tokens.iter().map(|t| vocab.id_or_unk(t)).collect();
    let question_ext: Vec<usize> = q_tokens.iter().map(|t| ext.intern(vocab, t)).collect();

    let mut passages = Vec::with_capacity(limits.k);
    let mut relevance = Vec::with_capacity(limits.k);
    for p in ex.passages.iter().take(limits.k) {
        let mut toks = tokenize(&p.text);
        toks.truncate(limits.l_max);
        let mut ids = vec![BOS];
        let mut ext_ids = vec![BOS];
        for t in &toks {
            ids.push(vocab.id_or_unk(t));
            ext_ids.push(ext.intern(vocab, t));
        }
        let mask = vec![true; ids.len()];
        passages.push(EncodedPassage {
            ids,
            ext_ids,
            mask,
            filler: false,
        });
        relevance.push(p.is_selected);
    }
    while passages.len() < limits.k {
        passages.push(EncodedPassage {
            ids: vec![BOS],
            ext_ids: vec![BOS],
            mask: vec![true],
            filler: true,
        });
        relevance.push(false);
    }

    let mut target = vec![style_id];
    if ex.answerable {
        let reference = ex.reference(style).ok_or_else(|| DataError::MissingReference {
            query_id: ex.query_id.clone(),
            style: style.to_string(),
        })?;
        let mut toks = tokenize(reference);
        toks.truncate(limits.t_max.saturating_sub(2));
        target.extend(toks.iter().map(|t| ext.lookup(vocab, t).unwrap_or(UNK)));
    }
    target.push(EOS);
    let target_mask = (0..target.len()).map(|i| i > 0 && ex.answerable).collect();

    Ok(EncodedExample {
        query_id: ex.query_id.clone(),
        style: style.to_string(),
        style_id,
        question_mask: vec![true; question.len()],
        question,
        question_ext,
        passages,
        target,
        target_mask,
        answerable: ex.answerable,
        relevance,
        ext_vocab: ext,
    })
}

impl EncodedExample {
    pub fn k(&self) -> usize {
        self.passages.len()
    }

    /// Padded passage length L' (all passages share it after padding).
    pub fn passage_len(&self) -> usize {
        self.passages.iter().map(|p| p.ids.len()).max().unwrap_or(0)
    }

    /// Number of scored target tokens (answer tokens plus EOS).
    pub fn scored_len(&self) -> usize {
        self.target_mask.iter().filter(|&&m| m).count()
    }

    /// Pads question, passages and target with PAD up to the given lengths.
    pub fn pad_to(&mut self, j: usize, l: usize, t: usize) {
        pad(&mut self.question, j, PAD);
        pad(&mut self.question_ext, j, PAD);
        pad(&mut self.question_mask, j, false);
        for p in &mut self.passages {
            pad(&mut p.ids, l, PAD);
            pad(&mut p.ext_ids, l, PAD);
            pad(&mut p.mask, l, false);
        }
        pad(&mut self.target, t, PAD);
        pad(&mut self.target_mask, t, false);
    }

    /// Passage index of every slot of the concatenated passage axis.
    pub fn k_of_l(&self) -> Vec<usize> {
        self.passages
            .iter()
            .enumerate()
            .flat_map(|(k, p)| std::iter::repeat_n(k, p.ids.len()))
            .collect()
    }

    /// Extended ids of the concatenated passage axis.
    pub fn passage_ext_concat(&self) -> Vec<usize> {
        self.passages.iter().flat_map(|p| p.ext_ids.iter().copied()).collect()
    }

    pub fn passage_mask_concat(&self) -> Vec<bool> {
        self.passages.iter().flat_map(|p| p.mask.iter().copied()).collect()
    }

    /// Decoder input ids (target without its last slot) for embedding lookups.
    pub fn decoder_input(&self) -> Vec<usize> {
        let n = self.target.len() - 1;
        self.target[..n]
            .iter()
            .map(|&id| if id >= self.ext_vocab.common_size() { UNK } else { id })
            .collect()
    }

    /// Unpadded answer tokens of the target.
    pub fn answer_tokens<'a>(&'a self, vocab: &'a Vocabulary) -> Vec<&'a str> {
        self.target
            .iter()
            .skip(1)
            .take_while(|&&id| id != EOS && id != PAD)
            .map(|&id| self.ext_vocab.surface(vocab, id).unwrap_or("<unk>"))
            .collect()
    }
}

fn pad<T: Clone>(v: &mut Vec<T>, len: usize, fill: T) {
    if v.len() < len {
        v.resize(len, fill);
    }
}
