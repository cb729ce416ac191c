use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::example::{encode_example, DataLimits, EncodedExample, RawExample};
use super::vocab::Vocabulary;
use super::DataError;

/// Which answer style(s) each example is expanded into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StyleMixing {
    /// One instance per style with a reference (answerable examples);
    /// unanswerable examples appear once with the first declared style.
    Multi,
    /// Only the given style; answerable examples without it are skipped.
    Single(String),
}

/// Padded group of instances sharing question, passage and target lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: Vec<EncodedExample>,
    pub question_len: usize,
    pub passage_len: usize,
    pub target_len: usize,
}

impl Batch {
    pub fn from_examples(mut examples: Vec<EncodedExample>) -> Self {
        let question_len = examples.iter().map(|e| e.question.len()).max().unwrap_or(0);
        let passage_len = examples.iter().map(EncodedExample::passage_len).max().unwrap_or(0);
        let target_len = examples.iter().map(|e| e.target.len()).max().unwrap_or(0);
        for e in &mut examples {
            e.pad_to(question_len, passage_len, target_len);
        }
        Self {
            examples,
            question_len,
            passage_len,
            target_len,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn answerable_count(&self) -> usize {
        self.examples.iter().filter(|e| e.answerable).count()
    }
}

/// Encodes every example under the mixing rule, in corpus order.
pub fn expand_instances(
    corpus: &[RawExample],
    vocab: &Vocabulary,
    limits: &DataLimits,
    mixing: &StyleMixing,
) -> Result<Vec<EncodedExample>, DataError> {
    let default_style = vocab
        .styles()
        .first()
        .ok_or_else(|| DataError::Invalid("vocabulary declares no styles".into()))?
        .clone();
    let mut out = Vec::new();
    for ex in corpus {
        match mixing {
            StyleMixing::Multi => {
                if ex.answerable {
                    for style in vocab.styles() {
                        if ex.reference(style).is_some() {
                            out.push(encode_example(ex, vocab, style, limits)?);
                        }
                    }
                } else {
                    out.push(encode_example(ex, vocab, &default_style, limits)?);
                }
            }
            StyleMixing::Single(style) => {
                if ex.answerable && ex.reference(style).is_none() {
                    continue;
                }
                out.push(encode_example(ex, vocab, style, limits)?);
            }
        }
    }
    Ok(out)
}

/// Shuffles instances with `seed` and groups them into padded batches.
pub fn make_batches(mut instances: Vec<EncodedExample>, batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    instances.shuffle(&mut rng);
    let mut batches = Vec::new();
    let mut iter = instances.into_iter().peekable();
    while iter.peek().is_some() {
        let chunk: Vec<_> = iter.by_ref().take(batch_size).collect();
        batches.push(Batch::from_examples(chunk));
    }
    batches
}

/// [`expand_instances`] followed by [`make_batches`].
pub fn batch_examples(
    corpus: &[RawExample],
    vocab: &Vocabulary,
    limits: &DataLimits,
    mixing: &StyleMixing,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Invalid("batch_size must be at least 1".into()));
    }
    let instances = expand_instances(corpus, vocab, limits, mixing)?;
    Ok(make_batches(instances, batch_size, seed))
}
