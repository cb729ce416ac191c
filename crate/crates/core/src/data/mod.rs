//! Tokenization, vocabularies, dataset ingestion, batching and the
//! synthetic corpus with answers in two styles.

mod batch;
mod example;
mod jsonl;
mod synth;
mod tokenize;
pub mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use batch::{batch_examples, expand_instances, make_batches, Batch, StyleMixing};
pub use example::{encode_example, DataLimits, EncodedExample, EncodedPassage, Passage, RawExample};
pub use jsonl::{parse_jsonl, read_jsonl, to_jsonl, write_atomic, write_jsonl};
pub use synth::{synth_answers, synth_corpus, SynthSpec};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{ExtendedVocab, Vocabulary};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown answer style {0:?}")]
    UnknownStyle(String),
    #[error("{query_id}: no reference answer for style {style:?}")]
    MissingReference { query_id: String, style: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}
