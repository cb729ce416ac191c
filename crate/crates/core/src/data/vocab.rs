use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, DataError, RawExample};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
/// First style token id; style `i` has id `FIRST_STYLE + i`.
pub const FIRST_STYLE: usize = 4;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Answer styles known to the default corpus format.
pub const DEFAULT_STYLES: [&str; 2] = ["qa", "nlg"];

/// Generation vocabulary: reserved tokens, style tokens, then common words
/// by descending frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    styles: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    styles: Vec<String>,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            styles: v.styles,
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = DataError;

    fn try_from(f: VocabFile) -> Result<Self, DataError> {
        let v = Vocabulary::from_tokens(f.tokens, f.styles);
        let reserved = v.reserved();
        for (i, name) in SPECIALS.iter().enumerate() {
            if v.tokens.get(i).map(String::as_str) != Some(*name) {
                return Err(DataError::Invalid(format!("vocabulary slot {i} must be {name}")));
            }
        }
        if v.index.len() != v.tokens.len() || v.tokens.len() < reserved {
            return Err(DataError::Invalid("vocabulary tokens must be unique".into()));
        }
        Ok(v)
    }
}

pub fn style_token(style: &str) -> String {
    format!("<{style}>")
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, styles: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            styles,
            index,
        }
    }

    /// Keeps the most frequent tokens up to `common_size` entries in total
    /// (reserved and style tokens included); ties break lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[RawExample], common_size: usize, styles: &[S]) -> Result<Self, DataError> {
        if corpus.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let styles: Vec<String> = styles.iter().map(|s| s.as_ref().to_string()).collect();
        let reserved = FIRST_STYLE + styles.len();
        if common_size <= reserved {
            return Err(DataError::Invalid(format!(
                "common_size {common_size} must exceed the {reserved} reserved tokens"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut count_text = |text: &str| {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        };
        for ex in corpus {
            count_text(&ex.question);
            for p in &ex.passages {
                count_text(&p.text);
            }
            for refs in ex.answers.values() {
                for r in refs {
                    count_text(r);
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(styles.iter().map(|s| style_token(s)));
        tokens.extend(ranked.into_iter().take(common_size - reserved).map(|(t, _)| t));
        Ok(Self::from_tokens(tokens, styles))
    }

    /// |V|: size of the generation vocabulary.
    pub fn common_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn reserved(&self) -> usize {
        FIRST_STYLE + self.styles.len()
    }

    pub fn styles(&self) -> &[String] {
        &self.styles
    }

    pub fn style_id(&self, style: &str) -> Option<usize> {
        self.styles.iter().position(|s| s == style).map(|i| FIRST_STYLE + i)
    }

    pub fn is_style_id(&self, id: usize) -> bool {
        (FIRST_STYLE..self.reserved()).contains(&id)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id for embedding lookups; unknown words map to UNK.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Common vocabulary plus the source-only words of one example.
///
/// Source-only words get ids `common_size, common_size + 1, ...` in order of
/// first appearance (question first, then passages).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedVocab {
    common_size: usize,
    extra: Vec<String>,
    extra_index: HashMap<String, usize>,
}

impl ExtendedVocab {
    pub fn new(vocab: &Vocabulary) -> Self {
        Self {
            common_size: vocab.common_size(),
            extra: Vec::new(),
            extra_index: HashMap::new(),
        }
    }

    /// Extended id of a source token, registering it when outside `V`.
    pub fn intern(&mut self, vocab: &Vocabulary, token: &str) -> usize {
        if let Some(id) = vocab.id(token) {
            return id;
        }
        if let Some(&id) = self.extra_index.get(token) {
            return id;
        }
        let id = self.common_size + self.extra.len();
        self.extra.push(token.to_string());
        self.extra_index.insert(token.to_string(), id);
        id
    }

    /// Extended id if the token is in `V` or among this example's sources.
    pub fn lookup(&self, vocab: &Vocabulary, token: &str) -> Option<usize> {
        vocab.id(token).or_else(|| self.extra_index.get(token).copied())
    }

    /// |V_ext|.
    pub fn len(&self) -> usize {
        self.common_size + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn common_size(&self) -> usize {
        self.common_size
    }

    pub fn extra(&self) -> &[String] {
        &self.extra
    }

    pub fn surface<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> Option<&'a str> {
        if id < self.common_size {
            vocab.token(id)
        } else {
            self.extra.get(id - self.common_size).map(String::as_str)
        }
    }
}
