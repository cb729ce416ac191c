//! The full model: reader, task heads and decoder over a shared word table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::data::{EncodedExample, Vocabulary};
use crate::decoder::{greedy_decode, DecodeOutput, Decoder, Mixture, Sources};
use crate::error::{ModelError, ModelResult};
use crate::heads::TaskHeads;
use crate::reader::{Reader, ReaderOutput};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamKind, ParamStore, Tensor, Var};

/// Where combined attention takes its passage weights from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankerSource {
    #[default]
    Live,
    /// Gold relevance labels; uniform when no passage is relevant.
    Gold,
}

#[derive(Debug, Clone)]
pub struct Masque {
    pub config: ModelConfig,
    pub k: usize,
    pub vocab_size: usize,
    pub table: ParamId,
    pub reader: Reader,
    pub heads: TaskHeads,
    pub decoder: Decoder,
}

/// Graph handles of one teacher-forced forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub reader: ReaderOutput,
    /// `[K]`.
    pub beta: Var,
    /// `[1]`.
    pub answer_prob: Var,
    pub mixture: Mixture,
}

impl Masque {
    /// Builds the parameter layout in a fixed order, so the same seed always
    /// yields the same store.
    pub fn new<T: Scalar>(config: &ModelConfig, vocab_size: usize, k: usize, seed: u64) -> ModelResult<(Self, ParamStore<T>)> {
        config.validate().map_err(ModelError::Config)?;
        if k == 0 {
            return Err(ModelError::Config("data.k must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let table = ps.normal("embed.table", ParamKind::Embedding, &[vocab_size, config.d_word], config.init_std, &mut rng);
        let reader = Reader::new(&mut ps, config, table, &mut rng);
        let heads = TaskHeads::new(&mut ps, config.d, k, config.init_std, &mut rng);
        let decoder = Decoder::new(&mut ps, config, table, &mut rng);
        let model = Self {
            config: config.clone(),
            k,
            vocab_size,
            table,
            reader,
            heads,
            decoder,
        };
        Ok((model, ps))
    }

    fn check(&self, ex: &EncodedExample) -> ModelResult<()> {
        if ex.k() != self.k {
            return Err(ModelError::Config(format!(
                "{}: model expects {} passages, example has {}",
                ex.query_id,
                self.k,
                ex.k()
            )));
        }
        if ex.ext_vocab.common_size() != self.vocab_size {
            return Err(ModelError::Config(format!(
                "vocabulary has {} entries, model was built for {}",
                ex.ext_vocab.common_size(),
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn read<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, ex: &EncodedExample) -> ModelResult<ReaderOutput> {
        self.check(ex)?;
        Ok(self.reader.forward(g, ps, ex)?)
    }

    /// Passage weights used by combined attention.
    pub fn passage_weights<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        reader: &ReaderOutput,
        ex: &EncodedExample,
        source: RankerSource,
    ) -> ModelResult<(Var, Var)> {
        let beta = self.heads.rank_passages(g, ps, reader)?;
        let weights = match source {
            RankerSource::Live => beta,
            RankerSource::Gold => g.constant(gold_weights(&ex.relevance)),
        };
        Ok((beta, weights))
    }

    /// Teacher-forced pass over the example's target.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        ex: &EncodedExample,
        source: RankerSource,
    ) -> ModelResult<ForwardOutput> {
        let reader = self.read(g, ps, ex)?;
        let (beta, weights) = self.passage_weights(g, ps, &reader, ex, source)?;
        let answer_prob = self.heads.classify_answerability(g, ps, &reader)?;
        let passages = ex.passage_ext_concat();
        let sources = Sources {
            question: &ex.question_ext,
            passages: &passages,
            v_ext: ex.ext_vocab.len(),
        };
        let mixture = self.decoder.forward(g, ps, &reader, weights, &ex.decoder_input(), sources)?;
        Ok(ForwardOutput {
            reader,
            beta,
            answer_prob,
            mixture,
        })
    }

    /// Reads, scores and greedily decodes one example in evaluation mode.
    pub fn infer<T: Scalar>(
        &self,
        ps: &ParamStore<T>,
        ex: &EncodedExample,
        vocab: &Vocabulary,
        t_max: usize,
        source: RankerSource,
    ) -> ModelResult<Inference> {
        let mut g = Graph::new(false);
        let reader = self.read(&mut g, ps, ex)?;
        let (beta, weights) = self.passage_weights(&mut g, ps, &reader, ex, source)?;
        let answer_prob = self.heads.classify_answerability(&mut g, ps, &reader)?;
        let decoded = greedy_decode(&mut g, ps, &self.decoder, &reader, weights, ex, vocab, t_max)?;
        Ok(Inference {
            beta: g.value(beta).to_f64_vec(),
            answer_prob: g.value(answer_prob).data()[0].as_f64(),
            reader_digest: digest(&g, &reader),
            decoded,
        })
    }
}

/// Result of [`Masque::infer`].
#[derive(Debug, Clone)]
pub struct Inference {
    pub beta: Vec<f64>,
    pub answer_prob: f64,
    pub decoded: DecodeOutput,
    /// Bits of every reader output value, for cross-run comparisons.
    pub reader_digest: u64,
}

fn gold_weights<T: Scalar>(relevance: &[bool]) -> Tensor<T> {
    let any = relevance.iter().any(|&r| r);
    let data = relevance
        .iter()
        .map(|&r| if !any || r { T::one() } else { T::zero() })
        .collect();
    Tensor::new(vec![relevance.len()], data).expect("non-empty relevance")
}

fn digest<T: Scalar>(g: &Graph<T>, reader: &ReaderOutput) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in std::iter::once(reader.m_q).chain(reader.m_p.iter().copied()) {
        for x in g.value(v).data() {
            x.as_f64().to_bits().hash(&mut h);
        }
    }
    h.finish()
}
