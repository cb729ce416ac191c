#![allow(dead_code)]

use masque::config::ModelConfig;
use masque::data::{encode_example, synth_corpus, DataLimits, EncodedExample, SynthSpec, Vocabulary};
use masque::tensor::{Graph, ParamKind, ParamStore, Result, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        d_word: 6,
        heads: 2,
        ffn_inner: 12,
        n_shared: 1,
        n_model_q: 1,
        n_model_p: 1,
        n_dec: 1,
        dropout: 0.0,
        init_std: 0.3,
        positional: true,
    }
}

pub fn random_tensor(shape: &[usize], scale: f64, seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| r.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `Σ x ⊙ c` with a fixed random `c`, so gradients are non-trivial.
pub fn probe(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var> {
    let c = g.constant(random_tensor(g.shape(x), 1.0, seed));
    let y = g.mul(x, c)?;
    g.sum(y)
}

pub struct Toy {
    pub vocab: Vocabulary,
    pub examples: Vec<EncodedExample>,
}

pub fn toy_examples(n: usize, k: usize, seed: u64) -> Toy {
    let spec = SynthSpec {
        k,
        n_keys: 8,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(n, seed, &spec);
    let vocab = Vocabulary::build(&corpus, 40, &["qa", "nlg"]).unwrap();
    let limits = DataLimits {
        k,
        ..DataLimits::default()
    };
    let examples = corpus
        .iter()
        .map(|ex| encode_example(ex, &vocab, "qa", &limits).unwrap())
        .collect();
    Toy { vocab, examples }
}

pub fn word_table(ps: &mut ParamStore<f64>, vocab: &Vocabulary, cfg: &ModelConfig, seed: u64) -> masque::tensor::ParamId {
    ps.normal("embed", ParamKind::Embedding, &[vocab.common_size(), cfg.d_word], cfg.init_std, &mut rng(seed))
}
