use std::collections::BTreeMap;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::example::{Passage, RawExample};

/// Template parameters of the synthetic key-value lookup corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Passages per example.
    pub k: usize,
    /// Size of the key pool `k0 .. k{n_keys-1}`.
    pub n_keys: usize,
    /// Fraction of examples with no passage mentioning the key.
    pub unanswerable_frac: f64,
    /// Maximum filler words before and after the fact in a passage.
    pub max_filler: usize,
    /// Random characters in a value token after the `v_` prefix.
    pub value_chars: usize,
    /// Prefix of generated query ids.
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            k: 3,
            n_keys: 50,
            unanswerable_frac: 0.0,
            max_filler: 2,
            value_chars: 4,
            id_prefix: "q".into(),
        }
    }
}

const FILLER: [&str; 8] = ["note", "that", "here", "we", "see", "also", "indeed", "so"];
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// The reference answers for a key and value.
pub fn synth_answers(key: &str, value: &str) -> (String, String) {
    (value.to_string(), format!("the value of {key} is {value} ."))
}

/// Generates `n` templated lookup examples.
///
/// Each answerable example has exactly one relevant passage stating
/// `KEY is VAL`; distractor passages state facts about other keys. Exactly
/// `round(n * unanswerable_frac)` examples are unanswerable: none of their
/// passages mentions the question key.
pub fn synth_corpus(n: usize, seed: u64, spec: &SynthSpec) -> Vec<RawExample> {
    assert!(spec.n_keys > spec.k, "key pool must exceed the passage count");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_unans = ((n as f64) * spec.unanswerable_frac).round() as usize;
    let mut unanswerable = vec![false; n];
    for i in sample(&mut rng, n, n_unans.min(n)).into_iter() {
        unanswerable[i] = true;
    }

    let value = |rng: &mut ChaCha8Rng| -> String {
        let s: String = (0..spec.value_chars)
            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
            .collect();
        format!("v_{s}")
    };
    let filler = |rng: &mut ChaCha8Rng| -> Vec<&'static str> {
        let n = rng.gen_range(0..=spec.max_filler);
        (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
    };

    let mut out = Vec::with_capacity(n);
    for (i, &unans) in unanswerable.iter().enumerate() {
        let keys = sample(&mut rng, spec.n_keys, spec.k + 1).into_vec();
        let key = format!("k{}", keys[0]);
        let relevant_slot = rng.gen_range(0..spec.k);
        let mut answer_value = None;
        let mut passages = Vec::with_capacity(spec.k);
        for slot in 0..spec.k {
            let is_rel = !unans && slot == relevant_slot;
            let pkey = if is_rel { key.clone() } else { format!("k{}", keys[slot + 1]) };
            let pval = value(&mut rng);
            if is_rel {
                answer_value = Some(pval.clone());
            }
            let mut words = filler(&mut rng);
            words.push(&pkey);
            words.push("is");
            words.push(&pval);
            words.extend(filler(&mut rng));
            passages.push(Passage {
                text: words.join(" "),
                is_selected: is_rel,
            });
        }
        let mut answers = BTreeMap::new();
        if let Some(v) = &answer_value {
            let (qa, nlg) = synth_answers(&key, v);
            answers.insert("qa".to_string(), vec![qa]);
            answers.insert("nlg".to_string(), vec![nlg]);
        }
        out.push(RawExample {
            query_id: format!("{}{i}", spec.id_prefix),
            question: format!("value of {key}"),
            passages,
            answers,
            answerable: !unans,
        });
    }
    out
}
