//! Style-conditioned Transformer decoder with the multi-source
//! pointer-generator head.

mod greedy;
mod pointer;

pub use greedy::{greedy_decode, traces_from_records, DecodeOutput, DecodeStep, DecodeTrace, TokenSource};
pub use pointer::{
    combined_passage_attention, final_distribution, generation_distribution, CopyAttention, COMBINED_EPS,
};

use rand::Rng;

use crate::config::ModelConfig;
use crate::nn::{causal_mask, key_mask, residual, FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::reader::{EmbeddingLayer, ReaderOutput};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Result, Var};

/// Masked self-attention, attention over `M^q`, attention over `M^{p_all}` and
/// a feed-forward network, each as `LN(f(x) + x)`.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub self_attention: MultiHeadAttention,
    pub ln_self: LayerNorm,
    pub question_attention: MultiHeadAttention,
    pub ln_question: LayerNorm,
    pub passage_attention: MultiHeadAttention,
    pub ln_passage: LayerNorm,
    pub ffn: FeedForward,
    pub ln_ffn: LayerNorm,
}

impl DecoderBlock {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, h, std) = (cfg.d, cfg.heads, cfg.init_std);
        Self {
            self_attention: MultiHeadAttention::new(ps, &format!("{name}.self_attn"), d, h, std, rng),
            ln_self: LayerNorm::new(ps, &format!("{name}.ln1"), d),
            question_attention: MultiHeadAttention::new(ps, &format!("{name}.q_attn"), d, h, std, rng),
            ln_question: LayerNorm::new(ps, &format!("{name}.ln2"), d),
            passage_attention: MultiHeadAttention::new(ps, &format!("{name}.p_attn"), d, h, std, rng),
            ln_passage: LayerNorm::new(ps, &format!("{name}.ln3"), d),
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d, cfg.ffn_inner, std, rng),
            ln_ffn: LayerNorm::new(ps, &format!("{name}.ln4"), d),
        }
    }

    /// `y: [t×d]` decoder states; the passage memory is the concatenation of
    /// all passages so attention weights are comparable across passages.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        y: Var,
        m_q: Var,
        q_mask: &[bool],
        m_p_all: Var,
        p_mask: &[bool],
        dropout: f64,
    ) -> Result<Var> {
        let t = g.value(y).rows();
        let causal = causal_mask(&vec![true; t]);
        let a = self.self_attention.forward(g, ps, y, y, &causal, dropout)?;
        let y = residual(g, ps, &self.ln_self, y, a, dropout)?;
        let a = self.question_attention.forward(g, ps, y, m_q, &key_mask(t, q_mask), dropout)?;
        let y = residual(g, ps, &self.ln_question, y, a, dropout)?;
        let a = self.passage_attention.forward(g, ps, y, m_p_all, &key_mask(t, p_mask), dropout)?;
        let y = residual(g, ps, &self.ln_passage, y, a, dropout)?;
        let f = self.ffn.forward(g, ps, y)?;
        residual(g, ps, &self.ln_ffn, y, f, dropout)
    }
}

/// Source ids of the copy distributions and the size of the extended vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct Sources<'a> {
    pub question: &'a [usize],
    pub passages: &'a [usize],
    pub v_ext: usize,
}

/// Per-step quantities of the pointer-generator, each with `T` rows.
#[derive(Debug, Clone, Copy)]
pub struct Mixture {
    pub states: Var,
    /// `[T×V_ext]`.
    pub p_v: Var,
    /// `[T×J]`.
    pub alpha_q: Var,
    /// Word-level passage attention before reweighting, `[T×KL']`.
    pub alpha_p_word: Var,
    /// Combined passage attention, `[T×KL']`.
    pub alpha_p: Var,
    pub c_q: Var,
    pub c_p: Var,
    /// `[T×3]`: generate, copy from question, copy from passages.
    pub lambda: Var,
    /// `[T×V_ext]`.
    pub p: Var,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub table: ParamId,
    pub embed: EmbeddingLayer,
    pub blocks: Vec<DecoderBlock>,
    pub generation: Linear,
    pub copy_q: CopyAttention,
    pub copy_p: CopyAttention,
    pub mixture: Linear,
    pub dropout: f64,
}

impl Decoder {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, cfg: &ModelConfig, table: ParamId, rng: &mut R) -> Self {
        let std = cfg.init_std;
        let embed = EmbeddingLayer::new(ps, "decoder.embed", cfg, rng);
        let blocks = (0..cfg.n_dec)
            .map(|i| DecoderBlock::new(ps, &format!("decoder.block.{i}"), cfg, rng))
            .collect();
        Self {
            table,
            embed,
            blocks,
            generation: Linear::new(ps, "decoder.generation", cfg.d, cfg.d_word, true, std, rng),
            copy_q: CopyAttention::new(ps, "decoder.copy_q", cfg.d, std, rng),
            copy_p: CopyAttention::new(ps, "decoder.copy_p", cfg.d, std, rng),
            mixture: Linear::new(ps, "decoder.mixture", 3 * cfg.d, 3, true, std, rng),
            dropout: cfg.dropout,
        }
    }

    /// Decoder states `[t×d]` for input ids `[style, y_1, .., y_{t-1}]`.
    pub fn states<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, reader: &ReaderOutput, inputs: &[usize]) -> Result<Var> {
        let mut y = self.embed.forward(g, ps, self.table, inputs, self.dropout)?;
        for b in &self.blocks {
            y = b.forward(g, ps, y, reader.m_q, &reader.q_mask, reader.m_p_all, &reader.p_mask_all, self.dropout)?;
        }
        Ok(y)
    }

    /// `λ = softmax([s; c_q; c_p] W^m + b^m)`, `[T×3]`.
    pub fn mixture_weights<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, s: Var, c_q: Var, c_p: Var) -> Result<Var> {
        let x = g.concat(&[s, c_q, c_p], 1)?;
        let logits = self.mixture.forward(g, ps, x)?;
        g.softmax_axis(logits, 1, None)
    }

    /// Output distributions for states `s`, with `beta [K]` weighting passages.
    pub fn output<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        s: Var,
        reader: &ReaderOutput,
        beta: Var,
        sources: Sources<'_>,
    ) -> Result<Mixture> {
        let p_v = generation_distribution(g, ps, &self.generation, self.table, s, sources.v_ext)?;
        let (alpha_q, c_q) = self.copy_q.forward(g, ps, s, reader.m_q, &reader.q_mask)?;
        let (alpha_p_word, _) = self.copy_p.forward(g, ps, s, reader.m_p_all, &reader.p_mask_all)?;
        let alpha_p = combined_passage_attention(g, alpha_p_word, beta, &reader.k_of_l)?;
        let c_p = g.matmul(alpha_p, reader.m_p_all)?;
        let lambda = self.mixture_weights(g, ps, s, c_q, c_p)?;
        let p = final_distribution(g, p_v, alpha_q, sources.question, alpha_p, sources.passages, lambda)?;
        Ok(Mixture {
            states: s,
            p_v,
            alpha_q,
            alpha_p_word,
            alpha_p,
            c_q,
            c_p,
            lambda,
            p,
        })
    }

    /// Teacher-forced pass over `inputs`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        reader: &ReaderOutput,
        beta: Var,
        inputs: &[usize],
        sources: Sources<'_>,
    ) -> Result<Mixture> {
        let s = self.states(g, ps, reader, inputs)?;
        self.output(g, ps, s, reader, beta, sources)
    }
}
