//! Question-passages reader: embeddings, shared encoder, dual attention and
//! modeling encoders.

mod dual;

pub use dual::{dual_attention, DualAttention};

use rand::Rng;

use crate::config::ModelConfig;
use crate::data::EncodedExample;
use crate::nn::{sinusoidal_positions, EncoderBlock, Highway, Linear};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamKind, ParamStore, Result, Var};

/// Word embedding lookup, positions, highway network and projection to `d`.
#[derive(Debug, Clone)]
pub struct EmbeddingLayer {
    pub highway: Highway,
    pub proj: Linear,
    pub positional: bool,
}

impl EmbeddingLayer {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            highway: Highway::new(ps, &format!("{name}.highway"), cfg.d_word, cfg.init_std, rng),
            proj: Linear::new(ps, &format!("{name}.proj"), cfg.d_word, cfg.d, true, cfg.init_std, rng),
            positional: cfg.positional,
        }
    }

    /// `ids` index the word table; returns `[n×d]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        table: ParamId,
        ids: &[usize],
        dropout: f64,
    ) -> Result<Var> {
        let t = g.param(ps, table);
        let mut x = g.gather_rows(t, ids)?;
        if self.positional {
            let width = g.value(x).cols();
            let pe = g.constant(sinusoidal_positions(ids.len(), width));
            x = g.add(x, pe)?;
        }
        let x = self.highway.forward(g, ps, x)?;
        let x = g.dropout(x, dropout)?;
        self.proj.forward(g, ps, x)
    }
}

/// Final reader representations.
#[derive(Debug, Clone)]
pub struct ReaderOutput {
    /// `[J×d]`.
    pub m_q: Var,
    /// Per passage `[L'×d]`.
    pub m_p: Vec<Var>,
    /// `[K·L'×d]`, passages stacked in order.
    pub m_p_all: Var,
    /// Passage index of each row of `m_p_all`.
    pub k_of_l: Vec<usize>,
    pub q_mask: Vec<bool>,
    pub p_masks: Vec<Vec<bool>>,
    pub p_mask_all: Vec<bool>,
    /// Shared-encoder outputs, kept for inspection.
    pub e_q: Var,
    pub e_p: Vec<Var>,
    pub dual: DualAttention,
}

#[derive(Debug, Clone)]
pub struct Reader {
    pub table: ParamId,
    pub embed: EmbeddingLayer,
    pub shared: Vec<EncoderBlock>,
    /// Similarity weight `w_a`, `[3d]`.
    pub similarity: ParamId,
    pub map_q: Linear,
    pub map_p: Linear,
    pub model_q: Vec<EncoderBlock>,
    pub model_p: Vec<EncoderBlock>,
    pub dropout: f64,
}

impl Reader {
    /// `table` is the `[V×d_word]` word embedding shared with the decoder.
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, cfg: &ModelConfig, table: ParamId, rng: &mut R) -> Self {
        let std = cfg.init_std;
        let blocks = |ps: &mut ParamStore<T>, rng: &mut R, name: &str, n: usize| -> Vec<EncoderBlock> {
            (0..n)
                .map(|i| EncoderBlock::new(ps, &format!("{name}.{i}"), cfg.d, cfg.heads, cfg.ffn_inner, std, rng))
                .collect()
        };
        let embed = EmbeddingLayer::new(ps, "reader.embed", cfg, rng);
        let shared = blocks(ps, rng, "reader.shared", cfg.n_shared);
        let similarity = ps.normal("reader.dual.w_a", ParamKind::Weight, &[3 * cfg.d], std, rng);
        let map_q = Linear::new(ps, "reader.map_q", 5 * cfg.d, cfg.d, true, std, rng);
        let map_p = Linear::new(ps, "reader.map_p", 5 * cfg.d, cfg.d, true, std, rng);
        let model_q = blocks(ps, rng, "reader.model_q", cfg.n_model_q);
        let model_p = blocks(ps, rng, "reader.model_p", cfg.n_model_p);
        Self {
            table,
            embed,
            shared,
            similarity,
            map_q,
            map_p,
            model_q,
            model_p,
            dropout: cfg.dropout,
        }
    }

    fn stack<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        blocks: &[EncoderBlock],
        mut x: Var,
        keep: &[bool],
    ) -> Result<Var> {
        for b in blocks {
            x = b.forward(g, ps, x, keep, self.dropout)?;
        }
        Ok(x)
    }

    /// Shared embedding and encoder stack applied to the question and every passage.
    pub fn shared_encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        ex: &EncodedExample,
    ) -> Result<(Var, Vec<Var>)> {
        let q = self.embed.forward(g, ps, self.table, &ex.question, self.dropout)?;
        let e_q = self.stack(g, ps, &self.shared, q, &ex.question_mask)?;
        let mut e_p = Vec::with_capacity(ex.k());
        for p in &ex.passages {
            let x = self.embed.forward(g, ps, self.table, &p.ids, self.dropout)?;
            e_p.push(self.stack(g, ps, &self.shared, x, &p.mask)?);
        }
        Ok((e_q, e_p))
    }

    pub fn dual_attention<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        e_q: Var,
        e_p: &[Var],
        ex: &EncodedExample,
    ) -> Result<DualAttention> {
        let w_a = g.param(ps, self.similarity);
        let masks: Vec<Vec<bool>> = ex.passages.iter().map(|p| p.mask.clone()).collect();
        dual_attention(g, w_a, e_q, &ex.question_mask, e_p, &masks)
    }

    /// Maps the fused `5d` representations to `d` and runs the modeling stacks.
    pub fn model_encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        dual: &DualAttention,
        ex: &EncodedExample,
    ) -> Result<(Var, Vec<Var>)> {
        let q = self.map_q.forward(g, ps, dual.g_p_to_q)?;
        let m_q = self.stack(g, ps, &self.model_q, q, &ex.question_mask)?;
        let mut m_p = Vec::with_capacity(ex.k());
        for (gp, p) in dual.g_q_to_p.iter().zip(&ex.passages) {
            let x = self.map_p.forward(g, ps, *gp)?;
            m_p.push(self.stack(g, ps, &self.model_p, x, &p.mask)?);
        }
        Ok((m_q, m_p))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, ex: &EncodedExample) -> Result<ReaderOutput> {
        let (e_q, e_p) = self.shared_encode(g, ps, ex)?;
        let dual = self.dual_attention(g, ps, e_q, &e_p, ex)?;
        let (m_q, m_p) = self.model_encode(g, ps, &dual, ex)?;
        let m_p_all = if m_p.len() == 1 { m_p[0] } else { g.concat(&m_p, 0)? };
        Ok(ReaderOutput {
            m_q,
            m_p_all,
            k_of_l: ex.k_of_l(),
            q_mask: ex.question_mask.clone(),
            p_masks: ex.passages.iter().map(|p| p.mask.clone()).collect(),
            p_mask_all: ex.passage_mask_concat(),
            m_p,
            e_q,
            e_p,
            dual,
        })
    }
}
