//! Passage ranker and answer possibility classifier.

use rand::Rng;

use crate::error::{ModelError, ModelResult};
use crate::reader::ReaderOutput;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamKind, ParamStore, Var};

/// Ranker weight `w_r [d]` and classifier weight `w_c [K·d]`; no biases.
#[derive(Debug, Clone)]
pub struct TaskHeads {
    pub ranker: ParamId,
    pub classifier: ParamId,
    pub k: usize,
}

impl TaskHeads {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, d: usize, k: usize, std: f64, rng: &mut R) -> Self {
        Self {
            ranker: ps.normal("heads.ranker.w", ParamKind::Weight, &[d], std, rng),
            classifier: ps.normal("heads.classifier.w", ParamKind::Weight, &[k * d], std, rng),
            k,
        }
    }

    /// First (BOS) row of every passage, `[K×d]`.
    pub fn bos_rows<T: Scalar>(&self, g: &mut Graph<T>, out: &ReaderOutput) -> ModelResult<Var> {
        if out.m_p.len() != self.k {
            return Err(ModelError::Config(format!(
                "heads expect {} passages, reader produced {}",
                self.k,
                out.m_p.len()
            )));
        }
        let rows = out
            .m_p
            .iter()
            .map(|&m| g.narrow(m, 0, 0, 1))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(if rows.len() == 1 { rows[0] } else { g.concat(&rows, 0)? })
    }

    /// Relevance probabilities β, `[K]`.
    pub fn rank_passages<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, out: &ReaderOutput) -> ModelResult<Var> {
        let bos = self.bos_rows(g, out)?;
        let d = g.value(bos).cols();
        let w = g.param(ps, self.ranker);
        let w = g.reshape(w, &[d, 1])?;
        let logits = g.matmul(bos, w)?;
        let logits = g.reshape(logits, &[self.k])?;
        Ok(g.sigmoid(logits)?)
    }

    /// Answer possibility P(a), `[1]`.
    pub fn classify_answerability<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        out: &ReaderOutput,
    ) -> ModelResult<Var> {
        let bos = self.bos_rows(g, out)?;
        let d = g.value(bos).cols();
        let w = g.param(ps, self.classifier);
        if g.value(w).len() != self.k * d {
            return Err(ModelError::Config(format!(
                "classifier weight has {} entries, expected K·d = {}",
                g.value(w).len(),
                self.k * d
            )));
        }
        let flat = g.reshape(bos, &[1, self.k * d])?;
        let w = g.reshape(w, &[self.k * d, 1])?;
        let logit = g.matmul(flat, w)?;
        let logit = g.reshape(logit, &[1])?;
        Ok(g.sigmoid(logit)?)
    }
}
