use rand::Rng;

use crate::nn::{key_mask, Linear};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamKind, ParamStore, Result, Var};

/// Denominator guard of the combined passage attention.
pub const COMBINED_EPS: f64 = 1e-12;

/// Additive attention `e_l = wᵀ tanh(M_l W_m + s W_s + b)` over a memory.
#[derive(Debug, Clone)]
pub struct CopyAttention {
    pub memory: Linear,
    pub state: Linear,
    pub score: ParamId,
}

impl CopyAttention {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, d: usize, std: f64, rng: &mut R) -> Self {
        Self {
            memory: Linear::new(ps, &format!("{name}.memory"), d, d, false, std, rng),
            state: Linear::new(ps, &format!("{name}.state"), d, d, true, std, rng),
            score: ps.normal(format!("{name}.score"), ParamKind::Weight, &[d], std, rng),
        }
    }

    /// `s: [T×d]`, `memory: [L×d]`; returns `(α [T×L], c [T×d])`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        s: Var,
        memory: Var,
        keep: &[bool],
    ) -> Result<(Var, Var)> {
        let t = g.value(s).rows();
        let (l, d) = (g.value(memory).rows(), g.value(memory).cols());
        let sm = self.state.forward(g, ps, s)?;
        let mm = self.memory.forward(g, ps, memory)?;
        let h = g.outer_add(sm, mm)?;
        let h = g.tanh(h)?;
        let h = g.reshape(h, &[t * l, d])?;
        let w = g.param(ps, self.score);
        let w = g.reshape(w, &[d, 1])?;
        let e = g.matmul(h, w)?;
        let e = g.reshape(e, &[t, l])?;
        let alpha = g.softmax_axis(e, 1, Some(&key_mask(t, keep)))?;
        let c = g.matmul(alpha, memory)?;
        Ok((alpha, c))
    }
}

/// Reweights passage word attention `α [T×KL']` by passage relevance `β [K]`
/// and renormalizes each row.
pub fn combined_passage_attention<T: Scalar>(g: &mut Graph<T>, alpha: Var, beta: Var, k_of_l: &[usize]) -> Result<Var> {
    let k = g.value(beta).len();
    let col = g.reshape(beta, &[k, 1])?;
    let per_word = g.gather_rows(col, k_of_l)?;
    let per_word = g.reshape(per_word, &[k_of_l.len()])?;
    let weighted = g.mul(alpha, per_word)?;
    g.normalize_rows(weighted, T::lit(COMBINED_EPS))
}

/// `λ^v P^v + λ^q P^q + λ^p P^p` over the extended vocabulary.
///
/// `p_v` is `[T×V_ext]`, `lambda` is `[T×3]`; the copy distributions are
/// scattered from `alpha_q [T×J]` and `alpha_p [T×L]` onto the extended ids
/// of their source positions.
pub fn final_distribution<T: Scalar>(
    g: &mut Graph<T>,
    p_v: Var,
    alpha_q: Var,
    question_ids: &[usize],
    alpha_p: Var,
    passage_ids: &[usize],
    lambda: Var,
) -> Result<Var> {
    let zeros = g.constant(crate::tensor::Tensor::zeros(g.shape(p_v)));
    let p_q = g.scatter_add(zeros, question_ids, alpha_q)?;
    let p_p = g.scatter_add(zeros, passage_ids, alpha_p)?;
    let mut total = None;
    for (i, dist) in [p_v, p_q, p_p].into_iter().enumerate() {
        let w = g.narrow(lambda, 1, i, 1)?;
        let term = g.mul(dist, w)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("three terms"))
}

/// Tied generation head: `softmax((s W¹ + b¹) Eᵀ)` over the common vocabulary,
/// zero-extended to `v_ext` columns.
pub fn generation_distribution<T: Scalar>(
    g: &mut Graph<T>,
    ps: &ParamStore<T>,
    proj: &Linear,
    table: ParamId,
    s: Var,
    v_ext: usize,
) -> Result<Var> {
    let h = proj.forward(g, ps, s)?;
    let e = g.param(ps, table);
    let et = g.transpose(e)?;
    let logits = g.matmul(h, et)?;
    let p = g.softmax_axis(logits, 1, None)?;
    let v = g.value(p).cols();
    if v_ext == v {
        return Ok(p);
    }
    let t = g.value(p).rows();
    let pad = g.constant(crate::tensor::Tensor::zeros(&[t, v_ext - v]));
    g.concat(&[p, pad], 1)
}
