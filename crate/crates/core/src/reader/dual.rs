use crate::scalar::Scalar;
use crate::tensor::{Graph, Result, TensorError, Var};

/// Attention maps and fused representations of the dual attention layer.
///
/// All matrices are stored position-major: a sequence of `n` vectors of
/// width `d` is an `[n×d]` tensor.
#[derive(Debug, Clone)]
pub struct DualAttention {
    /// Per passage, `[L×J]`: row `l` is a distribution over question words.
    pub a: Vec<Var>,
    /// Per passage, `[L×J]`: column `j` is a distribution over passage words.
    pub b: Vec<Var>,
    /// Per passage, `[L×5d]`.
    pub g_q_to_p: Vec<Var>,
    /// `[J×5d]`.
    pub g_p_to_q: Var,
}

/// Fuses question and passage encodings in both directions.
///
/// `w_a` is the `[3d]` similarity weight applied to
/// `[E_p(l); E_q(j); E_p(l) ⊙ E_q(j)]`.
pub fn dual_attention<T: Scalar>(
    g: &mut Graph<T>,
    w_a: Var,
    e_q: Var,
    q_mask: &[bool],
    e_p: &[Var],
    p_masks: &[Vec<bool>],
) -> Result<DualAttention> {
    if e_p.is_empty() {
        return Err(TensorError::Param {
            op: "dual_attention",
            detail: "at least one passage is required".into(),
        });
    }
    let d = g.value(e_q).cols();
    let j = g.value(e_q).rows();
    let w1 = g.narrow(w_a, 0, 0, d)?;
    let w2 = g.narrow(w_a, 0, d, d)?;
    let w3 = g.narrow(w_a, 0, 2 * d, d)?;
    let w1c = g.reshape(w1, &[d, 1])?;
    let w2c = g.reshape(w2, &[d, 1])?;
    let e_q_t = g.transpose(e_q)?;
    let q_term = g.matmul(e_q, w2c)?;
    let q_term = g.reshape(q_term, &[j])?;

    let mut out = DualAttention {
        a: Vec::new(),
        b: Vec::new(),
        g_q_to_p: Vec::new(),
        g_p_to_q: e_q,
    };
    let mut b_bar = Vec::new();
    let mut b_bar2 = Vec::new();
    for (&ep, mask) in e_p.iter().zip(p_masks) {
        let l = g.value(ep).rows();
        // U[l, j] = w1·E_p(l) + w2·E_q(j) + w3·(E_p(l) ⊙ E_q(j))
        let p_term = g.matmul(ep, w1c)?;
        let scaled = g.mul(ep, w3)?;
        let cross = g.matmul(scaled, e_q_t)?;
        let u = g.add(cross, p_term)?;
        let u = g.add(u, q_term)?;

        let mut keep_q = Vec::with_capacity(l * j);
        let mut keep_p = Vec::with_capacity(l * j);
        for &pm in mask.iter() {
            keep_q.extend_from_slice(q_mask);
            keep_p.extend(std::iter::repeat_n(pm, j));
        }
        let a = g.softmax_axis(u, 1, Some(&keep_q))?;
        let b = g.softmax_axis(u, 0, Some(&keep_p))?;
        let b_t = g.transpose(b)?;

        let a_bar = g.matmul(a, e_q)?; // [L×d]
        let bb = g.matmul(b_t, ep)?; // [J×d]
        let a_bar2 = g.matmul(a, bb)?; // [L×d]
        let bb2 = g.matmul(b_t, a_bar)?; // [J×d]

        let p_a = g.mul(ep, a_bar)?;
        let p_a2 = g.mul(ep, a_bar2)?;
        out.g_q_to_p.push(g.concat(&[ep, a_bar, a_bar2, p_a, p_a2], 1)?);
        out.a.push(a);
        out.b.push(b);
        b_bar.push(bb);
        b_bar2.push(bb2);
    }
    let bb = g.maximum(&b_bar)?;
    let bb2 = g.maximum(&b_bar2)?;
    let q_b = g.mul(e_q, bb)?;
    let q_b2 = g.mul(e_q, bb2)?;
    out.g_p_to_q = g.concat(&[e_q, bb, bb2, q_b, q_b2], 1)?;
    Ok(out)
}
