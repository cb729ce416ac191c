use crate::data::EncodedExample;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Result, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Replaces positive labels with `pos`; negatives stay 0.
pub fn smooth_label(label: bool, pos: f64) -> f64 {
    if label {
        pos
    } else {
        0.0
    }
}

fn safe_log<T: Scalar>(g: &mut Graph<T>, p: Var) -> Result<Var> {
    let p = g.clamp_min(p, T::lit(LOG_FLOOR))?;
    g.log(p)
}

/// Negative log-likelihood of the scored target tokens of one example,
/// averaged over those tokens. `p` is the `[T×V_ext]` output of a
/// teacher-forced pass.
pub fn answer_nll<T: Scalar>(g: &mut Graph<T>, p: Var, ex: &EncodedExample) -> Result<Var> {
    let targets = &ex.target[1..];
    let scored: Vec<T> = ex.target_mask[1..].iter().map(|&m| if m { T::one() } else { T::zero() }).collect();
    let count = scored.iter().filter(|&&w| w > T::zero()).count().max(1);
    let picked = g.pick(p, targets)?;
    let logs = safe_log(g, picked)?;
    let w = g.constant(Tensor::new(vec![scored.len()], scored)?);
    let weighted = g.mul(logs, w)?;
    let total = g.sum(weighted)?;
    g.scale(total, T::lit(-1.0 / count as f64))
}

/// `L_dec`: per-example NLL summed over answerable examples and divided by
/// their count. Returns `None` when no example is answerable.
pub fn decoder_loss<T: Scalar>(g: &mut Graph<T>, items: &[(Var, &EncodedExample)]) -> Result<Option<Var>> {
    let mut total: Option<Var> = None;
    let mut n_able = 0usize;
    for &(p, ex) in items {
        if !ex.answerable {
            continue;
        }
        n_able += 1;
        let nll = answer_nll(g, p, ex)?;
        total = Some(match total {
            Some(acc) => g.add(acc, nll)?,
            None => nll,
        });
    }
    match total {
        Some(t) => Ok(Some(g.scale(t, T::lit(1.0 / n_able as f64))?)),
        None => Ok(None),
    }
}

/// Mean binary cross-entropy of probabilities `p` (any shape) against
/// `targets` in [0, 1].
pub fn binary_cross_entropy<T: Scalar>(g: &mut Graph<T>, p: Var, targets: &[f64]) -> Result<Var> {
    let n = targets.len();
    let y = g.constant(Tensor::new(vec![n], targets.iter().map(|&t| T::lit(t)).collect())?);
    let one_minus_y = g.constant(Tensor::new(vec![n], targets.iter().map(|&t| T::lit(1.0 - t)).collect())?);
    let p = g.reshape(p, &[n])?;
    let q = g.one_minus(p)?;
    let log_p = safe_log(g, p)?;
    let log_q = safe_log(g, q)?;
    let a = g.mul(log_p, y)?;
    let b = g.mul(log_q, one_minus_y)?;
    let s = g.add(a, b)?;
    let s = g.sum(s)?;
    g.scale(s, T::lit(-1.0 / n as f64))
}

/// `L_rank` over every passage slot of every example.
pub fn ranking_loss<T: Scalar>(g: &mut Graph<T>, items: &[(Var, &EncodedExample)], pos: f64) -> Result<Var> {
    let betas: Vec<Var> = items.iter().map(|&(b, _)| b).collect();
    let all = if betas.len() == 1 { betas[0] } else { g.concat(&betas, 0)? };
    let targets: Vec<f64> = items
        .iter()
        .flat_map(|(_, ex)| ex.relevance.iter().map(|&r| smooth_label(r, pos)))
        .collect();
    binary_cross_entropy(g, all, &targets)
}

/// `L_cls` over every example.
pub fn classification_loss<T: Scalar>(g: &mut Graph<T>, items: &[(Var, &EncodedExample)], pos: f64) -> Result<Var> {
    let probs: Vec<Var> = items.iter().map(|&(p, _)| p).collect();
    let all = if probs.len() == 1 { probs[0] } else { g.concat(&probs, 0)? };
    let targets: Vec<f64> = items.iter().map(|(_, ex)| smooth_label(ex.answerable, pos)).collect();
    binary_cross_entropy(g, all, &targets)
}

/// Graph handles of the three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub decoder: Option<Var>,
    pub rank: Var,
    pub cls: Var,
    pub total: Var,
}

/// `L_dec + γ_rank L_rank + γ_cls L_cls`.
pub fn total_loss(l_dec: f64, l_rank: f64, l_cls: f64, gamma_rank: f64, gamma_cls: f64) -> f64 {
    l_dec + gamma_rank * l_rank + gamma_cls * l_cls
}

/// [`total_loss`] on graph values.
pub fn total_loss_var<T: Scalar>(
    g: &mut Graph<T>,
    decoder: Option<Var>,
    rank: Var,
    cls: Var,
    gamma_rank: f64,
    gamma_cls: f64,
) -> Result<LossTerms> {
    let r = g.scale(rank, T::lit(gamma_rank))?;
    let c = g.scale(cls, T::lit(gamma_cls))?;
    let mut total = g.add(r, c)?;
    if let Some(d) = decoder {
        total = g.add(d, total)?;
    }
    Ok(LossTerms {
        decoder,
        rank,
        cls,
        total,
    })
}
