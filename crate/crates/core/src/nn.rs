//! Parameterized building blocks shared by the reader and the decoder.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamKind, ParamStore, Result, Tensor, Var};

/// `x W + b` for row-vector inputs `[n×in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        inp: usize,
        out: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let w = ps.normal(format!("{name}.w"), ParamKind::Weight, &[inp, out], std, rng);
        let b = bias.then(|| ps.zeros(format!("{name}.b"), ParamKind::Bias, &[out]));
        Self { w, b }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(ps, self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(ps, b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        Self {
            gain: ps.ones(format!("{name}.gain"), ParamKind::Norm, &[d]),
            bias: ps.zeros(format!("{name}.bias"), ParamKind::Norm, &[d]),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(ps, self.gain), g.param(ps, self.bias));
        g.layer_norm(x, gain, bias, T::lit(LN_EPS))
    }
}

/// Linear, GELU, linear.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, d: usize, inner: usize, std: f64, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(ps, &format!("{name}.inner"), d, inner, true, std, rng),
            outer: Linear::new(ps, &format!("{name}.outer"), inner, d, true, std, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, ps, x)?;
        let h = g.gelu(h)?;
        self.outer.forward(g, ps, h)
    }
}

/// Multi-head scaled dot-product attention.
///
/// The key projection has no bias: a shift shared by all keys cancels in the softmax.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, d: usize, heads: usize, std: f64, rng: &mut R) -> Self {
        Self {
            heads,
            query: Linear::new(ps, &format!("{name}.query"), d, d, true, std, rng),
            key: Linear::new(ps, &format!("{name}.key"), d, d, false, std, rng),
            value: Linear::new(ps, &format!("{name}.value"), d, d, true, std, rng),
            output: Linear::new(ps, &format!("{name}.output"), d, d, true, std, rng),
        }
    }

    /// Attends from `query [n×d]` over `memory [m×d]`; `keep` is the full
    /// `n×m` mask of attendable pairs.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        query: Var,
        memory: Var,
        keep: &[bool],
        dropout: f64,
    ) -> Result<Var> {
        let d = g.value(query).cols();
        let dh = d / self.heads;
        let q = self.query.forward(g, ps, query)?;
        let k = self.key.forward(g, ps, memory)?;
        let v = self.value.forward(g, ps, memory)?;
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.narrow(q, 1, h * dh, dh)?;
            let kh = g.narrow(k, 1, h * dh, dh)?;
            let vh = g.narrow(v, 1, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let probs = g.softmax_axis(scores, 1, Some(keep))?;
            let probs = g.dropout(probs, dropout)?;
            outs.push(g.matmul(probs, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 1)? };
        self.output.forward(g, ps, joined)
    }
}

/// Mask letting every query row see exactly the kept memory slots.
pub fn key_mask(rows: usize, keys: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(rows * keys.len());
    for _ in 0..rows {
        out.extend_from_slice(keys);
    }
    out
}

/// Key mask combined with the sub-sequent (causal) mask.
pub fn causal_mask(keys: &[bool]) -> Vec<bool> {
    let n = keys.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for (j, &k) in keys.iter().enumerate() {
            out.push(k && j <= i);
        }
    }
    out
}

/// Self-attention and feed-forward sub-layers, each as `LN(f(x) + x)`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub ln_attention: LayerNorm,
    pub ffn: FeedForward,
    pub ln_ffn: LayerNorm,
}

impl EncoderBlock {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ffn_inner: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            attention: MultiHeadAttention::new(ps, &format!("{name}.self_attn"), d, heads, std, rng),
            ln_attention: LayerNorm::new(ps, &format!("{name}.ln1"), d),
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d, ffn_inner, std, rng),
            ln_ffn: LayerNorm::new(ps, &format!("{name}.ln2"), d),
        }
    }

    /// `x: [n×d]`; `keep[i]` is false for padding.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: Var, keep: &[bool], dropout: f64) -> Result<Var> {
        let mask = key_mask(keep.len(), keep);
        let a = self.attention.forward(g, ps, x, x, &mask, dropout)?;
        let x = residual(g, ps, &self.ln_attention, x, a, dropout)?;
        let f = self.ffn.forward(g, ps, x)?;
        residual(g, ps, &self.ln_ffn, x, f, dropout)
    }
}

/// `LN(dropout(f) + x)`.
pub fn residual<T: Scalar>(g: &mut Graph<T>, ps: &ParamStore<T>, ln: &LayerNorm, x: Var, f: Var, dropout: f64) -> Result<Var> {
    let f = g.dropout(f, dropout)?;
    let s = g.add(f, x)?;
    ln.forward(g, ps, s)
}

/// Two-layer highway network with GELU transforms.
#[derive(Debug, Clone)]
pub struct Highway {
    pub layers: Vec<(Linear, Linear)>,
}

impl Highway {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, name: &str, width: usize, std: f64, rng: &mut R) -> Self {
        let layers = (0..2)
            .map(|i| {
                (
                    Linear::new(ps, &format!("{name}.{i}.transform"), width, width, true, std, rng),
                    Linear::new(ps, &format!("{name}.{i}.gate"), width, width, true, std, rng),
                )
            })
            .collect();
        Self { layers }
    }

    /// `y = x + t ⊙ (h - x)` with gate `t = σ(x W_t + b_t)` per layer.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, mut x: Var) -> Result<Var> {
        for (transform, gate) in &self.layers {
            let h = transform.forward(g, ps, x)?;
            let h = g.gelu(h)?;
            let t = gate.forward(g, ps, x)?;
            let t = g.sigmoid(t)?;
            let diff = g.sub(h, x)?;
            let carry = g.mul(t, diff)?;
            x = g.add(x, carry)?;
        }
        Ok(x)
    }
}

/// Fixed sinusoidal encoding, `[n×width]`, positions starting at 0.
pub fn sinusoidal_positions<T: Scalar>(n: usize, width: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(n * width);
    for pos in 0..n {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / width as f64);
            data.push(T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![n, width], data).expect("positive extents")
}
