use std::collections::HashMap;

use super::param::{GradBuffer, ParamId, ParamStore};
use super::rng::DropoutRng;
use super::{Result, Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operation kinds accepted by [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Log,
    Sigmoid,
    Tanh,
    Gelu,
}

/// How the right operand of a binary op maps onto the left one.
#[derive(Debug, Clone, Copy)]
enum Bcast {
    Same,
    /// `b` matches a trailing suffix of `a`'s shape; holds `b.len()`.
    Suffix(usize),
    /// `b` is `[.., n, 1]` against `a` of `[.., n, m]`; holds `m`.
    Column(usize),
}

impl Bcast {
    fn resolve(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        if a == b {
            return Ok(Bcast::Same);
        }
        let mismatch = || TensorError::Shape {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        };
        let b_numel: usize = b.iter().product();
        if b_numel == 1 {
            return Ok(Bcast::Suffix(1));
        }
        if b.len() < a.len() && a.ends_with(b) {
            return Ok(Bcast::Suffix(b_numel));
        }
        if b.len() == a.len()
            && b.last() == Some(&1)
            && a[..a.len() - 1] == b[..b.len() - 1]
        {
            return Ok(Bcast::Column(*a.last().expect("non-empty")));
        }
        Err(mismatch())
    }

    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Suffix(n) => i % n,
            Bcast::Column(m) => i / m,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Log,
    Sigmoid,
    Tanh,
    Gelu,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Affine(Var, T),
    Unary(Var, Unary),
    ClampMin(Var, T),
    MatMul(Var, Var),
    Transpose(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    ScatterAdd {
        base: Var,
        weights: Var,
        ids: Vec<usize>,
        extent: usize,
    },
    Dropout {
        x: Var,
        scale: Vec<T>,
    },
    Concat {
        inputs: Vec<Var>,
        lens: Vec<usize>,
        outer: usize,
        inner: usize,
    },
    Narrow {
        x: Var,
        outer: usize,
        len_in: usize,
        start: usize,
        len: usize,
        inner: usize,
    },
    Reshape(Var),
    Maximum {
        inputs: Vec<Var>,
        argmax: Vec<u32>,
    },
    Sum(Var),
    Pick {
        x: Var,
        idx: Vec<usize>,
        cols: usize,
    },
    OuterAdd {
        a: Var,
        b: Var,
        rows_a: usize,
        rows_b: usize,
        width: usize,
    },
    NormalizeRows {
        x: Var,
        denom: Vec<T>,
        cols: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    param: Option<ParamId>,
}

/// Counters collected during [`Graph::backward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackwardStats {
    /// Nodes whose backward rule ran.
    pub visited: usize,
    /// Nodes recorded on the graph.
    pub recorded: usize,
    /// Nodes that require a gradient.
    pub differentiable: usize,
}

/// Append-only tape of tensor operations.
///
/// Nodes are recorded in evaluation order, so every node's inputs precede
/// it; [`Graph::backward`] walks the tape once in reverse.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    training: bool,
    seed: u64,
    step: u64,
    dropout_calls: u64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new(false)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new(training: bool) -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            training,
            seed: 0,
            step: 0,
            dropout_calls: 0,
        }
    }

    /// Training-mode graph whose dropout masks are keyed by `(seed, step)`.
    pub fn training(seed: u64, step: u64) -> Self {
        Self {
            seed,
            step,
            ..Self::new(true)
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of `v` after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, op_name: &'static str, mut value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        value.set_requires_grad(rg);
        let op = if rg { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        let mut value = value;
        value.set_requires_grad(false);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf that is not tied to a parameter store.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let mut value = value;
        value.set_requires_grad(true);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.nodes[v.0].param = Some(id);
        self.params.insert(id, v);
        v
    }

    // ---------------------------------------------------------------- binary

    pub fn elementwise(&mut self, kind: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = || TensorError::Param {
            op: "elementwise",
            detail: format!("{kind:?} needs a second operand"),
        };
        match kind {
            ElementwiseOp::Add => self.add(a, b.ok_or_else(need_b)?),
            ElementwiseOp::Sub => self.sub(a, b.ok_or_else(need_b)?),
            ElementwiseOp::Mul => self.mul(a, b.ok_or_else(need_b)?),
            ElementwiseOp::Log => self.log(a),
            ElementwiseOp::Sigmoid => self.sigmoid(a),
            ElementwiseOp::Tanh => self.tanh(a),
            ElementwiseOp::Gelu => self.gelu(a),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        mk: impl Fn(Var, Var, Bcast) -> Op<T>,
    ) -> Result<Var> {
        let bc = Bcast::resolve(name, self.shape(a), self.shape(b))?;
        let av = self.value(a);
        let bv = self.value(b).data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[bc.index(i)]))
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, out, mk(a, b, bc), &[a, b])
    }

    /// `a + b` with trailing-suffix or column broadcast of `b`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Hadamard product with broadcast of `b`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| scale * x + shift).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("affine", out, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        self.affine(a, s, T::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -T::one(), T::one())
    }

    // ----------------------------------------------------------------- unary

    fn unary(&mut self, name: &'static str, a: Var, kind: Unary) -> Result<Var> {
        let av = self.value(a);
        if matches!(kind, Unary::Log) {
            if let Some(bad) = av.data().iter().find(|&&x| x <= T::zero()) {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("non-positive input {bad}"),
                });
            }
        }
        let data = av
            .data()
            .iter()
            .map(|&x| match kind {
                Unary::Log => x.ln(),
                Unary::Sigmoid => sigmoid(x),
                Unary::Tanh => x.tanh(),
                Unary::Gelu => gelu(x),
            })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, out, Op::Unary(a, kind), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Unary::Log)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Unary::Tanh)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary("gelu", a, Unary::Gelu)
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x.max(floor)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("clamp_min", out, Op::ClampMin(a, floor), &[a])
    }

    // ---------------------------------------------------------------- linear

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new(vec![m, n], out)?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(TensorError::Shape {
                op: "transpose",
                lhs: s.to_vec(),
                rhs: vec![],
            });
        }
        let (m, n) = (s[0], s[1]);
        let out = transpose_raw(self.value(a).data(), m, n);
        let out = Tensor::new(vec![n, m], out)?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    // --------------------------------------------------------- normalization

    /// Softmax along `axis`; positions with `keep[i] == false` get weight 0.
    pub fn softmax_axis(&mut self, a: Var, axis: usize, keep: Option<&[bool]>) -> Result<Var> {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Param {
                op: "softmax_axis",
                detail: format!("axis {axis} for shape {shape:?}"),
            });
        }
        if let Some(k) = keep {
            if k.len() != av.len() {
                return Err(TensorError::Shape {
                    op: "softmax_axis",
                    lhs: shape,
                    rhs: vec![k.len()],
                });
            }
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = av.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * len * inner + j * inner + i;
                let kept = |j: usize| keep.is_none_or(|k| k[idx(j)]);
                let mut max = T::neg_infinity();
                for j in 0..len {
                    if kept(j) {
                        max = max.max(x[idx(j)]);
                    }
                }
                if max == T::neg_infinity() {
                    return Err(TensorError::DegenerateMask { op: "softmax_axis" });
                }
                let mut sum = T::zero();
                for j in 0..len {
                    if kept(j) {
                        let e = (x[idx(j)] - max).exp();
                        out[idx(j)] = e;
                        sum += e;
                    }
                }
                for j in 0..len {
                    if kept(j) {
                        out[idx(j)] /= sum;
                    }
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        self.push(
            "softmax_axis",
            out,
            Op::Softmax {
                x: a,
                outer,
                len,
                inner,
            },
            &[a],
        )
    }

    /// Layer normalization over the last axis followed by `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(TensorError::Param {
                op: "layer_norm",
                detail: "eps must be positive".into(),
            });
        }
        let av = self.value(a);
        let d = av.cols();
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(TensorError::Shape {
                    op: "layer_norm",
                    lhs: av.shape().to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let rows = av.len() / d;
        let x = av.data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let dn = T::lit(d as f64);
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let out = Tensor::new(av.shape().to_vec(), out)?;
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                x: a,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[a, gain, bias],
        )
    }

    /// Divides each row of a matrix by `max(row sum, eps)`.
    ///
    /// Rows must have a strictly positive sum.
    pub fn normalize_rows(&mut self, a: Var, eps: T) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let rows = av.len() / cols;
        let x = av.data();
        let mut denom = Vec::with_capacity(rows);
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let s: T = x[r * cols..(r + 1) * cols].iter().copied().sum();
            if s <= T::zero() {
                return Err(TensorError::DegenerateMask { op: "normalize_rows" });
            }
            let s = s.max(eps);
            denom.push(s);
            for c in 0..cols {
                out[r * cols + c] = x[r * cols + c] / s;
            }
        }
        let out = Tensor::new(av.shape().to_vec(), out)?;
        self.push("normalize_rows", out, Op::NormalizeRows { x: a, denom, cols }, &[a])
    }

    // -------------------------------------------------------------- indexing

    /// Rows `ids` of a `[V×d]` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(TensorError::Shape {
                op: "gather_rows",
                lhs: tv.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (v, d) = (tv.rows(), tv.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::Index {
                op: "gather_rows",
                index: bad,
                extent: v,
            });
        }
        if ids.is_empty() {
            return Err(TensorError::Param {
                op: "gather_rows",
                detail: "empty id list".into(),
            });
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(tv.row(i));
        }
        let out = Tensor::new(vec![ids.len(), d], out)?;
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// `base[.., ids[i]] += weights[.., i]` along the last axis; duplicate ids sum.
    pub fn scatter_add(&mut self, base: Var, ids: &[usize], weights: Var) -> Result<Var> {
        let (bv, wv) = (self.value(base), self.value(weights));
        let extent = bv.cols();
        let n = ids.len();
        let shape_err = || TensorError::Shape {
            op: "scatter_add",
            lhs: bv.shape().to_vec(),
            rhs: wv.shape().to_vec(),
        };
        if wv.cols() != n || bv.len() / extent != wv.len() / n {
            return Err(shape_err());
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= extent) {
            return Err(TensorError::Index {
                op: "scatter_add",
                index: bad,
                extent,
            });
        }
        let mut out = bv.data().to_vec();
        let w = wv.data();
        for r in 0..bv.len() / extent {
            for (i, &id) in ids.iter().enumerate() {
                out[r * extent + id] += w[r * n + i];
            }
        }
        let out = Tensor::new(bv.shape().to_vec(), out)?;
        self.push(
            "scatter_add",
            out,
            Op::ScatterAdd {
                base,
                weights,
                ids: ids.to_vec(),
                extent,
            },
            &[base, weights],
        )
    }

    /// `x[r, idx[r]]` for every row of a matrix.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || xv.rows() != idx.len() {
            return Err(TensorError::Shape {
                op: "pick",
                lhs: xv.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let cols = xv.cols();
        if let Some(&bad) = idx.iter().find(|&&i| i >= cols) {
            return Err(TensorError::Index {
                op: "pick",
                index: bad,
                extent: cols,
            });
        }
        let data = idx.iter().enumerate().map(|(r, &c)| xv.get2(r, c)).collect();
        let out = Tensor::new(vec![idx.len()], data)?;
        self.push(
            "pick",
            out,
            Op::Pick {
                x,
                idx: idx.to_vec(),
                cols,
            },
            &[x],
        )
    }

    // ------------------------------------------------------------ structural

    /// Concatenation along `axis`; other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::Param {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Param {
                op: "concat",
                detail: format!("axis {axis} for shape {base:?}"),
            });
        }
        let mut lens = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            lens.push(s[axis]);
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &len) in inputs.iter().zip(&lens) {
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, out)?;
        self.push(
            "concat",
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                lens,
                outer,
                inner,
            },
            inputs,
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::Index {
                op: "narrow",
                index: start + len,
                extent: shape.get(axis).copied().unwrap_or(0),
            });
        }
        let (outer, len_in, inner) = split_axis(&shape, axis);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = o * len_in * inner + start * inner;
            out.extend_from_slice(&d[off..off + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, out)?;
        self.push(
            "narrow",
            out,
            Op::Narrow {
                x: a,
                outer,
                len_in,
                start,
                len,
                inner,
            },
            &[a],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let out = Tensor::new(shape.to_vec(), av.data().to_vec()).map_err(|_| TensorError::Shape {
            op: "reshape",
            lhs: av.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    /// Elementwise maximum across same-shaped tensors (first wins ties).
    pub fn maximum(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or(TensorError::Param {
            op: "maximum",
            detail: "no inputs".into(),
        })?;
        let shape = self.shape(first).to_vec();
        for &v in inputs {
            if self.shape(v) != shape.as_slice() {
                return Err(TensorError::Shape {
                    op: "maximum",
                    lhs: shape,
                    rhs: self.shape(v).to_vec(),
                });
            }
        }
        let mut out = self.value(first).data().to_vec();
        let mut argmax = vec![0u32; out.len()];
        for (k, &v) in inputs.iter().enumerate().skip(1) {
            for (i, &x) in self.value(v).data().iter().enumerate() {
                if x > out[i] {
                    out[i] = x;
                    argmax[i] = k as u32;
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        self.push(
            "maximum",
            out,
            Op::Maximum {
                inputs: inputs.to_vec(),
                argmax,
            },
            inputs,
        )
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `out[t, l, :] = a[t, :] + b[l, :]` for `a: [T×d]`, `b: [L×d]`.
    pub fn outer_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(TensorError::Shape {
                op: "outer_add",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (ra, rb, w) = (sa[0], sb[0], sa[1]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * rb * w);
        for t in 0..ra {
            for l in 0..rb {
                for c in 0..w {
                    out.push(ad[t * w + c] + bd[l * w + c]);
                }
            }
        }
        let out = Tensor::new(vec![ra, rb, w], out)?;
        self.push(
            "outer_add",
            out,
            Op::OuterAdd {
                a,
                b,
                rows_a: ra,
                rows_b: rb,
                width: w,
            },
            &[a, b],
        )
    }

    // --------------------------------------------------------------- dropout

    /// Inverted dropout; identity outside training mode or at rate 0.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Param {
                op: "dropout",
                detail: format!("rate {rate} outside [0, 1)"),
            });
        }
        if !self.training || rate == 0.0 {
            return Ok(a);
        }
        let instance = self.dropout_calls;
        self.dropout_calls += 1;
        let mut rng = DropoutRng::new(self.seed, instance, self.step);
        let keep_scale = T::lit(1.0 / (1.0 - rate));
        let av = self.value(a);
        let scale: Vec<T> = (0..av.len())
            .map(|_| {
                if rng.uniform() < rate {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = av.data().iter().zip(&scale).map(|(&x, &s)| x * s).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout { x: a, scale }, &[a])
    }

    // -------------------------------------------------------------- backward

    /// Reverse pass from a single-element `loss`.
    ///
    /// Gradients are stored on each differentiable node and can be read
    /// with [`Graph::grad`] or collected with [`Graph::accumulate_param_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<BackwardStats> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Shape {
                op: "backward",
                lhs: self.shape(loss).to_vec(),
                rhs: vec![1],
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut stats = BackwardStats {
            recorded: n,
            differentiable: self.nodes.iter().filter(|n| n.value.requires_grad()).count(),
            visited: 0,
        };
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            stats.visited += 1;
            self.backward_node(i, &g, &mut grads);
            self.nodes[i].value.set_grad(g);
        }
        Ok(stats)
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| reduce_bcast(gb, g, *bc, |_| T::one()));
            }
            Op::Sub(a, b, bc) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| reduce_bcast(gb, g, *bc, |_| -T::one()));
            }
            Op::Mul(a, b, bc) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for (k, x) in ga.iter_mut().enumerate() {
                        *x += g[k] * bv[bc.index(k)];
                    }
                });
                self.acc(grads, *b, |gb| reduce_bcast(gb, g, *bc, |k| av[k]));
            }
            Op::Affine(a, s) => {
                self.acc(grads, *a, |ga| {
                    for (x, &gi) in ga.iter_mut().zip(g) {
                        *x += *s * gi;
                    }
                });
            }
            Op::Unary(a, kind) => {
                let xv = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for k in 0..ga.len() {
                        let d = match kind {
                            Unary::Log => T::one() / xv[k],
                            Unary::Sigmoid => out[k] * (T::one() - out[k]),
                            Unary::Tanh => T::one() - out[k] * out[k],
                            Unary::Gelu => gelu_grad(xv[k]),
                        };
                        ga[k] += g[k] * d;
                    }
                });
            }
            Op::ClampMin(a, floor) => {
                let xv = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for k in 0..ga.len() {
                        if xv[k] >= *floor {
                            ga[k] += g[k];
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for r in 0..m {
                        for c in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s += g[r * n + j] * bv[c * n + j];
                            }
                            ga[r * k + c] += s;
                        }
                    }
                });
                self.acc(grads, *b, |gb| {
                    for r in 0..m {
                        for c in 0..k {
                            let x = av[r * k + c];
                            if x == T::zero() {
                                continue;
                            }
                            for j in 0..n {
                                gb[c * n + j] += x * g[r * n + j];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let back = transpose_raw(g, s[0], s[1]);
                self.acc(grads, *a, |ga| add_into(ga, &back));
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                self.acc(grads, *x, |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| o * len * inner + j * inner + i;
                            let dot: T = (0..len).map(|j| g[idx(j)] * out[idx(j)]).sum();
                            for j in 0..len {
                                let y = out[idx(j)];
                                gx[idx(j)] += y * (g[idx(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = node.value.cols();
                let rows = out.len() / d;
                let gv = self.value(*gain).data();
                let dn = T::lit(d as f64);
                self.acc(grads, *x, |gx| {
                    for r in 0..rows {
                        let off = r * d;
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..d {
                            let dh = g[off + c] * gv[c];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[off + c];
                        }
                        mean_dh /= dn;
                        mean_dh_h /= dn;
                        for c in 0..d {
                            let dh = g[off + c] * gv[c];
                            gx[off + c] += inv_std[r] * (dh - mean_dh - xhat[off + c] * mean_dh_h);
                        }
                    }
                });
                self.acc(grads, *gain, |gg| {
                    for k in 0..out.len() {
                        gg[k % d] += g[k] * xhat[k];
                    }
                });
                self.acc(grads, *bias, |gb| {
                    for k in 0..out.len() {
                        gb[k % d] += g[k];
                    }
                });
            }
            Op::NormalizeRows { x, denom, cols } => {
                let cols = *cols;
                let xv = self.value(*x).data();
                self.acc(grads, *x, |gx| {
                    for (r, &s) in denom.iter().enumerate() {
                        let off = r * cols;
                        // denominator is a constant where the floor is active
                        let floored = {
                            let raw: T = xv[off..off + cols].iter().copied().sum();
                            raw < s
                        };
                        let dot: T = (0..cols).map(|c| g[off + c] * out[off + c]).sum();
                        for c in 0..cols {
                            let mut v = g[off + c] / s;
                            if !floored {
                                v -= dot / s;
                            }
                            gx[off + c] += v;
                        }
                    }
                });
            }
            Op::GatherRows { table, ids } => {
                let d = node.value.cols();
                self.acc(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            gt[id * d + c] += g[r * d + c];
                        }
                    }
                });
            }
            Op::ScatterAdd {
                base,
                weights,
                ids,
                extent,
            } => {
                let n = ids.len();
                self.acc(grads, *base, |gb| add_into(gb, g));
                self.acc(grads, *weights, |gw| {
                    for r in 0..gw.len() / n {
                        for (i, &id) in ids.iter().enumerate() {
                            gw[r * n + i] += g[r * extent + id];
                        }
                    }
                });
            }
            Op::Dropout { x, scale } => {
                self.acc(grads, *x, |gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] * scale[k];
                    }
                });
            }
            Op::Concat {
                inputs,
                lens,
                outer,
                inner,
            } => {
                let total: usize = lens.iter().sum();
                let mut offset = 0;
                for (&v, &len) in inputs.iter().zip(lens) {
                    self.acc(grads, v, |gv| {
                        for o in 0..*outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * len * inner;
                            for k in 0..len * inner {
                                gv[dst + k] += g[src + k];
                            }
                        }
                    });
                    offset += len;
                }
            }
            Op::Narrow {
                x,
                outer,
                len_in,
                start,
                len,
                inner,
            } => {
                self.acc(grads, *x, |gx| {
                    for o in 0..*outer {
                        let dst = o * len_in * inner + start * inner;
                        let src = o * len * inner;
                        for k in 0..len * inner {
                            gx[dst + k] += g[src + k];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
            }
            Op::Maximum { inputs, argmax } => {
                for (k, &v) in inputs.iter().enumerate() {
                    self.acc(grads, v, |gv| {
                        for (e, &am) in argmax.iter().enumerate() {
                            if am as usize == k {
                                gv[e] += g[e];
                            }
                        }
                    });
                }
            }
            Op::Sum(a) => {
                self.acc(grads, *a, |ga| {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::Pick { x, idx, cols } => {
                self.acc(grads, *x, |gx| {
                    for (r, &c) in idx.iter().enumerate() {
                        gx[r * cols + c] += g[r];
                    }
                });
            }
            Op::OuterAdd {
                a,
                b,
                rows_a,
                rows_b,
                width,
            } => {
                let (ra, rb, w) = (*rows_a, *rows_b, *width);
                self.acc(grads, *a, |ga| {
                    for t in 0..ra {
                        for l in 0..rb {
                            for c in 0..w {
                                ga[t * w + c] += g[(t * rb + l) * w + c];
                            }
                        }
                    }
                });
                self.acc(grads, *b, |gb| {
                    for t in 0..ra {
                        for l in 0..rb {
                            for c in 0..w {
                                gb[l * w + c] += g[(t * rb + l) * w + c];
                            }
                        }
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.requires_grad(v) {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    /// Adds the gradients of all parameter leaves into `buf`.
    pub fn accumulate_param_grads(&self, buf: &mut GradBuffer<T>) {
        for (&id, &v) in &self.params {
            if let Some(g) = self.grad(v) {
                buf.accumulate(id, g);
            }
        }
    }

    /// Parameter leaf recorded for `id`, if any.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn reduce_bcast<T: Scalar>(gb: &mut [T], g: &[T], bc: Bcast, factor: impl Fn(usize) -> T) {
    for (k, &gk) in g.iter().enumerate() {
        gb[bc.index(k)] += gk * factor(k);
    }
}

pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for r in 0..m {
        let row = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let x = a[r * k + c];
            if x == T::zero() {
                continue;
            }
            let brow = &b[c * n..(c + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
    }
    out
}

fn transpose_raw<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for r in 0..m {
        for c in 0..n {
            out[c * m + r] = a[r * n + c];
        }
    }
    out
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = k * (x + T::lit(GELU_C) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = k * (x + T::lit(GELU_C) * x * x * x);
    let th = u.tanh();
    let du = k * (T::one() + T::lit(3.0 * GELU_C) * x * x);
    T::lit(0.5) * (T::one() + th) + T::lit(0.5) * x * (T::one() - th * th) * du
}
