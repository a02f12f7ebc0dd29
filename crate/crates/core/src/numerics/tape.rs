//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A `Tape` owns an append-only list of `Tensor` nodes; operations push new
//! nodes and record their parents, so creation order is already a topological
//! order. `backward` walks the list in reverse and accumulates (adds into)
//! gradients — it never overwrites, so re-running backward or reusing a node
//! twice in a graph both compose additively.
//!
//! Storage is row-major and dense; there are no views or aliasing. Graph
//! construction and backward are single-threaded per tape; batch parallelism
//! is achieved by giving each unit of work its own tape.

use super::scalar::Scalar;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(u32);

impl TensorId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// One node: a dense value plus an optional gradient accumulator.
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
    requires_grad: bool,
    op: Op<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

enum Op<S> {
    Leaf,
    Add(TensorId, TensorId),
    /// [r×c] plus a length-c row vector broadcast over rows.
    AddRow(TensorId, TensorId),
    Scale(TensorId, S),
    Matmul(TensorId, TensorId),
    /// a · bᵀ with a: [m×k], b: [n×k].
    MatmulNt(TensorId, TensorId),
    SoftmaxRows(TensorId),
    LayerNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        normed: Vec<S>,
        rstd: Vec<S>,
    },
    Gelu(TensorId),
    Embedding {
        table: TensorId,
        ids: Vec<usize>,
    },
    ConcatRows(TensorId, TensorId),
    SliceRows {
        x: TensorId,
        start: usize,
    },
    SliceCols {
        x: TensorId,
        start: usize,
    },
    ConcatCols(Vec<TensorId>),
    /// Fused multi-head attention over full-width q/k/v ([L×d] each).
    /// Saves the per-head attention probabilities for backward. Causal
    /// attention restricts each query row to its prefix.
    Mha {
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        causal: bool,
        scale: S,
        attn: Vec<S>,
    },
    MeanPoolRows {
        x: TensorId,
        window: usize,
    },
    Dropout {
        x: TensorId,
        mask: Vec<S>,
    },
    /// Scalar-valued op with a precomputed input gradient (cross-entropy,
    /// CTC). `dx` is d(value)/d(input), scaled during backward by the
    /// upstream gradient.
    ScalarFn {
        x: TensorId,
        dx: Vec<S>,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().unwrap_or(&1);
    let rows = if shape.is_empty() {
        1
    } else {
        shape[..shape.len() - 1].iter().product::<usize>()
    };
    (rows, cols)
}

// ---------------------------------------------------------------------------
// Raw kernels. Accumulating (+=) so backward can reuse them directly.
// ---------------------------------------------------------------------------

/// c += a · b with a: [m×k], b: [k×n].
///
/// Narrow outputs (n <= 64) accumulate in a stack buffer so the row stays in
/// registers across the k loop; wider outputs stream row-wise.
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    if n <= 32 {
        let mut acc = [S::zero(); 32];
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * n..(i + 1) * n];
            let acc = &mut acc[..n];
            acc.copy_from_slice(c_row);
            for (kk, &aik) in a_row.iter().enumerate() {
                let b_row = &b[kk * n..(kk + 1) * n];
                for (av, &bv) in acc.iter_mut().zip(b_row) {
                    *av = *av + aik * bv;
                }
            }
            c_row.copy_from_slice(acc);
        }
    } else {
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * n..(i + 1) * n];
            for (kk, &aik) in a_row.iter().enumerate() {
                let b_row = &b[kk * n..(kk + 1) * n];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv = *cv + aik * bv;
                }
            }
        }
    }
}

/// c += a · bᵀ with a: [m×k], b: [n×k]. Materializes bᵀ once so the inner
/// product becomes the streaming row kernel.
pub fn matmul_nt_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    let mut bt = vec![S::zero(); k * n];
    for j in 0..n {
        for kk in 0..k {
            bt[kk * n + j] = b[j * k + kk];
        }
    }
    matmul_acc(a, &bt, m, k, n, c);
}

/// c += aᵀ · b with a: [m×k], b: [m×n], c: [k×n].
pub fn matmul_tn_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + aik * bv;
            }
        }
    }
}

/// Last-axis softmax into `out`, max-shifted so large logits cannot overflow.
pub fn softmax_rows_raw<S: Scalar>(x: &[S], rows: usize, cols: usize, out: &mut [S]) {
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let out_row = &mut out[r * cols..(r + 1) * cols];
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for (o, &v) in out_row.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum = sum + e;
        }
        let inv = S::one() / sum;
        for o in out_row.iter_mut() {
            *o = *o * inv;
        }
    }
}

/// Last-axis log-softmax via max-shifted logsumexp.
pub fn log_softmax_rows_raw<S: Scalar>(x: &[S], rows: usize, cols: usize, out: &mut [S]) {
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let out_row = &mut out[r * cols..(r + 1) * cols];
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for &v in row.iter() {
            sum = sum + (v - max).exp();
        }
        let lse = max + sum.ln();
        for (o, &v) in out_row.iter_mut().zip(row) {
            *o = v - lse;
        }
    }
}

struct GeluConsts<S> {
    half: S,
    k: S,
    k3: S,
    c: S,
}

impl<S: Scalar> GeluConsts<S> {
    fn new() -> Self {
        let k = super::scalar::sc::<S>(0.044715);
        GeluConsts {
            half: super::scalar::sc::<S>(0.5),
            k,
            k3: super::scalar::sc::<S>(3.0) * k,
            c: (super::scalar::sc::<S>(2.0) / S::PI()).sqrt(),
        }
    }

    // tanh approximation; tanh itself via one exp, which is measurably
    // cheaper than libm tanh and saturates to ±1 at the extremes
    #[inline]
    fn tanh(u: S) -> S {
        let two = S::one() + S::one();
        S::one() - two / ((two * u).exp() + S::one())
    }

    #[inline]
    fn val(&self, x: S) -> S {
        let u = self.c * (x + self.k * x * x * x);
        self.half * x * (S::one() + Self::tanh(u))
    }

    #[inline]
    fn deriv(&self, x: S) -> S {
        let x2 = x * x;
        let u = self.c * (x + self.k * x2 * x);
        let t = Self::tanh(u);
        let sech2 = S::one() - t * t;
        self.half * (S::one() + t) + self.half * x * sech2 * self.c * (S::one() + self.k3 * x2)
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

pub struct Tape<S: Scalar> {
    nodes: Vec<Tensor<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<S>, requires_grad: bool, op: Op<S>) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Tensor {
            shape,
            data,
            grad: None,
            requires_grad,
            op,
        });
        TensorId((self.nodes.len() - 1) as u32)
    }

    fn node(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id.idx()]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.node(id).shape
    }

    pub fn data(&self, id: TensorId) -> &[S] {
        &self.node(id).data
    }

    /// Scalar value of a single-element node.
    pub fn value(&self, id: TensorId) -> S {
        debug_assert_eq!(self.node(id).data.len(), 1);
        self.node(id).data[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.node(id).grad.as_deref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.node(id).requires_grad
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<S>, requires_grad: bool) -> Result<TensorId> {
        if numel(shape) != data.len() {
            return Err(Error::Dimension {
                op: "leaf",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<S>) -> Result<TensorId> {
        self.leaf(shape, data, false)
    }

    pub fn scalar(&mut self, v: S) -> TensorId {
        self.push(vec![1], vec![v], false, Op::Leaf)
    }

    fn binary_same_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.node(a).shape != self.node(b).shape {
            return Err(Error::Dimension {
                op,
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("add", a, b)?;
        let data: Vec<S> = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(self.node(a).shape.clone(), data, rg, Op::Add(a, b)))
    }

    /// Broadcast-add a length-c row vector to every row of a [r×c] matrix.
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId> {
        let (_, c) = rows_cols(&self.node(a).shape);
        if self.node(row).shape != [c] {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(row).shape.clone(),
            });
        }
        let rv = self.node(row).data.clone();
        let data: Vec<S> = self
            .node(a)
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv[i % c])
            .collect();
        let rg = self.node(a).requires_grad || self.node(row).requires_grad;
        Ok(self.push(self.node(a).shape.clone(), data, rg, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: TensorId, factor: S) -> TensorId {
        let data: Vec<S> = self.node(a).data.iter().map(|&x| x * factor).collect();
        let rg = self.node(a).requires_grad;
        self.push(self.node(a).shape.clone(), data, rg, Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.node(a).shape, &self.node(b).shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        matmul_acc(&self.node(a).data, &self.node(b).data, m, k, n, &mut out);
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(vec![m, n], out, rg, Op::Matmul(a, b)))
    }

    /// a · bᵀ: a [m×k], b [n×k] → [m×n].
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.node(a).shape, &self.node(b).shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Dimension {
                op: "matmul_nt",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![S::zero(); m * n];
        matmul_nt_acc(&self.node(a).data, &self.node(b).data, m, k, n, &mut out);
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(vec![m, n], out, rg, Op::MatmulNt(a, b)))
    }

    /// Last-axis softmax computed via max-shifted logsumexp.
    pub fn softmax_rows(&mut self, x: TensorId) -> TensorId {
        let (r, c) = rows_cols(&self.node(x).shape);
        let mut out = vec![S::zero(); r * c];
        softmax_rows_raw(&self.node(x).data, r, c, &mut out);
        let rg = self.node(x).requires_grad;
        self.push(self.node(x).shape.clone(), out, rg, Op::SoftmaxRows(x))
    }

    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: S,
    ) -> Result<TensorId> {
        let (r, c) = rows_cols(&self.node(x).shape);
        if self.node(gamma).shape != [c] || self.node(beta).shape != [c] {
            return Err(Error::Dimension {
                op: "layer_norm",
                lhs: self.node(x).shape.clone(),
                rhs: self.node(gamma).shape.clone(),
            });
        }
        let cn = super::scalar::sc::<S>(c as f64);
        let mut normed = vec![S::zero(); r * c];
        let mut rstd = vec![S::zero(); r];
        let mut out = vec![S::zero(); r * c];
        {
            let xd = &self.node(x).data;
            let g = &self.node(gamma).data;
            let b = &self.node(beta).data;
            for i in 0..r {
                let row = &xd[i * c..(i + 1) * c];
                let mut mean = S::zero();
                for &v in row {
                    mean = mean + v;
                }
                mean = mean / cn;
                let mut var = S::zero();
                for &v in row {
                    let d = v - mean;
                    var = var + d * d;
                }
                var = var / cn;
                let rs = S::one() / (var + eps).sqrt();
                rstd[i] = rs;
                for j in 0..c {
                    let nh = (row[j] - mean) * rs;
                    normed[i * c + j] = nh;
                    out[i * c + j] = g[j] * nh + b[j];
                }
            }
        }
        let rg = self.node(x).requires_grad
            || self.node(gamma).requires_grad
            || self.node(beta).requires_grad;
        Ok(self.push(
            self.node(x).shape.clone(),
            out,
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                rstd,
            },
        ))
    }

    pub fn gelu(&mut self, x: TensorId) -> TensorId {
        let g = GeluConsts::new();
        let data: Vec<S> = self.node(x).data.iter().map(|&v| g.val(v)).collect();
        let rg = self.node(x).requires_grad;
        self.push(self.node(x).shape.clone(), data, rg, Op::Gelu(x))
    }

    /// Gather rows of `table` ([V×d]) at `ids`; gradients scatter-add back.
    pub fn embedding(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let st = &self.node(table).shape;
        if st.len() != 2 {
            return Err(Error::Dimension {
                op: "embedding",
                lhs: st.clone(),
                rhs: vec![],
            });
        }
        let (v, d) = (st[0], st[1]);
        for &id in ids {
            if id >= v {
                return Err(Error::Config(format!(
                    "embedding id {id} out of range for table of {v}"
                )));
            }
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&self.node(table).data[id * d..(id + 1) * d]);
        }
        let rg = self.node(table).requires_grad;
        Ok(self.push(
            vec![ids.len(), d],
            out,
            rg,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn concat_rows(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (&self.node(a).shape, &self.node(b).shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Dimension {
                op: "concat_rows",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let shape = vec![sa[0] + sb[0], sa[1]];
        let mut data = Vec::with_capacity(numel(&shape));
        data.extend_from_slice(&self.node(a).data);
        data.extend_from_slice(&self.node(b).data);
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(shape, data, rg, Op::ConcatRows(a, b)))
    }

    pub fn slice_rows(&mut self, x: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let s = &self.node(x).shape;
        if s.len() != 2 || end > s[0] || start > end {
            return Err(Error::Dimension {
                op: "slice_rows",
                lhs: s.clone(),
                rhs: vec![start, end],
            });
        }
        let c = s[1];
        let data = self.node(x).data[start * c..end * c].to_vec();
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![end - start, c], data, rg, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let s = &self.node(x).shape;
        if s.len() != 2 || end > s[1] || start > end {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: s.clone(),
                rhs: vec![start, end],
            });
        }
        let (r, c) = (s[0], s[1]);
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.node(x).data[i * c + start..i * c + end]);
        }
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![r, w], data, rg, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Config("concat_cols of zero parts".into()));
        }
        let r = self.node(parts[0]).shape[0];
        let mut total = 0;
        for &p in parts {
            let s = &self.node(p).shape;
            if s.len() != 2 || s[0] != r {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    lhs: self.node(parts[0]).shape.clone(),
                    rhs: s.clone(),
                });
            }
            total += s[1];
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.node(p).shape[1];
                data.extend_from_slice(&self.node(p).data[i * c..(i + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.node(p).requires_grad);
        Ok(self.push(vec![r, total], data, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Fused multi-head attention: q, k, v are [L×d], d divisible by
    /// `heads`; scores are scaled by 1/sqrt(d/heads) and soft-maxed per
    /// query row. Causal mode restricts each query to its prefix (row-wise
    /// truncation rather than additive masking, so masked-out columns cost
    /// nothing).
    pub fn mha(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        causal: bool,
    ) -> Result<TensorId> {
        let shape = self.node(q).shape.clone();
        if shape.len() != 2
            || self.node(k).shape != shape
            || self.node(v).shape != shape
            || heads == 0
            || shape[1] % heads != 0
        {
            return Err(Error::Dimension {
                op: "mha",
                lhs: shape,
                rhs: self.node(k).shape.clone(),
            });
        }
        let (l, d) = (shape[0], shape[1]);
        let dh = d / heads;
        let scale = S::one() / super::scalar::sc::<S>((dh as f64).sqrt());
        let qd = &self.node(q).data;
        let kd = &self.node(k).data;
        let vd = &self.node(v).data;
        let mut attn = vec![S::zero(); heads * l * l];
        let mut out = vec![S::zero(); l * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..l {
                let bound = if causal { i + 1 } else { l };
                let q_row = &qd[i * d + off..i * d + off + dh];
                let a_row = &mut attn[h * l * l + i * l..h * l * l + i * l + bound];
                let mut max = S::neg_infinity();
                for (j, av) in a_row.iter_mut().enumerate() {
                    let k_row = &kd[j * d + off..j * d + off + dh];
                    let mut s = S::zero();
                    for (&qv, &kv) in q_row.iter().zip(k_row) {
                        s = s + qv * kv;
                    }
                    let s = s * scale;
                    *av = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut sum = S::zero();
                for av in a_row.iter_mut() {
                    let e = (*av - max).exp();
                    *av = e;
                    sum = sum + e;
                }
                let inv = S::one() / sum;
                let out_row = &mut out[i * d + off..i * d + off + dh];
                for (j, av) in a_row.iter_mut().enumerate() {
                    *av = *av * inv;
                    let a = *av;
                    let v_row = &vd[j * d + off..j * d + off + dh];
                    for (ov, &vv) in out_row.iter_mut().zip(v_row) {
                        *ov = *ov + a * vv;
                    }
                }
            }
        }
        let rg = self.node(q).requires_grad
            || self.node(k).requires_grad
            || self.node(v).requires_grad;
        Ok(self.push(
            vec![l, d],
            out,
            rg,
            Op::Mha {
                q,
                k,
                v,
                heads,
                causal,
                scale,
                attn,
            },
        ))
    }

    /// Non-overlapping window mean over rows; a trailing partial window is
    /// averaged over its actual length. [r×c] → [ceil(r/w)×c].
    pub fn mean_pool_rows(&mut self, x: TensorId, window: usize) -> Result<TensorId> {
        if window == 0 {
            return Err(Error::Config("mean_pool_rows window must be >= 1".into()));
        }
        let s = &self.node(x).shape;
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: "mean_pool_rows",
                lhs: s.clone(),
                rhs: vec![window],
            });
        }
        let (r, c) = (s[0], s[1]);
        let out_rows = r.div_ceil(window);
        let mut data = vec![S::zero(); out_rows * c];
        for o in 0..out_rows {
            let lo = o * window;
            let hi = ((o + 1) * window).min(r);
            let inv = S::one() / super::scalar::sc::<S>((hi - lo) as f64);
            for i in lo..hi {
                for j in 0..c {
                    data[o * c + j] = data[o * c + j] + self.node(x).data[i * c + j] * inv;
                }
            }
        }
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![out_rows, c], data, rg, Op::MeanPoolRows { x, window }))
    }

    /// Inverted dropout; `p == 0` is the identity and adds no node.
    pub fn dropout(&mut self, x: TensorId, p: f64, rng: &mut ChaCha8Rng) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout p={p} outside [0,1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = super::scalar::sc::<S>(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.node(x).data.len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data: Vec<S> = self
            .node(x)
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let rg = self.node(x).requires_grad;
        Ok(self.push(self.node(x).shape.clone(), data, rg, Op::Dropout { x, mask }))
    }

    /// Mean cross-entropy of logits [r×V] against integer targets (one per row).
    pub fn cross_entropy_mean(&mut self, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
        let s = &self.node(logits).shape;
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: s.clone(),
                rhs: vec![targets.len()],
            });
        }
        let (r, v) = (s[0], s[1]);
        for (i, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(Error::Config(format!(
                    "cross_entropy target {t} out of range at row {i}"
                )));
            }
        }
        let mut lsm = vec![S::zero(); r * v];
        log_softmax_rows_raw(&self.node(logits).data, r, v, &mut lsm);
        let inv_r = S::one() / super::scalar::sc::<S>(r as f64);
        let mut loss = S::zero();
        // dx = (softmax - onehot) / r
        let mut dx = vec![S::zero(); r * v];
        for (i, &t) in targets.iter().enumerate() {
            loss = loss - lsm[i * v + t];
            for j in 0..v {
                let p = lsm[i * v + j].exp();
                dx[i * v + j] = p * inv_r;
            }
            dx[i * v + t] = dx[i * v + t] - inv_r;
        }
        loss = loss * inv_r;
        let rg = self.node(logits).requires_grad;
        Ok(self.push(vec![1], vec![loss], rg, Op::ScalarFn { x: logits, dx }))
    }

    /// Scalar-valued custom op over one input with a precomputed gradient.
    /// Used by the CTC loss, whose forward/backward lattice lives elsewhere.
    pub fn scalar_fn(&mut self, x: TensorId, value: S, dx: Vec<S>) -> Result<TensorId> {
        if dx.len() != self.node(x).data.len() {
            return Err(Error::Dimension {
                op: "scalar_fn",
                lhs: self.node(x).shape.clone(),
                rhs: vec![dx.len()],
            });
        }
        let rg = self.node(x).requires_grad;
        Ok(self.push(vec![1], vec![value], rg, Op::ScalarFn { x, dx }))
    }

    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let mut s = S::zero();
        for &v in &self.node(x).data {
            s = s + v;
        }
        let rg = self.node(x).requires_grad;
        self.push(vec![1], vec![s], rg, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let n = self.node(x).data.len();
        let mut s = S::zero();
        for &v in &self.node(x).data {
            s = s + v;
        }
        s = s / super::scalar::sc::<S>(n as f64);
        let rg = self.node(x).requires_grad;
        self.push(vec![1], vec![s], rg, Op::MeanAll(x))
    }

    /// Reverse pass from a scalar node.
    ///
    /// Each call computes the full gradient of `loss` in a scratch table and
    /// then adds it into every node's persistent `grad` accumulator, so
    /// existing accumulators are added to, never reset, and repeated calls
    /// compose additively.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(
            self.node(loss).data.len(),
            1,
            "backward requires a scalar loss"
        );
        if !self.node(loss).requires_grad {
            return;
        }
        let mut scratch: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        scratch[loss.idx()] = Some(vec![S::one()]);
        for i in (0..=loss.idx()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = scratch[i].take() else { continue };
            {
                let g = &g;
                let nodes = &self.nodes[..];
                let sc_tab = &mut scratch;
                let node = &nodes[i];
                match &node.op {
                    Op::Leaf => {}
                    Op::Add(a, b) => {
                        acc(sc_tab, nodes, *a, g.iter().copied());
                        acc(sc_tab, nodes, *b, g.iter().copied());
                    }
                    Op::AddRow(a, row) => {
                        acc(sc_tab, nodes, *a, g.iter().copied());
                        let c = nodes[row.idx()].data.len();
                        let mut rg = vec![S::zero(); c];
                        for (i, &gv) in g.iter().enumerate() {
                            rg[i % c] += gv;
                        }
                        acc(sc_tab, nodes, *row, rg.into_iter());
                    }
                    Op::Scale(a, f) => {
                        let f = *f;
                        acc(sc_tab, nodes, *a, g.iter().map(|&gv| gv * f));
                    }
                    Op::Matmul(a, b) => {
                        let (m, k) = (nodes[a.idx()].shape[0], nodes[a.idx()].shape[1]);
                        let n = nodes[b.idx()].shape[1];
                        if nodes[a.idx()].requires_grad {
                            let mut da = vec![S::zero(); m * k];
                            matmul_nt_acc(g, &nodes[b.idx()].data, m, n, k, &mut da);
                            acc(sc_tab, nodes, *a, da.into_iter());
                        }
                        if nodes[b.idx()].requires_grad {
                            let mut db = vec![S::zero(); k * n];
                            matmul_tn_acc(&nodes[a.idx()].data, g, m, k, n, &mut db);
                            acc(sc_tab, nodes, *b, db.into_iter());
                        }
                    }
                    Op::MatmulNt(a, b) => {
                        let (m, k) = (nodes[a.idx()].shape[0], nodes[a.idx()].shape[1]);
                        let n = nodes[b.idx()].shape[0];
                        if nodes[a.idx()].requires_grad {
                            let mut da = vec![S::zero(); m * k];
                            matmul_acc(g, &nodes[b.idx()].data, m, n, k, &mut da);
                            acc(sc_tab, nodes, *a, da.into_iter());
                        }
                        if nodes[b.idx()].requires_grad {
                            let mut db = vec![S::zero(); n * k];
                            matmul_tn_acc(g, &nodes[a.idx()].data, m, n, k, &mut db);
                            acc(sc_tab, nodes, *b, db.into_iter());
                        }
                    }
                    Op::SoftmaxRows(x) => {
                        let (r, c) = rows_cols(&node.shape);
                        let y = &node.data;
                        let mut dx = vec![S::zero(); r * c];
                        for i in 0..r {
                            let mut dot = S::zero();
                            for j in 0..c {
                                dot = dot + g[i * c + j] * y[i * c + j];
                            }
                            for j in 0..c {
                                dx[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                            }
                        }
                        acc(sc_tab, nodes, *x, dx.into_iter());
                    }
                    Op::LayerNorm {
                        x,
                        gamma,
                        beta,
                        normed,
                        rstd,
                    } => {
                        let (r, c) = rows_cols(&node.shape);
                        let cn = super::scalar::sc::<S>(c as f64);
                        let gam = &nodes[gamma.idx()].data;
                        if nodes[gamma.idx()].requires_grad {
                            let mut dg = vec![S::zero(); c];
                            for i in 0..r {
                                for j in 0..c {
                                    dg[j] += g[i * c + j] * normed[i * c + j];
                                }
                            }
                            acc(sc_tab, nodes, *gamma, dg.into_iter());
                        }
                        if nodes[beta.idx()].requires_grad {
                            let mut db = vec![S::zero(); c];
                            for i in 0..r {
                                for j in 0..c {
                                    db[j] += g[i * c + j];
                                }
                            }
                            acc(sc_tab, nodes, *beta, db.into_iter());
                        }
                        if nodes[x.idx()].requires_grad {
                            let mut dx = vec![S::zero(); r * c];
                            for i in 0..r {
                                let mut mean_gg = S::zero();
                                let mut mean_ggn = S::zero();
                                for j in 0..c {
                                    let gg = g[i * c + j] * gam[j];
                                    mean_gg = mean_gg + gg;
                                    mean_ggn = mean_ggn + gg * normed[i * c + j];
                                }
                                mean_gg = mean_gg / cn;
                                mean_ggn = mean_ggn / cn;
                                for j in 0..c {
                                    let gg = g[i * c + j] * gam[j];
                                    dx[i * c + j] =
                                        rstd[i] * (gg - mean_gg - normed[i * c + j] * mean_ggn);
                                }
                            }
                            acc(sc_tab, nodes, *x, dx.into_iter());
                        }
                    }
                    Op::Gelu(x) => {
                        let gc = GeluConsts::new();
                        let xd = &nodes[x.idx()].data;
                        let dx: Vec<S> = g
                            .iter()
                            .zip(xd)
                            .map(|(&gv, &xv)| gv * gc.deriv(xv))
                            .collect();
                        acc(sc_tab, nodes, *x, dx.into_iter());
                    }
                    Op::Embedding { table, ids } => {
                        let d = nodes[table.idx()].shape[1];
                        if let Some(tg) = slot(sc_tab, nodes, *table) {
                            for (i, &id) in ids.iter().enumerate() {
                                for j in 0..d {
                                    tg[id * d + j] += g[i * d + j];
                                }
                            }
                        }
                    }
                    Op::ConcatRows(a, b) => {
                        let na = nodes[a.idx()].data.len();
                        acc(sc_tab, nodes, *a, g[..na].iter().copied());
                        acc(sc_tab, nodes, *b, g[na..].iter().copied());
                    }
                    Op::SliceRows { x, start } => {
                        let c = node.shape[1];
                        if let Some(xg) = slot(sc_tab, nodes, *x) {
                            for (i, &gv) in g.iter().enumerate() {
                                xg[start * c + i] += gv;
                            }
                        }
                    }
                    Op::SliceCols { x, start } => {
                        let w = node.shape[1];
                        let r = node.shape[0];
                        let xc = nodes[x.idx()].shape[1];
                        if let Some(xg) = slot(sc_tab, nodes, *x) {
                            for i in 0..r {
                                for j in 0..w {
                                    xg[i * xc + start + j] += g[i * w + j];
                                }
                            }
                        }
                    }
                    Op::ConcatCols(parts) => {
                        let r = node.shape[0];
                        let total = node.shape[1];
                        let mut offset = 0;
                        for &p in parts.iter() {
                            let c = nodes[p.idx()].shape[1];
                            if let Some(pg) = slot(sc_tab, nodes, p) {
                                for i in 0..r {
                                    for j in 0..c {
                                        pg[i * c + j] += g[i * total + offset + j];
                                    }
                                }
                            }
                            offset += c;
                        }
                    }
                    Op::Mha {
                        q,
                        k,
                        v,
                        heads,
                        causal,
                        scale,
                        attn,
                    } => {
                        let (l, d) = (node.shape[0], node.shape[1]);
                        let dh = d / heads;
                        let qd = &nodes[q.idx()].data;
                        let kd = &nodes[k.idx()].data;
                        let vd = &nodes[v.idx()].data;
                        let mut dq = vec![S::zero(); l * d];
                        let mut dk = vec![S::zero(); l * d];
                        let mut dv = vec![S::zero(); l * d];
                        let mut dattn = vec![S::zero(); l];
                        for h in 0..*heads {
                            let off = h * dh;
                            for i in 0..l {
                                let bound = if *causal { i + 1 } else { l };
                                let g_row = &g[i * d + off..i * d + off + dh];
                                let a_row = &attn[h * l * l + i * l..h * l * l + i * l + bound];
                                // dattn = G_i . v_j ; dot = sum_j dattn_j a_j
                                let mut dot = S::zero();
                                for (j, da) in dattn[..bound].iter_mut().enumerate() {
                                    let v_row = &vd[j * d + off..j * d + off + dh];
                                    let mut s = S::zero();
                                    for (&gv, &vv) in g_row.iter().zip(v_row) {
                                        s = s + gv * vv;
                                    }
                                    *da = s;
                                    dot = dot + s * a_row[j];
                                }
                                let q_row = &qd[i * d + off..i * d + off + dh];
                                let dq_row = &mut dq[i * d + off..i * d + off + dh];
                                for j in 0..bound {
                                    let a = a_row[j];
                                    // softmax backward, then the shared scale
                                    let ds = a * (dattn[j] - dot) * *scale;
                                    let k_row = &kd[j * d + off..j * d + off + dh];
                                    for (dqv, &kv) in dq_row.iter_mut().zip(k_row) {
                                        *dqv = *dqv + ds * kv;
                                    }
                                    let dk_row = &mut dk[j * d + off..j * d + off + dh];
                                    for (dkv, &qv) in dk_row.iter_mut().zip(q_row) {
                                        *dkv = *dkv + ds * qv;
                                    }
                                    let dv_row = &mut dv[j * d + off..j * d + off + dh];
                                    for (dvv, &gv) in dv_row.iter_mut().zip(g_row) {
                                        *dvv = *dvv + a * gv;
                                    }
                                }
                            }
                        }
                        acc(sc_tab, nodes, *q, dq.into_iter());
                        acc(sc_tab, nodes, *k, dk.into_iter());
                        acc(sc_tab, nodes, *v, dv.into_iter());
                    }
                    Op::MeanPoolRows { x, window } => {
                        let c = node.shape[1];
                        let r_in = nodes[x.idx()].shape[0];
                        let out_rows = node.shape[0];
                        if let Some(xg) = slot(sc_tab, nodes, *x) {
                            for o in 0..out_rows {
                                let lo = o * window;
                                let hi = ((o + 1) * window).min(r_in);
                                let inv =
                                    S::one() / super::scalar::sc::<S>((hi - lo) as f64);
                                for i in lo..hi {
                                    for j in 0..c {
                                        xg[i * c + j] += g[o * c + j] * inv;
                                    }
                                }
                            }
                        }
                    }
                    Op::Dropout { x, mask } => {
                        let dx: Vec<S> = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                        acc(sc_tab, nodes, *x, dx.into_iter());
                    }
                    Op::ScalarFn { x, dx } => {
                        let gs = g[0];
                        acc(sc_tab, nodes, *x, dx.iter().map(|&d| d * gs));
                    }
                    Op::SumAll(x) => {
                        let gs = g[0];
                        let n = nodes[x.idx()].data.len();
                        acc(sc_tab, nodes, *x, std::iter::repeat(gs).take(n));
                    }
                    Op::MeanAll(x) => {
                        let n = nodes[x.idx()].data.len();
                        let gs = g[0] / super::scalar::sc::<S>(n as f64);
                        acc(sc_tab, nodes, *x, std::iter::repeat(gs).take(n));
                    }
                }
            }
            // Fold this call's gradient into the persistent accumulator.
            let n = &mut self.nodes[i];
            let len = n.data.len();
            let pg = n.grad.get_or_insert_with(|| vec![S::zero(); len]);
            for (p, v) in pg.iter_mut().zip(g) {
                *p += v;
            }
        }
    }
}

/// Lazily initialized scratch-gradient slot for a node that requires grad.
fn slot<'a, S: Scalar>(
    scratch: &'a mut [Option<Vec<S>>],
    nodes: &[Tensor<S>],
    id: TensorId,
) -> Option<&'a mut [S]> {
    if !nodes[id.idx()].requires_grad {
        return None;
    }
    Some(
        scratch[id.idx()]
            .get_or_insert_with(|| vec![S::zero(); nodes[id.idx()].data.len()])
            .as_mut_slice(),
    )
}

fn acc<S: Scalar>(
    scratch: &mut [Option<Vec<S>>],
    nodes: &[Tensor<S>],
    id: TensorId,
    contrib: impl Iterator<Item = S>,
) {
    if let Some(gslot) = slot(scratch, nodes, id) {
        for (s, v) in gslot.iter_mut().zip(contrib) {
            *s += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(&[2, 2], vec![1.0, 0.0, 0.0, 1.0], false).unwrap();
        let b = t.leaf(&[2, 2], vec![3.0, 4.0, 5.0, 6.0], false).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.data(c), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_scalar_case() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(&[1, 1], vec![2.0], false).unwrap();
        let b = t.leaf(&[1, 1], vec![3.0], false).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.data(c), &[6.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(&[2, 3], vec![0.0; 6], false).unwrap();
        let b = t.leaf(&[2, 2], vec![0.0; 4], false).unwrap();
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_bt() {
        // d sum(A·B) / dA = ones(m×n) · Bᵀ
        let mut t = Tape::<f64>::new();
        let mut rng = crate::numerics::rng::labeled(1, "matmul_grad");
        let a_data: Vec<f64> = (0..12).map(|_| crate::numerics::rng::normal_f64(&mut rng)).collect();
        let b_data: Vec<f64> = (0..8).map(|_| crate::numerics::rng::normal_f64(&mut rng)).collect();
        let a = t.leaf(&[3, 4], a_data, true).unwrap();
        let b = t.leaf(&[4, 2], b_data.clone(), false).unwrap();
        let c = t.matmul(a, b).unwrap();
        let loss = t.sum_all(c);
        t.backward(loss);
        let got = t.grad(a).unwrap();
        let mut want = vec![0.0; 12];
        matmul_nt_acc(&vec![1.0; 6], &b_data, 3, 2, 4, &mut want);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_basics() {
        let mut t = Tape::<f64>::new();
        let x = t
            .leaf(&[3, 2], vec![0.0, 0.0, 1000.0, 1000.0, 0.0, 3f64.ln()], false)
            .unwrap();
        let y = t.softmax_rows(x);
        let d = t.data(y);
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
        assert!((d[2] - 0.5).abs() < 1e-15 && (d[3] - 0.5).abs() < 1e-15);
        assert!((d[4] - 0.25).abs() < 1e-12 && (d[5] - 0.75).abs() < 1e-12);
        for r in 0..3 {
            let sum: f64 = d[r * 2..r * 2 + 2].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_propagates_nan() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(&[1, 2], vec![f64::NAN, 0.0], false).unwrap();
        let y = t.softmax_rows(x);
        assert!(t.data(y).iter().any(|v| v.is_nan()));
    }

    #[test]
    fn grad_accumulates_across_reuse_and_reruns() {
        // f = sum(x) + sum(x) => grad 2; second backward adds another 2.
        let mut t = Tape::<f64>::new();
        let x = t.leaf(&[2], vec![1.0, 2.0], true).unwrap();
        let s1 = t.sum_all(x);
        let s2 = t.sum_all(x);
        let loss = t.add(s1, s2).unwrap();
        t.backward(loss);
        assert_eq!(t.grad(x).unwrap(), &[2.0, 2.0]);
        t.backward(loss);
        assert_eq!(t.grad(x).unwrap(), &[4.0, 4.0]);
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let mut t = Tape::<f64>::new();
        // Extremely peaked logits on the target: loss ~ 0.
        let x = t.leaf(&[2, 3], vec![50.0, 0.0, 0.0, 0.0, 50.0, 0.0], false).unwrap();
        let l = t.cross_entropy_mean(x, &[0, 1]).unwrap();
        assert!(t.value(l).abs() < 1e-15);
    }

    #[test]
    fn dropout_default_off_is_identity() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(&[4], vec![1.0, 2.0, 3.0, 4.0], true).unwrap();
        let mut rng = crate::numerics::rng::labeled(0, "drop");
        let y = t.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    /// Reference composition of mha from the primitive ops.
    fn composed_attention(
        t: &mut Tape<f64>,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        causal: bool,
    ) -> TensorId {
        let (l, d) = (t.shape(q)[0], t.shape(q)[1]);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mask = if causal {
            let mut data = vec![0.0; l * l];
            for i in 0..l {
                for j in i + 1..l {
                    data[i * l + j] = crate::ctc::LOG_ZERO;
                }
            }
            Some(t.constant(&[l, l], data).unwrap())
        } else {
            None
        };
        let mut parts = Vec::new();
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = t.slice_cols(q, lo, hi).unwrap();
            let kh = t.slice_cols(k, lo, hi).unwrap();
            let vh = t.slice_cols(v, lo, hi).unwrap();
            let scores = t.matmul_nt(qh, kh).unwrap();
            let mut scores = t.scale(scores, scale);
            if let Some(m) = mask {
                scores = t.add(scores, m).unwrap();
            }
            let attn = t.softmax_rows(scores);
            parts.push(t.matmul(attn, vh).unwrap());
        }
        t.concat_cols(&parts).unwrap()
    }

    #[test]
    fn mha_matches_composed_ops_forward_and_backward() {
        let mut rng = crate::numerics::rng::labeled(31, "mha_eq");
        for &(l, d, heads, causal) in
            &[(5usize, 8usize, 2usize, false), (7, 8, 4, true), (4, 6, 3, false)]
        {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..l * d)
                    .map(|_| crate::numerics::rng::normal_f64(rng))
                    .collect()
            };
            let (qd, kd, vd) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));

            let mut t1 = Tape::<f64>::new();
            let q1 = t1.leaf(&[l, d], qd.clone(), true).unwrap();
            let k1 = t1.leaf(&[l, d], kd.clone(), true).unwrap();
            let v1 = t1.leaf(&[l, d], vd.clone(), true).unwrap();
            let fused = t1.mha(q1, k1, v1, heads, causal).unwrap();
            let loss1 = {
                // weight the output so gradients are not uniform
                let w: Vec<f64> = (0..l * d).map(|i| (i as f64 * 0.37).sin()).collect();
                let wt = t1.constant(&[l, d], w).unwrap();
                // elementwise weighting via matmul trick is overkill; use sum of fused+wt
                let s = t1.add(fused, wt).unwrap();
                t1.sum_all(s)
            };
            t1.backward(loss1);

            let mut t2 = Tape::<f64>::new();
            let q2 = t2.leaf(&[l, d], qd.clone(), true).unwrap();
            let k2 = t2.leaf(&[l, d], kd.clone(), true).unwrap();
            let v2 = t2.leaf(&[l, d], vd.clone(), true).unwrap();
            let composed = composed_attention(&mut t2, q2, k2, v2, heads, causal);
            let loss2 = {
                let w: Vec<f64> = (0..l * d).map(|i| (i as f64 * 0.37).sin()).collect();
                let wt = t2.constant(&[l, d], w).unwrap();
                let s = t2.add(composed, wt).unwrap();
                t2.sum_all(s)
            };
            t2.backward(loss2);

            for (a, b) in t1.data(fused).iter().zip(t2.data(composed)) {
                assert!((a - b).abs() < 1e-12, "forward mismatch {a} vs {b}");
            }
            for (x1, x2) in [(q1, q2), (k1, k2), (v1, v2)] {
                for (a, b) in t1.grad(x1).unwrap().iter().zip(t2.grad(x2).unwrap()) {
                    assert!((a - b).abs() < 1e-10, "grad mismatch {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn mha_gradient_matches_finite_differences() {
        let mut rng = crate::numerics::rng::labeled(33, "mha_fd");
        let (l, d, heads) = (4usize, 6usize, 2usize);
        let base: Vec<f64> = (0..3 * l * d)
            .map(|_| crate::numerics::rng::normal_f64(&mut rng) * 0.5)
            .collect();
        for causal in [false, true] {
            let f = |x: &[f64]| -> f64 {
                let mut t = Tape::<f64>::new();
                let q = t.leaf(&[l, d], x[..l * d].to_vec(), false).unwrap();
                let k = t.leaf(&[l, d], x[l * d..2 * l * d].to_vec(), false).unwrap();
                let v = t.leaf(&[l, d], x[2 * l * d..].to_vec(), false).unwrap();
                let o = t.mha(q, k, v, heads, causal).unwrap();
                // square to mix signs into the loss
                let w: Vec<f64> = (0..l * d).map(|i| ((i % 5) as f64) - 2.0).collect();
                let wt = t.constant(&[l, d], w).unwrap();
                let s = t.add(o, wt).unwrap();
                let sm = t.softmax_rows(s);
                t.data(sm).iter().enumerate().map(|(i, &y)| y * (i as f64 % 3.0)).sum()
            };
            // analytic via tape with an equivalent scalarization
            let grad_analytic = {
                let mut t = Tape::<f64>::new();
                let q = t.leaf(&[l, d], base[..l * d].to_vec(), true).unwrap();
                let k = t.leaf(&[l, d], base[l * d..2 * l * d].to_vec(), true).unwrap();
                let v = t.leaf(&[l, d], base[2 * l * d..].to_vec(), true).unwrap();
                let o = t.mha(q, k, v, heads, causal).unwrap();
                let w: Vec<f64> = (0..l * d).map(|i| ((i % 5) as f64) - 2.0).collect();
                let wt = t.constant(&[l, d], w).unwrap();
                let s = t.add(o, wt).unwrap();
                let sm = t.softmax_rows(s);
                let coef: Vec<f64> = (0..l * d).map(|i| i as f64 % 3.0).collect();
                let ct = t.constant(&[l, d], coef).unwrap();
                // sum(sm * coef) via add of scaled? build with matmul-free ops:
                // loss = sum_all of elementwise product is not a primitive, so
                // use: for test purposes, scalar_fn with dx = coef.
                let val: f64 = t
                    .data(sm)
                    .iter()
                    .zip(t.data(ct))
                    .map(|(&a, &b)| a * b)
                    .sum();
                let coef2: Vec<f64> = (0..l * d).map(|i| i as f64 % 3.0).collect();
                let loss = t.scalar_fn(sm, val, coef2).unwrap();
                t.backward(loss);
                let mut out = Vec::new();
                out.extend_from_slice(t.grad(q).unwrap());
                out.extend_from_slice(t.grad(k).unwrap());
                out.extend_from_slice(t.grad(v).unwrap());
                out
            };
            let numeric = crate::numerics::gradcheck::finite_diff(f, &base, 1e-6);
            let err = crate::numerics::gradcheck::max_rel_err(&grad_analytic, &numeric);
            assert!(err < 1e-4, "causal={causal}: rel err {err}");
        }
    }

    #[test]
    fn mean_pool_partial_window() {
        let mut t = Tape::<f64>::new();
        let x = t
            .leaf(&[5, 1], vec![1.0, 2.0, 3.0, 4.0, 10.0], false)
            .unwrap();
        let y = t.mean_pool_rows(x, 2).unwrap();
        assert_eq!(t.shape(y), &[3, 1]);
        assert_eq!(t.data(y), &[1.5, 3.5, 10.0]);
    }
}
