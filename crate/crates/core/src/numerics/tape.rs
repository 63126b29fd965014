//! Reverse-mode automatic differentiation over a linear operation record.
//!
//! Every operation appends a node whose parents already exist, so the node
//! order is a topological order. `backward` walks it once in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, gemm, gemm_nt, gemm_tn};
use super::tensor::{Segments, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f32),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Segments),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Gelu(Var),
    Dropout(Var, Vec<f32>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        segments: Segments,
        heads: usize,
        probs: Vec<f32>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        ignore: usize,
        probs: Vec<f32>,
        count: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Training-mode tape whose dropout masks derive from `seed`.
    pub fn training(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input treated as a constant by `backward`.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Copies `v` into a fresh constant leaf; no gradient flows back through it.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] · [{k2}, {n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), self.value(b).data(), &mut out, 0.0);
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_transpose_b(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul_transpose_b", a)?;
        let (n, k2) = self.dims2("matmul_transpose_b", b)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul_transpose_b",
                format!("[{m}, {k}] · [{n}, {k2}]ᵀ"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(m, k, n, self.value(a).data(), self.value(b).data(), &mut out, 0.0);
        let ng = self.needs(&[a, b]);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMulTransB(a, b),
            ng,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Add(a, b), ng))
    }

    /// Adds a length-`d` vector to every row of an `[n × d]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.dims2("add_bias", x)?;
        if self.value(bias).numel() != d {
            return Err(Error::shape(
                "add_bias",
                format!("[{n}, {d}] + {:?}", self.value(bias).shape()),
            ));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let ng = self.needs(&[x, bias]);
        Ok(self.push(Tensor::from_parts(vec![n, d], data), Op::AddBias(x, bias), ng))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * s).collect();
        let shape = t.shape().to_vec();
        let ng = self.needs(&[x]);
        self.push(Tensor::from_parts(shape, data), Op::Scale(x, s), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2("transpose", x)?;
        let src = self.value(x).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::from_parts(vec![c, r], data), Op::Transpose(x), ng))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs"));
        }
        let (_, d) = self.dims2("concat_rows", parts[0])?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims2("concat_rows", p)?;
            if c != d {
                return Err(Error::shape("concat_rows", format!("width {c} vs {d}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let ng = self.needs(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, d], data),
            Op::ConcatRows(parts.to_vec()),
            ng,
        ))
    }

    /// Row gather; with an embedding table this is the embedding lookup.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (n, d) = self.dims2("gather_rows", table)?;
        if indices.is_empty() {
            return Err(Error::shape("gather_rows", "empty index list"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} out of range for [{n}, {d}]"),
            ));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let ng = self.needs(&[table]);
        Ok(self.push(
            Tensor::from_parts(vec![indices.len(), d], data),
            Op::GatherRows(table, indices.to_vec()),
            ng,
        ))
    }

    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    /// Mean of the rows in each segment: `[N × d] → [S × d]`.
    pub fn segment_mean(&mut self, x: Var, segments: &Segments) -> Result<Var> {
        let (n, d) = self.dims2("segment_mean", x)?;
        if segments.total() != n || segments.iter().any(|r| r.is_empty()) {
            return Err(Error::shape("segment_mean", "segments do not tile the rows"));
        }
        let src = self.value(x).data();
        let mut data = vec![0.0; segments.len() * d];
        for (s, r) in segments.iter().enumerate() {
            let inv = 1.0 / r.len() as f32;
            let out = &mut data[s * d..(s + 1) * d];
            for row in r {
                for (o, v) in out.iter_mut().zip(&src[row * d..(row + 1) * d]) {
                    *o += v * inv;
                }
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![segments.len(), d], data),
            Op::SegmentMean(x, segments.clone()),
            ng,
        ))
    }

    /// Row-wise layer normalization followed by the `gamma`/`beta` affine.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (n, d) = self.dims2("layer_norm", x)?;
        if self.value(gamma).numel() != d || self.value(beta).numel() != d {
            return Err(Error::shape("layer_norm", format!("affine width != {d}")));
        }
        let mut xhat = vec![0.0; n * d];
        let rstd = kernels::layer_norm_rows(self.value(x).data(), d, &mut xhat);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(d) {
            for ((o, gv), bv) in row.iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        let ng = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::from_parts(vec![n, d], out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| kernels::gelu(v)).collect();
        let shape = t.shape().to_vec();
        let ng = self.needs(&[x]);
        self.push(Tensor::from_parts(shape, data), Op::Gelu(x), ng)
    }

    /// Inverted dropout; the identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f32) -> Var {
        if !self.training || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.value(x).numel();
        let mask: Vec<f32> = (0..n)
            .map(|_| if self.rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = t.shape().to_vec();
        let ng = self.needs(&[x]);
        self.push(Tensor::from_parts(shape, data), Op::Dropout(x, mask), ng)
    }

    /// Multi-head scaled dot-product attention within each segment.
    ///
    /// `q`, `k`, `v` are packed `[N × d]` projections; rows only attend to
    /// rows of their own segment, and with `causal` only to earlier rows.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &Segments,
        heads: usize,
        causal: bool,
    ) -> Result<Var> {
        let (n, d) = self.dims2("attention", q)?;
        for other in [k, v] {
            if self.value(other).shape() != [n, d] {
                return Err(Error::shape(
                    "attention",
                    format!("q {:?} vs {:?}", [n, d], self.value(other).shape()),
                ));
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::shape("attention", format!("{d} not divisible by {heads} heads")));
        }
        if segments.total() != n {
            return Err(Error::shape("attention", "segments do not tile the rows"));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let prob_len: usize = segments.iter().map(|r| heads * r.len() * r.len()).sum();
        let mut probs = vec![0.0f32; prob_len];
        let mut out = vec![0.0f32; n * d];
        let mut base = 0;
        for r in segments.iter() {
            let (s0, l) = (r.start, r.len());
            for h in 0..heads {
                let off = h * dh;
                for i in 0..l {
                    let prow = &mut probs[base + (h * l + i) * l..base + (h * l + i + 1) * l];
                    let qi = &qd[(s0 + i) * d + off..(s0 + i) * d + off + dh];
                    let visible = if causal { i + 1 } else { l };
                    for (j, p) in prow.iter_mut().enumerate().take(visible) {
                        let kj = &kd[(s0 + j) * d + off..(s0 + j) * d + off + dh];
                        *p = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    }
                    kernels::softmax_in_place(&mut prow[..visible]);
                    let orow = &mut out[(s0 + i) * d + off..(s0 + i) * d + off + dh];
                    for (j, &p) in prow.iter().enumerate().take(visible) {
                        let vj = &vd[(s0 + j) * d + off..(s0 + j) * d + off + dh];
                        for (o, x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
            base += heads * l * l;
        }
        let ng = self.needs(&[q, k, v]);
        Ok(self.push(
            Tensor::from_parts(vec![n, d], out),
            Op::Attention {
                q,
                k,
                v,
                segments: segments.clone(),
                heads,
                probs,
            },
            ng,
        ))
    }

    /// Mean over non-ignored rows of `-log softmax(logits)[row, target]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        ignore_index: usize,
    ) -> Result<Var> {
        let (n, vocab) = self.dims2("softmax_cross_entropy", logits)?;
        if targets.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{n} rows of logits, {} targets", targets.len()),
            ));
        }
        if let Some(&bad) = targets
            .iter()
            .find(|&&t| t != ignore_index && t >= vocab)
        {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("target {bad} outside vocabulary of {vocab}"),
            ));
        }
        let count = targets.iter().filter(|&&t| t != ignore_index).count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut total = 0.0f64;
        for (row, &t) in probs.chunks_exact_mut(vocab).zip(targets) {
            if t == ignore_index {
                continue;
            }
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let sum: f64 = row.iter().map(|&v| ((v - max) as f64).exp()).sum();
            total += sum.ln() - (row[t] - max) as f64;
            kernels::softmax_in_place(row);
        }
        let loss = (total / count as f64) as f32;
        let ng = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore: ignore_index,
                probs,
                count,
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar node; gradients accumulate at shared nodes.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f32>>], v: Var) -> Option<&'g mut [f32]> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![0.0; node.value.numel()])
                .as_mut_slice(),
        )
    }

    fn backprop_node(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(da) = self.slot(grads, *a) {
                    gemm_nt(m, n, k, g, tb.data(), da, 1.0);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm_tn(k, m, n, ta.data(), g, db, 1.0);
                }
            }
            Op::MatMulTransB(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if let Some(da) = self.slot(grads, *a) {
                    gemm(m, n, k, g, tb.data(), da, 1.0);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm_tn(n, m, k, g, ta.data(), db, 1.0);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(dv) = self.slot(grads, v) {
                        axpy(dv, g, 1.0);
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, g, 1.0);
                }
                let d = self.value(*bias).numel();
                if let Some(db) = self.slot(grads, *bias) {
                    for row in g.chunks_exact(d) {
                        axpy(db, row, 1.0);
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, g, *s);
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (self.value(*x).rows(), self.value(*x).cols());
                if let Some(dx) = self.slot(grads, *x) {
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(dp) = self.slot(grads, p) {
                        axpy(dp, &g[off..off + len], 1.0);
                    }
                    off += len;
                }
            }
            Op::GatherRows(table, indices) => {
                let d = self.value(*table).cols();
                if let Some(dt) = self.slot(grads, *table) {
                    for (r, &i) in indices.iter().enumerate() {
                        axpy(&mut dt[i * d..(i + 1) * d], &g[r * d..(r + 1) * d], 1.0);
                    }
                }
            }
            Op::SegmentMean(x, segments) => {
                let d = self.value(*x).cols();
                if let Some(dx) = self.slot(grads, *x) {
                    for (s, r) in segments.iter().enumerate() {
                        let inv = 1.0 / r.len() as f32;
                        let gs = &g[s * d..(s + 1) * d];
                        for row in r {
                            axpy(&mut dx[row * d..(row + 1) * d], gs, inv);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = self.value(*gamma).numel();
                let gm = self.value(*gamma).data();
                if let Some(dg) = self.slot(grads, *gamma) {
                    for (grow, xrow) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += grow[j] * xrow[j];
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for grow in g.chunks_exact(d) {
                        axpy(db, grow, 1.0);
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    let mut dxhat = vec![0.0f32; d];
                    for (r, ((grow, xrow), dxrow)) in g
                        .chunks_exact(d)
                        .zip(xhat.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        for j in 0..d {
                            dxhat[j] = grow[j] * gm[j];
                        }
                        let mean_d = dxhat.iter().sum::<f32>() / d as f32;
                        let mean_dx = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum::<f32>()
                            / d as f32;
                        for j in 0..d {
                            dxrow[j] += rstd[r] * (dxhat[j] - mean_d - xrow[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let xs = self.value(*x).data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((o, gv), xv) in dx.iter_mut().zip(g).zip(xs) {
                        *o += gv * kernels::gelu_grad(*xv);
                    }
                }
            }
            Op::Dropout(x, mask) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((o, gv), m) in dx.iter_mut().zip(g).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                segments,
                heads,
                probs,
            } => {
                let (qd, kd, vd) = (self.value(*q).data(), self.value(*k).data(), self.value(*v).data());
                let d = self.value(*q).cols();
                let dh = d / heads;
                let scale = 1.0 / (dh as f32).sqrt();
                let mut dq = vec![0.0f32; qd.len()];
                let mut dk = vec![0.0f32; kd.len()];
                let mut dv = vec![0.0f32; vd.len()];
                let mut base = 0;
                for r in segments.iter() {
                    let (s0, l) = (r.start, r.len());
                    let mut ds = vec![0.0f32; l];
                    for h in 0..*heads {
                        let off = h * dh;
                        for i in 0..l {
                            let prow = &probs[base + (h * l + i) * l..base + (h * l + i + 1) * l];
                            let gi = &g[(s0 + i) * d + off..(s0 + i) * d + off + dh];
                            let mut dot = 0.0f32;
                            for j in 0..l {
                                let p = prow[j];
                                if p == 0.0 {
                                    ds[j] = 0.0;
                                    continue;
                                }
                                let vrow = (s0 + j) * d + off;
                                let vj = &vd[vrow..vrow + dh];
                                let dp: f32 = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                                axpy(&mut dv[vrow..vrow + dh], gi, p);
                                ds[j] = dp;
                                dot += p * dp;
                            }
                            let qrow = (s0 + i) * d + off;
                            for j in 0..l {
                                let p = prow[j];
                                if p == 0.0 {
                                    continue;
                                }
                                let s = p * (ds[j] - dot) * scale;
                                let krow = (s0 + j) * d + off;
                                let (qi, kj) = (&qd[qrow..qrow + dh], &kd[krow..krow + dh]);
                                axpy(&mut dq[qrow..qrow + dh], kj, s);
                                axpy(&mut dk[krow..krow + dh], qi, s);
                            }
                        }
                    }
                    base += heads * l * l;
                }
                for (var, part) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if let Some(slot) = self.slot(grads, var) {
                        axpy(slot, &part, 1.0);
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                ignore,
                probs,
                count,
            } => {
                let vocab = self.value(*logits).cols();
                let upstream = g[0] / *count as f32;
                if let Some(dl) = self.slot(grads, *logits) {
                    for ((drow, prow), &t) in dl
                        .chunks_exact_mut(vocab)
                        .zip(probs.chunks_exact(vocab))
                        .zip(targets)
                    {
                        if t == *ignore {
                            continue;
                        }
                        axpy(drow, prow, upstream);
                        drow[t] -= upstream;
                    }
                }
            }
        }
    }
}

fn axpy(dst: &mut [f32], src: &[f32], alpha: f32) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// Gradients from one backward sweep, retained for differentiable leaves.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        t(shape, &(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f32>>())
    }

    /// Central differences with step 1e-3 over every input entry; the closure
    /// rebuilds the forward pass from scratch for each perturbation.
    fn check_grads(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.variable(x.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |xs: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let l = f(&mut tape, &vars);
            tape.value(l).item() as f64
        };
        let h = 1e-3f32;
        for (which, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[which]).expect("input gradient");
            for i in 0..input.numel() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[i] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h as f64);
                let err = (analytic[i] as f64 - numeric).abs() / numeric.abs().max(1.0);
                assert!(
                    err <= 1e-3,
                    "input {which} entry {i}: analytic {} numeric {numeric}",
                    analytic[i]
                );
            }
        }
    }

    /// Projects a tensor to a scalar with fixed pseudo-random weights so every
    /// output entry influences the loss differently.
    fn probe(tape: &mut Tape, x: Var) -> Var {
        let (r, c) = (tape.value(x).rows(), tape.value(x).cols());
        let w: Vec<f32> = (0..c).map(|j| ((j * 7 + 3) as f32 * 0.31).sin()).collect();
        let w = tape.constant(t(&[c, 1], &w));
        let y = tape.matmul(x, w).unwrap();
        let ones = tape.constant(t(&[1, r], &vec![1.0 / r as f32; r]));
        let s = tape.matmul(ones, y).unwrap();
        // square to make the probe nonlinear
        tape.matmul(s, s).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.constant(t(&[2, 2], &[0.5, -2.0, 3.5, 4.0]));
        let p = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(p).data(), &[0.5, -2.0, 3.5, 4.0]);
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1], &[1.0, 1.0]));
        let p = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(p).shape(), &[2, 1]);
        assert_eq!(tape.value(p).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] · [2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        check_grads(&[a, b], |tape, v| {
            let p = tape.matmul(v[0], v[1]).unwrap();
            probe(tape, p)
        });
    }

    #[test]
    fn matmul_transpose_b_and_transpose_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[5, 4], &mut rng);
        check_grads(&[a, b], |tape, v| {
            let p = tape.matmul_transpose_b(v[0], v[1]).unwrap();
            let pt = tape.transpose(p).unwrap();
            probe(tape, pt)
        });
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(&[3, 4], &mut rng);
        let y = random(&[3, 4], &mut rng);
        let bias = random(&[4], &mut rng);
        check_grads(&[x, y, bias], |tape, v| {
            let s = tape.add(v[0], v[1]).unwrap();
            let s = tape.add_bias(s, v[2]).unwrap();
            let s = tape.gelu(s);
            let s = tape.scale(s, 1.7);
            probe(tape, s)
        });
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = random(&[3, 6], &mut rng);
        let g = random(&[6], &mut rng);
        let b = random(&[6], &mut rng);
        check_grads(&[x, g, b], |tape, v| {
            let y = tape.layer_norm(v[0], v[1], v[2]).unwrap();
            probe(tape, y)
        });
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 4], &[2.5; 4]));
        let g = tape.constant(t(&[4], &[1.0; 4]));
        let b = tape.constant(t(&[4], &[0.0; 4]));
        let y = tape.layer_norm(x, g, b).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gather_concat_and_segment_mean_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let table = random(&[5, 3], &mut rng);
        let extra = random(&[2, 3], &mut rng);
        check_grads(&[table, extra], |tape, v| {
            // row 1 appears twice: gradients must scatter-add
            let rows = tape.embedding_lookup(v[0], &[1, 4, 1, 0]).unwrap();
            let all = tape.concat_rows(&[rows, v[1]]).unwrap();
            let pooled = tape
                .segment_mean(all, &Segments::from_lengths(&[2, 4]))
                .unwrap();
            probe(tape, pooled)
        });
    }

    #[test]
    fn attention_gradients_bidirectional_and_causal() {
        for causal in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(16);
            let q = random(&[5, 4], &mut rng);
            let k = random(&[5, 4], &mut rng);
            let v = random(&[5, 4], &mut rng);
            check_grads(&[q, k, v], |tape, x| {
                let segs = Segments::from_lengths(&[2, 3]);
                let o = tape.attention(x[0], x[1], x[2], &segs, 2, causal).unwrap();
                probe(tape, o)
            });
        }
    }

    #[test]
    fn causal_attention_ignores_future_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q = random(&[4, 4], &mut rng);
        let k = random(&[4, 4], &mut rng);
        let v = random(&[4, 4], &mut rng);
        let run = |k: &Tensor, v: &Tensor| {
            let mut tape = Tape::new();
            let (a, b, c) = (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
            let o = tape
                .attention(a, b, c, &Segments::from_lengths(&[4]), 2, true)
                .unwrap();
            tape.value(o).clone()
        };
        let base = run(&k, &v);
        let (mut k2, mut v2) = (k.clone(), v.clone());
        for j in 0..4 {
            k2.data_mut()[3 * 4 + j] += 5.0;
            v2.data_mut()[3 * 4 + j] -= 5.0;
        }
        let moved = run(&k2, &v2);
        assert_eq!(&base.data()[..12], &moved.data()[..12]);
        assert_ne!(&base.data()[12..], &moved.data()[12..]);
    }

    #[test]
    fn cross_entropy_hand_example() {
        let mut tape = Tape::new();
        let l = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        let loss = tape.softmax_cross_entropy(l, &[2, 1], 99).unwrap();
        // frozen from an independent float64 evaluation
        assert!((tape.value(loss).item() - 0.753_109_1).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_uniform_and_perfect() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::zeros(&[3, 100]));
        let loss = tape.softmax_cross_entropy(l, &[5, 17, 99], 1000).unwrap();
        assert!((tape.value(loss).item() - 100f32.ln()).abs() < 1e-5);

        let mut sharp = vec![0.0; 10];
        sharp[4] = 200.0;
        let l = tape.constant(t(&[1, 10], &sharp));
        let loss = tape.softmax_cross_entropy(l, &[4], 0).unwrap();
        assert!(tape.value(loss).item().abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_ignores_padding_and_rejects_empty() {
        let mut tape = Tape::new();
        let l = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 9.0, -4.0, 0.0]));
        let with_pad = tape.softmax_cross_entropy(l, &[2, 0], 0).unwrap();
        let l1 = tape.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let alone = tape.softmax_cross_entropy(l1, &[2], 0).unwrap();
        assert_eq!(tape.value(with_pad).item(), tape.value(alone).item());
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[0, 0], 0),
            Err(Error::EmptyLoss)
        ));
    }

    #[test]
    fn cross_entropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let logits = random(&[4, 6], &mut rng);
        check_grads(&[logits], |tape, v| {
            tape.softmax_cross_entropy(v[0], &[1, 0, 5, 3], 0).unwrap()
        });
    }

    #[test]
    fn dropout_zero_is_identity_and_masks_are_seeded() {
        let mut tape = Tape::training(3);
        let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(tape.dropout(x, 0.0), x);

        let run = |seed| {
            let mut tape = Tape::training(seed);
            let x = tape.constant(Tensor::zeros(&[64, 8]).clone());
            let ones: Vec<f32> = vec![1.0; 512];
            let x2 = tape.constant(t(&[64, 8], &ones));
            let _ = x;
            let y = tape.dropout(x2, 0.1);
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
        let kept = run(5).iter().filter(|&&v| v > 0.0).count();
        assert!(kept > 400 && kept < 512);
        assert!(run(5).iter().all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-6));
    }

    #[test]
    fn dropout_gradient_uses_mask() {
        let mut tape = Tape::training(9);
        let x = tape.variable(t(&[1, 50], &[1.0; 50]));
        let y = tape.dropout(x, 0.5);
        let ones = tape.constant(t(&[50, 1], &[1.0; 50]));
        let s = tape.matmul(y, ones).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), tape.value(y).data());
    }

    #[test]
    fn shared_nodes_accumulate() {
        // loss = x·x + x·x for scalar x = 3 → d/dx = 4x = 12
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1, 1], &[3.0]));
        let a = tape.matmul(x, x).unwrap();
        let b = tape.matmul(x, x).unwrap();
        let s = tape.add(a, b).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[12.0]);
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1, 1], &[2.0]));
        let y = tape.matmul(x, x).unwrap();
        let frozen = tape.stop_gradient(y);
        let z = tape.matmul(frozen, x).unwrap();
        let grads = tape.backward(z).unwrap();
        // only the direct path: d(c·x)/dx = c = 4
        assert_eq!(grads.get(x).unwrap(), &[4.0]);
        assert!(grads.get(frozen).is_none());
        assert!(!tape.requires_grad(frozen));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(x).is_err());
    }
}
