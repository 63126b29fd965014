//! Pre-norm transformer stacks, on the tape and as a cached single-row step.

use rand::Rng;

use super::params::{Bound, ParamStore};
use crate::error::Result;
use crate::numerics::kernels::{self, gemm, gemm_nt};
use crate::numerics::{Segments, Tape, Var};

#[derive(Clone, Debug)]
pub struct BlockParams {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
pub struct StackParams {
    blocks: Vec<BlockParams>,
    ln_g: usize,
    ln_b: usize,
}

fn xavier(fan_in: usize, fan_out: usize) -> f32 {
    (2.0 / (fan_in + fan_out) as f32).sqrt()
}

fn add_linear<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
) -> (usize, usize) {
    let w = store.normal(&format!("{name}.weight"), &[d_in, d_out], xavier(d_in, d_out), rng);
    let b = store.filled(&format!("{name}.bias"), &[d_out], 0.0);
    (w, b)
}

pub fn add_stack<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    layers: usize,
    d: usize,
    d_ff: usize,
    rng: &mut R,
) -> StackParams {
    let blocks = (0..layers)
        .map(|l| {
            let p = format!("{prefix}.{l}");
            let ln1_g = store.filled(&format!("{p}.ln1.gamma"), &[d], 1.0);
            let ln1_b = store.filled(&format!("{p}.ln1.beta"), &[d], 0.0);
            let (wq, bq) = add_linear(store, &format!("{p}.self_attn.q"), d, d, rng);
            let (wk, bk) = add_linear(store, &format!("{p}.self_attn.k"), d, d, rng);
            let (wv, bv) = add_linear(store, &format!("{p}.self_attn.v"), d, d, rng);
            let (wo, bo) = add_linear(store, &format!("{p}.self_attn.out"), d, d, rng);
            let ln2_g = store.filled(&format!("{p}.ln2.gamma"), &[d], 1.0);
            let ln2_b = store.filled(&format!("{p}.ln2.beta"), &[d], 0.0);
            let (w1, b1) = add_linear(store, &format!("{p}.ffn.in"), d, d_ff, rng);
            let (w2, b2) = add_linear(store, &format!("{p}.ffn.out"), d_ff, d, rng);
            BlockParams {
                ln1_g,
                ln1_b,
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln2_g,
                ln2_b,
                w1,
                b1,
                w2,
                b2,
            }
        })
        .collect();
    let ln_g = store.filled(&format!("{prefix}.final_ln.gamma"), &[d], 1.0);
    let ln_b = store.filled(&format!("{prefix}.final_ln.beta"), &[d], 0.0);
    StackParams { blocks, ln_g, ln_b }
}

pub fn linear(tape: &mut Tape, bound: &Bound, x: Var, w: usize, b: usize) -> Result<Var> {
    let y = tape.matmul(x, bound.var(w))?;
    tape.add_bias(y, bound.var(b))
}

pub struct StackRun<'a> {
    pub segments: &'a Segments,
    pub heads: usize,
    pub causal: bool,
    pub dropout: f32,
}

/// Runs every block and the final layer norm over packed rows `x`.
pub fn stack_forward(
    tape: &mut Tape,
    bound: &Bound,
    stack: &StackParams,
    mut x: Var,
    run: &StackRun<'_>,
) -> Result<Var> {
    for blk in &stack.blocks {
        let h = tape.layer_norm(x, bound.var(blk.ln1_g), bound.var(blk.ln1_b))?;
        let q = linear(tape, bound, h, blk.wq, blk.bq)?;
        let k = linear(tape, bound, h, blk.wk, blk.bk)?;
        let v = linear(tape, bound, h, blk.wv, blk.bv)?;
        let a = tape.attention(q, k, v, run.segments, run.heads, run.causal)?;
        let a = linear(tape, bound, a, blk.wo, blk.bo)?;
        let a = tape.dropout(a, run.dropout);
        x = tape.add(x, a)?;

        let h = tape.layer_norm(x, bound.var(blk.ln2_g), bound.var(blk.ln2_b))?;
        let f = linear(tape, bound, h, blk.w1, blk.b1)?;
        let f = tape.gelu(f);
        let f = linear(tape, bound, f, blk.w2, blk.b2)?;
        let f = tape.dropout(f, run.dropout);
        x = tape.add(x, f)?;
    }
    tape.layer_norm(x, bound.var(stack.ln_g), bound.var(stack.ln_b))
}

/// Keys and values of every layer for the rows fed so far.
#[derive(Clone, Debug, Default)]
pub struct StackCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl StackCache {
    pub fn new(layers: usize) -> Self {
        StackCache {
            keys: vec![Vec::new(); layers],
            values: vec![Vec::new(); layers],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn row_linear(store: &ParamStore, x: &[f32], w: usize, b: usize) -> Vec<f32> {
    let wt = store.get(w);
    let (d_in, d_out) = (wt.rows(), wt.cols());
    let mut out = store.get(b).data().to_vec();
    gemm(1, d_in, d_out, x, wt.data(), &mut out, 1.0);
    out
}

fn row_layer_norm(store: &ParamStore, x: &[f32], g: usize, b: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    kernels::layer_norm_rows(x, x.len(), &mut out);
    for ((o, gv), bv) in out.iter_mut().zip(store.get(g).data()).zip(store.get(b).data()) {
        *o = *o * gv + bv;
    }
    out
}

/// Feeds one more row through a causal stack, extending `cache`; returns the
/// final-normed hidden state of that row.
pub fn stack_step(
    store: &ParamStore,
    stack: &StackParams,
    mut x: Vec<f32>,
    heads: usize,
    cache: &mut StackCache,
) -> Vec<f32> {
    let d = x.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let t = cache.len + 1;
    for (l, blk) in stack.blocks.iter().enumerate() {
        let h = row_layer_norm(store, &x, blk.ln1_g, blk.ln1_b);
        let q = row_linear(store, &h, blk.wq, blk.bq);
        cache.keys[l].extend(row_linear(store, &h, blk.wk, blk.bk));
        cache.values[l].extend(row_linear(store, &h, blk.wv, blk.bv));
        let (keys, values) = (&cache.keys[l], &cache.values[l]);
        let mut attn = vec![0.0f32; d];
        let mut probs = vec![0.0f32; t];
        for hd in 0..heads {
            let off = hd * dh;
            let qh = &q[off..off + dh];
            for (j, p) in probs.iter_mut().enumerate() {
                let kj = &keys[j * d + off..j * d + off + dh];
                *p = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
            }
            kernels::softmax_in_place(&mut probs);
            let out = &mut attn[off..off + dh];
            for (j, &p) in probs.iter().enumerate() {
                for (o, v) in out.iter_mut().zip(&values[j * d + off..j * d + off + dh]) {
                    *o += p * v;
                }
            }
        }
        let a = row_linear(store, &attn, blk.wo, blk.bo);
        for (xv, av) in x.iter_mut().zip(&a) {
            *xv += av;
        }
        let h = row_layer_norm(store, &x, blk.ln2_g, blk.ln2_b);
        let mut f = row_linear(store, &h, blk.w1, blk.b1);
        for v in f.iter_mut() {
            *v = kernels::gelu(*v);
        }
        let f = row_linear(store, &f, blk.w2, blk.b2);
        for (xv, fv) in x.iter_mut().zip(&f) {
            *xv += fv;
        }
    }
    cache.len = t;
    row_layer_norm(store, &x, stack.ln_g, stack.ln_b)
}

/// `(scale · h) · Eᵀ` for a single hidden row against an embedding table.
pub fn row_logits(table: &[f32], vocab: usize, h: &[f32], scale: f32) -> Vec<f32> {
    let d = h.len();
    let scaled: Vec<f32> = h.iter().map(|v| v * scale).collect();
    let mut out = vec![0.0f32; vocab];
    gemm_nt(1, d, vocab, &scaled, table, &mut out, 0.0);
    out
}
