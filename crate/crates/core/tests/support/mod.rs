//! Straight-line reference forward pass used as an oracle by the integration tests.
//!
//! Written without the crate's tensor kernels: plain nested loops over the raw
//! weights, f64 arithmetic, and rounding to f32 wherever the engine stores a value.

#![allow(dead_code)]

use cma::Checkpoint;

pub struct Patches {
    /// `(layer, position, neuron, value)`, layer 0 = embeddings.
    pub neurons: Vec<(usize, usize, usize, f32)>,
    /// `(layer, head, position, row)`, layer 1-based.
    pub rows: Vec<(usize, usize, usize, Vec<f32>)>,
}

impl Patches {
    pub fn none() -> Self {
        Self { neurons: vec![], rows: vec![] }
    }
}

fn r(x: f64) -> f64 {
    x as f32 as f64
}

fn w(ck: &Checkpoint, name: &str) -> Vec<f64> {
    ck.tensor(name).data().iter().map(|&v| v as f64).collect()
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5f32 as f64).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| r((v - mean) * inv * g[i] + b[i]))
        .collect()
}

/// `x[in] · W[in, out] + b[out]`.
fn affine(x: &[f64], wt: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    (0..out)
        .map(|o| {
            let mut s = 0.0;
            for (i, xv) in x.iter().enumerate() {
                s += xv * wt[i * out + o];
            }
            r(s + b[o])
        })
        .collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| r(v / z)).collect()
}

fn gelu(x: f64) -> f64 {
    r(0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh()))
}

/// Next-token probabilities after the last id.
pub fn next_token_probs(ck: &Checkpoint, ids: &[u32], p: &Patches) -> Vec<f64> {
    let c = *ck.config();
    let k = c.d_model;
    let wte = w(ck, "wte");
    let mut h = embed(ck, ids);
    patch(&mut h, p, 0);
    for layer in 1..=c.n_layers {
        h = block(ck, &h, layer, p).0;
        patch(&mut h, p, layer);
    }
    let last = layer_norm(&h[ids.len() - 1], &w(ck, "ln_f.weight"), &w(ck, "ln_f.bias"));
    let logits: Vec<f64> = (0..c.vocab_size)
        .map(|v| r((0..k).map(|j| last[j] * wte[v * k + j]).sum::<f64>()))
        .collect();
    softmax(&logits)
}

fn patch(h: &mut [Vec<f64>], p: &Patches, layer: usize) {
    for &(l, pos, j, v) in &p.neurons {
        if l == layer {
            h[pos][j] = v as f64;
        }
    }
}

fn embed(ck: &Checkpoint, ids: &[u32]) -> Vec<Vec<f64>> {
    let k = ck.config().d_model;
    let wte = w(ck, "wte");
    let wpe = w(ck, "wpe");
    (0..ids.len())
        .map(|t| (0..k).map(|j| r(wte[ids[t] as usize * k + j] + wpe[t * k + j])).collect())
        .collect()
}

/// Geometric mean of the candidate's token probabilities, one forward per token.
pub fn candidate_prob(ck: &Checkpoint, prompt: &[u32], cand: &[u32], p: &Patches) -> f64 {
    let mut ids = prompt.to_vec();
    let mut logs = 0.0;
    for &t in cand {
        logs += next_token_probs(ck, &ids, p)[t as usize].ln();
        ids.push(t);
    }
    (logs / cand.len() as f64).exp()
}

/// Unpatched residual stream `h[layer][pos][k]` for every layer.
pub fn residuals(ck: &Checkpoint, ids: &[u32]) -> Vec<Vec<Vec<f64>>> {
    let mut h = embed(ck, ids);
    let mut out = vec![h.clone()];
    for layer in 1..=ck.config().n_layers {
        h = block(ck, &h, layer, &Patches::none()).0;
        out.push(h.clone());
    }
    out
}

/// One block; returns the new residual stream and attention rows `[head][query][key]`.
pub fn block(ck: &Checkpoint, h: &[Vec<f64>], layer: usize, p: &Patches) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let c = *ck.config();
    let (k, nh, f) = (c.d_model, c.n_heads, c.d_ff);
    let dh = k / nh;
    let n = h.len();
    let pre = format!("h.{}.", layer - 1);
    let g = |s: &str| w(ck, &format!("{pre}{s}"));
    let a: Vec<Vec<f64>> = h.iter().map(|x| layer_norm(x, &g("ln_1.weight"), &g("ln_1.bias"))).collect();
    let qkv: Vec<Vec<f64>> = a.iter().map(|x| affine(x, &g("attn.c_attn.weight"), &g("attn.c_attn.bias"), 3 * k)).collect();
    let mut ctx = vec![vec![0.0; k]; n];
    let mut rows = vec![vec![Vec::new(); n]; nh];
    for head in 0..nh {
        for i in 0..n {
            let scores: Vec<f64> = (0..=i)
                .map(|j| {
                    let s: f64 = (0..dh).map(|d| qkv[i][head * dh + d] * qkv[j][k + head * dh + d]).sum();
                    r(s / (dh as f64).sqrt())
                })
                .collect();
            let row = match p.rows.iter().find(|(l, hh, pos, _)| *l == layer && *hh == head && *pos == i) {
                Some((_, _, _, row)) => row.iter().map(|&v| v as f64).collect(),
                None => softmax(&scores),
            };
            for d in 0..dh {
                ctx[i][head * dh + d] = r(row.iter().enumerate().map(|(j, pj)| pj * qkv[j][2 * k + head * dh + d]).sum());
            }
            rows[head][i] = row;
        }
    }
    let mut out = h.to_vec();
    for i in 0..n {
        let proj = affine(&ctx[i], &g("attn.c_proj.weight"), &g("attn.c_proj.bias"), k);
        for j in 0..k {
            out[i][j] = r(out[i][j] + proj[j]);
        }
        let m = layer_norm(&out[i], &g("ln_2.weight"), &g("ln_2.bias"));
        let hidden: Vec<f64> = affine(&m, &g("mlp.c_fc.weight"), &g("mlp.c_fc.bias"), f)
            .into_iter()
            .map(gelu)
            .collect();
        let o = affine(&hidden, &g("mlp.c_proj.weight"), &g("mlp.c_proj.bias"), k);
        for j in 0..k {
            out[i][j] = r(out[i][j] + o[j]);
        }
    }
    (out, rows)
}

/// Attention row of `(layer, head)` from query `pos` for `ids`, unpatched.
pub fn attention_row(ck: &Checkpoint, ids: &[u32], layer: usize, head: usize, pos: usize) -> Vec<f64> {
    let h = residuals(ck, ids);
    block(ck, &h[layer - 1], layer, &Patches::none()).1[head][pos].clone()
}

use cma::datasets::{build_professions, build_winograd, GenderMode};
use cma::{toy, Unit, Vocabulary};

/// First `n` template×profession units on the toy vocabulary.
pub fn profession_units(vocab: &Vocabulary, n: usize, null: bool) -> Vec<Unit> {
    let ex = build_professions(&toy::templates(), &toy::professions(7), vocab, GenderMode::Binary).unwrap();
    ex.iter()
        .take(n)
        .map(|e| Unit::from_template(e, vocab, null).unwrap())
        .collect()
}

pub fn winograd_units(vocab: &Vocabulary, n: usize, null: bool) -> Vec<Unit> {
    let corpus = build_winograd(toy::winograd_records(n, 11), vocab).unwrap();
    corpus
        .examples
        .iter()
        .map(|e| Unit::from_winograd(e, vocab, null).unwrap())
        .collect()
}
