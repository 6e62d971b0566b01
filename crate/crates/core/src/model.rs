//! GPT2 forward pass with record and patch hooks.
//!
//! Neuron mediators live on the residual stream: layer 0 is the embedding sum
//! (token + position), layer `l >= 1` is the output of block `l`. Attention
//! mediators are the post-softmax rows of block `l` (1-based), head `h`, for a
//! given query position. Overrides replace recorded values in place; attention
//! rows are not renormalized after patching.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::checkpoint::{Checkpoint, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

pub const LAYER_NORM_EPS: f32 = 1e-5;
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Address of a single mediator value inside one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MediatorCoord {
    /// `h[layer][position][neuron]`, layer 0 = embeddings.
    Neuron {
        layer: usize,
        position: usize,
        neuron: usize,
    },
    /// Attention row of `head` in block `layer` (1-based) from query `position`.
    Head {
        layer: usize,
        head: usize,
        position: usize,
    },
}

/// A do-operation on mediators: values to force during a forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionSpec {
    neurons: BTreeMap<(usize, usize, usize), f32>,
    rows: BTreeMap<(usize, usize, usize), Vec<f32>>,
}

impl InterventionSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty() && self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.neurons.len() + self.rows.len()
    }

    pub fn set_neuron(&mut self, layer: usize, position: usize, neuron: usize, value: f32) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidIntervention(format!(
                "non-finite value for neuron ({layer}, {position}, {neuron})"
            )));
        }
        if self.neurons.insert((layer, position, neuron), value).is_some() {
            return Err(Error::InvalidIntervention(format!(
                "duplicate neuron override ({layer}, {position}, {neuron})"
            )));
        }
        Ok(())
    }

    /// Overrides the attention row of (`layer`, `head`) at query `position`.
    /// `row` covers keys `0..=position` and must be a distribution.
    pub fn set_attention_row(&mut self, layer: usize, head: usize, position: usize, row: Vec<f32>) -> Result<()> {
        if row.len() != position + 1 {
            return Err(Error::InvalidIntervention(format!(
                "attention row for position {position} must have {} entries, got {}",
                position + 1,
                row.len()
            )));
        }
        let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
        if row.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidIntervention(format!(
                "attention row ({layer}, {head}, {position}) is not a distribution (sum {sum})"
            )));
        }
        if self.rows.insert((layer, head, position), row).is_some() {
            return Err(Error::InvalidIntervention(format!(
                "duplicate attention override ({layer}, {head}, {position})"
            )));
        }
        Ok(())
    }

    /// Copies the values at `coords` out of `trace`.
    pub fn from_trace(trace: &Trace, coords: &[MediatorCoord]) -> Result<Self> {
        let mut spec = Self::new();
        for &c in coords {
            spec.copy_from_trace(trace, c)?;
        }
        Ok(spec)
    }

    pub fn copy_from_trace(&mut self, trace: &Trace, coord: MediatorCoord) -> Result<()> {
        match coord {
            MediatorCoord::Neuron { layer, position, neuron } => {
                let v = trace.neuron(layer, position, neuron)?;
                self.set_neuron(layer, position, neuron, v)
            }
            MediatorCoord::Head { layer, head, position } => {
                let row = trace.attention_row(layer, head, position)?.to_vec();
                self.set_attention_row(layer, head, position, row)
            }
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = MediatorCoord> + '_ {
        let n = self
            .neurons
            .keys()
            .map(|&(layer, position, neuron)| MediatorCoord::Neuron { layer, position, neuron });
        let h = self
            .rows
            .keys()
            .map(|&(layer, head, position)| MediatorCoord::Head { layer, head, position });
        n.chain(h)
    }

    fn validate(&self, cfg: &ModelConfig, n_positions: usize) -> Result<()> {
        for &(layer, position, neuron) in self.neurons.keys() {
            if layer > cfg.n_layers || position >= n_positions || neuron >= cfg.d_model {
                return Err(Error::CoordOutOfBounds(format!(
                    "neuron (layer {layer}, position {position}, neuron {neuron}) with {} layers, {n_positions} positions, K={}",
                    cfg.n_layers, cfg.d_model
                )));
            }
        }
        for &(layer, head, position) in self.rows.keys() {
            if layer == 0 || layer > cfg.n_layers || head >= cfg.n_heads || position >= n_positions {
                return Err(Error::CoordOutOfBounds(format!(
                    "head (layer {layer}, head {head}, position {position}) with {} layers, {} heads, {n_positions} positions",
                    cfg.n_layers, cfg.n_heads
                )));
            }
        }
        Ok(())
    }

    fn neurons_in_layer(&self, layer: usize) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        self.neurons
            .range((layer, 0, 0)..(layer + 1, 0, 0))
            .map(|(&(_, p, k), &v)| (p, k, v))
    }
}

/// Mediator values recorded during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `activations[l]` is `[n_positions, K]` for layer `l` in `0..=n_layers`.
    pub activations: Vec<Tensor>,
    /// `attentions[l - 1]` is `[n_heads, n_positions, n_positions]` for block `l`.
    pub attentions: Vec<Tensor>,
    /// Logits at the last position.
    pub logits: Vec<f32>,
}

impl Trace {
    pub fn n_positions(&self) -> usize {
        self.activations[0].shape()[0]
    }

    pub fn n_layers(&self) -> usize {
        self.attentions.len()
    }

    pub fn activation(&self, layer: usize, position: usize) -> Result<&[f32]> {
        let t = self
            .activations
            .get(layer)
            .ok_or_else(|| Error::CoordOutOfBounds(format!("trace layer {layer}")))?;
        if position >= t.shape()[0] {
            return Err(Error::CoordOutOfBounds(format!("trace position {position}")));
        }
        Ok(t.row(position))
    }

    pub fn neuron(&self, layer: usize, position: usize, neuron: usize) -> Result<f32> {
        self.activation(layer, position)?
            .get(neuron)
            .copied()
            .ok_or_else(|| Error::CoordOutOfBounds(format!("trace neuron {neuron}")))
    }

    /// Causal support `0..=position` of the attention row.
    pub fn attention_row(&self, layer: usize, head: usize, position: usize) -> Result<&[f32]> {
        let t = layer
            .checked_sub(1)
            .and_then(|i| self.attentions.get(i))
            .ok_or_else(|| Error::CoordOutOfBounds(format!("trace attention layer {layer}")))?;
        let (h, n) = (t.shape()[0], t.shape()[1]);
        if head >= h || position >= n {
            return Err(Error::CoordOutOfBounds(format!(
                "trace attention head {head} position {position}"
            )));
        }
        let start = (head * n + position) * n;
        Ok(&t.data()[start..start + position + 1])
    }
}

/// A checkpoint ready for inference.
#[derive(Debug)]
pub struct Model {
    ckpt: Checkpoint,
    fingerprint: OnceLock<String>,
}

impl Model {
    pub fn new(ckpt: Checkpoint) -> Self {
        Self {
            ckpt,
            fingerprint: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.ckpt.config()
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    pub fn fingerprint(&self) -> &str {
        self.fingerprint.get_or_init(|| self.ckpt.fingerprint())
    }

    /// Next-token distribution at the last position, plus the trace when `record`.
    pub fn forward(&self, ids: &[u32], spec: &InterventionSpec, record: bool) -> Result<(Vec<f32>, Option<Trace>)> {
        let (hidden, trace) = self.run(ids, spec, record)?;
        let last = ids.len() - 1;
        let logits = self.logits_at(&hidden, last)?;
        let probs = tensor::softmax_slice(&logits);
        let trace = trace.map(|mut t| {
            t.logits = logits;
            t
        });
        Ok((probs, trace))
    }

    /// Teacher-forced log-probabilities of each continuation token. Overrides in
    /// `spec` keep their absolute positions at every step.
    pub fn sequence_log_prob(&self, prompt: &[u32], continuation: &[u32], spec: &InterventionSpec) -> Result<Vec<f64>> {
        if continuation.is_empty() {
            return Err(Error::Precondition("continuation must be non-empty".into()));
        }
        if prompt.is_empty() {
            return Err(Error::Precondition("prompt must be non-empty".into()));
        }
        let mut ids = prompt.to_vec();
        ids.extend_from_slice(&continuation[..continuation.len() - 1]);
        let (hidden, _) = self.run(&ids, spec, false)?;
        continuation
            .iter()
            .enumerate()
            .map(|(t, &tok)| {
                let logits = self.logits_at(&hidden, prompt.len() - 1 + t)?;
                let probs = tensor::softmax_slice(&logits);
                Ok(f64::from(probs[tok as usize]).ln())
            })
            .collect()
    }

    fn logits_at(&self, hidden: &Tensor, position: usize) -> Result<Vec<f32>> {
        let row = Tensor::new(vec![1, hidden.last_dim()], hidden.row(position).to_vec())?;
        Ok(tensor::matmul_transposed(&row, self.ckpt.tensor("wte"))?.into_data())
    }

    /// Runs the block stack; returns final-layer-normed hidden states `[n, K]`.
    fn run(&self, ids: &[u32], spec: &InterventionSpec, record: bool) -> Result<(Tensor, Option<Trace>)> {
        let cfg = *self.config();
        let n = ids.len();
        if n == 0 {
            return Err(Error::Precondition("empty input".into()));
        }
        if n > cfg.max_positions {
            return Err(Error::PromptTooLong {
                len: n,
                max: cfg.max_positions,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: bad,
                vocab_size: cfg.vocab_size,
            });
        }
        spec.validate(&cfg, n)?;

        let k = cfg.d_model;
        let wte = self.ckpt.tensor("wte");
        let wpe = self.ckpt.tensor("wpe");
        let mut embed = Vec::with_capacity(n * k);
        for (pos, &id) in ids.iter().enumerate() {
            embed.extend(wte.row(id as usize).iter().zip(wpe.row(pos)).map(|(a, b)| a + b));
        }
        let mut h = Tensor::new(vec![n, k], embed)?;
        patch_neurons(&mut h, spec, 0);

        let mut activations = Vec::new();
        let mut attentions = Vec::new();
        if record {
            activations.push(h.clone());
        }
        for layer in 1..=cfg.n_layers {
            let (next, attn) = self.block(&h, layer, spec, record)?;
            h = next;
            patch_neurons(&mut h, spec, layer);
            if record {
                activations.push(h.clone());
                attentions.push(attn.expect("recorded"));
            }
        }
        let out = tensor::layer_norm(
            &h,
            self.ckpt.tensor("ln_f.weight"),
            self.ckpt.tensor("ln_f.bias"),
            LAYER_NORM_EPS,
        )?;
        let trace = record.then(|| Trace {
            activations,
            attentions,
            logits: Vec::new(),
        });
        Ok((out, trace))
    }

    fn block(&self, h: &Tensor, layer: usize, spec: &InterventionSpec, record: bool) -> Result<(Tensor, Option<Tensor>)> {
        let cfg = self.config();
        let w = |s: &str| self.ckpt.tensor(&format!("h.{}.{s}", layer - 1));
        let (n, k, n_heads, dh) = (h.shape()[0], cfg.d_model, cfg.n_heads, cfg.head_dim());

        let a = tensor::layer_norm(h, w("ln_1.weight"), w("ln_1.bias"), LAYER_NORM_EPS)?;
        let qkv = tensor::linear(&a, w("attn.c_attn.weight"), w("attn.c_attn.bias"))?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = vec![0.0f32; n * k];
        let mut attn = record.then(|| vec![0.0f32; n_heads * n * n]);
        for head in 0..n_heads {
            let q_off = head * dh;
            let k_off = k + head * dh;
            let v_off = 2 * k + head * dh;
            for i in 0..n {
                let q = &qkv.row(i)[q_off..q_off + dh];
                let row = match spec.rows.get(&(layer, head, i)) {
                    Some(r) => r.clone(),
                    None => {
                        let scores: Vec<f32> = (0..=i)
                            .map(|j| (tensor::dot(q, &qkv.row(j)[k_off..k_off + dh]) * scale) as f32)
                            .collect();
                        tensor::softmax_slice(&scores)
                    }
                };
                for d in 0..dh {
                    let s = row
                        .iter()
                        .enumerate()
                        .fold(0.0f64, |acc, (j, &p)| acc + f64::from(p) * f64::from(qkv.row(j)[v_off + d]));
                    ctx[i * k + q_off + d] = s as f32;
                }
                if let Some(buf) = attn.as_mut() {
                    let start = (head * n + i) * n;
                    buf[start..start + i + 1].copy_from_slice(&row);
                }
            }
        }
        let ctx = Tensor::new(vec![n, k], ctx)?;
        let proj = tensor::linear(&ctx, w("attn.c_proj.weight"), w("attn.c_proj.bias"))?;
        let h = tensor::add(h, &proj)?;

        let m = tensor::layer_norm(&h, w("ln_2.weight"), w("ln_2.bias"), LAYER_NORM_EPS)?;
        let f = tensor::gelu(&tensor::linear(&m, w("mlp.c_fc.weight"), w("mlp.c_fc.bias"))?);
        let o = tensor::linear(&f, w("mlp.c_proj.weight"), w("mlp.c_proj.bias"))?;
        let h = tensor::add(&h, &o)?;

        let attn = attn.map(|buf| Tensor::new(vec![n_heads, n, n], buf)).transpose()?;
        Ok((h, attn))
    }
}

fn patch_neurons(h: &mut Tensor, spec: &InterventionSpec, layer: usize) {
    for (pos, k, v) in spec.neurons_in_layer(layer) {
        h.row_mut(pos)[k] = v;
    }
}
