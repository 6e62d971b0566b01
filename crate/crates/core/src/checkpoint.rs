//! Model configuration, named weights and the CMA1 binary format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CMA1"                      4 bytes magic
//! version                     u32 (= 1)
//! n_layers n_heads d_model    u32 ×6
//! d_ff vocab_size max_positions
//! repeated until EOF, sorted by name:
//!   name_len u32, name UTF-8, rank u32, dims u64 × rank, data f32 × prod(dims)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CMA1";
pub const FORMAT_VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
        }
        if fields.iter().any(|(_, v)| *v > u32::MAX as usize) {
            return Err(Error::InvalidConfig("field does not fit in u32".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Every tensor the architecture needs, with its exact shape.
    pub fn shape_table(&self) -> BTreeMap<String, Vec<usize>> {
        let (k, f) = (self.d_model, self.d_ff);
        let mut t = BTreeMap::new();
        t.insert("wte".to_string(), vec![self.vocab_size, k]);
        t.insert("wpe".to_string(), vec![self.max_positions, k]);
        t.insert("ln_f.weight".to_string(), vec![k]);
        t.insert("ln_f.bias".to_string(), vec![k]);
        for i in 0..self.n_layers {
            let p = |s: &str| format!("h.{i}.{s}");
            t.insert(p("ln_1.weight"), vec![k]);
            t.insert(p("ln_1.bias"), vec![k]);
            t.insert(p("attn.c_attn.weight"), vec![k, 3 * k]);
            t.insert(p("attn.c_attn.bias"), vec![3 * k]);
            t.insert(p("attn.c_proj.weight"), vec![k, k]);
            t.insert(p("attn.c_proj.bias"), vec![k]);
            t.insert(p("ln_2.weight"), vec![k]);
            t.insert(p("ln_2.bias"), vec![k]);
            t.insert(p("mlp.c_fc.weight"), vec![k, f]);
            t.insert(p("mlp.c_fc.bias"), vec![f]);
            t.insert(p("mlp.c_proj.weight"), vec![f, k]);
            t.insert(p("mlp.c_proj.bias"), vec![k]);
        }
        t
    }

    fn to_words(self) -> [u32; 6] {
        [
            self.n_layers as u32,
            self.n_heads as u32,
            self.d_model as u32,
            self.d_ff as u32,
            self.vocab_size as u32,
            self.max_positions as u32,
        ]
    }

    fn from_words(w: [u32; 6]) -> Self {
        Self {
            n_layers: w[0] as usize,
            n_heads: w[1] as usize,
            d_model: w[2] as usize,
            d_ff: w[3] as usize,
            vocab_size: w[4] as usize,
            max_positions: w[5] as usize,
        }
    }
}

/// Configuration plus named weights; validated against the shape table on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        if tensors.is_empty() {
            return Err(Error::MissingTensor("checkpoint has no tensors".into()));
        }
        let table = config.shape_table();
        for (name, expected) in &table {
            let t = tensors.get(name).ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.shape() != expected.as_slice() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: expected.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = tensors.keys().find(|n| !table.contains_key(*n)) {
            return Err(Error::UnexpectedTensor(extra.clone()));
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    /// Named tensor; names come from the shape table so presence is guaranteed.
    pub fn tensor(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("tensor {name} validated at construction"))
    }

    /// Replaces one tensor, keeping the shape table invariant.
    pub fn with_tensor(mut self, name: &str, t: Tensor) -> Result<Self> {
        let expected = self
            .config
            .shape_table()
            .remove(name)
            .ok_or_else(|| Error::UnexpectedTensor(name.to_string()))?;
        if t.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected,
                found: t.shape().to_vec(),
            });
        }
        self.tensors.insert(name.to_string(), t);
        Ok(self)
    }

    /// Normal(0, 0.02) weights from a ChaCha8 stream seeded with `seed`, drawn in
    /// sorted tensor-name order. Biases are zero; layer norms are gamma=1, beta=0.
    pub fn init_random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, INIT_STD).expect("valid std");
        let mut tensors = BTreeMap::new();
        for (name, shape) in config.shape_table() {
            let numel: usize = shape.iter().product();
            let data = if name.contains("ln_") && name.ends_with(".weight") {
                vec![1.0; numel]
            } else if name.ends_with(".bias") {
                vec![0.0; numel]
            } else {
                (0..numel).map(|_| normal.sample(&mut rng) as f32).collect()
            };
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Self::new(config, tensors)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for w in self.config.to_words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut words = [0u32; 6];
        for w in &mut words {
            *w = r.u32()?;
        }
        let config = ModelConfig::from_words(words);
        config.validate()?;
        let table = config.shape_table();
        let mut tensors = BTreeMap::new();
        while !r.at_end() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            let expected = table
                .get(&name)
                .ok_or_else(|| Error::UnexpectedTensor(name.clone()))?;
            if &dims != expected {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: expected.clone(),
                    found: dims,
                });
            }
            let numel: usize = dims.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or(Error::TruncatedFile)?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if tensors.insert(name.clone(), Tensor::new(dims, data)?).is_some() {
                return Err(Error::Format(format!("duplicate tensor {name}")));
            }
        }
        Self::new(config, tensors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 32,
            vocab_size: 11,
            max_positions: 16,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = Checkpoint::init_random(tiny(), 3).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(ck, back);
        assert_eq!(ck.to_bytes(), back.to_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cma1");
        let ck = Checkpoint::init_random(tiny(), 3).unwrap();
        ck.save(&p).unwrap();
        let first = std::fs::read(&p).unwrap();
        ck.save(&p).unwrap();
        assert_eq!(first, std::fs::read(&p).unwrap());
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let mut bytes = Checkpoint::init_random(tiny(), 1).unwrap().to_bytes();
        let good = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::BadMagic(_))));
        let mut bytes = good.clone();
        bytes[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::UnsupportedVersion(2))));
        assert!(matches!(
            Checkpoint::from_bytes(&good[..good.len() - 3]),
            Err(Error::TruncatedFile)
        ));
        assert!(matches!(Checkpoint::from_bytes(&good[..2]), Err(Error::TruncatedFile)));
    }

    #[test]
    fn missing_tensor_fails_closed() {
        let good = Checkpoint::init_random(tiny(), 1).unwrap();
        // Header only: every tensor is missing.
        let header = &good.to_bytes()[..4 + 4 + 24];
        assert!(matches!(Checkpoint::from_bytes(header), Err(Error::MissingTensor(_))));
    }

    #[test]
    fn shape_mismatch_is_reported_by_name() {
        let mut cfg = tiny();
        let ck = Checkpoint::init_random(cfg, 1).unwrap();
        let mut bytes = ck.to_bytes();
        // Claim a larger d_ff in the header; c_fc no longer matches.
        cfg.d_ff = 16;
        let words = cfg.to_words();
        bytes[8 + 12..8 + 16].copy_from_slice(&words[3].to_le_bytes());
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::ShapeMismatch { name, .. }) => assert!(name.contains("mlp")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_checkpoint_rejected() {
        assert!(Checkpoint::new(tiny(), BTreeMap::new()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_random_seeding() {
        let a = Checkpoint::init_random(tiny(), 5).unwrap();
        let b = Checkpoint::init_random(tiny(), 5).unwrap();
        let c = Checkpoint::init_random(tiny(), 6).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.tensor("wte"), c.tensor("wte"));
        assert!(a.tensor("h.0.ln_1.weight").data().iter().all(|&v| v == 1.0));
        assert!(a.tensor("h.1.mlp.c_fc.bias").data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distil_shape_table() {
        let cfg = ModelConfig {
            n_layers: 6,
            n_heads: 12,
            d_model: 768,
            d_ff: 3072,
            vocab_size: 50257,
            max_positions: 1024,
        };
        cfg.validate().unwrap();
        let t = cfg.shape_table();
        assert_eq!(t.len(), 4 + 6 * 12);
        assert_eq!(t["h.5.attn.c_attn.weight"], vec![768, 2304]);
        assert_eq!(cfg.head_dim(), 64);
    }
}
