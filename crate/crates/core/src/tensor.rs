//! Dense row-major `f32` tensors and the handful of kernels a GPT2 block needs.
//!
//! Storage is `f32`; every reduction (matmul inner products, softmax sums,
//! layer-norm statistics) accumulates in `f64` in a fixed index order, so the
//! same inputs always produce bit-identical outputs.

use crate::error::{Error, Result};

/// Dense row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidTensor("rank-0 tensors are not supported".into()));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "all dimensions must be >= 1, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel])
    }

    /// Builds a 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidTensor("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    /// Number of rows when viewed as `[numel / last_dim, last_dim]`.
    pub fn n_rows(&self) -> usize {
        self.numel() / self.last_dim()
    }

    /// Row `i` of the `[n_rows, last_dim]` view.
    pub fn row(&self, i: usize) -> &[f32] {
        let k = self.last_dim();
        &self.data[i * k..(i + 1) * k]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let k = self.last_dim();
        &mut self.data[i * k..(i + 1) * k]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Explicit transpose of a 2-D tensor (a copy; there are no views).
    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(vec![n, m], out)
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            _ => Err(Error::Dimension {
                op,
                lhs: self.shape.clone(),
                rhs: vec![],
            }),
        }
    }
}

/// Matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mismatch = || Error::Dimension {
        op: "matmul",
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    };
    let (m, k) = a.dims2("matmul").map_err(|_| mismatch())?;
    let (k2, n) = b.dims2("matmul").map_err(|_| mismatch())?;
    if k != k2 {
        return Err(mismatch());
    }
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        // k-outer keeps `b` row access contiguous; each acc[j] still sums in index order.
        for (p, &av) in a.data[i * k..(i + 1) * k].iter().enumerate() {
            let av = f64::from(av);
            for (slot, &bv) in acc.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                *slot += av * f64::from(bv);
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![m, n], out)
}

/// `a[m×k] · b[n×k]ᵀ`, used for tied-embedding logits without copying the embedding.
pub fn matmul_transposed(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mismatch = || Error::Dimension {
        op: "matmul_transposed",
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    };
    let (m, k) = a.dims2("matmul_transposed").map_err(|_| mismatch())?;
    let (n, k2) = b.dims2("matmul_transposed").map_err(|_| mismatch())?;
    if k != k2 {
        return Err(mismatch());
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ar = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            out.push(dot(ar, &b.data[j * k..(j + 1) * k]) as f32);
        }
    }
    Tensor::new(vec![m, n], out)
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + f64::from(x) * f64::from(y))
}

/// Numerically stable softmax of one slice.
pub fn softmax_slice(x: &[f32]) -> Vec<f32> {
    let max = x.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = x.iter().map(|&v| (f64::from(v) - f64::from(max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

/// Softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Dimension {
            op: "softmax",
            lhs: x.shape.clone(),
            rhs: vec![axis],
        });
    }
    let n = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();
    let mut out = vec![0.0f32; x.numel()];
    let mut lane = vec![0.0f32; n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (j, slot) in lane.iter_mut().enumerate() {
                *slot = x.data[base + j * inner];
            }
            for (j, v) in softmax_slice(&lane).into_iter().enumerate() {
                out[base + j * inner] = v;
            }
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Layer normalization over the last axis (biased variance, GPT2 style).
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let k = x.last_dim();
    if gamma.shape() != [k] || beta.shape() != [k] {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape.clone(),
            rhs: gamma.shape.clone(),
        });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Precondition(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let mut out = Vec::with_capacity(x.numel());
    for r in 0..x.n_rows() {
        let row = x.row(r);
        let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / k as f64;
        let var = row
            .iter()
            .map(|&v| {
                let d = f64::from(v) - mean;
                d * d
            })
            .sum::<f64>()
            / k as f64;
        let inv = 1.0 / (var + f64::from(eps)).sqrt();
        for ((&v, &g), &b) in row.iter().zip(&gamma.data).zip(&beta.data) {
            out.push(((f64::from(v) - mean) * inv * f64::from(g) + f64::from(b)) as f32);
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Scalar tanh-approximation GELU.
pub fn gelu_scalar(x: f32) -> f32 {
    let x = f64::from(x);
    let c = (2.0 / std::f64::consts::PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

/// Elementwise tanh-approximation GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| gelu_scalar(v)).collect(),
    }
}

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::Dimension {
            op: "add",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

/// Adds a `[k]` bias to every row of `x[..., k]`.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let k = x.last_dim();
    if bias.shape() != [k] {
        return Err(Error::Dimension {
            op: "add_bias",
            lhs: x.shape.clone(),
            rhs: bias.shape.clone(),
        });
    }
    let mut out = x.clone();
    for r in 0..out.n_rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    Ok(out)
}

/// `x · w + b`, the GPT2 "Conv1D" projection with `w` stored `[in, out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    add_bias(&matmul(x, w)?, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn matmul_identity_and_small_case() {
        let i = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(matmul(&i, &b).unwrap(), b);

        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&a, &c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(vec![7, 5], 1);
        let b = random(vec![5, 3], 2);
        let got = matmul(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                let mut s = 0.0f64;
                for p in 0..5 {
                    s += f64::from(a.data()[i * 5 + p]) * f64::from(b.data()[p * 3 + j]);
                }
                assert!((f64::from(got.data()[i * 3 + j]) - s).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = random(vec![2, 3], 1);
        let b = random(vec![2, 3], 2);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_transposed_agrees_with_explicit_transpose() {
        let a = random(vec![4, 6], 3);
        let b = random(vec![5, 6], 4);
        let fast = matmul_transposed(&a, &b).unwrap();
        let slow = matmul(&a, &b.transpose().unwrap()).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn softmax_examples() {
        let t = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax(&t, 0).unwrap().data(), &[0.5, 0.5]);

        let t = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] < 1e-30);

        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        let z: f64 = (1..=3).map(|v| (v as f64).exp()).sum();
        for (i, v) in s.data().iter().enumerate() {
            assert!((f64::from(*v) - ((i + 1) as f64).exp() / z).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_along_first_axis() {
        let t = random(vec![3, 4], 9);
        let s = softmax(&t, 0).unwrap();
        for j in 0..4 {
            let col: f64 = (0..3).map(|i| f64::from(s.data()[i * 4 + j])).sum();
            assert!((col - 1.0).abs() < 1e-6);
        }
        assert!(softmax(&t, 2).is_err());
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Tensor::filled(vec![4], 1.0).unwrap();
        let zeros = Tensor::zeros(vec![4]).unwrap();
        let c = Tensor::filled(vec![4], 3.5).unwrap();
        let out = layer_norm(&c, &ones, &zeros, 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let x = random(vec![4], 5);
        let beta = Tensor::filled(vec![4], 0.25).unwrap();
        let out = layer_norm(&x, &zeros, &beta, 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn layer_norm_matches_two_pass_oracle() {
        let x = random(vec![3, 16], 6);
        let ones = Tensor::filled(vec![16], 1.0).unwrap();
        let zeros = Tensor::zeros(vec![16]).unwrap();
        let out = layer_norm(&x, &ones, &zeros, 1e-5).unwrap();
        for r in 0..3 {
            let row: Vec<f64> = x.row(r).iter().map(|&v| f64::from(v)).collect();
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            for (k, v) in row.iter().enumerate() {
                let want = (v - mean) / (var + 1e-5).sqrt();
                assert!((f64::from(out.row(r)[k]) - want).abs() <= 1e-5);
            }
            let m: f64 = out.row(r).iter().map(|&v| f64::from(v)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-5);
        }
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(20.0) - 20.0).abs() < 1e-5);
        assert!(gelu_scalar(-20.0).abs() < 1e-5);
        let x = 1.0f64;
        let want = 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
        assert!((f64::from(gelu_scalar(1.0)) - want).abs() < 1e-6);
    }

    #[test]
    fn kernels_are_pure() {
        let a = random(vec![5, 8], 11);
        let b = random(vec![8, 4], 12);
        assert_eq!(matmul(&a, &b).unwrap().data(), matmul(&a, &b).unwrap().data());
        assert_eq!(softmax(&a, 1).unwrap().data(), softmax(&a, 1).unwrap().data());
    }
}
