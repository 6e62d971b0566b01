//! The dense kernels under the forward pass on tiny hand-written inputs.

use cma::tensor::{self, Tensor};

fn main() -> cma::Result<()> {
    let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0]])?;
    let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]])?;
    let y = tensor::matmul(&x, &w)?;
    println!("x·w = {:?} {:?}", y.shape(), y.data());

    let p = tensor::softmax(&y, 1)?;
    for i in 0..p.n_rows() {
        println!("softmax row {i}: {:?} (sum {})", p.row(i), p.row(i).iter().sum::<f32>());
    }

    let gamma = Tensor::filled(vec![3], 1.0)?;
    let beta = Tensor::zeros(vec![3])?;
    let n = tensor::layer_norm(&x, &gamma, &beta, 1e-5)?;
    println!("layer norm: {:?}", n.data());
    println!("gelu(-1, 0, 1) = {:?}", [-1.0, 0.0, 1.0].map(tensor::gelu_scalar));
    Ok(())
}
