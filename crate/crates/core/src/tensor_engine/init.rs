use rand::Rng;

use super::tensor::{Real, Tensor};

/// Uniform in `[−s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.random_range(-s..=s))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from extents")
}
