use rand::Rng as _;

use super::tensor::Tensor;
use crate::rng::Rng;

/// Glorot/Xavier uniform initialization: entries drawn from
/// `U[-b, b]` with `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let bound = xavier_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive extents")
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
