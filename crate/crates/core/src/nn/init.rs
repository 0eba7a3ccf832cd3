use rand::Rng;

use super::tensor::Tensor;
use crate::rng::{substream, Stream};

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_out × fan_in` matrix drawn from U(−bound, bound).
pub fn glorot_with<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = glorot_bound(fan_in, fan_out);
    let values = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor { shape: vec![fan_out, fan_in], values }
}

pub fn glorot_init(fan_in: usize, fan_out: usize, seed: u64) -> Tensor {
    glorot_with(&mut substream(seed, Stream::Init, &[fan_in as u64, fan_out as u64]), fan_in, fan_out)
}
