use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::{Real, Tensor};

/// `(fan_in, fan_out)` for `(out, in, kh, kw)`-style shapes.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let receptive: usize = rest.iter().product();
            (inp * receptive, out * receptive)
        }
    }
}

pub fn xavier_limit(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = fans(shape);
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier/Glorot uniform initialisation on `[−L, L]`, `L = sqrt(6/(fan_in+fan_out))`.
pub fn xavier_init<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    let limit = xavier_limit(shape);
    let dist = Uniform::new_inclusive(-limit, limit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| T::lit(dist.sample(&mut rng))).collect();
    Tensor::from_vec(shape, data).expect("xavier_init shape is non-empty")
}
