use rand::distributions::Distribution;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError};

/// Lower/upper clamp applied to uniform draws before the Gumbel transform.
pub const GUMBEL_EPS: f64 = 1e-12;

/// Seeded ChaCha8 stream. Every stochastic routine in the crate takes one of
/// these explicitly.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `stream`; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed ^ stream.rotate_left(17),
            inner,
        }
    }

    /// Child stream seeded from this stream's next output.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.inner.gen())
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates, kept local so the sequence is pinned to this crate.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Index drawn proportionally to non-negative `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                return i;
            }
            target -= w;
        }
        weights.len() - 1
    }

    pub fn gumbel(&mut self) -> f64 {
        gumbel_from_uniform(self.uniform())
    }

    /// Draws from any `rand` distribution using this stream.
    pub fn sample<T, D: Distribution<T>>(&mut self, dist: &D) -> T {
        dist.sample(&mut self.inner)
    }
}

/// `-ln(-ln u)` with `u` clamped into `(ε, 1-ε)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
    -(-u.ln()).ln()
}

pub fn sample_gumbel(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gumbel();
    }
    t
}

/// Glorot-uniform draw for a `(fan_in, fan_out)` matrix.
pub fn xavier_init(shape: &[usize], rng: &mut Rng) -> Result<Tensor, TensorError> {
    if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
        return Err(TensorError::BadShape(format!(
            "xavier_init needs a 2-D (fan_in, fan_out) shape, got {shape:?}"
        )));
    }
    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    Ok(t)
}
