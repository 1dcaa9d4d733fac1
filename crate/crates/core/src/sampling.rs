//! Seeded uniform sampling in Euclidean balls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent sample streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Rcrcq = 1,
    Liminf = 2,
    Pairs = 3,
    Aubin = 4,
    Scenario = 5,
}

/// Uniform sampler for the unit ball, by rejection from the cube.
#[derive(Debug, Clone)]
pub struct BallSampler {
    rng: ChaCha8Rng,
}

impl BallSampler {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        Self { rng }
    }

    /// A point uniformly distributed in the closed unit ball of `ℝ^dim`.
    pub fn unit(&mut self, dim: usize) -> Vec<f64> {
        if dim == 0 {
            return Vec::new();
        }
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect();
            if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                return v;
            }
        }
    }

    /// A point uniformly distributed in `center + radius·B`.
    pub fn ball(&mut self, center: &[f64], radius: f64) -> Vec<f64> {
        scale_into(center, radius, &self.unit(center.len()))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..=hi)
    }
}

/// `center + radius · unit`.
pub fn scale_into(center: &[f64], radius: f64, unit: &[f64]) -> Vec<f64> {
    center.iter().zip(unit).map(|(c, u)| c + radius * u).collect()
}
