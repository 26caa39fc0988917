//! Seedable, stream-indexed random sources.
//!
//! Each `(master_seed, stream_id)` pair names an independent, reproducible
//! stream (ChaCha8 with the stream id mapped onto the cipher's stream
//! counter), so parallel replicates can each own a stream and the overall
//! result is independent of scheduling and worker count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// A single-owner random source. One stream per worker, never shared.
pub struct RngStream {
    chacha: ChaCha8Rng,
    cached_normal: Option<f64>,
}

/// Create the stream identified by `(master_seed, stream_id)`.
///
/// The same pair always yields the identical sequence; distinct stream ids
/// yield statistically independent streams.
pub fn rng_stream(master_seed: u64, stream_id: u64) -> RngStream {
    let mut chacha = ChaCha8Rng::seed_from_u64(master_seed);
    chacha.set_stream(stream_id);
    RngStream {
        chacha,
        cached_normal: None,
    }
}

impl RngStream {
    /// Uniform draw in [0, 1), 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.chacha.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1], safe as a log argument.
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.chacha.next_u64()
    }

    /// Standard normal draw (Box-Muller; the paired value is cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.uniform();
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma(shape, scale 1) draw, Marsaglia-Tsang squeeze method.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            // boost: Gamma(a) = Gamma(a + 1) * U^(1/a)
            let g = self.gamma(shape + 1.0);
            return g * self.uniform_open().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Chi-square draw with (possibly fractional) degrees of freedom.
    pub fn chi_square(&mut self, df: f64) -> f64 {
        2.0 * self.gamma(0.5 * df)
    }

    /// Fill a vector with iid N(mean, sd^2) draws.
    pub fn normal_vec(&mut self, mean: f64, sd: f64, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal(mean, sd)).collect()
    }
}
