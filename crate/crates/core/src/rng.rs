//! Counter-based random streams for reproducible parallel Monte Carlo.
//!
//! Each atom (or sweep point) gets its own stream addressed by
//! `(seed, stream_id)`. A stream is a splitmix64 counter sequence keyed by a
//! mix of seed and id, so draws depend only on the pair and the draw index,
//! never on scheduling or thread count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

/// Create the stream addressed by `(seed, stream_id)`.
pub fn rng_stream(seed: u64, stream_id: u64) -> StreamRng {
    StreamRng::new(seed, stream_id)
}

impl StreamRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(seed.wrapping_add(GOLDEN)) ^ mix64(stream_id.wrapping_mul(GOLDEN).wrapping_add(1)));
        StreamRng {
            key,
            counter: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller, spare cached per stream).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // uniform() can return exactly 0; shift into (0, 1] for the log.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(mag * s);
        mag * c
    }

    /// Exponential draw with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.uniform()).ln()
    }
}
