//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the experiment seed; sub-streams
//! reuse the key and pick a different 64-bit stream id, so they are disjoint
//! keystreams rather than offsets into one sequence. Stream ids are derived
//! from the parent id and a label, independent of how many draws the parent
//! has already made.
//!
//! Transforms are fixed so that draws are bit-stable across platforms that
//! agree on `ln`/`cos`/`sin`:
//! - uniform: top 53 bits of a `u64`, giving `[0, 1)`;
//! - Gaussian: Box–Muller on `(1 - u1, u2)`, both outputs used in turn;
//! - Laplace: exponential magnitude `-b ln(1 - u)` with an independent sign.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            rng,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent child stream named by `label`.
    pub fn substream(&self, label: &str) -> Self {
        self.derive(fnv1a(label))
    }

    /// Independent child stream for the `index`-th item of a family.
    pub fn substream_index(&self, index: u64) -> Self {
        self.derive(splitmix64(index ^ 0x5EED_1DE5_u64))
    }

    fn derive(&self, salt: u64) -> Self {
        let id = splitmix64(self.stream.rotate_left(17) ^ splitmix64(salt));
        Self::with_stream(self.seed, id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.rng.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Zero-mean Laplace draw with scale `b` (variance `2 b^2`).
    pub fn laplace(&mut self, b: f64) -> f64 {
        let magnitude = -b * (1.0 - self.uniform()).ln();
        if self.rng.next_u64() >> 63 == 0 {
            magnitude
        } else {
            -magnitude
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
