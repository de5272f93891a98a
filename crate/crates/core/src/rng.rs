//! Reproducible random streams.
//!
//! Every stochastic routine draws from a [`ChaCha8Rng`], a counter-based
//! generator. A stream is addressed by `(seed, label, replica)`:
//!
//! * the 256-bit key is expanded from `mix(seed, fnv1a(label))`, so distinct
//!   experiments sharing a user seed get unrelated keys;
//! * the replica index is the ChaCha stream id (nonce), giving 2⁶⁴
//!   independent substreams per key.
//!
//! A replica therefore sees the same numbers regardless of which worker runs
//! it or in which order, which is what makes results independent of the
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Root of a family of substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed {
    seed: u64,
    domain: u64,
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, domain: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent family for a named purpose.
    pub fn with_label(self, label: &str) -> Self {
        self.with_domain(fnv1a(label.as_bytes()))
    }

    /// Derives an independent family for a numeric sub-purpose
    /// (e.g. one per `(n, k)` cell of an experiment grid).
    pub fn with_domain(self, domain: u64) -> Self {
        Self {
            seed: self.seed,
            domain: splitmix64(self.domain ^ splitmix64(domain)),
        }
    }

    /// The generator for replica `replica`.
    pub fn stream(&self, replica: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ self.domain));
        rng.set_stream(replica);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
