//! Counter-based random streams.
//!
//! Every replicate draws from its own ChaCha8 stream, keyed by the master seed
//! and a purpose tag and indexed by the replicate number. A replicate's draws
//! therefore never depend on which worker ran it or in what order, and the
//! aggregates built by [`chunked`] are bit-identical for any thread count.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Replicates per work unit. Fixed so chunk boundaries never depend on the pool.
pub const CHUNK: u64 = 4096;

/// Key for a family of replicate streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Streams {
    key: [u8; 32],
}

impl Streams {
    pub fn new(seed: u64, purpose: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(purpose.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Streams { key }
    }

    /// Derive an independent family, e.g. one per scenario.
    pub fn child(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Streams { key }
    }

    #[inline]
    pub fn replicate(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Run `work` over `[0, n)` in fixed-size chunks and return the per-chunk
/// results in index order.
pub fn chunked<T, F>(n: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            work(start..(start + CHUNK).min(n))
        })
        .collect()
}

/// Size of the worker pool used by [`chunked`].
pub fn worker_threads() -> usize {
    rayon::current_num_threads()
}

/// Neumaier-compensated sum, used when folding per-chunk floating totals.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
