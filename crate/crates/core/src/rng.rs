//! Reproducible random streams.
//!
//! A [`StreamSeed`] is a root seed plus a stream id. The root seed keys a
//! ChaCha8 generator and the stream id selects one of its 2^64 independent
//! streams. Child streams are derived by hashing `(stream, index)` with
//! SplitMix64, so a job tree of any shape maps to distinct streams and the
//! output of a job depends only on its position in the tree, never on which
//! worker thread ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub root: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub fn new(root: u64) -> Self {
        StreamSeed { root, stream: 0 }
    }

    /// Derived stream for sub-job `index`.
    pub fn child(self, index: u64) -> Self {
        let mixed = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)));
        StreamSeed {
            root: self.root,
            stream: mixed,
        }
    }

    pub fn rng(self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for StreamSeed {
    fn from(root: u64) -> Self {
        StreamSeed::new(root)
    }
}

/// Replicas per parallel work unit. Chunk `c` draws from `seed.child(c)`.
pub const CHUNK: usize = 64;

/// Run `f(rng, i)` for `i in 0..n` on the rayon pool. Replica `i` runs in
/// chunk `i / CHUNK` on that chunk's stream, so the output (and the first
/// error, in index order) does not depend on the number of threads.
pub fn replicate<T, F>(n: usize, seed: StreamSeed, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> Result<T> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.child(c as u64).rng();
            (c * CHUNK..((c + 1) * CHUNK).min(n)).map(|i| f(&mut rng, i)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Run `f(seed.child(i), i)` for `i in 0..k` on the rayon pool, for jobs
/// that are each long-running (one Markov chain, one report cell).
pub fn par_jobs<T, F>(k: usize, seed: StreamSeed, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(StreamSeed, usize) -> Result<T> + Sync,
{
    let out: Vec<Result<T>> = (0..k).into_par_iter().map(|i| f(seed.child(i as u64), i)).collect();
    out.into_iter().collect()
}
