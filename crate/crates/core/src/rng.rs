//! Seeded random substreams.
//!
//! Every random decision in the crate is drawn from a ChaCha8 generator keyed
//! by the run seed, a named [`Stream`], and an optional index (node id, walk
//! round, ...). ChaCha output is platform independent, so a seed reproduces the
//! same splits, initializations and walks everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Splits = 1,
    Init = 2,
    Walks = 3,
    NegativeSampling = 4,
    SynthLabels = 5,
    SynthGraph = 6,
    SynthFeatures = 7,
    WalkOrder = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    indexed_substream(seed, stream, 0)
}

/// Generator for item `index` of `stream` under `seed`.
pub fn indexed_substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(index.wrapping_add(0x5151)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream as u64);
    rng
}
