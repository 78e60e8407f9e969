//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from ChaCha8 keyed by a `u64`
//! seed (expanded with `SeedableRng::seed_from_u64`) and a 64-bit stream id.
//! ChaCha is counter-based, so `(seed, stream)` pins the whole sequence on
//! every platform and independent work items never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under base seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs up to four small indices into a stream id.
///
/// Each component gets 16 bits; callers keep indices below 65536.
pub fn stream_id(tag: u16, a: u64, b: u64, c: u64) -> u64 {
    ((tag as u64) << 48) | ((a & 0xFFFF) << 32) | ((b & 0xFFFF) << 16) | (c & 0xFFFF)
}
