//! Stage-namespaced deterministic randomness.
//!
//! Every draw comes from a ChaCha8 stream keyed by (seed, stage) with a
//! caller-chosen substream. Streams are independent counters, so a stage's
//! results never depend on scheduling or on how much randomness another
//! stage (or another ray) consumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Track,
    Train,
    Segment,
    Render,
    Export,
    Eval,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Synth => 0x73796e74,
            Stage::Track => 0x7472636b,
            Stage::Train => 0x7472616e,
            Stage::Segment => 0x7365676d,
            Stage::Render => 0x726e6472,
            Stage::Export => 0x6578706f,
            Stage::Eval => 0x6576616c,
        }
    }
}

/// SplitMix64 finalizer; used to decorrelate substream ids.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Generator for `(seed, stage, substream)`.
pub fn stream(seed: u64, stage: Stage, substream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stage.tag().to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(seed ^ stage.tag()).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(substream);
    rng
}

/// Generator for a two-part substream id (e.g. step and ray index).
pub fn stream2(seed: u64, stage: Stage, a: u64, b: u64) -> ChaCha8Rng {
    stream(seed, stage, splitmix64(a).wrapping_add(b))
}
