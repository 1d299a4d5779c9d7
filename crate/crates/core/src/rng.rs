//! Seeded random substreams.
//!
//! One run seed fans out into independent named streams so that, say,
//! enabling the fusion stage does not perturb parameter initialisation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named consumers of randomness within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Alpha,
    Adversarial,
    Shuffle,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Init => 2,
            Stream::Alpha => 3,
            Stream::Adversarial => 4,
            Stream::Shuffle => 5,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Stream keyed by an arbitrary label, e.g. a parameter-group name.
pub fn labelled(seed: u64, stream: Stream, label: &str) -> Rng {
    // FNV-1a keeps the mapping stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    rng.set_stream(stream.id());
    rng
}
