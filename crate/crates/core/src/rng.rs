//! Named random substreams derived from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Init,
    Shuffle,
    Synth,
    Background,
}

impl Stream {
    fn tag(self) -> u64 {
        // FNV-1a of the stream name; stable across releases.
        let name: &[u8] = match self {
            Stream::Split => b"split",
            Stream::Init => b"init",
            Stream::Shuffle => b"shuffle",
            Stream::Synth => b"synth",
            Stream::Background => b"background",
        };
        name.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

pub fn substream_seed(seed: u64, stream: Stream) -> u64 {
    splitmix(seed ^ stream.tag())
}

pub fn substream(seed: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(substream_seed(seed, stream))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
