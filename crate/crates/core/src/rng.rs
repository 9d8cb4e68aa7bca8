//! Counter-based random substreams.
//!
//! Every random draw in a simulation is taken from a ChaCha8 stream whose key
//! is derived from the drop seed plus a path of indices (stream tag, entity
//! index, ...). Two calls with the same path always see the same numbers no
//! matter which thread runs them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type RandomStream = ChaCha8Rng;

/// Tags separating the independent uses of randomness within one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Users = 1,
    VrCount = 2,
    Cluster = 3,
    Lsp = 4,
    Mpc = 5,
    Fading = 6,
    Scheduler = 7,
    LocalizationError = 8,
    DropSeed = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed and index path into a single 64-bit key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Open the substream for `seed` and `path`.
pub fn substream(seed: u64, stream: Stream, path: &[u64]) -> RandomStream {
    let mut key = derive_key(seed, &[stream as u64]);
    key = derive_key(key, path);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(key ^ (i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Seed of drop `trial` at sweep point `point` under a master seed.
pub fn drop_seed(master: u64, point: u64, trial: u64) -> u64 {
    derive_key(master, &[Stream::DropSeed as u64, point, trial])
}
