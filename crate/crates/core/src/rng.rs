//! Named random streams derived from one master seed.
//!
//! Every stochastic component draws from its own ChaCha stream so that adding
//! a consumer never perturbs the numbers seen by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stream `name` of the generator seeded with `master`.
pub fn stream(master: u64, name: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Stream `name` number `index`, e.g. one per replicate or fold.
pub fn indexed_stream(master: u64, name: &str, index: u64) -> SimRng {
    let mut key = name.as_bytes().to_vec();
    key.push(0);
    key.extend_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(&key));
    rng
}

/// A fresh 64-bit seed drawn from a named stream, for handing to a child
/// computation that derives its own streams.
pub fn child_seed(master: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    indexed_stream(master, name, index).next_u64()
}
