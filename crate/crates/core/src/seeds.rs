//! Named-stream seed derivation.
//!
//! All randomness in the pipeline flows from one base seed. Each consumer
//! derives its own stream from `(base_seed, stream name)`, so partial
//! re-runs of a stage reproduce exactly the same draws regardless of what
//! ran before it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the bytes, then a splitmix64 finalizer for dispersion.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a stream name such as
/// `"eval/toronto/Area info/2016/rep3"`.
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + stream.len());
    buf.extend_from_slice(&base.to_le_bytes());
    buf.extend_from_slice(stream.as_bytes());
    splitmix64(fnv1a64(&buf))
}

/// Deterministic RNG for a named stream.
pub fn stream_rng(base: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

/// Short stable hex digest of arbitrary text, used to stamp artifacts with
/// the configuration that produced them.
pub fn digest_hex(text: &str) -> String {
    let h1 = fnv1a64(text.as_bytes());
    let h2 = splitmix64(h1 ^ 0xa5a5a5a5a5a5a5a5);
    format!("{:016x}{:016x}", splitmix64(h1), h2)
}
