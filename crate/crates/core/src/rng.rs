//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a SplitMix64 mix of
//! `(seed, domain, index)`. Deriving independent streams per function and
//! per variant keeps generated artifacts identical regardless of how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier recorded in corpus headers and run manifests.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64";

pub type StreamRng = ChaCha8Rng;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit key for a named sub-stream.
pub fn derive_key(seed: u64, domain: &str, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for b in domain.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index))
}

pub fn stream(seed: u64, domain: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, domain, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut s1 = stream(7, "source", 3);
        let mut s2 = stream(7, "source", 3);
        let mut s3 = stream(7, "source", 4);
        let mut s4 = stream(7, "variant", 3);
        let x1: u64 = s1.gen();
        assert_eq!(x1, s2.gen::<u64>());
        assert_ne!(x1, s3.gen::<u64>());
        assert_ne!(x1, s4.gen::<u64>());
    }

    #[test]
    fn splitmix_known_value() {
        // first output of the reference SplitMix64 seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
