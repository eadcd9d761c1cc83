//! Seeded random streams.
//!
//! Every trajectory, rollout or sweep cell gets its own ChaCha8 stream
//! derived from a master seed and a coordinate tuple, so results do not
//! depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix(seed), |acc, &c| mix(acc ^ mix(c.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Generator for stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 3).gen()).collect();
        let mut r = stream(7, 3);
        let b: u64 = r.gen();
        assert_eq!(a[0], b);
        let mut other = stream(7, 4);
        assert_ne!(b, other.gen::<u64>());
    }

    #[test]
    fn derived_seeds_depend_on_every_coordinate() {
        let base = derive_seed(1, &[2, 3]);
        assert_eq!(base, derive_seed(1, &[2, 3]));
        assert_ne!(base, derive_seed(1, &[3, 2]));
        assert_ne!(base, derive_seed(2, &[2, 3]));
        assert_ne!(base, derive_seed(1, &[2]));
    }
}
