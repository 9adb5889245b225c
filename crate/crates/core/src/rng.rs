//! Seed derivation.
//!
//! All randomness flows from a user seed through [`derive_seed`], keyed by the
//! coordinates of the item being produced (record index, epoch, batch, slot).
//! Work can then be split across any number of workers without changing a
//! single output byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of integer keys.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// A generator for the item addressed by `keys` under `seed`.
pub fn rng_for(seed: u64, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, keys))
}

/// FNV-1a, used to turn string identities into seed keys.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Picks `k` distinct indices out of `0..n` (partial Fisher-Yates), returned
/// in ascending order. `k >= n` returns every index without touching `rng`.
pub fn choose_indices<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    if k < n {
        for i in 0..k {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}
