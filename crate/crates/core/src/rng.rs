//! Named derivation of independent random streams from one root seed.
//!
//! Every random draw in the pipeline comes from a stream keyed by
//! `(root, component, replicate, coordinate)`, so parallel workers never
//! share generator state and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a component label and two indices.
pub fn derive_seed(root: u64, component: &str, replicate: u64, coordinate: u64) -> u64 {
    // FNV-1a over the label, then three rounds of splitmix.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = splitmix64(root ^ h);
    s = splitmix64(s ^ replicate.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(s ^ coordinate.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream(root: u64, component: &str, replicate: u64, coordinate: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, component, replicate, coordinate))
}
