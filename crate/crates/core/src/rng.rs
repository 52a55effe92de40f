//! Seeded random streams.
//!
//! Every stochastic component draws from its own stream, derived from one
//! master seed by a fixed label. Adding or removing draws in one stream does
//! not shift any other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const STREAM_ENV: &str = "env";
pub const STREAM_NETWORK: &str = "network";
pub const STREAM_DE_GLOBAL: &str = "de-global";
pub const STREAM_DE_LOCAL: &str = "de-local";
pub const STREAM_MISSION: &str = "mission";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of the stream named `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a(label)))
}

/// Seed of the `index`-th child of a stream (restarts, per-plan DE runs).
pub fn child_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn stream(master: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
