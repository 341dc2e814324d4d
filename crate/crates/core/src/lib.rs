//! Robust revenue-optimal auctions under distribution shift.
//!
//! The crate covers probability metrics on finite supports, exact LP revenue oracles,
//! transforms that keep mechanisms approximately incentive compatible when the type
//! distribution moves, and learners for the distributions themselves.

pub mod dist;
pub mod error;
pub mod learn;
pub mod lpcore;
pub mod mech;
pub mod multi_item;
pub mod single_item;
pub mod valuation;

pub use error::{Error, Result};

/// Independent stream seed for sub-task `k` of a run seeded with `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
