//! Transductive semi-supervised open set classification.
//!
//! The pipeline pre-trains an in-class model `f`, filters the most distinct
//! out-of-class instances of an unlabeled test pool under a super-class, and
//! re-trains a classifier `g` over known classes plus that super-class with
//! pseudo-labeling, weak-augmentation consistency and distillation from `f`.
//! The incremental extension replays a bounded exemplar memory to update `f`
//! window by window on a stream where unknown classes keep arriving.

pub mod cluster;
pub mod data;
pub mod error;
pub mod filter;
pub mod incremental;
pub mod metrics;
pub mod nn;
pub mod runner;
pub mod ssl;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Ground-truth class identifier as stored in the dataset.
pub type ClassId = u32;

/// Unique identifier of an instance within a dataset.
pub type InstanceId = u64;

/// A non-fatal condition recorded by an operation instead of failing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        let warning = Self {
            code: code.to_owned(),
            message: message.into(),
        };
        log::warn!("{}: {}", warning.code, warning.message);
        warning
    }
}

pub(crate) type Rng = rand_chacha::ChaCha8Rng;

/// Deterministic generator for a seed. Every random draw in the crate flows through this.
pub(crate) fn seeded(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer over `seed ^ tag`).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
