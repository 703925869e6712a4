//! Deterministic derivation of child seeds from a master seed.
//!
//! Every stochastic component owns a stream derived from `(seed, tag)`, so
//! whole experiments replay bit-for-bit from one master seed.

/// splitmix64 finalizer over the combined seed and tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed tags keep independent streams from colliding.
pub mod tags {
    pub const ELBO_SAMPLE: u64 = 1;
    pub const TRAIN_EPOCH: u64 = 2;
    pub const TRAIN_EVAL: u64 = 3;
    pub const MI_SAMPLE: u64 = 4;
    pub const SESSION_STEP: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const INIT_DATA: u64 = 7;
    pub const OBSERVE: u64 = 8;
    pub const INDUCING: u64 = 9;
    pub const PREDICT: u64 = 10;
    pub const OPTIMIZER: u64 = 11;
}

/// Tag plus index, for per-item streams.
pub fn derive_indexed(seed: u64, tag: u64, index: u64) -> u64 {
    derive(derive(seed, tag), index.wrapping_add(1))
}
