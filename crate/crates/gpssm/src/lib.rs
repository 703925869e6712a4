//! Gaussian process state-space models with latent states, trained by
//! sparse variational inference, plus information-driven selection of
//! control inputs for closed-loop system identification.

pub mod acquisition;
pub mod elbo;
pub mod error;
pub mod grad;
pub mod harness;
pub mod kernels;
pub mod mi;
pub mod model;
pub mod numerics;
pub mod params;
pub mod seeds;
pub mod systems;

pub use error::{Error, Result};

// The book's code blocks compile and run as documentation tests, keeping
// the guide in sync with the crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/information.md")]
    mod information {}
    #[doc = include_str!("../../../book/src/exploring.md")]
    mod exploring {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
