//! The two mutual-information estimators used to score candidate controls:
//! a moment-matching recursion for the latest observation ([`latest`]) and
//! a sample-based bound over the whole sequence ([`total`]).

pub mod latest;
pub mod total;

pub use latest::{init_belief, latest_mi, propagate, MomentBelief, MomentPropagator};
pub use total::{per_sample_bound, total_mi, TotalMiEstimate, TotalMiScorer};
