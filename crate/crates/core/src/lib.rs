//! Core of the `seqrand` toolkit: losses, Gibbs posteriors, variance
//! functions, sequential randomized aggregation and minimax lower bounds.
//!
//! The crate is `no_std` and only needs `alloc`. Randomness is injected
//! through [`rand_core::RngCore`].

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aggregators;
pub mod distribution;
pub mod error;
pub mod gibbs;
pub mod losses;
pub mod math;
pub mod minimax;
pub mod rng;
pub mod variance;

pub use error::{Error, Result};
pub use distribution::DiscreteDistribution;
pub use gibbs::{ExpertTable, LogWeights, Outcome};
pub use losses::{Interval, LossKind, LossSpec};
pub use minimax::{Hypercube, Preset};
