//! Dense (random linear) network codes over line networks.
//!
//! The crate replays GF(2) random linear network codes over sampled traffic
//! on a tandem of links, measures coding delay, and evaluates the closed-form
//! rank, density and delay bounds those codes are known to satisfy.
//!
//! - [`gf2`]: bit-packed vectors, matrices and an online rank tracker.
//! - [`rank_laws`]: structured random matrices, their rank-deficiency bounds,
//!   Monte Carlo and exact estimators.
//! - [`traffic`]: regular/Poisson schedules with lossless/Bernoulli links.
//! - [`dense_code`]: the session engine.
//! - [`delay_stats`]: coding-delay quantiles and confidence bounds.
//! - [`bounds`]: closed-form delay and density bounds.

pub mod bounds;
pub mod delay_stats;
pub mod dense_code;
pub mod error;
pub mod gf2;
pub mod rank_laws;
pub mod seed;
pub mod traffic;

pub use error::{Error, Result};
pub use gf2::{BitMatrix, BitVector, EchelonBasis, RankTracker};
