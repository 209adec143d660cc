//! Storage arbitrage value functions, chance-constrained dispatch bounds on
//! the marginal value of stored energy, and an agent-based market loop that
//! measures what disclosing those bounds does to cost and storage profit.
//!
//! Module map:
//! - [`system`]: network, fleets, netload uncertainty and validation.
//! - [`price`]: real-time price scenarios and the Markov price model.
//! - [`sdp`]: value-function training, price-taker policy and bids.
//! - [`qp`]: convex QP interface and the interior-point backend.
//! - [`ced`]: chance-constrained economic dispatch, duals and bounds.
//! - [`adjust`]: interval bisection against a bound and bid capping.
//! - [`sim`]: day-ahead / real-time experiment loop and metrics.
//! - [`config`]: JSON system documents with CSV sidecars.

pub mod adjust;
pub mod ced;
pub mod config;
pub mod csvfmt;
mod error;
pub mod price;
pub mod qp;
pub mod rng;
pub mod sdp;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
