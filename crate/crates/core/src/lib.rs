//! Joint spectrum partitioning and licensing for tiered spectrum-access
//! markets.
//!
//! A regulator splits a band into `M` channels, auctions `P` of them as
//! licences and leaves the rest for opportunistic use. Operators then decide
//! whether to enter. This crate estimates expected utilisation and operator
//! revenue by Monte Carlo, resolves entry by iterated elimination of
//! dominated strategies, and grid-searches `(M, P)`.

pub mod allocation;
pub mod error;
pub mod experiments;
pub mod io;
pub mod market;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod stackelberg;

pub use error::{Error, Result};
pub use market::{MarketParams, MarketScenario, OperatorId, OperatorProfile, Osa};
