//! Closed queueing network model of a bike-sharing system.
//!
//! `NC` bikes circulate among `N` stations (capacity `K`) and the `N(N-1)`
//! directed roads between them. Bikes on a road are either on their first
//! trip (class 1) or have been redirected away from a full station (class 2).
//!
//! The crate enumerates the constrained state space, builds the routing
//! structure and CTMC generator, evaluates product-form stationary
//! distributions (under a literal and a standard convention), and checks
//! them against an exact CTMC solve and a discrete-event simulator.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ctmc;
pub mod desim;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod productform;
pub mod routing;
pub mod sparse;
pub mod statespace;
pub mod traffic;

pub use error::{Error, Result};
pub use model::{NetworkParams, Regime, ValidationReport};
pub use productform::{Convention, DistributionSource, StationaryDistribution};
pub use sparse::SparseTransitionMatrix;
pub use statespace::{NetworkState, StateSpace};
pub use traffic::VisitRatios;
