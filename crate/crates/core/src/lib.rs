//! Geometry-based stochastic channel simulation and user scheduling for the
//! massive MIMO uplink.
//!
//! The crate is organised around the life of one Monte Carlo trial:
//!
//! - [`scenario`] draws a *drop*: users, local/single/twin clusters, their
//!   visibility regions and correlated large-scale parameters.
//! - [`channel`] places multipath components inside clusters and assembles
//!   the complex `M x K` uplink channel on a uniform linear array.
//! - [`scheduler`] builds the geometry-only visibility matrix `V` and picks
//!   users with GUS (two variants), the full-CSI greedy baseline, or at random.
//! - [`receiver`] evaluates zero-forcing sum-rates and capacity expressions.
//! - [`localization`] models cluster-localization error through closed-form
//!   Cramer-Rao bounds and rebuilds a perturbed visibility matrix.
//! - [`harness`] runs deterministic, parallel sweeps and writes CSV tables.
//!
//! All randomness flows from counter-based substreams ([`rng`]) keyed by
//! `(seed, stream, index...)`, so results never depend on evaluation order or
//! thread count.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod receiver;
pub mod rng;
pub mod scenario;
pub mod scheduler;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use geometry::{Point3, SPEED_OF_LIGHT};
