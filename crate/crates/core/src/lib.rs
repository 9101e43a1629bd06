//! Sign-perturbed sums confidence regions for linear regression.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bounds;
pub mod eoa;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod search;
pub mod special;
pub mod sps;

pub use eoa::{ellipsoid_size, eoa, least_squares, DualProblem, Ellipsoid};
pub use error::{Error, Result};
pub use model::{Dataset, InputSpec, NoiseSpec};
pub use rng::Stream;
pub use sps::{compute_sums, indicator, sps_initialize, SpsConfig};
