//! Selective dual dispatch for emergency response.
//!
//! Edge travel times are learned from trip records, widened into a Burg
//! scenario set, and probed by a difference-of-convex search for the largest
//! arrival-time advantage any alternative path can have over the primary
//! route. A second unit is sent when that advantage exceeds a time threshold.

pub mod dca;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod netgraph;
pub mod nets;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod simworld;
pub mod training;

pub use error::{Error, Result};
