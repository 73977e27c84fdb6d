//! Rate-splitting multiple access for uplink users under proportional-rate
//! constraints: capacity-region arithmetic, decoding-order recovery, user
//! pairing, the conventional baselines and a Monte Carlo driver.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod exec;
pub mod montecarlo;
pub mod pairing;
pub mod rate_region;
pub mod rsma;
pub mod scenario;
pub mod special;

pub use error::{Error, Result};
pub use exec::Exec;
pub use scenario::{Scenario, UserParams};
