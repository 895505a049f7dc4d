//! Online rounding for capacitated resource allocation with stochastic
//! rewards.
//!
//! Users are fixed up front; resources arrive one per round according to a
//! known distribution. Each arriving resource can be given to a bounded
//! number of still-available users, and each allocation succeeds with a
//! known probability. The crate solves the online LP relaxation and rounds
//! it online with a two-proposal scheme that allocates every user with
//! probability a constant factor above one half of its LP mass.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod error;

pub mod allocator;
pub mod baselines;
pub mod diagnostics;
pub mod instance;
pub mod lp;
pub mod oracles;
pub mod pivotal;
pub mod sim;
pub mod util;

pub use error::{Error, Result};
