//! Ground-truth engines for small instances: the optimum online value, the
//! exact law of the two-proposal scheme, and a Monte-Carlo offline optimum.

mod exact;
mod offline;
mod opt_online;

pub use exact::{exact_report, exact_report_for_plan, ExactReport, EXACT_MAX_ROUNDS, EXACT_MAX_USERS};
pub use offline::{opt_offline_estimate, OfflineEstimate, ENUMERATION_MAX_USERS};
pub use opt_online::{opt_online, opt_online_with, opt_online_work, OptOnlineValue, DEFAULT_OPT_BUDGET, OPT_MAX_USERS};
