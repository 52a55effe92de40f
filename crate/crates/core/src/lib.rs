//! Mission planning for an underwater vehicle touring a drifting sensor
//! network under a battery budget.
//!
//! A route-level differential-evolution planner picks which stations to
//! visit; a leg-level one shapes B-spline paths through vortex currents and
//! around obstacles; the mission executor ties both together with reactive
//! replanning.

// `!(x > 0.0)` style checks are how NaN gets rejected during validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod de;
pub mod env;
pub mod global;
pub mod local;
pub mod mission;
pub mod network;
pub mod output;
pub mod rng;
pub mod scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
