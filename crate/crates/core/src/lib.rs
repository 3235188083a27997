//! Online routing and scheduling inside a high-throughput satellite payload.
//!
//! A payload has `M` modem banks, each with one queue per priority class and
//! a buffer shared across classes. A weighted scheduler decides how much of
//! each module's service goes to each class; a router splits the incoming
//! traffic of every class across modules. Lost packets cost `k_p` each.
//!
//! The crate provides
//! - [`formulation`]: the routing problem as linear programs (batch with
//!   hindsight, static batch, cost-proportional, receding-horizon window),
//! - [`controllers`]: five policies built on those programs,
//! - [`plant`]: a fluid simulator that applies decisions to realized arrivals,
//! - [`harness`]: paired Monte-Carlo comparison and window sweeps,
//! - [`io`]: configuration parsing and result emission (JSON, CSV, SVG).

pub mod arrivals;
pub mod controllers;
pub mod domain;
pub mod formulation;
pub mod harness;
pub mod io;
pub mod lp;
pub mod plant;

pub use domain::{
    lambda_schedule, validate_config, ControlDecision, DemandTrajectory, PlantState,
    ScenarioConfig,
};
