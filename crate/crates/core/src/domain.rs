//! Scenario configuration and the value types shared by every stage of the
//! pipeline: demand trajectories, control decisions and plant state.
//!
//! Matrices are `ndarray::Array2<f64>`. Time-indexed matrices are `T x P`
//! (row = step, column = priority); per-step control and state matrices are
//! `M x P` (row = module, column = priority). Public functions that take a
//! step or priority index use the 1-based convention of the model
//! (`t in 1..=T`, `p in 1..=P`); storage is 0-based.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// All model and experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of modem banks (M).
    pub num_modules: usize,
    /// Number of priority classes (P).
    pub num_priorities: usize,
    /// Number of time steps (T).
    pub horizon: usize,
    /// MPC lookahead, in steps. The window holds exactly this many steps.
    pub window: usize,
    /// Cost per lost packet for each priority (k_p), nonincreasing in p.
    pub loss_costs: Vec<f64>,
    /// Per-module buffer shared by all priorities (Q̄), packets.
    pub queue_capacity: f64,
    /// Start and end occupancy of every queue (Q₀), packets.
    pub initial_queue: f64,
    /// Per-step bound on scheduler weight changes (Δw̄).
    pub max_weight_step: f64,
    /// Scheduler operation period (Δs); a weight w serves at most w/Δs packets per step.
    pub scheduler_period: f64,
    /// Output link capacity (C̄), packets per step.
    pub link_capacity: f64,
    /// Base arrival rate at the first step, before normalisation by k_p.
    pub lambda_start: f64,
    /// Base arrival rate at the last step.
    pub lambda_end: f64,
    /// Bound |Δw| instead of only the increase.
    pub ramp_two_sided: bool,
    /// Count packets left in the queues after the last step as losses.
    pub terminal_flush: bool,
    pub num_runs: usize,
    pub base_seed: u64,
    /// Physical step length (Δt). Metadata only; no equation reads it.
    pub time_step_duration: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_modules: 16,
            num_priorities: 3,
            horizon: 100,
            window: 10,
            loss_costs: vec![10.0, 4.0, 1.0],
            queue_capacity: 10.0,
            initial_queue: 0.0,
            max_weight_step: 0.1,
            scheduler_period: 0.1,
            link_capacity: 10.0,
            lambda_start: 10.0,
            lambda_end: 100.0,
            ramp_two_sided: true,
            terminal_flush: true,
            num_runs: 100,
            base_seed: 0x5EED_2024,
            time_step_duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    InvalidDimension,
    InvalidRange,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::InvalidDimension => f.write_str("invalid_dimension"),
            ViolationKind::InvalidRange => f.write_str("invalid_range"),
        }
    }
}

/// One broken configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub kind: ViolationKind,
    pub field: &'static str,
    pub detail: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.kind, self.field, self.detail)
    }
}

/// Every violation found in a configuration, in field order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub violations: Vec<ConfigViolation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn has(&self, kind: ViolationKind, field: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.kind == kind && v.field == field)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("index out of range: {name} = {value}, expected 1..={max}")]
pub struct IndexError {
    pub name: &'static str,
    pub value: usize,
    pub max: usize,
}

/// Checks every invariant of `config` and returns it unchanged when all hold.
pub fn validate_config(config: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut violations = Vec::new();
    let mut push = |kind, field, detail: String| {
        violations.push(ConfigViolation {
            kind,
            field,
            detail,
        })
    };
    use ViolationKind::*;

    for (field, value) in [
        ("num_modules", config.num_modules),
        ("num_priorities", config.num_priorities),
        ("horizon", config.horizon),
        ("window", config.window),
    ] {
        if value == 0 {
            push(InvalidDimension, field, "must be at least 1".into());
        }
    }

    if config.loss_costs.len() != config.num_priorities {
        push(
            InvalidDimension,
            "loss_costs",
            format!(
                "length {} does not match num_priorities {}",
                config.loss_costs.len(),
                config.num_priorities
            ),
        );
    }
    if config
        .loss_costs
        .iter()
        .any(|k| !k.is_finite() || *k <= 0.0)
    {
        push(InvalidRange, "loss_costs", "every cost must be positive and finite".into());
    } else if config.loss_costs.windows(2).any(|w| w[1] > w[0]) {
        push(InvalidRange, "loss_costs", "costs must be nonincreasing in priority".into());
    }

    let nonneg = |x: f64| x.is_finite() && x >= 0.0;
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !nonneg(config.queue_capacity) {
        push(InvalidRange, "queue_capacity", format!("{} is not >= 0", config.queue_capacity));
    }
    if !nonneg(config.initial_queue) {
        push(InvalidRange, "initial_queue", format!("{} is not >= 0", config.initial_queue));
    } else if nonneg(config.queue_capacity)
        && config.initial_queue * config.num_priorities as f64 > config.queue_capacity + 1e-12
    {
        push(
            InvalidRange,
            "initial_queue",
            format!(
                "initial_queue * num_priorities = {} exceeds queue_capacity {}",
                config.initial_queue * config.num_priorities as f64,
                config.queue_capacity
            ),
        );
    }
    if !(config.max_weight_step > 0.0 && config.max_weight_step <= 1.0) {
        push(InvalidRange, "max_weight_step", format!("{} is not in (0, 1]", config.max_weight_step));
    }
    if !positive(config.scheduler_period) {
        push(InvalidRange, "scheduler_period", format!("{} is not > 0", config.scheduler_period));
    }
    if !positive(config.link_capacity) {
        push(InvalidRange, "link_capacity", format!("{} is not > 0", config.link_capacity));
    }
    if !nonneg(config.lambda_start) {
        push(InvalidRange, "lambda_start", format!("{} is not >= 0", config.lambda_start));
    }
    if !nonneg(config.lambda_end) {
        push(InvalidRange, "lambda_end", format!("{} is not >= 0", config.lambda_end));
    }
    if config.num_runs == 0 {
        push(InvalidRange, "num_runs", "must be at least 1".into());
    }
    if !positive(config.time_step_duration) {
        push(
            InvalidRange,
            "time_step_duration",
            format!("{} is not > 0", config.time_step_duration),
        );
    }

    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError { violations })
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_config(self.clone()).map(|_| ())
    }

    /// Base rate Λ(t) for a 1-based step, interpolated linearly between the endpoints.
    pub fn base_rate(&self, t: usize) -> Result<f64, IndexError> {
        check_index("t", t, self.horizon)?;
        if self.horizon == 1 {
            return Ok(self.lambda_start);
        }
        let frac = (t - 1) as f64 / (self.horizon - 1) as f64;
        Ok(self.lambda_start + (self.lambda_end - self.lambda_start) * frac)
    }

    /// Weights of the cost-proportional benchmark, k_p / Σk.
    pub fn proportional_weights(&self) -> Vec<f64> {
        let total: f64 = self.loss_costs.iter().sum();
        self.loss_costs.iter().map(|k| k / total).collect()
    }

    /// `M x P` matrix filled with the initial queue occupancy.
    pub fn initial_queues(&self) -> Array2<f64> {
        Array2::from_elem((self.num_modules, self.num_priorities), self.initial_queue)
    }
}

fn check_index(name: &'static str, value: usize, max: usize) -> Result<(), IndexError> {
    if value == 0 || value > max {
        Err(IndexError { name, value, max })
    } else {
        Ok(())
    }
}

/// Arrival rate λ_p(t) = Λ(t) / k_p for 1-based `t` and `p`.
pub fn lambda_schedule(config: &ScenarioConfig, t: usize, p: usize) -> Result<f64, IndexError> {
    check_index("p", p, config.num_priorities)?;
    Ok(config.base_rate(t)? / config.loss_costs[p - 1])
}

/// Full `T x P` matrix of arrival rates.
pub fn rate_matrix(config: &ScenarioConfig) -> Array2<f64> {
    Array2::from_shape_fn((config.horizon, config.num_priorities), |(t, p)| {
        lambda_schedule(config, t + 1, p + 1).expect("indices in range")
    })
}

/// Realized demand `F_p(t)` and its expectation `F̂_p(t)`, both `T x P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTrajectory {
    pub realized: Array2<f64>,
    pub expected: Array2<f64>,
}

impl DemandTrajectory {
    pub fn horizon(&self) -> usize {
        self.realized.nrows()
    }

    /// FNV-1a digest of the realized matrix. Used to confirm that paired runs saw
    /// the same arrivals.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.realized.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Scheduler weights `w_p^m(t)` and planned inflow split `f_p^{in,m}(t)` for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub weights: Array2<f64>,
    pub inflow_plan: Array2<f64>,
}

impl ControlDecision {
    /// Equal weights on every priority and an even split of `totals` across modules.
    pub fn uniform(num_modules: usize, totals: &[f64]) -> Self {
        let p = totals.len();
        ControlDecision {
            weights: Array2::from_elem((num_modules, p), 1.0 / p as f64),
            inflow_plan: Array2::from_shape_fn((num_modules, p), |(_, j)| {
                totals[j] / num_modules as f64
            }),
        }
    }

    pub fn num_modules(&self) -> usize {
        self.weights.nrows()
    }
}

/// Queue occupancies `Q_p^m(t)` and the weights implemented at the previous step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub queues: Array2<f64>,
    /// `None` before the first decision.
    pub last_weights: Option<Array2<f64>>,
}

impl PlantState {
    pub fn initial(config: &ScenarioConfig) -> Self {
        PlantState {
            queues: config.initial_queues(),
            last_weights: None,
        }
    }

    /// True when every module holds the same queues and last weights, to `tol`.
    pub fn is_module_symmetric(&self, tol: f64) -> bool {
        rows_identical(&self.queues, tol)
            && self
                .last_weights
                .as_ref()
                .is_none_or(|w| rows_identical(w, tol))
    }
}

pub(crate) fn rows_identical(a: &Array2<f64>, tol: f64) -> bool {
    let first = a.row(0);
    a.rows()
        .into_iter()
        .skip(1)
        .all(|r| r.iter().zip(first.iter()).all(|(x, y)| (x - y).abs() <= tol))
}
