//! Paired Monte-Carlo comparison of policies.
//!
//! Run `i` draws one demand realization from `(base_seed, i)` and every method
//! is rolled out against it, so differences between methods are never due to
//! different luck. Runs execute in parallel; results are collected by run
//! index and reduced in that order.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arrivals::{generate_demands, ArrivalError};
use crate::controllers::{PolicyKind, SolveMode};
use crate::domain::{ConfigError, ScenarioConfig};
use crate::plant::{check_invariants, rollout, InvariantReport, RolloutError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no methods requested")]
    NoMethods,
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("run {run}: {source}")]
    Arrivals {
        run: u64,
        #[source]
        source: ArrivalError,
    },
    #[error("run {run}: {source}")]
    Rollout {
        run: u64,
        #[source]
        source: RolloutError,
    },
}

impl HarnessError {
    /// True when the failure came from an LP solve rather than from the inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, HarnessError::Rollout { .. })
    }
}

/// Per-step series of one (run, method) pair, each `T x P` and summed over modules.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub run: u64,
    pub loss: Array2<f64>,
    pub outflow: Array2<f64>,
    pub queue: Array2<f64>,
    pub cost: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: String,
    pub mean_cost: f64,
    /// Sample standard deviation (n - 1) of the per-run costs.
    pub std_cost: f64,
    pub run_costs: Vec<f64>,
    /// LP objective per run, for the offline policies.
    pub lp_objectives: Vec<Option<f64>>,
    pub mean_loss: Array2<f64>,
    pub mean_outflow: Array2<f64>,
    pub mean_queue: Array2<f64>,
    /// Mean running total of the loss cost after each step.
    pub mean_cumulative_cost: Array1<f64>,
    pub invariants: InvariantReport,
    pub series: Vec<RunSeries>,
}

impl MethodMetrics {
    pub fn standard_error(&self) -> f64 {
        self.std_cost / (self.run_costs.len() as f64).sqrt()
    }
}

/// Percentage gaps of every method over the hindsight baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GapTable {
    /// `100 (cost - baseline) / baseline` per method.
    Percent { gaps: Vec<(String, f64)> },
    /// The baseline cost is zero; `cost - baseline` per method instead.
    ZeroBaseline { absolute: Vec<(String, f64)> },
}

impl GapTable {
    /// Percentage gap of `method`. Under a zero baseline only methods that
    /// match it exactly have a defined gap, which is 0.
    pub fn percent(&self, method: &str) -> Option<f64> {
        match self {
            GapTable::Percent { gaps } => gaps.iter().find(|(m, _)| m == method).map(|g| g.1),
            GapTable::ZeroBaseline { absolute } => absolute
                .iter()
                .find(|(m, _)| m == method)
                .and_then(|g| (g.1.abs() <= ZERO_BASELINE_TOL).then_some(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("missing_baseline: {0} is not among the methods")]
pub struct MissingBaseline(pub String);

/// Baseline costs at or below this are treated as zero.
pub const ZERO_BASELINE_TOL: f64 = 1e-9;

/// Gaps on mean cost relative to `batch_hindsight`.
pub fn compute_gaps(mean_costs: &[(String, f64)]) -> Result<GapTable, MissingBaseline> {
    let baseline_label = PolicyKind::BatchHindsight.label();
    let baseline = mean_costs
        .iter()
        .find(|(m, _)| *m == baseline_label)
        .map(|(_, c)| *c)
        .ok_or(MissingBaseline(baseline_label))?;
    Ok(if baseline.abs() <= ZERO_BASELINE_TOL {
        GapTable::ZeroBaseline {
            absolute: mean_costs.iter().map(|(m, c)| (m.clone(), c - baseline)).collect(),
        }
    } else {
        GapTable::Percent {
            gaps: mean_costs
                .iter()
                .map(|(m, c)| (m.clone(), 100.0 * (c - baseline) / baseline))
                .collect(),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub config: ScenarioConfig,
    pub methods: Vec<MethodMetrics>,
    /// Mean realized arrivals, `T x P` totals over modules.
    pub mean_inflow: Array2<f64>,
    /// Realized arrivals of run 0.
    pub sample_inflow: Array2<f64>,
    /// Digest of each run's realized demand, in run order.
    pub demand_digests: Vec<u64>,
    /// `None` when `batch_hindsight` was not among the methods.
    pub gaps: Option<GapTable>,
}

impl AggregateMetrics {
    pub fn method(&self, label: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == label)
    }

    pub fn num_runs(&self) -> usize {
        self.demand_digests.len()
    }

    pub fn total_invariant_violations(&self) -> usize {
        self.methods.iter().map(|m| m.invariants.violations).sum()
    }
}

struct RunResult {
    inflow: Array2<f64>,
    digest: u64,
    per_method: Vec<(f64, Option<f64>, RunSeries, InvariantReport)>,
}

fn run_once(
    config: &ScenarioConfig,
    methods: &[PolicyKind],
    run: u64,
    mode: SolveMode,
) -> Result<RunResult, HarnessError> {
    let demands =
        generate_demands(config, run).map_err(|source| HarnessError::Arrivals { run, source })?;
    let mut per_method = Vec::with_capacity(methods.len());
    for &kind in methods {
        let traj = rollout(config, kind, &demands, run, mode)
            .map_err(|source| HarnessError::Rollout { run, source })?;
        debug_assert_eq!(traj.demand_digest, demands.digest());
        let series = RunSeries {
            run,
            loss: traj.loss_series(),
            outflow: traj.outflow_series(),
            queue: traj.queue_series(),
            cost: traj.cost_series(&config.loss_costs),
        };
        per_method.push((
            traj.cumulative_cost,
            traj.lp_objective,
            series,
            check_invariants(config, &traj),
        ));
    }
    Ok(RunResult {
        inflow: demands.realized.clone(),
        digest: demands.digest(),
        per_method,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn mean_of<'a>(items: impl Iterator<Item = &'a Array2<f64>>, n: usize) -> Array2<f64> {
    let mut acc: Option<Array2<f64>> = None;
    for a in items {
        acc = Some(match acc {
            Some(s) => s + a,
            None => a.clone(),
        });
    }
    acc.map(|s| s / n as f64).unwrap_or_else(|| Array2::zeros((0, 0)))
}

/// Runs every method on `config.num_runs` shared demand realizations.
pub fn run_monte_carlo(
    config: &ScenarioConfig,
    methods: &[PolicyKind],
) -> Result<AggregateMetrics, HarnessError> {
    run_monte_carlo_with(config, methods, SolveMode::default())
}

pub fn run_monte_carlo_with(
    config: &ScenarioConfig,
    methods: &[PolicyKind],
    mode: SolveMode,
) -> Result<AggregateMetrics, HarnessError> {
    config.validate()?;
    if methods.is_empty() {
        return Err(HarnessError::NoMethods);
    }
    if methods.iter().any(|m| m.window() == Some(0)) {
        return Err(HarnessError::ZeroWindow);
    }
    let results: Vec<RunResult> = (0..config.num_runs as u64)
        .into_par_iter()
        .map(|run| run_once(config, methods, run, mode))
        .collect::<Result<_, _>>()?;

    let n = results.len();
    let mean_inflow = mean_of(results.iter().map(|r| &r.inflow), n);
    let sample_inflow = results.first().map(|r| r.inflow.clone()).unwrap_or_else(|| Array2::zeros((0, 0)));
    let demand_digests = results.iter().map(|r| r.digest).collect();

    let mut metrics = Vec::with_capacity(methods.len());
    for (i, kind) in methods.iter().enumerate() {
        let run_costs: Vec<f64> = results.iter().map(|r| r.per_method[i].0).collect();
        let lp_objectives = results.iter().map(|r| r.per_method[i].1).collect();
        let series: Vec<RunSeries> = results.iter().map(|r| r.per_method[i].2.clone()).collect();
        let mut invariants = InvariantReport::default();
        for r in &results {
            invariants.merge(&r.per_method[i].3);
        }
        let (mean_cost, std_cost) = mean_std(&run_costs);
        let mean_cost_series = mean_of(series.iter().map(|s| &s.cost), n);
        let mut running = 0.0;
        let mean_cumulative_cost = mean_cost_series
            .rows()
            .into_iter()
            .map(|r| {
                running += r.sum();
                running
            })
            .collect();
        metrics.push(MethodMetrics {
            method: kind.label(),
            mean_cost,
            std_cost,
            run_costs,
            lp_objectives,
            mean_loss: mean_of(series.iter().map(|s| &s.loss), n),
            mean_outflow: mean_of(series.iter().map(|s| &s.outflow), n),
            mean_queue: mean_of(series.iter().map(|s| &s.queue), n),
            mean_cumulative_cost,
            invariants,
            series,
        });
    }
    let means: Vec<(String, f64)> = metrics.iter().map(|m| (m.method.clone(), m.mean_cost)).collect();
    Ok(AggregateMetrics {
        config: config.clone(),
        methods: metrics,
        mean_inflow,
        sample_inflow,
        demand_digests,
        gaps: compute_gaps(&means).ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub window: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    #[serde(skip)]
    pub run_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDifference {
    pub smaller: usize,
    pub larger: usize,
    /// `100 (cost(smaller) - cost(larger)) / cost(larger)`; `None` when the
    /// larger window costs nothing.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSweep {
    pub rows: Vec<SweepRow>,
    pub differences: Vec<PairDifference>,
    #[serde(skip)]
    pub metrics: AggregateMetrics,
}

impl WindowSweep {
    pub fn row(&self, window: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.window == window)
    }
}

/// Mean MPC cost for each window on the same realizations, with the relative
/// difference of every pair of windows.
pub fn sweep_window(config: &ScenarioConfig, windows: &[usize]) -> Result<WindowSweep, HarnessError> {
    sweep_window_with(config, windows, SolveMode::default())
}

pub fn sweep_window_with(
    config: &ScenarioConfig,
    windows: &[usize],
    mode: SolveMode,
) -> Result<WindowSweep, HarnessError> {
    let mut ws = windows.to_vec();
    ws.sort_unstable();
    ws.dedup();
    if ws.first() == Some(&0) {
        return Err(HarnessError::ZeroWindow);
    }
    let methods: Vec<PolicyKind> = ws.iter().map(|&w| PolicyKind::Mpc(w)).collect();
    let metrics = run_monte_carlo_with(config, &methods, mode)?;
    let rows: Vec<SweepRow> = ws
        .iter()
        .zip(&metrics.methods)
        .map(|(&window, m)| SweepRow {
            window,
            mean_cost: m.mean_cost,
            std_cost: m.std_cost,
            run_costs: m.run_costs.clone(),
        })
        .collect();
    let mut differences = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            differences.push(PairDifference {
                smaller: a.window,
                larger: b.window,
                percent: (b.mean_cost != 0.0)
                    .then(|| 100.0 * (a.mean_cost - b.mean_cost) / b.mean_cost),
            });
        }
    }
    Ok(WindowSweep {
        rows,
        differences,
        metrics,
    })
}
