//! Ground-truth fluid simulator.
//!
//! Each step runs, in order: arrivals (realized totals split by the plan),
//! greedy service up to each weight cap, then buffer overflow drops that take
//! the cheapest priority first. Losses therefore only happen at overflow and,
//! when enabled, when the horizon ends with packets still queued.

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::controllers::{decide_offline, decide_step_mpc, ControlError, PolicyKind, SolveMode};
use crate::domain::{ControlDecision, DemandTrajectory, PlantState, ScenarioConfig};

/// Slack allowed by [`check_invariants`].
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub inflows: Array2<f64>,
    pub outflows: Array2<f64>,
    pub losses: Array2<f64>,
    pub step_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub method: String,
    pub run_index: u64,
    pub steps: Vec<StepOutcome>,
    /// State after each step, before any terminal flush.
    pub states: Vec<PlantState>,
    /// Occupancy converted to losses after the last step (zero when disabled).
    pub flush_losses: Array2<f64>,
    pub flush_cost: f64,
    pub cumulative_cost: f64,
    /// Objective of the LP an offline policy replays.
    pub lp_objective: Option<f64>,
    /// Digest of the realized demand the run was driven by.
    pub demand_digest: u64,
}

fn per_priority(a: &Array2<f64>) -> Vec<f64> {
    a.sum_axis(Axis(0)).to_vec()
}

impl RunTrajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// `T x P` losses summed over modules; the flush is booked at the last step.
    pub fn loss_series(&self) -> Array2<f64> {
        let mut out = self.stack(|s| per_priority(&s.losses));
        if let Some(mut last) = out.axis_iter_mut(Axis(0)).last() {
            last += &self.flush_losses.sum_axis(Axis(0));
        }
        out
    }

    pub fn outflow_series(&self) -> Array2<f64> {
        self.stack(|s| per_priority(&s.outflows))
    }

    pub fn inflow_series(&self) -> Array2<f64> {
        self.stack(|s| per_priority(&s.inflows))
    }

    /// `T x P` post-step occupancy summed over modules (before the flush).
    pub fn queue_series(&self) -> Array2<f64> {
        let p = self.flush_losses.ncols();
        let mut out = Array2::zeros((self.states.len(), p));
        for (t, s) in self.states.iter().enumerate() {
            out.row_mut(t).assign(&s.queues.sum_axis(Axis(0)));
        }
        out
    }

    /// `T x P` loss cost, `k_p` times [`RunTrajectory::loss_series`].
    pub fn cost_series(&self, loss_costs: &[f64]) -> Array2<f64> {
        let mut c = self.loss_series();
        for mut row in c.rows_mut() {
            for (v, k) in row.iter_mut().zip(loss_costs) {
                *v *= k;
            }
        }
        c
    }

    fn stack(&self, f: impl Fn(&StepOutcome) -> Vec<f64>) -> Array2<f64> {
        let p = self.flush_losses.ncols();
        let mut out = Array2::zeros((self.steps.len(), p));
        for (t, s) in self.steps.iter().enumerate() {
            out.row_mut(t).assign(&ndarray::Array1::from(f(s)));
        }
        out
    }
}

/// Splits realized per-priority totals across modules in proportion to the
/// planned split; a priority with no planned inflow is spread evenly.
pub fn split_inflow(planned: ArrayView2<'_, f64>, realized: &[f64]) -> Array2<f64> {
    let (nm, np) = planned.dim();
    let mut out = Array2::zeros((nm, np));
    for p in 0..np {
        let col = planned.column(p);
        let total: f64 = col.iter().map(|x| x.max(0.0)).sum();
        for m in 0..nm {
            out[[m, p]] = if total > 1e-12 {
                realized[p] * col[m].max(0.0) / total
            } else {
                realized[p] / nm as f64
            };
        }
    }
    out
}

/// Priority indices in drop order: cheapest first, ties to the larger index.
fn drop_order(loss_costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..loss_costs.len()).collect();
    order.sort_by(|&a, &b| loss_costs[a].total_cmp(&loss_costs[b]).then(b.cmp(&a)));
    order
}

/// Removes the excess over `capacity` from `queues`, cheapest priority first,
/// and returns the dropped amounts.
pub fn enforce_capacity(queues: &mut [f64], capacity: f64, loss_costs: &[f64]) -> Vec<f64> {
    let mut dropped = vec![0.0; queues.len()];
    let mut excess = queues.iter().sum::<f64>() - capacity;
    for p in drop_order(loss_costs) {
        if excess <= 0.0 {
            break;
        }
        let d = excess.min(queues[p]);
        queues[p] -= d;
        dropped[p] += d;
        excess -= d;
    }
    dropped
}

/// Applies one decision to realized arrivals.
pub fn step(
    state: &PlantState,
    decision: &ControlDecision,
    realized: &[f64],
    config: &ScenarioConfig,
) -> (PlantState, StepOutcome) {
    let inflows = split_inflow(decision.inflow_plan.view(), realized);
    let (nm, np) = inflows.dim();
    let mut outflows = Array2::zeros((nm, np));
    let mut queues = Array2::zeros((nm, np));
    let mut losses = Array2::zeros((nm, np));
    for m in 0..nm {
        for p in 0..np {
            let available = state.queues[[m, p]] + inflows[[m, p]];
            let cap = (decision.weights[[m, p]] / config.scheduler_period).min(config.link_capacity);
            let out = cap.max(0.0).min(available);
            outflows[[m, p]] = out;
            queues[[m, p]] = (available - out).max(0.0);
        }
        let mut row = queues.row(m).to_vec();
        let dropped = enforce_capacity(&mut row, config.queue_capacity, &config.loss_costs);
        for p in 0..np {
            queues[[m, p]] = row[p];
            losses[[m, p]] = dropped[p];
        }
    }
    let step_cost = weighted_total(&losses, &config.loss_costs);
    (
        PlantState {
            queues,
            last_weights: Some(decision.weights.clone()),
        },
        StepOutcome {
            inflows,
            outflows,
            losses,
            step_cost,
        },
    )
}

fn weighted_total(a: &Array2<f64>, loss_costs: &[f64]) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().zip(loss_costs).map(|(x, k)| x * k).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{method} failed at step {step}: {source}")]
pub struct RolloutError {
    pub method: String,
    pub step: usize,
    #[source]
    pub source: ControlError,
}

/// Drives the plant through the whole horizon under `policy`.
pub fn rollout(
    config: &ScenarioConfig,
    policy: PolicyKind,
    demands: &DemandTrajectory,
    run_index: u64,
    mode: SolveMode,
) -> Result<RunTrajectory, RolloutError> {
    let method = policy.label();
    let horizon = config.horizon;
    let fail = |step, source| RolloutError {
        method: method.clone(),
        step,
        source,
    };

    let offline = if policy.is_offline() {
        Some(decide_offline(policy, config, demands.realized.view(), mode).map_err(|e| fail(0, e))?)
    } else {
        None
    };
    let window = policy.window().unwrap_or(config.window);

    let mut state = PlantState::initial(config);
    let mut steps = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let decision = match &offline {
            Some(traj) => traj.decisions[t - 1].clone(),
            None => decide_step_mpc(config, &state, t, demands.expected.view(), window, mode)
                .map_err(|e| fail(t, e))?,
        };
        let realized = demands.realized.row(t - 1).to_vec();
        let (next, outcome) = step(&state, &decision, &realized, config);
        steps.push(outcome);
        states.push(next.clone());
        state = next;
    }

    let flush_losses = if config.terminal_flush {
        state.queues.clone()
    } else {
        Array2::zeros(state.queues.raw_dim())
    };
    let flush_cost = weighted_total(&flush_losses, &config.loss_costs);
    let cumulative_cost = steps.iter().map(|s| s.step_cost).sum::<f64>() + flush_cost;
    Ok(RunTrajectory {
        method,
        run_index,
        steps,
        states,
        flush_losses,
        flush_cost,
        cumulative_cost,
        lp_objective: offline.map(|t| t.objective),
        demand_digest: demands.digest(),
    })
}

/// Worst-case deviations from the plant invariants over one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantReport {
    /// max over (m, p) of |Σ in - Σ out - Σ loss - (Q_end - Q₀)|.
    pub conservation_drift: f64,
    /// max over steps and modules of Σ_p Q - Q̄.
    pub capacity_excess: f64,
    /// max over cells of out - min(w/Δs, C̄).
    pub service_excess: f64,
    /// most negative flow, queue or loss entry, as a positive number.
    pub negativity: f64,
    /// Number of individual checks that exceeded [`INVARIANT_TOL`].
    pub violations: usize,
}

impl InvariantReport {
    pub fn merge(&mut self, other: &InvariantReport) {
        self.conservation_drift = self.conservation_drift.max(other.conservation_drift);
        self.capacity_excess = self.capacity_excess.max(other.capacity_excess);
        self.service_excess = self.service_excess.max(other.service_excess);
        self.negativity = self.negativity.max(other.negativity);
        self.violations += other.violations;
    }
}

/// Checks conservation, capacity, service caps and nonnegativity on every step.
///
/// The service cap of each step is read from the weights recorded in the
/// post-step state.
pub fn check_invariants(config: &ScenarioConfig, run: &RunTrajectory) -> InvariantReport {
    let mut r = InvariantReport::default();
    let (nm, np) = run.flush_losses.dim();
    let count = |excess: f64, slot: &mut f64| {
        *slot = slot.max(excess);
        usize::from(excess > INVARIANT_TOL)
    };
    let mut v = 0;
    let mut balance = Array2::<f64>::zeros((nm, np));
    for (s, st) in run.steps.iter().zip(&run.states) {
        balance = balance + &s.inflows - &s.outflows - &s.losses;
        let weights = st.last_weights.as_ref().expect("weights recorded after each step");
        for m in 0..nm {
            v += count(st.queues.row(m).sum() - config.queue_capacity, &mut r.capacity_excess);
            for p in 0..np {
                let cap = (weights[[m, p]] / config.scheduler_period).min(config.link_capacity);
                v += count(s.outflows[[m, p]] - cap, &mut r.service_excess);
                for x in [s.inflows[[m, p]], s.outflows[[m, p]], s.losses[[m, p]], st.queues[[m, p]]] {
                    v += count(-x, &mut r.negativity);
                }
            }
        }
    }
    balance -= &run.flush_losses;
    if let Some(last) = run.states.last() {
        let end = &last.queues - &run.flush_losses;
        for m in 0..nm {
            for p in 0..np {
                let drift = (balance[[m, p]] - (end[[m, p]] - config.initial_queue)).abs();
                v += count(drift, &mut r.conservation_drift);
            }
        }
    }
    r.violations = v;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(m: usize, k: Vec<f64>) -> ScenarioConfig {
        ScenarioConfig {
            num_modules: m,
            num_priorities: k.len(),
            loss_costs: k,
            ..Default::default()
        }
    }

    fn close(a: &Array2<f64>, b: &Array2<f64>) -> bool {
        a.dim() == b.dim() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn split_scales_the_plan() {
        let s = split_inflow(array![[3.0], [1.0]].view(), &[8.0]);
        assert_eq!(s, array![[6.0], [2.0]]);
        let s = split_inflow(array![[0.0], [0.0]].view(), &[4.0]);
        assert_eq!(s, array![[2.0], [2.0]]);
        let s = split_inflow(array![[3.0], [1.0]].view(), &[0.0]);
        assert_eq!(s, array![[0.0], [0.0]]);
    }

    #[test]
    fn hand_executed_step() {
        let c = ScenarioConfig {
            link_capacity: 100.0,
            ..cfg(1, vec![10.0, 1.0])
        };
        let state = PlantState {
            queues: array![[0.0, 0.0]],
            last_weights: None,
        };
        let d = ControlDecision {
            weights: array![[0.6, 0.4]],
            inflow_plan: array![[8.0, 2.0]],
        };
        let (next, out) = step(&state, &d, &[8.0, 2.0], &c);
        assert!(close(&out.outflows, &array![[6.0, 2.0]]));
        assert!(close(&next.queues, &array![[2.0, 0.0]]));
        assert_eq!(out.losses, array![[0.0, 0.0]]);
        assert_eq!(out.step_cost, 0.0);
        assert_eq!(next.last_weights, Some(d.weights));
    }

    #[test]
    fn overflow_drops_cheapest_first() {
        let mut q = vec![4.0, 3.0];
        let dropped = enforce_capacity(&mut q, 5.0, &[10.0, 1.0]);
        assert_eq!(q, vec![4.0, 1.0]);
        assert_eq!(dropped, vec![0.0, 2.0]);
        // spill into the next-cheapest once the cheapest is empty
        let mut q = vec![4.0, 3.0, 1.0];
        let dropped = enforce_capacity(&mut q, 2.0, &[10.0, 4.0, 1.0]);
        assert_eq!(q, vec![2.0, 0.0, 0.0]);
        assert_eq!(dropped, vec![2.0, 3.0, 1.0]);
        // ties go to the larger index
        let mut q = vec![2.0, 2.0];
        enforce_capacity(&mut q, 3.0, &[1.0, 1.0]);
        assert_eq!(q, vec![2.0, 1.0]);
    }

    #[test]
    fn overflow_inside_a_step() {
        let c = ScenarioConfig {
            queue_capacity: 5.0,
            ..cfg(1, vec![10.0, 1.0])
        };
        let state = PlantState {
            queues: array![[4.0, 3.0]],
            last_weights: None,
        };
        // zero service: weights all on a priority with nothing queued is impossible
        // with two priorities, so serve nothing by giving no inflow and tiny caps
        let d = ControlDecision {
            weights: array![[0.0, 0.0]],
            inflow_plan: array![[0.0, 0.0]],
        };
        let (next, out) = step(&state, &d, &[0.0, 0.0], &c);
        assert_eq!(next.queues, array![[4.0, 1.0]]);
        assert_eq!(out.losses, array![[0.0, 2.0]]);
        assert_eq!(out.step_cost, 2.0);
    }

    #[test]
    fn idle_step_only_records_weights() {
        let c = cfg(2, vec![10.0, 4.0, 1.0]);
        let state = PlantState::initial(&c);
        let d = ControlDecision::uniform(2, &[0.0, 0.0, 0.0]);
        let (next, out) = step(&state, &d, &[0.0, 0.0, 0.0], &c);
        assert_eq!(next.queues, state.queues);
        assert!(out.outflows.iter().chain(out.losses.iter()).all(|&x| x == 0.0));
        assert_eq!(out.step_cost, 0.0);
        assert_eq!(next.last_weights.as_ref(), Some(&d.weights));
    }

    #[test]
    fn zero_demand_rollouts_cost_nothing() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 6,
            window: 3,
            lambda_start: 0.0,
            lambda_end: 0.0,
            ..Default::default()
        };
        let d = crate::arrivals::generate_demands(&c, 0).unwrap();
        for kind in PolicyKind::standard_set(3) {
            let run = rollout(&c, kind, &d, 0, SolveMode::Full).unwrap();
            assert_eq!(run.cumulative_cost, 0.0, "{kind}");
            assert_eq!(run.horizon(), 6);
            assert_eq!(check_invariants(&c, &run).violations, 0);
        }
    }

    #[test]
    fn flush_books_leftovers() {
        // A single step with more arrivals than service: the leftover is flushed.
        let c = ScenarioConfig {
            horizon: 1,
            ..cfg(1, vec![3.0])
        };
        let demands = DemandTrajectory {
            realized: array![[14.0]],
            expected: array![[14.0]],
        };
        let run = rollout(&c, PolicyKind::BatchHindsight, &demands, 0, SolveMode::Full).unwrap();
        // serve 10, queue 4 (Q̄ = 10), flush 4 at cost 3
        assert_eq!(run.steps[0].outflows[[0, 0]], 10.0);
        assert_eq!(run.flush_losses[[0, 0]], 4.0);
        assert_eq!(run.cumulative_cost, 12.0);
        assert!((run.lp_objective.unwrap() - 12.0).abs() < 1e-6);
        assert_eq!(run.loss_series()[[0, 0]], 4.0);
        assert_eq!(check_invariants(&c, &run).violations, 0);

        let no_flush = ScenarioConfig {
            terminal_flush: false,
            ..c
        };
        let run = rollout(&no_flush, PolicyKind::BatchHindsight, &demands, 0, SolveMode::Full).unwrap();
        assert_eq!(run.cumulative_cost, 0.0);
        assert_eq!(check_invariants(&no_flush, &run).violations, 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn simplex_rows(raw: Vec<f64>, p: usize) -> Array2<f64> {
            let mut w = Array2::from_shape_vec((raw.len() / p, p), raw).unwrap();
            for mut row in w.rows_mut() {
                let s = row.sum();
                row /= s;
            }
            w
        }

        proptest! {
            #[test]
            fn step_conserves_and_respects_limits(
                q in prop::collection::vec(0.0f64..3.0, 6),
                w in prop::collection::vec(0.01f64..1.0, 6),
                plan in prop::collection::vec(0.0f64..5.0, 6),
                realized in prop::collection::vec(0.0f64..30.0, 3),
                cap in 1.0f64..9.0,
                period in 0.1f64..1.0,
            ) {
                let c = ScenarioConfig {
                    num_modules: 2,
                    queue_capacity: cap,
                    scheduler_period: period,
                    link_capacity: 6.0,
                    ..Default::default()
                };
                let queues = Array2::from_shape_vec((2, 3), q).unwrap();
                let state = PlantState { queues: queues.clone(), last_weights: None };
                let d = ControlDecision {
                    weights: simplex_rows(w, 3),
                    inflow_plan: Array2::from_shape_vec((2, 3), plan).unwrap(),
                };
                let (next, out) = step(&state, &d, &realized, &c);
                for p in 0..3 {
                    prop_assert!((out.inflows.column(p).sum() - realized[p]).abs() < 1e-9);
                }
                let residual = &queues + &out.inflows - &out.outflows - &out.losses - &next.queues;
                prop_assert!(residual.iter().all(|r| r.abs() < 1e-9));
                for m in 0..2 {
                    prop_assert!(next.queues.row(m).sum() <= cap + 1e-9);
                    for p in 0..3 {
                        let limit = (d.weights[[m, p]] / period).min(6.0);
                        prop_assert!(out.outflows[[m, p]] <= limit + 1e-12);
                    }
                }
                prop_assert!(next.queues.iter().chain(out.losses.iter()).all(|x| *x >= 0.0));
                let cost: f64 = out.losses.rows().into_iter()
                    .map(|r| r.iter().zip(&c.loss_costs).map(|(l, k)| l * k).sum::<f64>()).sum();
                prop_assert!((cost - out.step_cost).abs() < 1e-9);
            }
        }
    }
}
