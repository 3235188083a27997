//! The five routing policies behind one interface.
//!
//! Offline policies (batch with hindsight, static batch, cost-proportional)
//! solve one LP on the realized flows and replay its decisions. The MPC
//! policies solve a window LP on expected flows at every step from the
//! observed plant state and implement only the first step.
//!
//! ## Module-symmetric solves
//!
//! All modules are identical, so every formulation is invariant under
//! permuting modules and, being convex, has an optimum in which every module
//! carries the same weights and `1/M` of each flow. [`SolveMode::Symmetric`]
//! solves the one-module problem on `F/M` and broadcasts the result; its
//! objective is exactly `M` times the reduced one. It is used only when the
//! plant state is itself symmetric and otherwise falls back to the full
//! `M`-module problem.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::domain::{ControlDecision, PlantState, ScenarioConfig};
use crate::formulation::{
    build_batch, build_mpc_window, build_proportional, build_static_batch, extract_step,
    extract_trajectory, DecisionTrajectory, ExtractError,
};
use crate::lp::{solve, LpProblem, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    BatchHindsight,
    StaticBatch,
    Proportional,
    Mpc(usize),
    /// Same as `Mpc(1)`.
    WindowlessMpc,
}

impl PolicyKind {
    /// The five methods compared in the standard experiment, with the MPC
    /// window taken from the configuration.
    pub fn standard_set(window: usize) -> Vec<PolicyKind> {
        vec![
            PolicyKind::BatchHindsight,
            PolicyKind::Mpc(window),
            PolicyKind::WindowlessMpc,
            PolicyKind::StaticBatch,
            PolicyKind::Proportional,
        ]
    }

    pub fn is_offline(self) -> bool {
        matches!(
            self,
            PolicyKind::BatchHindsight | PolicyKind::StaticBatch | PolicyKind::Proportional
        )
    }

    /// Lookahead of the MPC variants.
    pub fn window(self) -> Option<usize> {
        match self {
            PolicyKind::Mpc(w) => Some(w),
            PolicyKind::WindowlessMpc => Some(1),
            _ => None,
        }
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::BatchHindsight => f.write_str("batch_hindsight"),
            PolicyKind::StaticBatch => f.write_str("static_batch"),
            PolicyKind::Proportional => f.write_str("proportional"),
            PolicyKind::Mpc(w) => write!(f, "mpc({w})"),
            PolicyKind::WindowlessMpc => f.write_str("windowless_mpc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy '{0}' (expected batch_hindsight, static_batch, proportional, mpc(W) or windowless_mpc)")]
pub struct ParsePolicyError(pub String);

impl FromStr for PolicyKind {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let window = |rest: &str| -> Result<usize, ParsePolicyError> {
            rest.parse::<usize>()
                .ok()
                .filter(|w| *w >= 1)
                .ok_or_else(|| ParsePolicyError(s.to_string()))
        };
        match t.as_str() {
            "batch" | "batch_hindsight" => Ok(PolicyKind::BatchHindsight),
            "static" | "static_batch" => Ok(PolicyKind::StaticBatch),
            "proportional" | "cost_proportional" => Ok(PolicyKind::Proportional),
            "windowless" | "windowless_mpc" => Ok(PolicyKind::WindowlessMpc),
            _ => {
                if let Some(inner) = t.strip_prefix("mpc(").and_then(|r| r.strip_suffix(')')) {
                    window(inner).map(PolicyKind::Mpc)
                } else if let Some(rest) = t.strip_prefix("mpc:").or_else(|| t.strip_prefix("mpc")) {
                    window(rest).map(PolicyKind::Mpc)
                } else {
                    Err(ParsePolicyError(s.to_string()))
                }
            }
        }
    }
}

/// How window and batch LPs are posed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    /// The full `M`-module problem.
    Full,
    /// One representative module on `F/M`, broadcast to all modules.
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("{policy}: solver returned {status}")]
    Solver { policy: String, status: LpStatus },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("{0} is not an offline policy")]
    NotOffline(PolicyKind),
}

fn reduced_config(config: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        num_modules: 1,
        ..config.clone()
    }
}

fn broadcast(a: &Array2<f64>, modules: usize) -> Array2<f64> {
    Array2::from_shape_fn((modules, a.ncols()), |(_, p)| a[[0, p]])
}

fn broadcast_decision(d: &ControlDecision, modules: usize) -> ControlDecision {
    ControlDecision {
        weights: broadcast(&d.weights, modules),
        inflow_plan: broadcast(&d.inflow_plan, modules),
    }
}

fn offline_problem(
    kind: PolicyKind,
    config: &ScenarioConfig,
    flows: ArrayView2<'_, f64>,
) -> Result<(LpProblem, crate::formulation::VarMap), ControlError> {
    Ok(match kind {
        PolicyKind::BatchHindsight => build_batch(config, flows),
        PolicyKind::StaticBatch => build_static_batch(config, flows),
        PolicyKind::Proportional => build_proportional(config, flows),
        other => return Err(ControlError::NotOffline(other)),
    })
}

/// Solves the offline policy's LP once on the realized `T x P` flows.
pub fn decide_offline(
    kind: PolicyKind,
    config: &ScenarioConfig,
    realized: ArrayView2<'_, f64>,
    mode: SolveMode,
) -> Result<DecisionTrajectory, ControlError> {
    let m = config.num_modules;
    let symmetric = mode == SolveMode::Symmetric && m > 1;
    let (cfg, flows) = if symmetric {
        (reduced_config(config), realized.mapv(|f| f / m as f64))
    } else {
        (config.clone(), realized.to_owned())
    };
    let (lp, vm) = offline_problem(kind, &cfg, flows.view())?;
    let sol = solve(&lp);
    if !sol.is_optimal() {
        return Err(ControlError::Solver {
            policy: kind.label(),
            status: sol.status,
        });
    }
    let traj = extract_trajectory(&sol, &vm)?;
    if !symmetric {
        return Ok(traj);
    }
    Ok(DecisionTrajectory {
        decisions: traj.decisions.iter().map(|d| broadcast_decision(d, m)).collect(),
        planned_outflows: traj.planned_outflows.iter().map(|a| broadcast(a, m)).collect(),
        planned_losses: traj.planned_losses.iter().map(|a| broadcast(a, m)).collect(),
        objective: traj.objective * m as f64,
    })
}

/// One receding-horizon step: solve the window starting at `t` (1-based) on
/// the `T x P` `forecast` from the observed `state`, and return the decision
/// for step `t`.
pub fn decide_step_mpc(
    config: &ScenarioConfig,
    state: &PlantState,
    t: usize,
    forecast: ArrayView2<'_, f64>,
    window: usize,
    mode: SolveMode,
) -> Result<ControlDecision, ControlError> {
    let m = config.num_modules;
    let symmetric = mode == SolveMode::Symmetric && m > 1 && state.is_module_symmetric(0.0);
    let policy = || PolicyKind::Mpc(window).label();
    if symmetric {
        let cfg = reduced_config(config);
        let rstate = PlantState {
            queues: state.queues.select(Axis(0), &[0]),
            last_weights: state.last_weights.as_ref().map(|w| w.select(Axis(0), &[0])),
        };
        let rforecast = forecast.mapv(|f| f / m as f64);
        let (lp, vm) = build_mpc_window(&cfg, &rstate, t, window, rforecast.view());
        let sol = solve(&lp);
        if !sol.is_optimal() {
            return Err(ControlError::Solver {
                policy: policy(),
                status: sol.status,
            });
        }
        return Ok(broadcast_decision(&extract_step(&sol, &vm, 0)?, m));
    }
    let (lp, vm) = build_mpc_window(config, state, t, window, forecast);
    let sol = solve(&lp);
    if !sol.is_optimal() {
        return Err(ControlError::Solver {
            policy: policy(),
            status: sol.status,
        });
    }
    Ok(extract_step(&sol, &vm, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::rate_matrix;
    use crate::lp::{solve, Relation};
    use ndarray::Array2;

    #[test]
    fn labels_round_trip() {
        for k in PolicyKind::standard_set(10) {
            assert_eq!(k.label().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!("mpc:5".parse::<PolicyKind>().unwrap(), PolicyKind::Mpc(5));
        assert_eq!("MPC20".parse::<PolicyKind>().unwrap(), PolicyKind::Mpc(20));
        assert!("mpc(0)".parse::<PolicyKind>().is_err());
        assert!("greedy".parse::<PolicyKind>().is_err());
        assert_eq!(PolicyKind::WindowlessMpc.window(), Some(1));
    }

    #[test]
    fn zero_flows_give_zero_planned_loss() {
        let c = ScenarioConfig {
            num_modules: 3,
            horizon: 5,
            ..Default::default()
        };
        let flows = Array2::zeros((5, 3));
        for kind in [PolicyKind::BatchHindsight, PolicyKind::StaticBatch, PolicyKind::Proportional] {
            for mode in [SolveMode::Full, SolveMode::Symmetric] {
                let traj = decide_offline(kind, &c, flows.view(), mode).unwrap();
                assert_eq!(traj.len(), 5);
                assert!(traj.objective.abs() < 1e-9);
                for d in &traj.decisions {
                    for row in d.weights.rows() {
                        assert!((row.sum() - 1.0).abs() < 1e-12);
                        assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
                    }
                }
            }
        }
    }

    #[test]
    fn proportional_weights_everywhere() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 6,
            ..Default::default()
        };
        let flows = Array2::from_elem((6, 3), 4.0);
        let traj = decide_offline(PolicyKind::Proportional, &c, flows.view(), SolveMode::Full).unwrap();
        for d in &traj.decisions {
            for row in d.weights.rows() {
                assert!((row[0] - 2.0 / 3.0).abs() < 1e-9);
                assert!((row[1] - 4.0 / 15.0).abs() < 1e-9);
                assert!((row[2] - 1.0 / 15.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn restrictions_never_beat_batch() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 8,
            ..Default::default()
        };
        let flows = Array2::from_shape_fn((8, 3), |(t, p)| (3 * t + 7 * p) as f64 % 23.0);
        let obj = |k| decide_offline(k, &c, flows.view(), SolveMode::Full).unwrap().objective;
        let batch = obj(PolicyKind::BatchHindsight);
        assert!(obj(PolicyKind::StaticBatch) >= batch - 1e-6);
        assert!(obj(PolicyKind::Proportional) >= batch - 1e-6);
    }

    #[test]
    fn offline_rejects_mpc() {
        let c = ScenarioConfig::default();
        let flows = Array2::zeros((100, 3));
        assert_eq!(
            decide_offline(PolicyKind::Mpc(3), &c, flows.view(), SolveMode::Full).unwrap_err(),
            ControlError::NotOffline(PolicyKind::Mpc(3))
        );
    }

    #[test]
    fn symmetric_offline_matches_full_objective() {
        let c = ScenarioConfig {
            num_modules: 3,
            horizon: 6,
            queue_capacity: 4.0,
            ..Default::default()
        };
        let flows = Array2::from_shape_fn((6, 3), |(t, p)| (11 * t + 5 * p) as f64 % 31.0 + 8.0);
        for kind in [PolicyKind::BatchHindsight, PolicyKind::StaticBatch, PolicyKind::Proportional] {
            let full = decide_offline(kind, &c, flows.view(), SolveMode::Full).unwrap().objective;
            let sym = decide_offline(kind, &c, flows.view(), SolveMode::Symmetric).unwrap().objective;
            assert!(full > 1.0, "{kind}: instance should be lossy");
            assert!((full - sym).abs() <= 1e-6 * full, "{kind}: full {full} sym {sym}");
        }
    }

    #[test]
    fn empty_system_mpc_decision() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 4,
            lambda_start: 0.0,
            lambda_end: 0.0,
            ..Default::default()
        };
        let forecast = rate_matrix(&c);
        let state = PlantState::initial(&c);
        for mode in [SolveMode::Full, SolveMode::Symmetric] {
            let d = decide_step_mpc(&c, &state, 1, forecast.view(), 3, mode).unwrap();
            assert!(d.inflow_plan.iter().all(|&x| x == 0.0));
            for row in d.weights.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mpc_respects_ramp_against_previous_weights() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 10,
            ..Default::default()
        };
        let forecast = rate_matrix(&c);
        let prev = Array2::from_shape_fn((2, 3), |(_, p)| [0.8, 0.15, 0.05][p]);
        let state = PlantState {
            queues: Array2::zeros((2, 3)),
            last_weights: Some(prev.clone()),
        };
        for mode in [SolveMode::Full, SolveMode::Symmetric] {
            let d = decide_step_mpc(&c, &state, 4, forecast.view(), 3, mode).unwrap();
            for (w, pw) in d.weights.iter().zip(prev.iter()) {
                assert!((w - pw).abs() <= c.max_weight_step + 1e-6);
            }
        }
    }

    #[test]
    fn last_step_window_drains_queues() {
        // Only step T remains: the terminal row forces the buffer empty, so
        // everything that cannot be served within the caps is planned as loss.
        let c = ScenarioConfig {
            num_modules: 1,
            num_priorities: 2,
            loss_costs: vec![5.0, 1.0],
            horizon: 3,
            lambda_start: 0.0,
            lambda_end: 0.0,
            ..Default::default()
        };
        let forecast = rate_matrix(&c);
        let state = PlantState {
            queues: ndarray::array![[4.0, 5.0]],
            last_weights: Some(ndarray::array![[0.5, 0.5]]),
        };
        let (lp, vm) = crate::formulation::build_mpc_window(&c, &state, 3, 10, forecast.view());
        assert_eq!(vm.steps, 1);
        assert_eq!(lp.num_rows_of("terminal"), 2);
        let sol = solve(&lp);
        // caps: p1 <= 10 w1, p2 <= 10 w2 with w within 0.1 of 0.5: all 9 packets served
        assert!(sol.objective_value.abs() < 1e-9);
        let d = decide_step_mpc(&c, &state, 3, forecast.view(), 10, SolveMode::Full).unwrap();
        assert!(d.weights[[0, 0]] * 10.0 >= 4.0 - 1e-9);
        assert!(d.weights[[0, 1]] * 10.0 >= 5.0 - 1e-9);
    }

    /// Swapping a unit of planned loss from a costly priority to a cheaper one
    /// never helps an optimal window plan.
    #[test]
    fn loss_is_cost_consistent() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 4,
            queue_capacity: 2.0,
            lambda_start: 100.0,
            lambda_end: 150.0,
            ..Default::default()
        };
        let forecast = rate_matrix(&c);
        let state = PlantState::initial(&c);
        let (lp, vm) = build_mpc_window(&c, &state, 1, 4, forecast.view());
        let base = solve(&lp);
        assert!(base.is_optimal());
        let eps = 0.25;
        let mut checked = 0;
        for s in 0..vm.steps {
            for m in 0..vm.modules {
                for p in 0..vm.priorities {
                    let j = vm.loss(s, m, p);
                    let lost = base.values[j];
                    if lost <= 1e-6 || p + 1 == vm.priorities {
                        continue;
                    }
                    let mut tightened = lp.clone();
                    tightened.add_constraint("probe", vec![(j, 1.0)], Relation::Le, (lost - eps).max(0.0));
                    let again = solve(&tightened);
                    let cheaper = c.loss_costs[vm.priorities - 1];
                    if again.is_optimal() {
                        assert!(again.objective_value >= base.objective_value - eps * cheaper - 1e-6);
                    }
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "instance should lose some high-priority traffic");
    }
}
