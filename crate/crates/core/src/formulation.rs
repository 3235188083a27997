//! LP formulations of the routing problem: batch with hindsight, its static
//! and cost-proportional restrictions, and the receding-horizon window.
//!
//! Every formulation is a window of `S` consecutive steps over `M` modules and
//! `P` priorities with five per-(step, module, priority) variable families
//! (`f_in`, `f_out`, `w`, `dq`, `loss`) and queue levels `q` at `S + 1` epochs.
//! Epoch 0 is the occupancy before the first window step, epoch `s + 1` the
//! occupancy after window step `s`.
//!
//! Rows, per (s, m, p) unless stated:
//!
//! | kind        | row                                              |
//! |-------------|--------------------------------------------------|
//! | balance     | f_in - f_out - dq - loss = 0                     |
//! | simplex     | Σ_p w = 1, per (s, m)                            |
//! | ramp_up     | w(s) - w(s-1) <= Δw̄                              |
//! | ramp_down   | w(s-1) - w(s) <= Δw̄ (two-sided ramps only)       |
//! | service     | f_out - w/Δs <= 0                                |
//! | demand      | Σ_m f_in = F, per (s, p)                         |
//! | recursion   | q(s+1) - q(s) - dq(s) = 0                        |
//! | initial     | q(0) = initial occupancy                         |
//! | terminal    | q(S) = Q₀ (windows that end at the horizon)      |
//! | capacity    | Σ_p q(s) <= Q̄, per (epoch >= 1, m)               |
//! | static      | w(s) - w(0) = 0 (static batch, s >= 1)           |
//! | fixed_weight| w = k_p / Σk (cost-proportional)                 |
//!
//! `0 <= w <= 1` and `f_out <= C̄` are variable bounds. The objective is
//! Σ k_p · loss.

use ndarray::{s, Array2, ArrayView2};
use thiserror::Error;

use crate::domain::{ControlDecision, PlantState, ScenarioConfig};
use crate::lp::{LpProblem, LpSolution, LpStatus, Relation};

/// Variable layout of one window problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarMap {
    pub modules: usize,
    pub priorities: usize,
    /// Number of steps in the window (S).
    pub steps: usize,
    /// 1-based global index of window step 0.
    pub first_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    FlowIn,
    FlowOut,
    Weight,
    QueueDelta,
    Loss,
    Queue,
}

impl Family {
    fn label(self) -> &'static str {
        match self {
            Family::FlowIn => "fin",
            Family::FlowOut => "fout",
            Family::Weight => "w",
            Family::QueueDelta => "dq",
            Family::Loss => "L",
            Family::Queue => "Q",
        }
    }
}

impl VarMap {
    fn block(&self) -> usize {
        self.steps * self.modules * self.priorities
    }

    fn cell(&self, s: usize, m: usize, p: usize) -> usize {
        debug_assert!(m < self.modules && p < self.priorities);
        (s * self.modules + m) * self.priorities + p
    }

    fn family_offset(&self, fam: Family) -> usize {
        let k = match fam {
            Family::FlowIn => 0,
            Family::FlowOut => 1,
            Family::Weight => 2,
            Family::QueueDelta => 3,
            Family::Loss => 4,
            Family::Queue => 5,
        };
        k * self.block()
    }

    /// Index of a per-step variable at window step `s`.
    pub fn index(&self, fam: Family, s: usize, m: usize, p: usize) -> usize {
        if fam == Family::Queue {
            debug_assert!(s <= self.steps);
        } else {
            debug_assert!(s < self.steps);
        }
        self.family_offset(fam) + self.cell(s, m, p)
    }

    pub fn f_in(&self, s: usize, m: usize, p: usize) -> usize {
        self.index(Family::FlowIn, s, m, p)
    }
    pub fn f_out(&self, s: usize, m: usize, p: usize) -> usize {
        self.index(Family::FlowOut, s, m, p)
    }
    pub fn w(&self, s: usize, m: usize, p: usize) -> usize {
        self.index(Family::Weight, s, m, p)
    }
    pub fn dq(&self, s: usize, m: usize, p: usize) -> usize {
        self.index(Family::QueueDelta, s, m, p)
    }
    pub fn loss(&self, s: usize, m: usize, p: usize) -> usize {
        self.index(Family::Loss, s, m, p)
    }
    /// Queue level at epoch `e` in `0..=steps`.
    pub fn q(&self, e: usize, m: usize, p: usize) -> usize {
        self.index(Family::Queue, e, m, p)
    }

    pub fn num_vars(&self) -> usize {
        5 * self.block() + (self.steps + 1) * self.modules * self.priorities
    }

    /// Inverse of [`VarMap::index`].
    pub fn decode(&self, j: usize) -> Option<(Family, usize, usize, usize)> {
        if j >= self.num_vars() {
            return None;
        }
        let families = [
            Family::FlowIn,
            Family::FlowOut,
            Family::Weight,
            Family::QueueDelta,
            Family::Loss,
            Family::Queue,
        ];
        let k = (j / self.block()).min(5);
        let fam = families[k];
        let rem = j - k * self.block();
        let mp = self.modules * self.priorities;
        Some((fam, rem / mp, (rem % mp) / self.priorities, rem % self.priorities))
    }

    /// Debug label such as `fin[t=3,m=1,p=2]` using 1-based model indices.
    /// Queue epochs are labelled with the global step they follow (0 = start).
    pub fn name(&self, j: usize) -> String {
        let (fam, s, m, p) = self.decode(j).expect("index in range");
        let t = if fam == Family::Queue {
            self.first_step - 1 + s
        } else {
            self.first_step + s
        };
        format!("{}[t={},m={},p={}]", fam.label(), t, m + 1, p + 1)
    }

    pub fn label_problem(&self, problem: &mut LpProblem) {
        problem.names = Some((0..self.num_vars()).map(|j| self.name(j)).collect());
    }

    /// Last global step covered by the window.
    pub fn last_step(&self) -> usize {
        self.first_step + self.steps - 1
    }
}

/// How scheduler weights may move across the window.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    Free,
    /// Every step repeats the weights of window step 0.
    Static,
    /// Weights pinned to the given per-priority values in every module and step.
    Fixed(Vec<f64>),
}

/// Everything that distinguishes one window problem from another.
#[derive(Debug, Clone)]
pub struct WindowSpec<'a> {
    pub first_step: usize,
    /// `S x P` demand to route in each window step.
    pub demand: ArrayView2<'a, f64>,
    /// `M x P` occupancy before the first window step.
    pub initial_queues: ArrayView2<'a, f64>,
    /// Weights implemented just before the window; ramp rows for step 0 are
    /// omitted when absent.
    pub prev_weights: Option<ArrayView2<'a, f64>>,
    /// Whether to pin the final occupancy to Q₀.
    pub terminal: bool,
    pub weights: WeightRule,
}

/// Assembles the window LP described in the module docs.
pub fn build_window(config: &ScenarioConfig, spec: &WindowSpec<'_>) -> (LpProblem, VarMap) {
    let (steps, np) = spec.demand.dim();
    let nm = spec.initial_queues.nrows();
    debug_assert_eq!(np, config.num_priorities);
    debug_assert_eq!(spec.initial_queues.ncols(), np);
    let vm = VarMap {
        modules: nm,
        priorities: np,
        steps,
        first_step: spec.first_step,
    };
    let mut lp = LpProblem::new(vm.num_vars());
    let dw = config.max_weight_step;
    let service = 1.0 / config.scheduler_period;

    for s in 0..steps {
        for m in 0..nm {
            for p in 0..np {
                lp.set_bounds(vm.w(s, m, p), 0.0, 1.0);
                lp.set_bounds(vm.f_out(s, m, p), 0.0, config.link_capacity);
                lp.set_free(vm.dq(s, m, p));
                lp.add_cost(vm.loss(s, m, p), config.loss_costs[p]);
            }
        }
    }

    for s in 0..steps {
        for m in 0..nm {
            for p in 0..np {
                lp.add_constraint(
                    "balance",
                    vec![
                        (vm.f_in(s, m, p), 1.0),
                        (vm.f_out(s, m, p), -1.0),
                        (vm.dq(s, m, p), -1.0),
                        (vm.loss(s, m, p), -1.0),
                    ],
                    Relation::Eq,
                    0.0,
                );
            }
            lp.add_constraint(
                "simplex",
                (0..np).map(|p| (vm.w(s, m, p), 1.0)).collect(),
                Relation::Eq,
                1.0,
            );
        }
    }

    match &spec.weights {
        WeightRule::Fixed(values) => {
            for s in 0..steps {
                for m in 0..nm {
                    for (p, &v) in values.iter().enumerate() {
                        lp.add_constraint("fixed_weight", vec![(vm.w(s, m, p), 1.0)], Relation::Eq, v);
                    }
                }
            }
        }
        rule => {
            for s in 0..steps {
                for m in 0..nm {
                    for p in 0..np {
                        let cur = vm.w(s, m, p);
                        if s == 0 {
                            if let Some(prev) = &spec.prev_weights {
                                let pw = prev[[m, p]];
                                lp.add_constraint("ramp_up", vec![(cur, 1.0)], Relation::Le, pw + dw);
                                if config.ramp_two_sided {
                                    lp.add_constraint("ramp_down", vec![(cur, -1.0)], Relation::Le, dw - pw);
                                }
                            }
                            continue;
                        }
                        let before = vm.w(s - 1, m, p);
                        lp.add_constraint("ramp_up", vec![(cur, 1.0), (before, -1.0)], Relation::Le, dw);
                        if config.ramp_two_sided {
                            lp.add_constraint("ramp_down", vec![(before, 1.0), (cur, -1.0)], Relation::Le, dw);
                        }
                        if *rule == WeightRule::Static {
                            lp.add_constraint(
                                "static",
                                vec![(cur, 1.0), (vm.w(0, m, p), -1.0)],
                                Relation::Eq,
                                0.0,
                            );
                        }
                    }
                }
            }
        }
    }

    for s in 0..steps {
        for m in 0..nm {
            for p in 0..np {
                lp.add_constraint(
                    "service",
                    vec![(vm.f_out(s, m, p), 1.0), (vm.w(s, m, p), -service)],
                    Relation::Le,
                    0.0,
                );
            }
        }
        for p in 0..np {
            lp.add_constraint(
                "demand",
                (0..nm).map(|m| (vm.f_in(s, m, p), 1.0)).collect(),
                Relation::Eq,
                spec.demand[[s, p]],
            );
        }
    }

    for m in 0..nm {
        for p in 0..np {
            lp.add_constraint("initial", vec![(vm.q(0, m, p), 1.0)], Relation::Eq, spec.initial_queues[[m, p]]);
            for s in 0..steps {
                lp.add_constraint(
                    "recursion",
                    vec![(vm.q(s + 1, m, p), 1.0), (vm.q(s, m, p), -1.0), (vm.dq(s, m, p), -1.0)],
                    Relation::Eq,
                    0.0,
                );
            }
            if spec.terminal {
                lp.add_constraint("terminal", vec![(vm.q(steps, m, p), 1.0)], Relation::Eq, config.initial_queue);
            }
        }
        for e in 1..=steps {
            lp.add_constraint(
                "capacity",
                (0..np).map(|p| (vm.q(e, m, p), 1.0)).collect(),
                Relation::Le,
                config.queue_capacity,
            );
        }
    }

    (lp, vm)
}

fn full_horizon<'a>(
    config: &ScenarioConfig,
    flows: ArrayView2<'a, f64>,
    initial: &'a Array2<f64>,
    weights: WeightRule,
) -> (LpProblem, VarMap) {
    assert_eq!(flows.dim(), (config.horizon, config.num_priorities), "flows must be T x P");
    build_window(
        config,
        &WindowSpec {
            first_step: 1,
            demand: flows,
            initial_queues: initial.view(),
            prev_weights: None,
            terminal: true,
            weights,
        },
    )
}

/// Batch problem with hindsight over the whole horizon on the given `T x P` flows.
pub fn build_batch(config: &ScenarioConfig, flows: ArrayView2<'_, f64>) -> (LpProblem, VarMap) {
    full_horizon(config, flows, &config.initial_queues(), WeightRule::Free)
}

/// Batch problem with the weights held at their first-step values.
pub fn build_static_batch(config: &ScenarioConfig, flows: ArrayView2<'_, f64>) -> (LpProblem, VarMap) {
    full_horizon(config, flows, &config.initial_queues(), WeightRule::Static)
}

/// Batch problem with the weights pinned to k_p / Σk.
pub fn build_proportional(config: &ScenarioConfig, flows: ArrayView2<'_, f64>) -> (LpProblem, VarMap) {
    full_horizon(
        config,
        flows,
        &config.initial_queues(),
        WeightRule::Fixed(config.proportional_weights()),
    )
}

/// Steps covered by the receding-horizon window that starts at `t`.
pub fn window_len(config: &ScenarioConfig, t: usize, window: usize) -> usize {
    window.min(config.horizon + 1 - t)
}

/// Window problem at 1-based step `t` for a lookahead of `window` steps.
///
/// `forecast` is the `T x P` expected demand for the whole horizon; rows
/// `t..t+S-1` are used. The terminal occupancy is pinned only when the window
/// reaches the horizon.
pub fn build_mpc_window(
    config: &ScenarioConfig,
    state: &PlantState,
    t: usize,
    window: usize,
    forecast: ArrayView2<'_, f64>,
) -> (LpProblem, VarMap) {
    assert!(t >= 1 && t <= config.horizon, "step {t} outside 1..={}", config.horizon);
    let steps = window_len(config, t, window.max(1));
    build_window(
        config,
        &WindowSpec {
            first_step: t,
            demand: forecast.slice(s![t - 1..t - 1 + steps, ..]),
            initial_queues: state.queues.view(),
            prev_weights: state.last_weights.as_ref().map(|w| w.view()),
            terminal: t + steps - 1 == config.horizon,
            weights: WeightRule::Free,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("not_optimal: solver status {0}")]
    NotOptimal(LpStatus),
    #[error("window step {step} outside 0..{steps}")]
    StepOutOfRange { step: usize, steps: usize },
}

/// Clamps weights into [0, 1] and rescales them to sum to one. The largest
/// entry absorbs the final rounding so the sum is 1 to the last bit that
/// summation order allows. An all-zero row becomes uniform.
pub fn normalize_weights(row: &mut [f64]) {
    for w in row.iter_mut() {
        *w = w.clamp(0.0, 1.0);
    }
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|w| *w = u);
        return;
    }
    row.iter_mut().for_each(|w| *w /= total);
    let big = (0..row.len())
        .max_by(|&a, &b| row[a].total_cmp(&row[b]))
        .expect("nonempty");
    let rest: f64 = row.iter().enumerate().filter(|(i, _)| *i != big).map(|(_, w)| w).sum();
    row[big] = (1.0 - rest).max(0.0);
}

fn read(solution: &LpSolution, vm: &VarMap, s: usize, f: impl Fn(&VarMap, usize, usize, usize) -> usize) -> Array2<f64> {
    Array2::from_shape_fn((vm.modules, vm.priorities), |(m, p)| solution.values[f(vm, s, m, p)].max(0.0))
}

/// Decision for window step `s`.
pub fn extract_step(solution: &LpSolution, vm: &VarMap, s: usize) -> Result<ControlDecision, ExtractError> {
    if !solution.is_optimal() {
        return Err(ExtractError::NotOptimal(solution.status));
    }
    if s >= vm.steps {
        return Err(ExtractError::StepOutOfRange { step: s, steps: vm.steps });
    }
    let mut weights = read(solution, vm, s, VarMap::w);
    for mut row in weights.rows_mut() {
        normalize_weights(row.as_slice_mut().expect("standard layout"));
    }
    Ok(ControlDecision {
        weights,
        inflow_plan: read(solution, vm, s, VarMap::f_in),
    })
}

/// Decisions and planned quantities for every step of a solved window.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTrajectory {
    pub decisions: Vec<ControlDecision>,
    pub planned_outflows: Vec<Array2<f64>>,
    pub planned_losses: Vec<Array2<f64>>,
    pub objective: f64,
}

impl DecisionTrajectory {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Planned loss per (step, priority), summed over modules: `S x P`.
    pub fn planned_loss_by_priority(&self) -> Array2<f64> {
        let p = self.planned_losses.first().map_or(0, |l| l.ncols());
        let mut out = Array2::zeros((self.len(), p));
        for (s, l) in self.planned_losses.iter().enumerate() {
            out.row_mut(s).assign(&l.sum_axis(ndarray::Axis(0)));
        }
        out
    }
}

pub fn extract_trajectory(solution: &LpSolution, vm: &VarMap) -> Result<DecisionTrajectory, ExtractError> {
    let decisions = (0..vm.steps)
        .map(|s| extract_step(solution, vm, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DecisionTrajectory {
        decisions,
        planned_outflows: (0..vm.steps).map(|s| read(solution, vm, s, VarMap::f_out)).collect(),
        planned_losses: (0..vm.steps).map(|s| read(solution, vm, s, VarMap::loss)).collect(),
        objective: solution.objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{check_solution, solve};
    use ndarray::array;

    fn small(m: usize, p: usize, t: usize) -> ScenarioConfig {
        let k: Vec<f64> = (0..p).map(|i| (p - i) as f64 * 2.0).collect();
        ScenarioConfig {
            num_modules: m,
            num_priorities: p,
            horizon: t,
            loss_costs: k,
            ..Default::default()
        }
    }

    #[test]
    fn variable_count_by_enumeration() {
        let c = small(2, 2, 3);
        let flows = Array2::zeros((3, 2));
        let (lp, vm) = build_batch(&c, flows.view());
        assert_eq!(lp.num_vars, 76);
        // enumerate every family index and confirm a bijection onto 0..76
        let mut seen = [false; 76];
        for fam in [Family::FlowIn, Family::FlowOut, Family::Weight, Family::QueueDelta, Family::Loss] {
            for s in 0..3 {
                for m in 0..2 {
                    for p in 0..2 {
                        let j = vm.index(fam, s, m, p);
                        assert!(!seen[j]);
                        seen[j] = true;
                        assert_eq!(vm.decode(j), Some((fam, s, m, p)));
                    }
                }
            }
        }
        for e in 0..=3 {
            for m in 0..2 {
                for p in 0..2 {
                    let j = vm.q(e, m, p);
                    assert!(!seen[j]);
                    seen[j] = true;
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
        assert_eq!(vm.name(vm.loss(0, 1, 0)), "L[t=1,m=2,p=1]");
    }

    #[test]
    fn zero_demand_costs_nothing() {
        let c = small(2, 2, 3);
        let flows = Array2::zeros((3, 2));
        for (lp, _) in [
            build_batch(&c, flows.view()),
            build_static_batch(&c, flows.view()),
            build_proportional(&c, flows.view()),
        ] {
            let s = solve(&lp);
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(s.objective_value.abs() < 1e-9);
        }
    }

    #[test]
    fn single_module_overflow() {
        // w = 1 serves at most 10 packets; with no buffer the other 90 are lost.
        let c = ScenarioConfig {
            num_modules: 1,
            num_priorities: 1,
            horizon: 1,
            loss_costs: vec![3.0],
            queue_capacity: 0.0,
            initial_queue: 0.0,
            scheduler_period: 0.1,
            link_capacity: 100.0,
            ..Default::default()
        };
        let flows = array![[100.0]];
        let (lp, _) = build_batch(&c, flows.view());
        let s = solve(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 3.0 * 90.0).abs() < 1e-6);
    }

    #[test]
    fn proportional_rows_pin_weights() {
        let c = ScenarioConfig {
            num_modules: 2,
            horizon: 4,
            ..Default::default()
        };
        let flows = Array2::from_elem((4, 3), 3.0);
        let (lp, vm) = build_proportional(&c, flows.view());
        assert_eq!(lp.num_rows_of("ramp_up"), 0);
        assert_eq!(lp.num_rows_of("fixed_weight"), 4 * 2 * 3);
        let s = solve(&lp);
        let traj = extract_trajectory(&s, &vm).unwrap();
        for d in &traj.decisions {
            for row in d.weights.rows() {
                assert!((row[0] - 2.0 / 3.0).abs() < 1e-9);
                assert!((row[1] - 4.0 / 15.0).abs() < 1e-9);
                assert!((row[2] - 1.0 / 15.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_costs_split_evenly() {
        let c = ScenarioConfig {
            num_priorities: 2,
            loss_costs: vec![1.0, 1.0],
            ..Default::default()
        };
        assert_eq!(c.proportional_weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn window_rows_at_start_and_end() {
        let c = ScenarioConfig::default();
        let forecast = crate::domain::rate_matrix(&c);
        let state = PlantState::initial(&c);
        let (lp, vm) = build_mpc_window(&c, &state, 1, 10, forecast.view());
        assert_eq!((vm.first_step, vm.last_step()), (1, 10));
        assert_eq!(lp.num_rows_of("demand"), 10 * 3);
        assert_eq!(lp.num_rows_of("terminal"), 0);
        // no previous weights: ramps only between window steps
        assert_eq!(lp.num_rows_of("ramp_up"), 9 * 16 * 3);

        let mut state = state;
        state.last_weights = Some(Array2::from_elem((16, 3), 1.0 / 3.0));
        let (lp, vm) = build_mpc_window(&c, &state, 95, 10, forecast.view());
        assert_eq!((vm.first_step, vm.last_step(), vm.steps), (95, 100, 6));
        assert_eq!(lp.num_rows_of("terminal"), 16 * 3);
        assert_eq!(lp.num_rows_of("ramp_up"), 6 * 16 * 3);
        assert_eq!(lp.num_rows_of("ramp_down"), 6 * 16 * 3);
    }

    #[test]
    fn one_sided_ramp_has_no_mirrored_rows() {
        let c = ScenarioConfig {
            ramp_two_sided: false,
            horizon: 5,
            num_modules: 2,
            ..Default::default()
        };
        let flows = Array2::zeros((5, 3));
        let (lp, _) = build_batch(&c, flows.view());
        assert_eq!(lp.num_rows_of("ramp_up"), 4 * 2 * 3);
        assert_eq!(lp.num_rows_of("ramp_down"), 0);
    }

    #[test]
    fn zero_window_problem_is_free() {
        let c = small(2, 2, 6);
        let forecast = Array2::zeros((6, 2));
        let state = PlantState::initial(&c);
        let (lp, vm) = build_mpc_window(&c, &state, 2, 3, forecast.view());
        let s = solve(&lp);
        assert!(s.objective_value.abs() < 1e-12);
        let d = extract_step(&s, &vm, 0).unwrap();
        for row in d.weights.rows() {
            assert_eq!(row.sum(), 1.0);
        }
        assert!(d.inflow_plan.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalization_sums_to_one() {
        let mut w = [0.333_333_4, 0.666_666_6];
        normalize_weights(&mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= f64::EPSILON);
        let mut w = [-1e-12, 0.5, 0.5];
        normalize_weights(&mut w);
        assert_eq!(w[0], 0.0);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        let mut w = [0.0, 0.0];
        normalize_weights(&mut w);
        assert_eq!(w, [0.5, 0.5]);
    }

    #[test]
    fn extraction_requires_optimality() {
        let c = small(1, 1, 1);
        let vm = VarMap {
            modules: 1,
            priorities: 1,
            steps: 1,
            first_step: 1,
        };
        let failed = LpSolution::failed(LpStatus::Infeasible);
        assert_eq!(
            extract_step(&failed, &vm, 0),
            Err(ExtractError::NotOptimal(LpStatus::Infeasible))
        );
        let (lp, vm) = build_batch(&c, array![[0.0]].view());
        let s = solve(&lp);
        assert!(matches!(extract_step(&s, &vm, 3), Err(ExtractError::StepOutOfRange { .. })));
        let traj = extract_trajectory(&s, &vm).unwrap();
        assert!(traj.planned_losses.iter().all(|l| l.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn solutions_pass_residual_check() {
        let c = small(2, 3, 4);
        let flows = Array2::from_shape_fn((4, 3), |(t, p)| (5 * t + 3 * p) as f64);
        let (lp, _) = build_batch(&c, flows.view());
        let s = solve(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(check_solution(&lp, &s.values).unwrap().max_violation() <= 1e-6);
    }
}
