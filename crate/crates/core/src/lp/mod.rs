//! Linear programs in a solver-neutral form, the solve contract, and residual
//! checking.
//!
//! Problems are always minimisations over variables with box bounds and a
//! list of sparse rows. Two backends satisfy [`solve_with`]: HiGHS (the
//! default) and a small dense two-phase simplex used on toy instances and as a
//! cross-check in tests.

mod dense;
mod highs_backend;

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// Absolute feasibility tolerance applied to every optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Bound tolerance; values are clipped into their bounds when closer than this.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    /// Row family, e.g. `"balance"`. Only used for listings and diagnostics.
    pub kind: &'static str,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    /// Sparse minimisation objective; repeated indices add up.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("variable index {index} out of range (num_vars = {num_vars})")]
    IndexOutOfRange { index: usize, num_vars: usize },
    #[error("variable {index} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl LpProblem {
    /// `num_vars` variables with bounds `[0, +inf)` and zero cost.
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            objective: Vec::new(),
            constraints: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            names: None,
        }
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_free(&mut self, var: usize) {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn add_cost(&mut self, var: usize, cost: f64) {
        self.objective.push((var, cost));
    }

    pub fn add_constraint(
        &mut self,
        kind: &'static str,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
            kind,
        });
        self.constraints.len() - 1
    }

    pub fn num_rows_of(&self, kind: &str) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Dense cost vector with repeated indices summed.
    pub fn dense_costs(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars];
        for &(j, v) in &self.objective {
            c[j] += v;
        }
        c
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.lower.len() != self.num_vars || self.upper.len() != self.num_vars {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        let check = |j: usize| {
            if j >= self.num_vars {
                Err(LpError::IndexOutOfRange {
                    index: j,
                    num_vars: self.num_vars,
                })
            } else {
                Ok(())
            }
        };
        for &(j, c) in &self.objective {
            check(j)?;
            if !c.is_finite() {
                return Err(LpError::NonFinite("objective"));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(row.kind));
            }
            for &(j, a) in &row.coeffs {
                check(j)?;
                if !a.is_finite() {
                    return Err(LpError::NonFinite(row.kind));
                }
            }
        }
        for j in 0..self.num_vars {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(LpError::InvertedBounds {
                    index: j,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    fn var_name(&self, j: usize) -> String {
        match &self.names {
            Some(n) => n[j].clone(),
            None => format!("x{j}"),
        }
    }

    /// Writes a human-readable LP-style listing. The format is for inspection
    /// only:
    ///
    /// ```text
    /// \ <num_vars> variables, <num_rows> constraints
    /// minimize
    ///   obj: +10 L[1,1,1] +4 L[1,1,2]
    /// subject to
    ///   r0 balance: +1 fin[1,1,1] -1 fout[1,1,1] = 0
    /// bounds
    ///   0 <= fin[1,1,1] <= inf
    /// end
    /// ```
    pub fn write_listing<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "\\ {} variables, {} constraints",
            self.num_vars,
            self.constraints.len()
        )?;
        writeln!(out, "minimize")?;
        write!(out, "  obj:")?;
        for &(j, c) in &self.objective {
            write!(out, " {:+} {}", c, self.var_name(j))?;
        }
        writeln!(out)?;
        writeln!(out, "subject to")?;
        for (i, row) in self.constraints.iter().enumerate() {
            write!(out, "  r{i} {}:", row.kind)?;
            for &(j, a) in &row.coeffs {
                write!(out, " {:+} {}", a, self.var_name(j))?;
            }
            writeln!(out, " {} {}", row.relation, row.rhs)?;
        }
        writeln!(out, "bounds")?;
        for j in 0..self.num_vars {
            writeln!(
                out,
                "  {} <= {} <= {}",
                self.lower[j],
                self.var_name(j),
                self.upper[j]
            )?;
        }
        writeln!(out, "end")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::NumericFailure => "numeric_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless `status` is optimal.
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn failed(status: LpStatus) -> Self {
        LpSolution {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_constraint_violation: f64,
    pub max_bound_violation: f64,
    pub objective: f64,
}

impl ResidualReport {
    pub fn max_violation(&self) -> f64 {
        self.max_constraint_violation.max(self.max_bound_violation)
    }
}

/// Largest row and bound violations of `values`, plus its objective.
pub fn check_solution(problem: &LpProblem, values: &[f64]) -> Result<ResidualReport, LpError> {
    if values.len() != problem.num_vars {
        return Err(LpError::DimensionMismatch {
            expected: problem.num_vars,
            got: values.len(),
        });
    }
    let max_constraint_violation = problem
        .constraints
        .iter()
        .map(|c| c.violation(values))
        .fold(0.0, f64::max);
    let max_bound_violation = values
        .iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        max_constraint_violation,
        max_bound_violation,
        objective: problem.objective_at(values),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Highs,
    /// Dense two-phase simplex with Bland's rule. Only suitable for small problems.
    DenseSimplex,
}

/// Solves with the default backend.
pub fn solve(problem: &LpProblem) -> LpSolution {
    solve_with(problem, Backend::default())
}

/// Solves `problem`. Solver outcomes are reported through the status, never
/// as errors or panics. Optimal solutions are clipped into their bounds and
/// rechecked; a result that misses [`FEASIBILITY_TOL`] is downgraded to
/// `NumericFailure`.
pub fn solve_with(problem: &LpProblem, backend: Backend) -> LpSolution {
    if problem.validate().is_err() {
        return LpSolution::failed(LpStatus::NumericFailure);
    }
    let raw = match backend {
        Backend::Highs => highs_backend::solve(problem),
        Backend::DenseSimplex => dense::solve(problem),
    };
    finish(problem, raw)
}

fn finish(problem: &LpProblem, mut sol: LpSolution) -> LpSolution {
    if sol.status != LpStatus::Optimal {
        return LpSolution::failed(sol.status);
    }
    for (j, x) in sol.values.iter_mut().enumerate() {
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        if *x < lo && lo - *x <= FEASIBILITY_TOL {
            *x = lo;
        } else if *x > hi && *x - hi <= FEASIBILITY_TOL {
            *x = hi;
        }
    }
    match check_solution(problem, &sol.values) {
        Ok(r) if r.max_constraint_violation <= FEASIBILITY_TOL
            && r.max_bound_violation <= BOUND_TOL =>
        {
            sol.objective_value = r.objective;
            sol
        }
        _ => LpSolution::failed(LpStatus::NumericFailure),
    }
}
