use highs::{ColProblem, HighsModelStatus, Model, Row, Sense};

use super::{LpProblem, LpSolution, LpStatus, Relation};

fn build(problem: &LpProblem) -> ColProblem {
    let mut pb = ColProblem::default();
    let rows: Vec<Row> = problem
        .constraints
        .iter()
        .map(|c| match c.relation {
            Relation::Le => pb.add_row(f64::NEG_INFINITY..=c.rhs),
            Relation::Ge => pb.add_row(c.rhs..=f64::INFINITY),
            Relation::Eq => pb.add_row(c.rhs..=c.rhs),
        })
        .collect();

    let mut columns: Vec<Vec<(Row, f64)>> = vec![Vec::new(); problem.num_vars];
    for (i, c) in problem.constraints.iter().enumerate() {
        for &(j, a) in &c.coeffs {
            let col = &mut columns[j];
            // merge repeated entries of the same row
            match col.last_mut() {
                Some((r, v)) if *r == rows[i] => *v += a,
                _ => col.push((rows[i], a)),
            }
        }
    }
    let costs = problem.dense_costs();
    for (j, col) in columns.iter().enumerate() {
        pb.add_column(costs[j], problem.lower[j]..=problem.upper[j], col);
    }
    pb
}

fn run(problem: &LpProblem, presolve: bool) -> (HighsModelStatus, Option<Vec<f64>>) {
    let mut model: Model = build(problem).optimise(Sense::Minimise);
    model.make_quiet();
    model.set_option("solver", "simplex");
    if !presolve {
        model.set_option("presolve", "off");
    }
    match model.try_solve() {
        Ok(solved) => {
            let status = solved.status();
            let values = (status == HighsModelStatus::Optimal)
                .then(|| solved.get_solution().columns().to_vec());
            (status, values)
        }
        Err(_) => (HighsModelStatus::SolveError, None),
    }
}

pub(super) fn solve(problem: &LpProblem) -> LpSolution {
    if problem.num_vars == 0 {
        let feasible = problem.constraints.iter().all(|c| c.violation(&[]) <= 1e-9);
        return if feasible {
            LpSolution {
                status: LpStatus::Optimal,
                values: Vec::new(),
                objective_value: 0.0,
            }
        } else {
            LpSolution::failed(LpStatus::Infeasible)
        };
    }
    let (mut status, mut values) = run(problem, true);
    if status == HighsModelStatus::UnboundedOrInfeasible {
        // presolve could not tell which; the simplex without it can
        (status, values) = run(problem, false);
    }
    match status {
        HighsModelStatus::Optimal => {
            let values = values.expect("optimal solution carries values");
            LpSolution {
                status: LpStatus::Optimal,
                objective_value: problem.objective_at(&values),
                values,
            }
        }
        HighsModelStatus::Infeasible => LpSolution::failed(LpStatus::Infeasible),
        HighsModelStatus::Unbounded => LpSolution::failed(LpStatus::Unbounded),
        _ => LpSolution::failed(LpStatus::NumericFailure),
    }
}
