//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Intended for problems with at most a few hundred variables. Every variable
//! is shifted or split so that the working problem is `min c'y, Ay (rel) b,
//! y >= 0`; finite upper bounds become extra `<=` rows.

use super::{LpProblem, LpSolution, LpStatus, Relation};

const PIVOT_TOL: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-7;

/// How an original variable is recovered from the working columns.
#[derive(Clone, Copy)]
enum Recover {
    /// x = offset + y[col]
    Shift { col: usize, offset: f64 },
    /// x = offset - y[col]
    Mirror { col: usize, offset: f64 },
    /// x = y[pos] - y[neg]
    Split { pos: usize, neg: usize },
}

struct Working {
    cols: usize,
    rows: Vec<(Vec<f64>, Relation, f64)>,
    cost: Vec<f64>,
    recover: Vec<Recover>,
}

fn to_working(problem: &LpProblem) -> Working {
    let mut cols = 0;
    let mut recover = Vec::with_capacity(problem.num_vars);
    let mut upper_rows = Vec::new();
    for j in 0..problem.num_vars {
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        if lo.is_finite() {
            recover.push(Recover::Shift { col: cols, offset: lo });
            if hi.is_finite() {
                upper_rows.push((cols, hi - lo));
            }
            cols += 1;
        } else if hi.is_finite() {
            recover.push(Recover::Mirror { col: cols, offset: hi });
            cols += 1;
        } else {
            recover.push(Recover::Split {
                pos: cols,
                neg: cols + 1,
            });
            cols += 2;
        }
    }

    // Expands a sparse original row into working coefficients and the constant
    // contributed by the shifts.
    let expand = |coeffs: &[(usize, f64)]| {
        let mut row = vec![0.0; cols];
        let mut constant = 0.0;
        for &(j, a) in coeffs {
            match recover[j] {
                Recover::Shift { col, offset } => {
                    row[col] += a;
                    constant += a * offset;
                }
                Recover::Mirror { col, offset } => {
                    row[col] -= a;
                    constant += a * offset;
                }
                Recover::Split { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        (row, constant)
    };

    let mut rows = Vec::with_capacity(problem.constraints.len() + upper_rows.len());
    for c in &problem.constraints {
        let (row, constant) = expand(&c.coeffs);
        rows.push((row, c.relation, c.rhs - constant));
    }
    for (col, width) in upper_rows {
        let mut row = vec![0.0; cols];
        row[col] = 1.0;
        rows.push((row, Relation::Le, width));
    }
    let (cost, _) = expand(&problem.objective);
    Working {
        cols,
        rows,
        cost,
        recover,
    }
}

struct Tableau {
    /// rows x (width + 1); the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

enum PivotOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost` over columns `< allowed`, starting from the current basis.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> PivotOutcome {
        let m = self.a.len();
        let limit = 50 * (m + self.width) + 1000;
        for _ in 0..limit {
            // reduced costs d_j = c_j - c_B B^-1 A_j
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let mut d = cost[j];
                for i in 0..m {
                    d -= cost[self.basis[i]] * self.a[i][j];
                }
                d < -PIVOT_TOL
            });
            let Some(c) = entering else {
                return PivotOutcome::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let aic = self.a[i][c];
                if aic > PIVOT_TOL {
                    let ratio = self.rhs(i) / aic;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12
                                || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return PivotOutcome::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        PivotOutcome::IterationLimit
    }
}

pub(super) fn solve(problem: &LpProblem) -> LpSolution {
    let w = to_working(problem);
    let m = w.rows.len();
    let n = w.cols;

    // Column layout: structural | slack/surplus (one per inequality) | artificial.
    let n_slack = w.rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let art_start = n + n_slack;
    let mut a = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack = n;
    let mut art = art_start;
    let mut art_rows = Vec::new();
    for (i, (row, rel, rhs)) in w.rows.iter().enumerate() {
        let mut coeffs = row.clone();
        let mut rel = *rel;
        let mut rhs = *rhs;
        if rhs < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        let mut full = vec![0.0; art_start + m + 1];
        full[..n].copy_from_slice(&coeffs);
        full[art_start + m] = rhs;
        match rel {
            Relation::Le => {
                full[slack] = 1.0;
                basis.push(slack);
                slack += 1;
            }
            Relation::Ge => {
                full[slack] = -1.0;
                slack += 1;
                full[art] = 1.0;
                basis.push(art);
                art_rows.push(i);
                art += 1;
            }
            Relation::Eq => {
                full[art] = 1.0;
                basis.push(art);
                art_rows.push(i);
                art += 1;
            }
        }
        a.push(full);
    }
    let width = art;
    // Compact the unused artificial columns away so the rhs sits at `width`.
    for row in a.iter_mut() {
        let rhs = row[art_start + m];
        row.truncate(width);
        row.push(rhs);
    }
    let mut tab = Tableau { a, basis, width };

    if !art_rows.is_empty() {
        let mut phase_one = vec![0.0; width];
        for v in phase_one.iter_mut().skip(art_start) {
            *v = 1.0;
        }
        match tab.optimise(&phase_one, width) {
            PivotOutcome::Optimal => {}
            PivotOutcome::Unbounded | PivotOutcome::IterationLimit => {
                return LpSolution::failed(LpStatus::NumericFailure)
            }
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= art_start)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > PHASE_ONE_TOL {
            return LpSolution::failed(LpStatus::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis; rows
        // where that is impossible are redundant and are dropped.
        let mut i = 0;
        while i < tab.a.len() {
            if tab.basis[i] >= art_start {
                match (0..art_start).find(|&j| tab.a[i][j].abs() > PIVOT_TOL) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.a.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&w.cost);
    match tab.optimise(&cost, art_start) {
        PivotOutcome::Optimal => {}
        PivotOutcome::Unbounded => return LpSolution::failed(LpStatus::Unbounded),
        PivotOutcome::IterationLimit => return LpSolution::failed(LpStatus::NumericFailure),
    }

    let mut y = vec![0.0; width];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let values: Vec<f64> = w
        .recover
        .iter()
        .map(|r| match *r {
            Recover::Shift { col, offset } => offset + y[col],
            Recover::Mirror { col, offset } => offset - y[col],
            Recover::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    LpSolution {
        status: LpStatus::Optimal,
        objective_value: problem.objective_at(&values),
        values,
    }
}
