//! Row-singleton and implied-slack reductions with exact dual postsolve.
//!
//! * A row with a single nonzero becomes a variable bound. The row's dual is
//!   recovered from the reduced cost of the variable when that bound is active.
//! * An equality row containing a zero-cost column that appears nowhere else,
//!   with bounds `[0, inf)` or `(-inf, 0]`, is turned into an inequality and the
//!   column is dropped.

use alloc::vec;
use alloc::vec::Vec;

use super::{LinearProgram, LpSolution, LpStatus, Relation, Row};

const ZERO_ROW_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
struct BoundOwner {
    row: usize,
    coef: f64,
}

#[derive(Clone, Copy, Debug)]
struct SlackColumn {
    col: usize,
    row: usize,
    coef: f64,
}

pub(crate) enum Presolve {
    Reduced(Reduction),
    Infeasible,
}

pub(crate) struct Reduction {
    pub lp: LinearProgram,
    kept_rows: Vec<usize>,
    /// Original column index for each reduced column.
    kept_cols: Vec<usize>,
    lower_owner: Vec<Option<BoundOwner>>,
    upper_owner: Vec<Option<BoundOwner>>,
    slacks: Vec<SlackColumn>,
}

fn normalize(row: &Row) -> Vec<(usize, f64)> {
    let mut coeffs: Vec<(usize, f64)> = row.coeffs.iter().copied().filter(|(_, a)| *a != 0.0).collect();
    coeffs.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => merged.push((j, a)),
        }
    }
    merged.retain(|(_, a)| *a != 0.0);
    merged
}

pub(crate) fn presolve(lp: &LinearProgram) -> Presolve {
    let n = lp.num_vars();
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut lower_owner: Vec<Option<BoundOwner>> = vec![None; n];
    let mut upper_owner: Vec<Option<BoundOwner>> = vec![None; n];
    let mut rows: Vec<Option<Row>> = lp
        .rows
        .iter()
        .map(|row| {
            Some(Row {
                coeffs: normalize(row),
                relation: row.relation,
                rhs: row.rhs,
                group: row.group,
            })
        })
        .collect();
    let mut removed = vec![false; n];
    let mut slacks = Vec::new();

    // Removing a slack can leave a singleton row behind, so repeat until stable.
    loop {
        for (i, slot) in rows.iter_mut().enumerate() {
            let Some(row) = slot else { continue };
            match row.coeffs.len() {
                0 => {
                    let ok = match row.relation {
                        Relation::Le => row.rhs >= -ZERO_ROW_TOL,
                        Relation::Ge => row.rhs <= ZERO_ROW_TOL,
                        Relation::Eq => row.rhs.abs() <= ZERO_ROW_TOL,
                    };
                    if !ok {
                        return Presolve::Infeasible;
                    }
                    *slot = None;
                }
                1 => {
                    let (j, a) = row.coeffs[0];
                    let v = row.rhs / a;
                    let owner = BoundOwner { row: i, coef: a };
                    let (sets_upper, sets_lower) = match row.relation {
                        Relation::Eq => (true, true),
                        Relation::Le => (a > 0.0, a < 0.0),
                        Relation::Ge => (a < 0.0, a > 0.0),
                    };
                    if sets_upper && v < upper[j] {
                        upper[j] = v;
                        upper_owner[j] = Some(owner);
                    }
                    if sets_lower && v > lower[j] {
                        lower[j] = v;
                        lower_owner[j] = Some(owner);
                    }
                    *slot = None;
                }
                _ => {}
            }
        }

        for j in 0..n {
            if lower[j] > upper[j] {
                let tol = 1e-9 * (1.0 + lower[j].abs().max(upper[j].abs()));
                if lower[j] - upper[j] > tol {
                    return Presolve::Infeasible;
                }
                upper[j] = lower[j];
            }
        }

        // Implied slack columns.
        let mut col_count = vec![0usize; n];
        for row in rows.iter().flatten() {
            for &(j, _) in &row.coeffs {
                col_count[j] += 1;
            }
        }
        let mut changed = false;
        for (i, slot) in rows.iter_mut().enumerate() {
            let Some(row) = slot else { continue };
            if row.relation != Relation::Eq {
                continue;
            }
            let candidate = row.coeffs.iter().position(|&(j, _)| {
                col_count[j] == 1
                    && lp.objective[j] == 0.0
                    && ((lower[j] == 0.0 && upper[j] == f64::INFINITY)
                        || (lower[j] == f64::NEG_INFINITY && upper[j] == 0.0))
            });
            if let Some(pos) = candidate {
                let (j, a) = row.coeffs.remove(pos);
                let nonneg = lower[j] == 0.0;
                row.relation = if (a > 0.0) == nonneg { Relation::Le } else { Relation::Ge };
                removed[j] = true;
                slacks.push(SlackColumn { col: j, row: i, coef: a });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept_cols: Vec<usize> = (0..n).filter(|&j| !removed[j]).collect();
    let mut new_index = vec![usize::MAX; n];
    for (k, &j) in kept_cols.iter().enumerate() {
        new_index[j] = k;
    }
    let mut reduced = LinearProgram {
        objective: kept_cols.iter().map(|&j| lp.objective[j]).collect(),
        lower: kept_cols.iter().map(|&j| lower[j]).collect(),
        upper: kept_cols.iter().map(|&j| upper[j]).collect(),
        rows: Vec::new(),
    };
    let mut kept_rows = Vec::new();
    for (i, slot) in rows.into_iter().enumerate() {
        if let Some(mut row) = slot {
            for c in row.coeffs.iter_mut() {
                c.0 = new_index[c.0];
            }
            reduced.rows.push(row);
            kept_rows.push(i);
        }
    }

    Presolve::Reduced(Reduction {
        lp: reduced,
        kept_rows,
        kept_cols,
        lower_owner,
        upper_owner,
        slacks,
    })
}

impl Reduction {
    /// Maps a solution of the reduced program back to `original`.
    pub(crate) fn postsolve(&self, original: &LinearProgram, reduced: LpSolution) -> LpSolution {
        if reduced.status != LpStatus::Optimal {
            return LpSolution::without_point(reduced.status, original, reduced.iterations);
        }
        let n = original.num_vars();
        let mut x = vec![0.0; n];
        let mut d = vec![0.0; n];
        for (k, &j) in self.kept_cols.iter().enumerate() {
            x[j] = reduced.primal[k];
            d[j] = reduced.reduced_costs[k];
        }
        let mut y = vec![0.0; original.num_rows()];
        for (k, &i) in self.kept_rows.iter().enumerate() {
            y[i] = reduced.row_duals[k];
        }

        for &j in &self.kept_cols {
            let dj = d[j];
            if dj > 0.0 {
                if let Some(owner) = self.upper_owner[j] {
                    y[owner.row] = dj / owner.coef;
                    d[j] = 0.0;
                }
            } else if dj < 0.0 {
                if let Some(owner) = self.lower_owner[j] {
                    y[owner.row] = dj / owner.coef;
                    d[j] = 0.0;
                }
            }
        }

        for s in &self.slacks {
            let row = &original.rows[s.row];
            let rest: f64 = row
                .coeffs
                .iter()
                .filter(|(j, _)| *j != s.col)
                .map(|&(j, a)| a * x[j])
                .sum();
            let coef: f64 = row.coeffs.iter().filter(|(j, _)| *j == s.col).map(|c| c.1).sum();
            debug_assert!(coef != 0.0 && (coef - s.coef).abs() <= 1e-12 * coef.abs().max(1.0));
            x[s.col] = (row.rhs - rest) / coef;
            let dj = -coef * y[s.row];
            d[s.col] = dj;
            let owner = if dj > 0.0 {
                self.upper_owner[s.col]
            } else if dj < 0.0 {
                self.lower_owner[s.col]
            } else {
                None
            };
            if let Some(owner) = owner {
                y[owner.row] = dj / owner.coef;
                d[s.col] = 0.0;
            }
        }

        LpSolution {
            status: LpStatus::Optimal,
            objective: original.objective_value(&x),
            primal: x,
            row_duals: y,
            reduced_costs: d,
            row_groups: original.row_groups(),
            iterations: reduced.iterations,
        }
    }
}
