//! Linear programs in maximisation form, with primal and dual solutions.
//!
//! Every constraint row carries a [`RowGroup`] label so callers can pull the
//! dual vector of one constraint class (for instance the shared-capacity
//! bid-prices) straight out of an [`LpSolution`].

mod dump;
mod presolve;
mod simplex;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{dump_coefficients, DumpFormat};
pub use simplex::{SimplexOptions, SimplexSolver};

/// Feasibility tolerance reported solutions are held to.
pub const EPS_FEAS: f64 = 1e-7;
/// Relative duality-gap tolerance.
pub const EPS_GAP: f64 = 1e-7;
/// Complementary-slackness tolerance.
pub const EPS_CS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowGroup {
    SharedCap,
    PartyCap(usize),
    UpperBound(usize),
    LowerBound(usize),
    NonNeg(usize),
    SparsityRow,
    SparsityCol,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub group: RowGroup,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `maximize c^T x` subject to labelled rows and variable bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    /// `n` nonnegative variables with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn add_row(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
        group: RowGroup,
    ) -> usize {
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
            group,
        });
        self.rows.len() - 1
    }

    /// Adds a row from a dense coefficient slice, dropping zeros.
    pub fn add_dense_row(
        &mut self,
        offset: usize,
        dense: &[f64],
        relation: Relation,
        rhs: f64,
        group: RowGroup,
    ) -> usize {
        let coeffs = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, &v)| (offset + j, v))
            .collect();
        self.add_row(coeffs, relation, rhs, group)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    pub fn row_groups(&self) -> Vec<RowGroup> {
        self.rows.iter().map(|r| r.group).collect()
    }

    pub fn rows_in_group(&self, group: RowGroup) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("bound vectors differ from objective length".into()));
        }
        for (j, (&c, (&l, &u))) in self
            .objective
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .enumerate()
        {
            if !c.is_finite() || l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Dimension(format!("variable {j} has invalid cost or bounds")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Dimension(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(Error::Dimension(format!(
                        "row {i} references variable {j} but there are {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Dimension(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Dual-side certificate for a primal/dual pair.
    pub fn certify(&self, x: &[f64], y: &[f64]) -> Certificate {
        let primal_objective = self.objective_value(x);
        let mut dual_residual: f64 = 0.0;
        let mut dual_objective = 0.0;
        let mut complementarity: f64 = 0.0;
        for (row, &yi) in self.rows.iter().zip(y) {
            dual_objective += row.rhs * yi;
            let wrong_sign = match row.relation {
                Relation::Le => (-yi).max(0.0),
                Relation::Ge => yi.max(0.0),
                Relation::Eq => 0.0,
            };
            dual_residual = dual_residual.max(wrong_sign);
            let slack = (row.rhs - row.activity(x)).abs();
            complementarity = complementarity.max(yi.abs() * slack);
        }
        let d = self.reduced_costs(y);
        for (j, &dj) in d.iter().enumerate() {
            let (l, u) = (self.lower[j], self.upper[j]);
            if dj > 0.0 {
                if u.is_finite() {
                    dual_objective += u * dj;
                    complementarity = complementarity.max(dj * (u - x[j]).abs());
                } else {
                    dual_residual = dual_residual.max(dj);
                }
            } else if dj < 0.0 {
                if l.is_finite() {
                    dual_objective += l * dj;
                    complementarity = complementarity.max(-dj * (x[j] - l).abs());
                } else {
                    dual_residual = dual_residual.max(-dj);
                }
            }
        }
        Certificate {
            primal_objective,
            dual_objective,
            primal_residual: self.primal_residual(x),
            dual_residual,
            complementarity,
        }
    }

    /// `c - A^T y`.
    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for &(j, a) in &row.coeffs {
                d[j] -= a * yi;
            }
        }
        d
    }
}

/// Optimality evidence for a primal/dual pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
}

impl Certificate {
    pub fn gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs()
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap() / (1.0 + self.primal_objective.abs())
    }

    pub fn is_optimal(&self, tol: f64) -> bool {
        self.primal_residual <= tol && self.dual_residual <= tol && self.relative_gap() <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub row_groups: Vec<RowGroup>,
    pub iterations: usize,
}

impl LpSolution {
    pub(crate) fn without_point(status: LpStatus, lp: &LinearProgram, iterations: usize) -> Self {
        Self {
            status,
            primal: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            },
            row_duals: Vec::new(),
            reduced_costs: Vec::new(),
            row_groups: lp.row_groups(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual values of the rows labelled `group`, in row order.
    pub fn duals(&self, group: RowGroup) -> Vec<f64> {
        self.row_groups
            .iter()
            .zip(&self.row_duals)
            .filter(|(g, _)| **g == group)
            .map(|(_, &y)| y)
            .collect()
    }

    pub fn require_optimal(&self) -> Result<()> {
        if self.is_optimal() {
            Ok(())
        } else {
            Err(Error::NotOptimal(format!("{:?}", self.status)))
        }
    }
}

/// Seam for plugging in an alternative LP engine.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

/// Solves with the default simplex settings.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    SimplexSolver::default().solve(lp)
}

pub(crate) fn describe(lp: &LinearProgram) -> String {
    format!("{} vars, {} rows, {} nonzeros", lp.num_vars(), lp.num_rows(), lp.nnz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable() {
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0, RowGroup::SharedCap);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal[0] - 1.0).abs() < 1e-12);
        assert!((sol.duals(RowGroup::SharedCap)[0] - 1.0).abs() < 1e-12);
        let cert = lp.certify(&sol.primal, &sol.row_duals);
        assert!(cert.is_optimal(1e-9), "{cert:?}");
    }

    #[test]
    fn bad_index_is_a_dimension_error() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(3, 1.0)], Relation::Le, 1.0, RowGroup::SharedCap);
        assert!(matches!(solve(&lp), Err(Error::Dimension(_))));
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let mut lp = LinearProgram::new(2);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 3.0, RowGroup::SharedCap);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 2.0, RowGroup::SharedCap);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], Relation::Le, 2.0, RowGroup::SharedCap);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // max x + y  s.t.  x - y = 1, x + y <= 5, x, y free
        let mut lp = LinearProgram::new(0);
        let x = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Relation::Eq, 1.0, RowGroup::PartyCap(0));
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Le, 5.0, RowGroup::SharedCap);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-9);
        assert!((sol.primal[x] - 3.0).abs() < 1e-9);
        let cert = lp.certify(&sol.primal, &sol.row_duals);
        assert!(cert.is_optimal(1e-9), "{cert:?}");
    }

    #[test]
    fn ge_rows_have_nonpositive_duals() {
        // max -x - 2y  s.t.  x + y >= 2, y >= 0.5
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -1.0);
        lp.set_cost(1, -2.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 2.0, RowGroup::SharedCap);
        lp.add_row(vec![(1, 1.0), (0, 0.0)], Relation::Ge, 0.5, RowGroup::LowerBound(0));
        let sol = solve(&lp).unwrap();
        assert!((sol.objective + 2.5).abs() < 1e-9);
        assert!(sol.row_duals.iter().all(|y| *y <= 1e-12));
        let cert = lp.certify(&sol.primal, &sol.row_duals);
        assert!(cert.is_optimal(1e-9), "{cert:?}");
    }
}
