//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Rows are turned into equalities with one slack each; slack bounds encode the
//! row relation. Rows whose slack cannot start feasible get an artificial
//! column and phase one minimises the artificial sum. The basis inverse is kept
//! column-major and updated in product form, skipping zero entries, and is
//! rebuilt from an LU factorisation periodically and before a solution is
//! reported. Pricing is Dantzig's rule (partial for very wide programs) with a
//! switch to Bland's rule after a run of degenerate pivots.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::presolve::{presolve, Presolve};
use super::{describe, LinearProgram, LpSolution, LpSolver, LpStatus, Relation};
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub presolve: bool,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub max_iterations: Option<usize>,
    pub refactor_every: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            presolve: true,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            pivot_tol: 1e-9,
            bland_after: 60,
            max_iterations: None,
            refactor_every: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimplexSolver {
    pub options: SimplexOptions,
}

impl SimplexSolver {
    pub fn new(options: SimplexOptions) -> Self {
        Self { options }
    }
}

impl LpSolver for SimplexSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        lp.validate()?;
        if !self.options.presolve {
            return Engine::new(lp, &self.options).run();
        }
        match presolve(lp) {
            Presolve::Infeasible => Ok(LpSolution::without_point(LpStatus::Infeasible, lp, 0)),
            Presolve::Reduced(reduction) => {
                let inner = Engine::new(&reduction.lp, &self.options).run()?;
                Ok(reduction.postsolve(lp, inner))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Engine<'a> {
    lp: &'a LinearProgram,
    opts: &'a SimplexOptions,
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    /// (row, sign) of each artificial column.
    artificials: Vec<(usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    degenerate_streak: usize,
    price_offset: usize,
}

impl<'a> Engine<'a> {
    fn new(lp: &'a LinearProgram, opts: &'a SimplexOptions) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut counts = vec![0usize; n + 1];
        for row in lp.rows() {
            for &(j, _) in &row.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts;
        let nnz = col_start[n];
        let mut fill = col_start.clone();
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        for (i, row) in lp.rows().iter().enumerate() {
            for &(j, a) in &row.coeffs {
                col_row[fill[j]] = i;
                col_val[fill[j]] = a;
                fill[j] += 1;
            }
        }

        let mut lower = lp.lower().to_vec();
        let mut upper = lp.upper().to_vec();
        for row in lp.rows() {
            let (l, u) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(l);
            upper.push(u);
        }

        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Lower; n + m];
        for j in 0..n {
            let (l, u) = (lower[j], upper[j]);
            if l.is_finite() {
                x[j] = l;
                state[j] = State::Lower;
            } else if u.is_finite() {
                x[j] = u;
                state[j] = State::Upper;
            } else {
                x[j] = 0.0;
                state[j] = State::Free;
            }
        }
        let mut activity = vec![0.0; m];
        for j in 0..n {
            if x[j] != 0.0 {
                for k in col_start[j]..col_start[j + 1] {
                    activity[col_row[k]] += col_val[k] * x[j];
                }
            }
        }

        let mut basis = vec![0usize; m];
        let mut binv = vec![0.0; m * m];
        let mut artificials = Vec::new();
        for i in 0..m {
            let s = lp.rows()[i].rhs - activity[i];
            let sj = n + i;
            let (l, u) = (lower[sj], upper[sj]);
            let tol = opts.primal_tol;
            if s >= l - tol && s <= u + tol {
                x[sj] = s;
                state[sj] = State::Basic;
                basis[i] = sj;
                binv[i * m + i] = 1.0;
            } else {
                let (bound, st) = if s < l { (l, State::Lower) } else { (u, State::Upper) };
                x[sj] = bound;
                state[sj] = st;
                let residual = s - bound;
                let sign = if residual > 0.0 { 1.0 } else { -1.0 };
                let aj = n + m + artificials.len();
                artificials.push((i, sign));
                lower.push(0.0);
                upper.push(f64::INFINITY);
                x.push(residual.abs());
                state.push(State::Basic);
                basis[i] = aj;
                binv[i * m + i] = sign;
            }
        }

        Self {
            lp,
            opts,
            m,
            n,
            col_start,
            col_row,
            col_val,
            artificials,
            lower,
            upper,
            x,
            state,
            basis,
            binv,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            iterations: 0,
            since_refactor: 0,
            degenerate_streak: 0,
            price_offset: 0,
        }
    }

    fn total(&self) -> usize {
        self.n + self.m + self.artificials.len()
    }

    #[inline]
    fn for_each_entry(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let (row, sign) = self.artificials[j - self.n - self.m];
            f(row, sign);
        }
    }

    fn cost(&self, phase_one: bool, j: usize) -> f64 {
        if phase_one {
            // Artificials that reached zero are fixed there and leave the objective.
            if j >= self.n + self.m && self.upper[j] > 0.0 {
                -1.0
            } else {
                0.0
            }
        } else if j < self.n {
            self.lp.objective()[j]
        } else {
            0.0
        }
    }

    fn reduced_cost(&self, phase_one: bool, j: usize) -> f64 {
        let mut d = self.cost(phase_one, j);
        self.for_each_entry(j, |i, a| d -= self.y[i] * a);
        d
    }

    fn compute_duals(&mut self, phase_one: bool) {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost(phase_one, j)).collect();
        for i in 0..m {
            let col = &self.binv[i * m..(i + 1) * m];
            self.y[i] = cb.iter().zip(col).filter(|(c, _)| **c != 0.0).map(|(c, b)| c * b).sum();
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut b = Matrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            let mut entries = Vec::new();
            self.for_each_entry(j, |i, a| entries.push((i, a)));
            for (i, a) in entries {
                b[(i, k)] = a;
            }
        }
        let lu = Lu::factor(&b).map_err(|_| Error::Solver("basis matrix became singular".into()))?;
        let mut e = vec![0.0; m];
        for i in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            let z = lu.solve(&e)?;
            self.binv[i * m..(i + 1) * m].copy_from_slice(&z);
        }
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs: Vec<f64> = self.lp.rows().iter().map(|r| r.rhs).collect();
        for j in 0..self.total() {
            if self.state[j] == State::Basic {
                continue;
            }
            let v = self.x[j];
            if v != 0.0 {
                let mut entries = Vec::new();
                self.for_each_entry(j, |i, a| entries.push((i, a)));
                for (i, a) in entries {
                    rhs[i] -= a * v;
                }
            }
        }
        let mut xb = vec![0.0; m];
        for (i, &r) in rhs.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let col = &self.binv[i * m..(i + 1) * m];
            for (v, &b) in xb.iter_mut().zip(col) {
                *v += b * r;
            }
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[k];
        }
    }

    fn entering_direction(&self, j: usize, d: f64) -> Option<f64> {
        let tol = self.opts.dual_tol;
        match self.state[j] {
            State::Basic => None,
            _ if self.lower[j] == self.upper[j] => None,
            State::Lower if d > tol => Some(1.0),
            State::Upper if d < -tol => Some(-1.0),
            State::Free if d.abs() > tol => Some(if d > 0.0 { 1.0 } else { -1.0 }),
            _ => None,
        }
    }

    fn price(&mut self, phase_one: bool, bland: bool) -> Option<(usize, f64, f64)> {
        let total = self.total();
        if bland {
            return (0..total).find_map(|j| {
                let d = self.reduced_cost(phase_one, j);
                self.entering_direction(j, d).map(|dir| (j, dir, d))
            });
        }
        let segments = if total > 20_000 { 8 } else { 1 };
        let seg_len = total.div_ceil(segments);
        for s in 0..segments {
            let seg = (self.price_offset + s) % segments;
            let start = seg * seg_len;
            let end = (start + seg_len).min(total);
            let mut best: Option<(usize, f64, f64)> = None;
            for j in start..end {
                if self.state[j] == State::Basic {
                    continue;
                }
                let d = self.reduced_cost(phase_one, j);
                if let Some(dir) = self.entering_direction(j, d) {
                    if best.is_none_or(|b| d.abs() > b.2.abs()) {
                        best = Some((j, dir, d));
                    }
                }
            }
            if best.is_some() {
                self.price_offset = (seg + 1) % segments;
                return best;
            }
        }
        None
    }

    fn ftran(&mut self, q: usize) {
        let m = self.m;
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        let mut entries = Vec::new();
        self.for_each_entry(q, |i, a| entries.push((i, a)));
        for (i, a) in entries {
            let col = &self.binv[i * m..(i + 1) * m];
            for (v, &b) in self.alpha.iter_mut().zip(col) {
                *v += a * b;
            }
        }
    }

    /// Returns `(theta, leaving position)`; `None` position means a bound flip.
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> Option<(f64, Option<usize>)> {
        let tol = self.opts.primal_tol;
        let piv = self.opts.pivot_tol;
        let flip = self.upper[q] - self.lower[q];
        let exact = |k: usize| -> Option<(f64, f64)> {
            let a = self.alpha[k];
            if a.abs() <= piv {
                return None;
            }
            let j = self.basis[k];
            let rate = -dir * a;
            if rate < 0.0 {
                let l = self.lower[j];
                l.is_finite().then(|| ((self.x[j] - l) / -rate, (self.x[j] - l + tol) / -rate))
            } else {
                let u = self.upper[j];
                u.is_finite().then(|| ((u - self.x[j]) / rate, (u - self.x[j] + tol) / rate))
            }
        };

        if bland {
            let mut best: Option<(f64, usize)> = None;
            for k in 0..self.m {
                if let Some((r, _)) = exact(k) {
                    let r = r.max(0.0);
                    let better = match best {
                        None => true,
                        Some((br, bk)) => {
                            r < br - tol || (r <= br + tol && self.basis[k] < self.basis[bk])
                        }
                    };
                    if better {
                        best = Some((r, k));
                    }
                }
            }
            return match best {
                Some((r, _)) if flip.is_finite() && flip <= r => Some((flip, None)),
                Some((r, k)) => Some((r, Some(k))),
                None if flip.is_finite() => Some((flip, None)),
                None => None,
            };
        }

        let mut theta_max = f64::INFINITY;
        for k in 0..self.m {
            if let Some((_, relaxed)) = exact(k) {
                theta_max = theta_max.min(relaxed);
            }
        }
        if flip.is_finite() && flip <= theta_max {
            return Some((flip, None));
        }
        if theta_max == f64::INFINITY {
            return None;
        }
        let mut chosen: Option<(f64, usize)> = None;
        let mut chosen_alpha = 0.0;
        for k in 0..self.m {
            if let Some((r, _)) = exact(k) {
                if r <= theta_max && self.alpha[k].abs() > chosen_alpha {
                    chosen_alpha = self.alpha[k].abs();
                    chosen = Some((r.max(0.0), k));
                }
            }
        }
        chosen.map(|(r, k)| (r, Some(k)))
    }

    fn pivot(&mut self, q: usize, dir: f64, d_q: f64, theta: f64, leave: Option<usize>) {
        let m = self.m;
        self.x[q] += dir * theta;
        if theta != 0.0 {
            for k in 0..m {
                let a = self.alpha[k];
                if a != 0.0 {
                    let j = self.basis[k];
                    self.x[j] -= dir * theta * a;
                }
            }
        }
        let Some(r) = leave else {
            self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
            self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            return;
        };

        let leaving = self.basis[r];
        let rate = -dir * self.alpha[r];
        if self.lower[leaving] == self.upper[leaving] || rate < 0.0 {
            self.x[leaving] = self.lower[leaving];
            self.state[leaving] = State::Lower;
        } else {
            self.x[leaving] = self.upper[leaving];
            self.state[leaving] = State::Upper;
        }

        // Dual update uses row r of the old inverse.
        let ar = self.alpha[r];
        let step = d_q / ar;
        for i in 0..m {
            let b = self.binv[i * m + r];
            if b != 0.0 {
                self.y[i] += step * b;
            }
        }

        let nz: Vec<usize> = (0..m).filter(|&k| self.alpha[k] != 0.0).collect();
        let sparse = nz.len() * 4 < m;
        for i in 0..m {
            let col = &mut self.binv[i * m..(i + 1) * m];
            let pr = col[r];
            if pr == 0.0 {
                continue;
            }
            let f = pr / ar;
            if sparse {
                for &k in &nz {
                    col[k] -= self.alpha[k] * f;
                }
            } else {
                for (c, &a) in col.iter_mut().zip(&self.alpha) {
                    *c -= a * f;
                }
            }
            col[r] = f;
        }

        self.basis[r] = q;
        self.state[q] = State::Basic;
        self.since_refactor += 1;
    }

    /// Fixes artificials that have been driven to zero and drops them from the
    /// phase-one objective, updating the duals in place.
    fn retire_artificials(&mut self) {
        let m = self.m;
        let first_art = self.n + m;
        for j in first_art..self.total() {
            if self.upper[j] > 0.0 && self.state[j] != State::Basic && self.x[j] <= self.opts.primal_tol {
                self.upper[j] = 0.0;
                self.x[j] = 0.0;
                self.state[j] = State::Lower;
            }
        }
        for k in 0..m {
            let j = self.basis[k];
            if j >= first_art && self.upper[j] > 0.0 && self.x[j] <= self.opts.primal_tol {
                self.upper[j] = 0.0;
                self.x[j] = 0.0;
                for i in 0..m {
                    self.y[i] += self.binv[i * m + k];
                }
            }
        }
    }

    fn artificial_sum(&self) -> f64 {
        (self.n + self.m..self.total()).map(|j| self.x[j].abs()).sum()
    }

    fn max_iterations(&self) -> usize {
        self.opts
            .max_iterations
            .unwrap_or(50 * (self.m + self.total()) + 10_000)
    }

    fn refactor_period(&self) -> usize {
        self.opts.refactor_every.unwrap_or((self.m / 2).clamp(100, 1000))
    }

    fn run_phase(&mut self, phase_one: bool) -> Result<PhaseEnd> {
        self.refactor()?;
        self.compute_duals(phase_one);
        self.degenerate_streak = 0;
        let mut confirmed = false;
        loop {
            if self.iterations >= self.max_iterations() {
                return Err(Error::Solver(format!(
                    "iteration limit reached on {}",
                    describe(self.lp)
                )));
            }
            if self.since_refactor >= self.refactor_period() {
                self.refactor()?;
                self.compute_duals(phase_one);
            }
            let bland = self.degenerate_streak > self.opts.bland_after;
            let Some((q, dir, d_q)) = self.price(phase_one, bland) else {
                if confirmed || self.since_refactor == 0 {
                    return Ok(PhaseEnd::Optimal);
                }
                self.refactor()?;
                self.compute_duals(phase_one);
                confirmed = true;
                continue;
            };
            confirmed = false;
            self.ftran(q);
            let Some((theta, leave)) = self.ratio_test(q, dir, bland) else {
                return Ok(PhaseEnd::Unbounded);
            };
            if theta <= 1e-12 {
                self.degenerate_streak += 1;
            } else {
                self.degenerate_streak = 0;
            }
            self.pivot(q, dir, d_q, theta, leave);
            if phase_one {
                self.retire_artificials();
            }
            self.iterations += 1;
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        if !self.artificials.is_empty() {
            match self.run_phase(true)? {
                PhaseEnd::Unbounded => {
                    return Err(Error::Solver("phase one reported unbounded".into()));
                }
                PhaseEnd::Optimal => {}
            }
            let first_art = self.n + self.m;
            let infeasibility = self.artificial_sum();
            let scale = 1.0 + self.lp.rows().iter().fold(0.0, |a: f64, r| a.max(r.rhs.abs()));
            if infeasibility > 1e-7 * scale {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, self.lp, self.iterations));
            }
            for j in first_art..self.total() {
                self.upper[j] = 0.0;
                if self.state[j] != State::Basic {
                    self.x[j] = 0.0;
                    self.state[j] = State::Lower;
                }
            }
        }
        match self.run_phase(false)? {
            PhaseEnd::Unbounded => Ok(LpSolution::without_point(
                LpStatus::Unbounded,
                self.lp,
                self.iterations,
            )),
            PhaseEnd::Optimal => Ok(self.extract()),
        }
    }

    fn extract(&self) -> LpSolution {
        let primal: Vec<f64> = self.x[..self.n].to_vec();
        let reduced_costs: Vec<f64> = (0..self.n).map(|j| self.reduced_cost(false, j)).collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective: self.lp.objective_value(&primal),
            primal,
            row_duals: self.y.clone(),
            reduced_costs,
            row_groups: self.lp.row_groups(),
            iterations: self.iterations,
        }
    }
}
