//! Dense revised simplex for the small linear programs built by the DEA models.
//!
//! Programs are maximization problems
//!
//! ```text
//! maximize    c'x
//! subject to  A x (<=, >=, =) b
//!             x >= l
//! ```
//!
//! with a finite lower bound on every variable. Internally the bounds are
//! shifted to zero, rows are sign-normalized so that `b >= 0`, and the
//! two-phase method drives artificial variables out before optimizing the
//! real objective. The basis inverse is kept explicitly (the programs have a
//! few dozen rows at most) and refactorized periodically.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Dense LP in the form above.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: DMatrix<f64>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
}

impl LinearProgram {
    /// Program with all lower bounds at zero.
    pub fn new(
        objective: Vec<f64>,
        constraints: DMatrix<f64>,
        senses: Vec<Sense>,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        let lower_bounds = vec![0.0; objective.len()];
        let lp = Self {
            objective,
            constraints,
            senses,
            rhs,
            lower_bounds,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn with_lower_bounds(mut self, lower_bounds: Vec<f64>) -> Result<Self> {
        self.lower_bounds = lower_bounds;
        self.validate()?;
        Ok(self)
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.constraints.shape();
        if rows != self.senses.len() || rows != self.rhs.len() {
            return Err(Error::invalid(format!(
                "constraint matrix has {rows} rows but {} senses and {} rhs entries",
                self.senses.len(),
                self.rhs.len()
            )));
        }
        if cols != self.objective.len() || cols != self.lower_bounds.len() {
            return Err(Error::invalid(format!(
                "constraint matrix has {cols} columns but objective has {} and bounds {}",
                self.objective.len(),
                self.lower_bounds.len()
            )));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.rhs.iter().all(|v| v.is_finite())
            && self.lower_bounds.iter().all(|v| v.is_finite())
            && self.constraints.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("LP data must be finite"));
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `x`, each row measured relative
    /// to `max(1, |b_i|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_rows() {
            let lhs: f64 = (0..self.num_cols())
                .map(|j| self.constraints[(i, j)] * x[j])
                .sum();
            let gap = lhs - self.rhs[i];
            let viol = match self.senses[i] {
                Sense::Le => gap.max(0.0),
                Sense::Ge => (-gap).max(0.0),
                Sense::Eq => gap.abs(),
            };
            worst = worst.max(viol / self.rhs[i].abs().max(1.0));
        }
        for (xj, lb) in x.iter().zip(&self.lower_bounds) {
            worst = worst.max((lb - xj).max(0.0));
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff `status == Optimal`.
    pub objective_value: Option<f64>,
    /// Present iff `status == Optimal`.
    pub primal_values: Option<Vec<f64>>,
    /// Row duals in the sign convention of the original rows (nonnegative for
    /// `<=`, nonpositive for `>=`, free for `=`). Present iff optimal.
    pub dual_values: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            objective_value: None,
            primal_values: None,
            dual_values: None,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_pivots: usize,
    /// Pivots between explicit refactorizations of the basis inverse.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            max_pivots: 10_000,
            refactor_every: 50,
        }
    }
}

/// Solve with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LinearProgram, options: &SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let tableau = StandardForm::build(lp);
    let mut state = Simplex::new(&tableau, *options);

    // Phase 1: maximize minus the sum of artificials.
    if tableau.num_artificial > 0 {
        let phase1_cost: Vec<f64> = (0..tableau.cols)
            .map(|j| if tableau.is_artificial(j) { -1.0 } else { 0.0 })
            .collect();
        match state.run(&tableau, &phase1_cost, |_| true) {
            PhaseEnd::Optimal => {}
            // The phase 1 objective is bounded by zero, so an unbounded ray
            // only shows up through round-off.
            PhaseEnd::Unbounded | PhaseEnd::IterationLimit => {
                return Ok(LpSolution::without_point(
                    LpStatus::IterationLimit,
                    state.pivots,
                ))
            }
        }
        let infeasibility: f64 = state
            .basis
            .iter()
            .zip(state.x_basic.iter())
            .filter(|(&j, _)| tableau.is_artificial(j))
            .map(|(_, &v)| v.max(0.0))
            .sum();
        let scale = tableau.b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if infeasibility > options.feasibility_tol * scale {
            return Ok(LpSolution::without_point(
                LpStatus::Infeasible,
                state.pivots,
            ));
        }
        state.drive_out_artificials(&tableau);
    }

    // Phase 2 over structural and slack columns only.
    let phase2_cost = tableau.cost.clone();
    let artificial_start = tableau.cols - tableau.num_artificial;
    let end = state.run(&tableau, &phase2_cost, |j| j < artificial_start);
    match end {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => {
            return Ok(LpSolution::without_point(LpStatus::Unbounded, state.pivots))
        }
        PhaseEnd::IterationLimit => {
            return Ok(LpSolution::without_point(
                LpStatus::IterationLimit,
                state.pivots,
            ))
        }
    }

    state.refactor(&tableau);
    let mut shifted = vec![0.0; tableau.cols];
    for (row, &j) in state.basis.iter().enumerate() {
        shifted[j] = state.x_basic[row].max(0.0);
    }
    let primal: Vec<f64> = (0..lp.num_cols())
        .map(|j| shifted[j] + lp.lower_bounds[j])
        .collect();
    let objective_value = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();

    let duals_std = state.duals(&phase2_cost);
    let dual_values = duals_std
        .iter()
        .zip(&tableau.row_flipped)
        .map(|(&y, &flipped)| if flipped { -y } else { y })
        .collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: Some(objective_value),
        primal_values: Some(primal),
        dual_values: Some(dual_values),
        iterations: state.pivots,
    })
}

/// `A x = b, x >= 0, b >= 0` with slack, surplus and artificial columns
/// appended after the structural ones (artificials last).
struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cost: Vec<f64>,
    cols: usize,
    num_artificial: usize,
    row_flipped: Vec<bool>,
    initial_basis: Vec<usize>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_cols();

        let lb = DVector::from_column_slice(&lp.lower_bounds);
        let shifted_rhs = DVector::from_column_slice(&lp.rhs) - &lp.constraints * lb;

        let mut senses = lp.senses.clone();
        let mut rows = lp.constraints.clone();
        let mut b = shifted_rhs;
        let mut row_flipped = vec![false; m];
        for i in 0..m {
            if b[i] < 0.0 {
                b[i] = -b[i];
                rows.row_mut(i).neg_mut();
                row_flipped[i] = true;
                senses[i] = match senses[i] {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
        }

        let num_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
        let num_artificial = senses.iter().filter(|s| **s != Sense::Le).count();
        let cols = n + num_slack + num_artificial;

        let mut a = DMatrix::zeros(m, cols);
        a.view_mut((0, 0), (m, n)).copy_from(&rows);
        let mut initial_basis = vec![0; m];
        let mut next_slack = n;
        let mut next_art = n + num_slack;
        for (i, sense) in senses.iter().enumerate() {
            match sense {
                Sense::Le => {
                    a[(i, next_slack)] = 1.0;
                    initial_basis[i] = next_slack;
                    next_slack += 1;
                }
                Sense::Ge => {
                    a[(i, next_slack)] = -1.0;
                    next_slack += 1;
                    a[(i, next_art)] = 1.0;
                    initial_basis[i] = next_art;
                    next_art += 1;
                }
                Sense::Eq => {
                    a[(i, next_art)] = 1.0;
                    initial_basis[i] = next_art;
                    next_art += 1;
                }
            }
        }

        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&lp.objective);

        Self {
            a,
            b,
            cost,
            cols,
            num_artificial,
            row_flipped,
            initial_basis,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.cols - self.num_artificial
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex {
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    b_inv: DMatrix<f64>,
    x_basic: DVector<f64>,
    pivots: usize,
    since_refactor: usize,
    options: SimplexOptions,
}

impl Simplex {
    fn new(form: &StandardForm, options: SimplexOptions) -> Self {
        let m = form.b.len();
        let mut in_basis = vec![false; form.cols];
        for &j in &form.initial_basis {
            in_basis[j] = true;
        }
        Self {
            basis: form.initial_basis.clone(),
            in_basis,
            b_inv: DMatrix::identity(m, m),
            x_basic: form.b.clone(),
            pivots: 0,
            since_refactor: 0,
            options,
        }
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let c_b = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| cost[j]));
        self.b_inv.tr_mul(&c_b)
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(self.x_basic.iter())
            .map(|(&j, &x)| cost[j] * x)
            .sum()
    }

    fn run(
        &mut self,
        form: &StandardForm,
        cost: &[f64],
        allowed: impl Fn(usize) -> bool,
    ) -> PhaseEnd {
        let m = self.basis.len();
        let stall_limit = 2 * (m + form.cols);
        let mut stalled = 0usize;
        let mut bland = false;
        let mut best = self.objective(cost);

        loop {
            if self.pivots >= self.options.max_pivots {
                return PhaseEnd::IterationLimit;
            }
            let y = self.duals(cost);

            let mut entering: Option<(usize, f64)> = None;
            #[allow(clippy::needless_range_loop)]
            for j in 0..form.cols {
                if self.in_basis[j] || !allowed(j) {
                    continue;
                }
                let reduced = cost[j] - form.a.column(j).dot(&y);
                if reduced <= self.options.optimality_tol {
                    continue;
                }
                if bland {
                    entering = Some((j, reduced));
                    break;
                }
                if entering.is_none_or(|(_, best_rc)| reduced > best_rc) {
                    entering = Some((j, reduced));
                }
            }
            let Some((enter, _)) = entering else {
                return PhaseEnd::Optimal;
            };

            let direction = &self.b_inv * form.a.column(enter);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let d = direction[i];
                if d <= self.options.pivot_tol {
                    continue;
                }
                let ratio = self.x_basic[i].max(0.0) / d;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * best_ratio.max(1.0);
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                d > direction[r]
                            }
                        } else {
                            ratio < best_ratio
                        };
                        if better {
                            Some((i, ratio))
                        } else {
                            Some((r, best_ratio))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return PhaseEnd::Unbounded;
            };

            self.pivot(form, row, enter, &direction);

            let value = self.objective(cost);
            if value > best + 1e-12 * best.abs().max(1.0) {
                best = value;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= stall_limit {
                    bland = true;
                }
            }
        }
    }

    fn pivot(&mut self, form: &StandardForm, row: usize, enter: usize, direction: &DVector<f64>) {
        let m = self.basis.len();
        let pivot = direction[row];
        let step = self.x_basic[row] / pivot;

        let pivot_row = self.b_inv.row(row) / pivot;
        for i in 0..m {
            if i == row {
                continue;
            }
            let factor = direction[i];
            if factor != 0.0 {
                let mut target = self.b_inv.row_mut(i);
                target -= &pivot_row * factor;
                self.x_basic[i] -= factor * step;
            }
        }
        self.b_inv.set_row(row, &pivot_row);
        self.x_basic[row] = step;

        self.in_basis[self.basis[row]] = false;
        self.in_basis[enter] = true;
        self.basis[row] = enter;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.options.refactor_every {
            self.refactor(form);
        }
    }

    fn refactor(&mut self, form: &StandardForm) {
        let m = self.basis.len();
        let mut basis_matrix = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            basis_matrix.set_column(k, &form.a.column(j));
        }
        if let Some(inv) = basis_matrix.lu().try_inverse() {
            self.b_inv = inv;
            self.x_basic = &self.b_inv * &form.b;
        }
        self.since_refactor = 0;
    }

    /// Pivot basic artificials (at level zero after a feasible phase 1) out
    /// of the basis. Rows where no real column can enter are redundant and
    /// keep their artificial, which stays at zero.
    fn drive_out_artificials(&mut self, form: &StandardForm) {
        for row in 0..self.basis.len() {
            if !form.is_artificial(self.basis[row]) {
                continue;
            }
            let artificial_start = form.cols - form.num_artificial;
            let replacement = (0..artificial_start).find(|&j| {
                !self.in_basis[j]
                    && (self.b_inv.row(row) * form.a.column(j))[0].abs() > self.options.pivot_tol
            });
            if let Some(j) = replacement {
                let direction = &self.b_inv * form.a.column(j);
                self.pivot(form, row, j, &direction);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lp(c: &[f64], rows: &[&[f64]], senses: &[Sense], b: &[f64]) -> LinearProgram {
        let m = rows.len();
        let n = c.len();
        let a = DMatrix::from_row_iterator(m, n, rows.iter().flat_map(|r| r.iter().copied()));
        LinearProgram::new(c.to_vec(), a, senses.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn one_variable_box() {
        let p = lp(&[1.0], &[&[1.0]], &[Sense::Le], &[1.0]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.primal_values.unwrap()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        let p = lp(
            &[1.0],
            &[&[1.0], &[1.0]],
            &[Sense::Ge, Sense::Le],
            &[2.0, 1.0],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.objective_value.is_none() && s.primal_values.is_none());
    }

    #[test]
    fn two_dmu_super_efficiency_program() {
        // variables (u, v): maximize 2u s.t. v = 1, u - v <= 0
        let p = lp(
            &[2.0, 0.0],
            &[&[0.0, 1.0], &[1.0, -1.0]],
            &[Sense::Eq, Sense::Le],
            &[1.0, 0.0],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value.unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_direction() {
        let p = lp(&[1.0, 1.0], &[&[1.0, -1.0]], &[Sense::Le], &[1.0]);
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_lower_bounds_are_shifted() {
        // maximize -x with x >= -3 and x <= 5
        let p = lp(&[-1.0], &[&[1.0]], &[Sense::Le], &[5.0])
            .with_lower_bounds(vec![-3.0])
            .unwrap();
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.objective_value.unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.primal_values.unwrap()[0], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = lp(
            &[3.0, 2.0],
            &[&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[Sense::Le, Sense::Le, Sense::Le],
            &[4.0, 3.0, 3.0],
        );
        let options = SimplexOptions {
            max_pivots: 1,
            ..Default::default()
        };
        let s = solve_with(&p, &options).unwrap();
        assert_eq!(s.status, LpStatus::IterationLimit);
        assert!(s.primal_values.is_none());
        assert_eq!(
            solve(&p).unwrap().objective_value.map(|v| v.round()),
            Some(11.0)
        );
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 2 stated twice; maximize x with y >= 0.5
        let p = lp(
            &[1.0, 0.0],
            &[&[1.0, 1.0], &[2.0, 2.0], &[0.0, 1.0]],
            &[Sense::Eq, Sense::Eq, Sense::Ge],
            &[2.0, 4.0, 0.5],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value.unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(LinearProgram::new(vec![1.0], a, vec![Sense::Le], vec![1.0]).is_err());
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance (as a maximization).
        let p = lp(
            &[0.75, -150.0, 0.02, -6.0],
            &[
                &[0.25, -60.0, -0.04, 9.0],
                &[0.5, -90.0, -0.02, 3.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[Sense::Le, Sense::Le, Sense::Le],
            &[0.0, 0.0, 1.0],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value.unwrap(), 0.05, epsilon = 1e-9);
    }
}
