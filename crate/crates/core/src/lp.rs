//! Dense two-phase primal simplex for small linear programs.
//!
//! Programs have the form `min c·x` subject to `A·x ≥ b` and `lo ≤ x ≤ hi`.
//! Bland's rule picks entering and leaving variables, so degenerate pivots
//! cannot cycle. Every optimal solution is checked against the KKT
//! conditions before it is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::EconParams;
use crate::prob_model::{Signal, SignalModel};

pub const PIVOT_TOL: f64 = 1e-10;
const OPTIMALITY_TOL: f64 = 1e-12;
const PHASE1_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// Rows of `A` in `A·x ≥ b`.
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// Per-variable `(lo, hi)`; `hi` may be infinite, `lo` must be finite.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(Error::DimensionError(format!("{} bounds for {} variables", self.bounds.len(), n)));
        }
        if self.rhs.len() != self.constraints.len() {
            return Err(Error::DimensionError(format!(
                "{} right-hand sides for {} constraints",
                self.rhs.len(),
                self.constraints.len()
            )));
        }
        if let Some(row) = self.constraints.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionError(format!("constraint row of length {} for {} variables", row.len(), n)));
        }
        for &(lo, hi) in &self.bounds {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidParameter { name: "bounds", reason: format!("[{lo}, {hi}]") });
            }
        }
        Ok(())
    }

    /// `A_i·x − b_i` for every constraint.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().zip(&self.rhs).map(|(row, b)| dot(row, x) - b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Nonnegative multipliers of the `A·x ≥ b` rows at the optimum.
    pub duals: Vec<f64>,
}

impl LpSolution {
    /// Indices of constraints with slack at most `tol`.
    pub fn binding(&self, lp: &LinearProgram, tol: f64) -> Vec<usize> {
        lp.slacks(&self.x).iter().enumerate().filter(|(_, s)| s.abs() <= tol).map(|(i, _)| i).collect()
    }

    fn without_point(status: LpStatus) -> Self {
        Self { status, x: Vec::new(), objective_value: f64::NAN, duals: Vec::new() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced costs; last entry is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            self.obj.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> Result<Outcome> {
        let max_iter = 50 * (self.rows.len() + self.cols) + 1000;
        for _ in 0..max_iter {
            // Bland: lowest-index improving column
            let Some(c) = (0..self.cols).find(|&j| allowed(j) && self.obj[j] < -OPTIMALITY_TOL) else {
                return Ok(Outcome::Optimal);
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[rhs] / row[c];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(Error::SolverError(format!("no convergence after {max_iter} pivots")))
    }
}

/// Solves `lp` by the two-phase simplex method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let nv = lp.num_vars();
    let m = lp.num_constraints();
    let lo: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    let upper: Vec<(usize, f64)> =
        lp.bounds.iter().enumerate().filter(|(_, b)| b.1.is_finite()).map(|(j, b)| (j, b.1 - b.0)).collect();

    // columns: shifted variables y = x − lo | constraint slacks | bound slacks | artificials
    let slack0 = nv;
    let bslack0 = slack0 + m;
    let art0 = bslack0 + upper.len();
    let shifted_rhs: Vec<f64> = (0..m).map(|i| lp.rhs[i] - dot(&lp.constraints[i], &lo)).collect();
    let needs_art: Vec<bool> = shifted_rhs.iter().map(|&b| b > 0.0).collect();
    let n_art = needs_art.iter().filter(|&&a| a).count();
    let cols = art0 + n_art;

    let mut rows = Vec::with_capacity(m + upper.len());
    let mut basis = Vec::with_capacity(m + upper.len());
    let mut next_art = art0;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        if needs_art[i] {
            row[..nv].copy_from_slice(&lp.constraints[i]);
            row[slack0 + i] = -1.0;
            row[next_art] = 1.0;
            row[cols] = shifted_rhs[i];
            basis.push(next_art);
            next_art += 1;
        } else {
            row[..nv].iter_mut().zip(&lp.constraints[i]).for_each(|(v, a)| *v = -a);
            row[slack0 + i] = 1.0;
            row[cols] = -shifted_rhs[i];
            basis.push(slack0 + i);
        }
        rows.push(row);
    }
    for (b, &(j, width)) in upper.iter().enumerate() {
        let mut row = vec![0.0; cols + 1];
        row[j] = 1.0;
        row[bslack0 + b] = 1.0;
        row[cols] = width;
        basis.push(bslack0 + b);
        rows.push(row);
    }

    let mut t = Tableau { rows, obj: vec![0.0; cols + 1], basis, cols };

    if n_art > 0 {
        for j in art0..cols {
            t.obj[j] = 1.0;
        }
        for r in 0..t.rows.len() {
            if t.basis[r] >= art0 {
                let row = t.rows[r].clone();
                t.obj.iter_mut().zip(&row).for_each(|(v, a)| *v -= a);
            }
        }
        t.run(|_| true)?;
        if -t.obj[cols] > PHASE1_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..t.rows.len() {
            if t.basis[r] >= art0 {
                if let Some(c) = (0..art0).find(|&j| t.rows[r][j].abs() > PIVOT_TOL) {
                    t.pivot(r, c);
                }
            }
        }
    }

    t.obj = vec![0.0; cols + 1];
    t.obj[..nv].copy_from_slice(&lp.objective);
    for r in 0..t.rows.len() {
        let cb = if t.basis[r] < nv { lp.objective[t.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            let row = t.rows[r].clone();
            t.obj.iter_mut().zip(&row).for_each(|(v, a)| *v -= cb * a);
        }
    }
    if let Outcome::Unbounded = t.run(|j| j < art0)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let mut x = lo.clone();
    for (r, &b) in t.basis.iter().enumerate() {
        if b < nv {
            x[b] += t.rows[r][cols];
        }
    }
    // reduced costs of slack columns are the multipliers of their rows
    let duals: Vec<f64> = (0..m).map(|i| t.obj[slack0 + i]).collect();
    let mut upper_mult = vec![0.0; nv];
    for (b, &(j, _)) in upper.iter().enumerate() {
        upper_mult[j] = t.obj[bslack0 + b];
    }
    let lower_mult: Vec<f64> = t.obj[..nv].to_vec();
    let solution = LpSolution { status: LpStatus::Optimal, objective_value: dot(&lp.objective, &x), x, duals };
    check_kkt(lp, &solution, &upper_mult, &lower_mult)?;
    Ok(solution)
}

fn check_kkt(lp: &LinearProgram, sol: &LpSolution, upper_mult: &[f64], lower_mult: &[f64]) -> Result<()> {
    let fail = |what: &str, v: f64| Err(Error::SolverError(format!("KKT check failed: {what} residual {v:e}")));
    let slacks = lp.slacks(&sol.x);
    if let Some(&s) = slacks.iter().find(|&&s| s < -KKT_TOL) {
        return fail("primal feasibility", s);
    }
    for (j, (&(lo, hi), &x)) in lp.bounds.iter().zip(&sol.x).enumerate() {
        if x < lo - KKT_TOL || x > hi + KKT_TOL {
            return fail("bound", x);
        }
        if (lower_mult[j] * (x - lo)).abs() > KKT_TOL {
            return fail("lower-bound complementarity", lower_mult[j] * (x - lo));
        }
        if hi.is_finite() && (upper_mult[j] * (hi - x)).abs() > KKT_TOL {
            return fail("upper-bound complementarity", upper_mult[j] * (hi - x));
        }
    }
    for (&l, &s) in sol.duals.iter().zip(&slacks) {
        if l < -KKT_TOL {
            return fail("dual sign", l);
        }
        if (l * s).abs() > KKT_TOL {
            return fail("complementary slackness", l * s);
        }
    }
    // c = Aᵀλ − μ + ρ
    for j in 0..lp.num_vars() {
        let at_lambda: f64 = lp.constraints.iter().zip(&sol.duals).map(|(row, l)| row[j] * l).sum();
        let r = lp.objective[j] - at_lambda + upper_mult[j] - lower_mult[j];
        if r.abs() > KKT_TOL {
            return fail("stationarity", r);
        }
    }
    Ok(())
}

/// Workload-minimizing uniform spot-check program over `x(0..=n)`.
///
/// Rows `2k` and `2k + 1` are, for `k = 0..n`:
/// `P_bb·x(k) − P_ab·x(k+1) ≥ c/R` and `P_aa·x(k+1) − P_ab·x(k) ≥ c/R`.
pub fn build_rsus_lp(model: &SignalModel, econ: &EconParams, n: usize) -> Result<LinearProgram> {
    let weights = model.count_distribution(n)?.probs;
    let paa = model.pair_joint(Signal::A, Signal::A);
    let pab = model.pair_joint(Signal::A, Signal::B);
    let pbb = model.pair_joint(Signal::B, Signal::B);
    let ratio = econ.ratio();
    let mut constraints = Vec::with_capacity(2 * n);
    let mut rhs = Vec::with_capacity(2 * n);
    for k in 0..n {
        let mut lazy_a = vec![0.0; n + 1];
        lazy_a[k] = pbb;
        lazy_a[k + 1] = -pab;
        let mut lazy_b = vec![0.0; n + 1];
        lazy_b[k] = -pab;
        lazy_b[k + 1] = paa;
        constraints.push(lazy_a);
        constraints.push(lazy_b);
        rhs.extend([ratio, ratio]);
    }
    Ok(LinearProgram { objective: weights, constraints, rhs, bounds: vec![(0.0, 1.0); n + 1] })
}
