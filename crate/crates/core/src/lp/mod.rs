//! LP relaxations: a bounded-variable revised simplex with warm starts, dual
//! reoptimization after row additions and tableau-row extraction.

mod lu;
mod simplex;

use serde::{Deserialize, Serialize};

pub use simplex::SimplexSolver;

use crate::error::{Error, Result};
use crate::model::{Constraint, MipModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Status of a column; columns `n..n+m` are the row logicals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic at zero with no finite bound.
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    /// Basic column per row position.
    pub basic: Vec<usize>,
    /// Status of every column, structural then logical.
    pub status: Vec<VarStatus>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals; `duals[i]` is the reduced cost of the logical of row `i`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    pub residual_tol: f64,
    pub refactor_interval: usize,
    /// Degenerate iterations in a row before switching to Bland's rule.
    pub bland_after: usize,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            pivot_tol: 1e-9,
            residual_tol: 1e-9,
            refactor_interval: 100,
            bland_after: 1000,
            max_iterations: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableauEntry {
    /// Column index; values `>= n` are the logical of row `col - n`.
    pub col: usize,
    pub coef: f64,
    pub at_upper: bool,
}

/// `x_basic = rhs - sum coef * t_j` with `t_j = x_j - l_j` for columns at
/// their lower bound (or free) and `t_j = u_j - x_j` for columns at upper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableauRow {
    pub basic: usize,
    pub rhs: f64,
    pub entries: Vec<TableauEntry>,
}

pub fn solve_lp(model: &MipModel, warm: Option<&Basis>) -> Result<LpResult> {
    solve_lp_with(model, warm, SimplexOptions::default())
}

pub fn solve_lp_with(model: &MipModel, warm: Option<&Basis>, opts: SimplexOptions) -> Result<LpResult> {
    let mut solver = SimplexSolver::new(model, opts)?;
    if let Some(b) = warm {
        solver.set_basis(b)?;
    }
    solver.solve()?;
    solver.result()
}

/// Solves `model` extended by `new_rows`, starting from the basis of `prev`.
/// A numerical failure of the warm start falls back to a cold solve.
pub fn reoptimize_with_rows(model: &MipModel, new_rows: &[Constraint], prev: &LpResult) -> Result<LpResult> {
    let warm = || -> Result<LpResult> {
        let mut solver = SimplexSolver::new(model, SimplexOptions::default())?;
        solver.add_rows(new_rows)?;
        solver.set_basis(&prev.basis)?;
        solver.solve()?;
        solver.result()
    };
    match warm() {
        Err(Error::Numerical(msg)) => {
            log::warn!("warm reoptimization failed ({msg}); solving from scratch");
            let mut extended = model.clone();
            extended.constraints.extend_from_slice(new_rows);
            solve_lp(&extended, None)
        }
        other => other,
    }
}

/// Tableau row of basic column `var` at the basis of `result`.
pub fn tableau_row(model: &MipModel, result: &LpResult, var: usize) -> Result<TableauRow> {
    let mut solver = SimplexSolver::new(model, SimplexOptions::default())?;
    solver.set_basis(&result.basis)?;
    solver.tableau_row(var)
}
