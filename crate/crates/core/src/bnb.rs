//! LP-based branch-and-bound, used as the exact oracle for OPT.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{Basis, LpStatus, SimplexOptions, SimplexSolver};
use crate::model::{fractionality, MipModel, Solution, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Incumbent objective, `+inf` without an incumbent.
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    pub incumbent: Option<Solution>,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    pub node_limit: usize,
    pub gap_tol: f64,
    pub int_tol: f64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            node_limit: 1_000_000,
            gap_tol: 1e-9,
            int_tol: 1e-6,
        }
    }
}

struct Node {
    bound: f64,
    seq: usize,
    /// (var, lower, upper) overrides along the path from the root
    fixes: Vec<(VarId, f64, f64)>,
    basis: Arc<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smallest bound first, then the newest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.seq.cmp(&other.seq))
    }
}

/// True when every integer point has an integral objective value.
fn integral_objective(model: &MipModel) -> bool {
    model
        .objective
        .iter()
        .all(|(j, c)| model.variables[j].is_integer() && c.fract() == 0.0)
}

pub fn solve_mip(model: &MipModel, node_limit: usize, gap_tol: f64) -> Result<BnbResult> {
    solve_mip_with(model, BnbOptions { node_limit, gap_tol, ..Default::default() })
}

pub fn solve_mip_with(model: &MipModel, opts: BnbOptions) -> Result<BnbResult> {
    if opts.node_limit == 0 {
        return Err(Error::InvalidParameters("node_limit must be at least 1".into()));
    }
    let mut solver = SimplexSolver::new(model, SimplexOptions::default())?;
    let int_vars: Vec<VarId> = model.integer_vars().collect();
    for &j in &int_vars {
        let (lo, hi) = solver.col_bounds(j);
        if lo.ceil() > hi.floor() {
            return Ok(BnbResult {
                status: BnbStatus::Infeasible,
                objective: f64::INFINITY,
                bound: f64::INFINITY,
                incumbent: None,
                nodes: 0,
            });
        }
        solver.set_col_bounds(j, lo.ceil(), hi.floor())?;
    }
    let root_bounds: Vec<(f64, f64)> = (0..model.num_vars()).map(|j| solver.col_bounds(j)).collect();
    let round_bound = integral_objective(model);
    let tighten = |b: f64| if round_bound { (b - 1e-6).ceil() } else { b };

    let mut incumbent: Option<Solution> = None;
    let mut best = f64::INFINITY;
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        fixes: Vec::new(),
        basis: Arc::new(solver.basis()),
    });
    let mut nodes = 0;
    let mut applied: Vec<VarId> = Vec::new();
    let mut limit_hit = false;
    let mut open_bound = f64::INFINITY;

    while let Some(node) = heap.pop() {
        if node.bound >= best - 1e-9 {
            continue;
        }
        if nodes >= opts.node_limit {
            limit_hit = true;
            open_bound = node.bound;
            break;
        }
        if best.is_finite() && node.bound.is_finite() {
            let gap = (best - node.bound) / best.abs().max(1e-9);
            if gap <= opts.gap_tol {
                heap.push(node);
                break;
            }
        }
        nodes += 1;
        for &j in &applied {
            let (lo, hi) = root_bounds[j];
            solver.set_col_bounds(j, lo, hi)?;
        }
        applied.clear();
        for &(j, lo, hi) in &node.fixes {
            solver.set_col_bounds(j, lo, hi)?;
            applied.push(j);
        }
        solver.set_basis(&node.basis)?;
        match solver.solve()? {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(Error::InvalidModel("LP relaxation is unbounded".into()));
            }
        }
        let lp = solver.result()?;
        let bound = tighten(lp.objective);
        if bound >= best - 1e-9 {
            continue;
        }
        let branch = int_vars
            .iter()
            .map(|&j| (j, fractionality(lp.x[j])))
            .filter(|&(_, f)| f > opts.int_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((j, _)) = branch else {
            let mut values = lp.x.clone();
            for &k in &int_vars {
                values[k] = values[k].round();
            }
            let objective = model.objective_value(&values);
            if objective < best {
                best = objective;
                incumbent = Some(Solution { values, objective });
                log::debug!("incumbent {objective} at node {nodes}");
            }
            continue;
        };
        let v = lp.x[j];
        let (lo, hi) = solver.col_bounds(j);
        let basis = Arc::new(lp.basis);
        let down = (j, lo, v.floor());
        let up = (j, v.ceil(), hi);
        let children = if v - v.floor() >= 0.5 { [down, up] } else { [up, down] };
        // the later push is explored first
        for fix in children {
            let mut fixes = node.fixes.clone();
            fixes.push(fix);
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                fixes,
                basis: Arc::clone(&basis),
            });
        }
    }
    let remaining = heap
        .iter()
        .map(|n| n.bound)
        .filter(|&b| b < best - 1e-9)
        .fold(f64::INFINITY, f64::min);
    let bound = if limit_hit { open_bound.min(remaining) } else { remaining.min(best) };
    let status = match (&incumbent, limit_hit) {
        (_, true) => BnbStatus::NodeLimit,
        (Some(_), false) => BnbStatus::Optimal,
        (None, false) => BnbStatus::Infeasible,
    };
    Ok(BnbResult {
        status,
        objective: best,
        bound,
        incumbent,
        nodes,
    })
}
