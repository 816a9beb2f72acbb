//! Independent oracles and random model generators shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::VecDeque;

use bincut::cuts::{CutFamily, CutPool};
use bincut::cutloop::CutLoopReport;
use bincut::instances::{CmstInstance, FctInstance};
use bincut::model::{LinearExpr, MipModel, Sense, VarKind};
use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform on `lo..=hi`.
    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as i64
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

// ---------------------------------------------------------------------------
// FCT: enumeration over open-arc patterns with a flow feasibility check

/// Edmonds-Karp on a dense capacity matrix; returns the max-flow value.
fn max_flow(cap: &mut [Vec<i64>], s: usize, t: usize) -> i64 {
    let n = cap.len();
    let mut total = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = i64::MAX;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            cap[prev[v]][v] -= push;
            cap[v][prev[v]] += push;
            v = prev[v];
        }
        total += push;
    }
}

/// True when a flow exists that serves every demand exactly, respects
/// supplies, uses only open arcs, and sends at least one unit on each of them.
pub fn fct_pattern_feasible(inst: &FctInstance, open: &[bool]) -> bool {
    let (ns, nc) = (inst.n_suppliers, inst.n_customers);
    // nodes: suppliers, customers, S, T, SS, TT
    let s = ns + nc;
    let t = s + 1;
    let ss = s + 2;
    let tt = s + 3;
    let mut cap = vec![vec![0i64; s + 4]; s + 4];
    let mut excess = vec![0i64; s + 4];
    let mut lower = |u: usize, v: usize, lo: i64, hi: i64, cap: &mut Vec<Vec<i64>>| {
        cap[u][v] += hi - lo;
        excess[v] += lo;
        excess[u] -= lo;
    };
    for i in 0..ns {
        lower(s, i, 0, inst.supply[i], &mut cap);
    }
    for i in 0..ns {
        for j in 0..nc {
            if open[i * nc + j] {
                lower(i, ns + j, 1, inst.capacity[i][j], &mut cap);
            }
        }
    }
    for j in 0..nc {
        lower(ns + j, t, inst.demand[j], inst.demand[j], &mut cap);
    }
    cap[t][s] = i64::MAX / 4;
    let mut need = 0;
    for v in 0..s + 2 {
        if excess[v] > 0 {
            cap[ss][v] += excess[v];
            need += excess[v];
        } else if excess[v] < 0 {
            cap[v][tt] -= excess[v];
        }
    }
    max_flow(&mut cap, ss, tt) == need
}

/// Optimal FCT objective by enumerating every subset of open arcs.
pub fn fct_opt_by_enumeration(inst: &FctInstance) -> Option<f64> {
    let nc = inst.n_customers;
    let arcs = inst.n_suppliers * nc;
    assert!(arcs <= 20, "enumeration over {arcs} arcs is too large");
    let mut best: Option<i64> = None;
    for mask in 0u64..1 << arcs {
        let open: Vec<bool> = (0..arcs)
            .map(|a| mask >> a & 1 == 1 && inst.capacity[a / nc][a % nc] > 0)
            .collect();
        if (0..arcs).any(|a| mask >> a & 1 == 1 && !open[a]) {
            continue;
        }
        let cost: i64 = (0..arcs).filter(|&a| open[a]).map(|a| inst.cost[a / nc][a % nc]).sum();
        if best.is_some_and(|b| cost >= b) {
            continue;
        }
        if fct_pattern_feasible(inst, &open) {
            best = Some(cost);
        }
    }
    best.map(|b| b as f64)
}

// ---------------------------------------------------------------------------
// CMST: enumeration over parent vectors

pub fn cmst_opt_brute(inst: &CmstInstance) -> Option<f64> {
    let n = inst.n;
    let mut parent = vec![0usize; n + 1];
    let mut best: Option<i64> = None;
    loop {
        if let Some(cost) = cmst_tree_cost(inst, &parent) {
            if best.is_none_or(|b| cost < b) {
                best = Some(cost);
            }
        }
        // odometer over parent[1..=n] in 0..=n, skipping self loops
        let mut k = 1;
        loop {
            if k > n {
                return best.map(|b| b as f64);
            }
            parent[k] += 1;
            if parent[k] == k {
                parent[k] += 1;
            }
            if parent[k] <= n {
                break;
            }
            parent[k] = 0;
            k += 1;
        }
    }
}

fn cmst_tree_cost(inst: &CmstInstance, parent: &[usize]) -> Option<i64> {
    let n = inst.n;
    let mut gate = vec![0usize; n + 1];
    for i in 1..=n {
        let mut v = i;
        let mut steps = 0;
        while parent[v] != 0 {
            v = parent[v];
            steps += 1;
            if steps > n {
                return None;
            }
        }
        gate[i] = v;
    }
    for g in 1..=n {
        let load: i64 = (1..=n).filter(|&i| gate[i] == g).map(|i| inst.demand[i]).sum();
        if load > inst.capacity {
            return None;
        }
    }
    Some((1..=n).map(|i| inst.cost[parent[i]][i]).sum())
}

pub fn random_cmst(rng: &mut Rng, n: usize, capacity: i64) -> CmstInstance {
    let cost = (0..=n)
        .map(|i| (0..=n).map(|j| if i == j { 0 } else { rng.int(1, 30) }).collect())
        .collect();
    let mut demand = vec![1i64; n + 1];
    demand[0] = 0;
    CmstInstance {
        name: "rand".into(),
        n,
        demand,
        capacity,
        cost,
    }
}

// ---------------------------------------------------------------------------
// LPs: random bounded problems and a vertex-enumeration oracle

pub type Rows = Vec<(Vec<f64>, Sense, f64)>;

pub struct RandomLp {
    pub bounds: Vec<(f64, f64)>,
    pub obj: Vec<f64>,
    pub rows: Rows,
}

impl RandomLp {
    pub fn generate(rng: &mut Rng) -> Self {
        let n = rng.int(1, 6) as usize;
        let m = rng.int(1, 6) as usize;
        let bounds = (0..n)
            .map(|_| {
                let l = rng.int(-3, 2);
                (l as f64, (l + rng.int(1, 5)) as f64)
            })
            .collect();
        let obj = (0..n).map(|_| rng.int(-5, 5) as f64).collect();
        let bounds: Vec<(f64, f64)> = bounds;
        // most rows pass through a slack of an integer point of the box, so
        // the bulk of the problems are feasible; the rest are arbitrary
        let anchor: Vec<f64> = bounds.iter().map(|&(l, u)| rng.int(l as i64, u as i64) as f64).collect();
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.int(-4, 4) as f64).collect();
                let s = [Sense::Le, Sense::Ge, Sense::Eq][rng.int(0, 2) as usize];
                let act: f64 = a.iter().zip(&anchor).map(|(p, q)| p * q).sum();
                let b = if rng.chance(0.15) {
                    rng.int(-6, 6) as f64
                } else {
                    match s {
                        Sense::Le => act + rng.int(0, 3) as f64,
                        Sense::Ge => act - rng.int(0, 3) as f64,
                        Sense::Eq => act,
                    }
                };
                (a, s, b)
            })
            .collect();
        RandomLp { bounds, obj, rows }
    }

    pub fn model(&self) -> MipModel {
        let mut m = MipModel::new("lp");
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            m.add_var(format!("x{j}"), l, u, VarKind::Continuous, "x");
        }
        for (i, (a, s, b)) in self.rows.iter().enumerate() {
            m.add_constraint(LinearExpr::from_terms(a.iter().copied().enumerate()), *s, *b, format!("r({i})"));
        }
        m.set_objective(LinearExpr::from_terms(self.obj.iter().copied().enumerate()));
        m
    }

    /// Minimum over all basic solutions, by choosing `n` tight constraints.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.bounds.len();
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (a, _, b) in &self.rows {
            planes.push((a.clone(), *b));
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), l));
            planes.push((e, u));
        }
        let feasible = |x: &[f64]| {
            self.bounds.iter().zip(x).all(|(&(l, u), &v)| v >= l - 1e-9 && v <= u + 1e-9)
                && self.rows.iter().all(|(a, s, b)| {
                    let act: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                    match s {
                        Sense::Le => act <= b + 1e-9,
                        Sense::Ge => act >= b - 1e-9,
                        Sense::Eq => (act - b).abs() <= 1e-9,
                    }
                })
        };
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |r, c| planes[idx[r]].0[c]);
            let b = DVector::from_fn(n, |r, _| planes[idx[r]].1);
            if let Some(x) = a.clone().lu().solve(&b) {
                if (&a * &x - &b).amax() < 1e-9 {
                    let x: Vec<f64> = x.iter().copied().collect();
                    if feasible(&x) {
                        let v: f64 = self.obj.iter().zip(&x).map(|(p, q)| p * q).sum();
                        best = Some(best.map_or(v, |b: f64| b.min(v)));
                    }
                }
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if idx[k] < planes.len() - n + k {
                    idx[k] += 1;
                    for t in k + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Beale's cycling example: `min -3/4 x1 + 20 x2 - 1/2 x3 + 6 x4`, optimum -5/4.
pub fn beale() -> MipModel {
    let inf = f64::INFINITY;
    let mut m = MipModel::new("beale");
    for j in 0..4 {
        m.add_var(format!("x{j}"), 0.0, inf, VarKind::Continuous, "x");
    }
    let rows: [(&[f64], f64); 3] = [
        (&[0.25, -8.0, -1.0, 9.0], 0.0),
        (&[0.5, -12.0, -0.5, 3.0], 0.0),
        (&[0.0, 0.0, 1.0, 0.0], 1.0),
    ];
    for (i, (a, b)) in rows.iter().enumerate() {
        m.add_constraint(LinearExpr::from_terms(a.iter().copied().enumerate()), Sense::Le, *b, format!("r({i})"));
    }
    m.set_objective(LinearExpr::from_terms([(0, -0.75), (1, 20.0), (2, -0.5), (3, 6.0)]));
    m
}

// ---------------------------------------------------------------------------
// Small MIPs for cut validity

/// `{min -x - y : 2x + 2y <= 3, x, y binary}`.
pub fn fixture_f1() -> MipModel {
    let mut m = MipModel::new("f1");
    let x = m.add_binary("x", "x");
    let y = m.add_binary("y", "y");
    m.add_constraint(LinearExpr::from_terms([(x, 2.0), (y, 2.0)]), Sense::Le, 3.0, "knap");
    m.set_objective(LinearExpr::from_terms([(x, -1.0), (y, -1.0)]));
    m
}

/// A model with up to five integer variables in boxes of width at most five,
/// up to two continuous variables and one to three rows with mixed senses and
/// fractional data, plus a point inside the box.
pub fn random_mir_model(rng: &mut Rng) -> (MipModel, Vec<f64>) {
    let mut m = MipModel::new("mir");
    let n_int = rng.int(1, 5);
    let n_cont = rng.int(0, 2);
    let mut x = Vec::new();
    for j in 0..n_int + n_cont {
        let lo = rng.int(-2, 2) as f64;
        let hi = (lo as i64 + rng.int(1, 5)) as f64;
        let kind = if j < n_int { VarKind::Integer } else { VarKind::Continuous };
        m.add_var(format!("v{j}"), lo, hi, kind, "v");
        x.push(lo + (hi - lo) * rng.unit());
    }
    let nv = m.num_vars();
    for i in 0..rng.int(1, 3) {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in 0..nv {
            let a = rng.int(-40, 40) as f64 / 8.0;
            if rng.chance(0.8) && a != 0.0 {
                terms.push((j, a));
            }
        }
        if terms.is_empty() {
            continue;
        }
        let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.int(0, 2) as usize];
        let act = LinearExpr::from_terms(terms.iter().copied()).eval(&x);
        let rhs = (act * 3.0).round() / 3.0 + rng.int(-4, 4) as f64 / 5.0;
        m.add_constraint(LinearExpr::from_terms(terms), sense, rhs, format!("r({i})"));
    }
    (m, x)
}

/// A bounded knapsack-style MIP with a mix of integer and continuous
/// variables; its LP optimum is usually fractional.
pub fn random_gmi_model(rng: &mut Rng) -> MipModel {
    let mut m = MipModel::new("gmi");
    let n_int = rng.int(2, 4);
    let n_cont = rng.int(0, 1);
    for j in 0..n_int + n_cont {
        let hi = rng.int(1, 3) as f64;
        let kind = if j < n_int { VarKind::Integer } else { VarKind::Continuous };
        m.add_var(format!("v{j}"), 0.0, hi, kind, "v");
    }
    let nv = m.num_vars();
    for i in 0..rng.int(1, 3) {
        let terms: Vec<(usize, f64)> = (0..nv).map(|j| (j, rng.int(1, 9) as f64)).collect();
        let total: f64 = terms.iter().map(|&(j, a)| a * m.variables[j].upper).sum();
        let rhs = (total * (0.3 + 0.4 * rng.unit()) * 2.0).round() / 2.0 + 0.5;
        m.add_constraint(LinearExpr::from_terms(terms), Sense::Le, rhs, format!("r({i})"));
    }
    m.set_objective(LinearExpr::from_terms((0..nv).map(|j| (j, -(rng.int(1, 9) as f64)))));
    m
}

// ---------------------------------------------------------------------------
// Cut-loop discipline

/// Checks the bound trajectory is nondecreasing and that every cut comes from
/// an original row (formulation cuts) or the first round (GMI, which works on
/// the tableau of the original relaxation).
pub fn loop_discipline(report: &CutLoopReport, pool: &CutPool, m0: usize) -> Result<(), String> {
    let drop = report.max_bound_decrease();
    if drop > 1e-9 {
        return Err(format!("{}: bound decreased by {drop:e}", report.model));
    }
    for pc in pool.iter() {
        if pc.cut.rank != 1 {
            return Err(format!("{}: cut of rank {}", report.model, pc.cut.rank));
        }
        match pc.cut.family {
            CutFamily::MirFormulation => match pc.cut.source_row() {
                Some((row, tag)) if row < m0 && !tag.starts_with("cut(") => {}
                other => return Err(format!("{}: cut derived from {other:?}", report.model)),
            },
            CutFamily::Gmi => {
                if pc.round != 1 {
                    return Err(format!("{}: GMI cut added in round {}", report.model, pc.round));
                }
            }
        }
    }
    Ok(())
}
