//! Bounded-variable revised simplex over the computational form
//! `[A | -I] (x, s) = 0`, where the logical `s_i` carries the bounds of row
//! `i` (`(-inf, b]`, `[b, b]` or `[b, inf)` by sense).

use log::{debug, trace};

use super::lu::LuFactor;
use super::{Basis, LpResult, LpStatus, SimplexOptions, TableauEntry, TableauRow, VarStatus};
use crate::error::{Error, Result};
use crate::model::{Constraint, MipModel, Sense};

const NONE: usize = usize::MAX;

enum Ratio {
    Flip,
    Pivot { pos: usize, to_upper: bool },
    Unbounded,
}

enum PrimalEnd {
    Optimal,
    Infeasible,
    Unbounded,
}

enum DualEnd {
    Optimal,
    Infeasible,
    LostDualFeasibility,
}

pub struct SimplexSolver {
    opts: SimplexOptions,
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    pos_of: Vec<usize>,
    lu: Option<LuFactor>,
    iterations: usize,
    degenerate_streak: usize,
    last: Option<LpStatus>,
}

fn row_bounds(c: &Constraint) -> (f64, f64) {
    match c.sense {
        Sense::Le => (f64::NEG_INFINITY, c.rhs),
        Sense::Ge => (c.rhs, f64::INFINITY),
        Sense::Eq => (c.rhs, c.rhs),
    }
}

fn resting_status(lb: f64, ub: f64, wanted: VarStatus) -> VarStatus {
    match wanted {
        VarStatus::AtUpper if ub.is_finite() => VarStatus::AtUpper,
        _ if lb.is_finite() => VarStatus::AtLower,
        _ if ub.is_finite() => VarStatus::AtUpper,
        _ => VarStatus::Free,
    }
}

fn resting_value(status: VarStatus, lb: f64, ub: f64) -> f64 {
    match status {
        VarStatus::AtLower => lb,
        VarStatus::AtUpper => ub,
        _ => 0.0,
    }
}

impl SimplexSolver {
    /// Builds a solver for the LP relaxation of `model`, starting from the
    /// all-logical basis.
    pub fn new(model: &MipModel, opts: SimplexOptions) -> Result<Self> {
        model.validate()?;
        let n = model.num_vars();
        let mut s = SimplexSolver {
            opts,
            n,
            m: 0,
            cols: vec![Vec::new(); n],
            rows: Vec::new(),
            cost: vec![0.0; n],
            lb: model.variables.iter().map(|v| v.lower).collect(),
            ub: model.variables.iter().map(|v| v.upper).collect(),
            x: vec![0.0; n],
            status: vec![VarStatus::AtLower; n],
            basic: Vec::new(),
            pos_of: vec![NONE; n],
            lu: None,
            iterations: 0,
            degenerate_streak: 0,
            last: None,
        };
        for (j, c) in model.objective.iter() {
            s.cost[j] = c;
        }
        for j in 0..n {
            s.status[j] = resting_status(s.lb[j], s.ub[j], VarStatus::AtLower);
            s.x[j] = resting_value(s.status[j], s.lb[j], s.ub[j]);
        }
        s.append_rows(&model.constraints);
        Ok(s)
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Inserts the logical for every new row right after the existing
    /// logicals, so column `n + i` is always the logical of row `i`.
    fn append_rows(&mut self, rows: &[Constraint]) {
        for c in rows {
            let i = self.m;
            let (lo, hi) = row_bounds(c);
            let entries: Vec<(usize, f64)> = c.expr.iter().filter(|&(j, _)| j < self.n).collect();
            let activity: f64 = entries.iter().map(|&(j, a)| a * self.x[j]).sum();
            for &(j, a) in &entries {
                self.cols[j].push((i, a));
            }
            self.rows.push(entries);
            self.cost.push(0.0);
            self.lb.push(lo);
            self.ub.push(hi);
            self.x.push(activity);
            self.status.push(VarStatus::Basic);
            self.pos_of.push(i);
            self.basic.push(self.n + i);
            self.m += 1;
        }
        self.lu = None;
        self.last = None;
    }

    /// Appends rows; their logicals enter the basis so a previously optimal
    /// basis stays dual feasible.
    pub fn add_rows(&mut self, rows: &[Constraint]) -> Result<()> {
        for c in rows {
            if let Some(&(j, _)) = c.expr.iter().find(|&(j, _)| j >= self.n).as_ref() {
                return Err(Error::InvalidModel(format!("row {} references unknown variable {j}", c.tag)));
            }
            if !c.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("row {} has a non-finite rhs", c.tag)));
            }
        }
        self.append_rows(rows);
        Ok(())
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) -> Result<()> {
        if j >= self.n {
            return Err(Error::InvalidModel(format!("column {j} does not exist")));
        }
        if lower > upper {
            return Err(Error::InvalidModel(format!("column {j}: lower {lower} > upper {upper}")));
        }
        self.lb[j] = lower;
        self.ub[j] = upper;
        if self.status[j] != VarStatus::Basic {
            self.status[j] = resting_status(lower, upper, self.status[j]);
            self.x[j] = resting_value(self.status[j], lower, upper);
        }
        self.last = None;
        Ok(())
    }

    pub fn basis(&self) -> Basis {
        Basis {
            basic: self.basic.clone(),
            status: self.status.clone(),
        }
    }

    /// Installs a basis. A basis recorded before rows were appended is
    /// extended with the logicals of the new rows.
    pub fn set_basis(&mut self, basis: &Basis) -> Result<()> {
        let total = self.n + self.m;
        let old_m = basis.basic.len();
        if basis.status.len() != self.n + old_m || old_m > self.m {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: basis.status.len(),
            });
        }
        let mut status = basis.status.clone();
        let mut basic = basis.basic.clone();
        for i in old_m..self.m {
            status.push(VarStatus::Basic);
            basic.push(self.n + i);
        }
        if basic.iter().any(|&j| j >= total || status[j] != VarStatus::Basic)
            || status.iter().filter(|&&s| s == VarStatus::Basic).count() != self.m
        {
            return Err(Error::InvalidModel("basis is inconsistent".into()));
        }
        self.pos_of = vec![NONE; total];
        for (p, &j) in basic.iter().enumerate() {
            self.pos_of[j] = p;
        }
        for j in 0..total {
            if status[j] != VarStatus::Basic {
                status[j] = resting_status(self.lb[j], self.ub[j], status[j]);
                self.x[j] = resting_value(status[j], self.lb[j], self.ub[j]);
            }
        }
        self.status = status;
        self.basic = basic;
        self.lu = None;
        self.last = None;
        Ok(())
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.cols[j].clone()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    fn scatter(&self, j: usize, w: &mut [f64], scale: f64) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                w[i] += scale * a;
            }
        } else {
            w[j - self.n] -= scale;
        }
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn lu(&self) -> &LuFactor {
        self.lu.as_ref().expect("basis is factored")
    }

    /// Factors the basis, swapping in logicals for dependent columns, and
    /// recomputes the basic values.
    fn refactor(&mut self) -> Result<()> {
        for attempt in 0..3 {
            let columns: Vec<Vec<(usize, f64)>> = self.basic.iter().map(|&j| self.column(j)).collect();
            let mut order: Vec<usize> = (0..self.m).collect();
            order.sort_by_key(|&p| {
                let j = self.basic[p];
                (j < self.n, columns[p].len(), p)
            });
            let f = LuFactor::factor(self.m, &columns, &order);
            if f.singular_positions.is_empty() {
                self.lu = Some(f.lu);
                self.recompute_basics();
                return Ok(());
            }
            debug!(
                "basis singular in {} positions (attempt {attempt})",
                f.singular_positions.len()
            );
            for (&p, &r) in f.singular_positions.iter().zip(&f.free_rows) {
                let out = self.basic[p];
                let logical = self.n + r;
                self.status[out] = resting_status(self.lb[out], self.ub[out], VarStatus::AtLower);
                self.x[out] = resting_value(self.status[out], self.lb[out], self.ub[out]);
                self.pos_of[out] = NONE;
                // The logical may be nonbasic; it cannot already be basic.
                debug_assert_ne!(self.status[logical], VarStatus::Basic);
                self.status[logical] = VarStatus::Basic;
                self.pos_of[logical] = p;
                self.basic[p] = logical;
            }
        }
        Err(Error::Numerical("basis remains singular after repair".into()))
    }

    fn recompute_basics(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                self.scatter(j, &mut rhs, -self.x[j]);
            }
        }
        self.lu().ftran(&mut rhs);
        for (p, &j) in self.basic.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    /// `max_i |a_i x - s_i|`.
    fn residual(&self) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let act: f64 = row.iter().map(|&(j, a)| a * self.x[j]).sum();
                (act - self.x[self.n + i]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn maybe_refactor(&mut self) -> Result<()> {
        let stale = match &self.lu {
            None => true,
            Some(lu) => lu.num_updates() >= self.opts.refactor_interval,
        };
        if stale || (self.iterations.is_multiple_of(20) && self.residual() > self.opts.residual_tol) {
            self.refactor()?;
        }
        Ok(())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lb[j] {
            self.lb[j] - v
        } else if v > self.ub[j] {
            v - self.ub[j]
        } else {
            0.0
        }
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.basic.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
    }

    fn duals_for(&self, cb: Vec<f64>) -> Vec<f64> {
        let mut y = cb;
        self.lu().btran(&mut y);
        y
    }

    fn duals(&self) -> Vec<f64> {
        self.duals_for(self.basic.iter().map(|&j| self.cost[j]).collect())
    }

    fn reduced_costs(&self, y: &[f64], phase1: bool) -> Vec<f64> {
        (0..self.n + self.m)
            .map(|j| {
                if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    let c = if phase1 { 0.0 } else { self.cost[j] };
                    c - self.dot_col(j, y)
                }
            })
            .collect()
    }

    /// Movement direction that improves the objective, if `d` is attractive.
    fn improving_direction(&self, j: usize, d: f64) -> Option<f64> {
        if self.lb[j] == self.ub[j] {
            return None;
        }
        let tol = self.opts.opt_tol;
        match self.status[j] {
            VarStatus::AtLower if d < -tol => Some(1.0),
            VarStatus::AtUpper if d > tol => Some(-1.0),
            VarStatus::Free if d.abs() > tol => Some(-d.signum()),
            _ => None,
        }
    }

    fn max_dual_infeasibility(&self, d: &[f64]) -> f64 {
        (0..self.n + self.m)
            .filter(|&j| self.status[j] != VarStatus::Basic && self.lb[j] < self.ub[j])
            .map(|j| match self.status[j] {
                VarStatus::AtLower => (-d[j]).max(0.0),
                VarStatus::AtUpper => d[j].max(0.0),
                _ => d[j].abs(),
            })
            .fold(0.0, f64::max)
    }

    /// Whether every wrong-signed reduced cost sits on a boxed column that a
    /// bound flip can repair.
    fn dual_feasible_with_flips(&self, d: &[f64]) -> bool {
        let tol = self.opts.opt_tol;
        (0..self.n + self.m).all(|j| {
            if self.status[j] == VarStatus::Basic || self.lb[j] == self.ub[j] {
                return true;
            }
            let boxed = self.lb[j].is_finite() && self.ub[j].is_finite();
            match self.status[j] {
                VarStatus::AtLower => d[j] >= -tol || boxed,
                VarStatus::AtUpper => d[j] <= tol || boxed,
                _ => d[j].abs() <= tol,
            }
        })
    }

    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.m];
        self.scatter(j, &mut a, 1.0);
        self.lu().ftran(&mut a);
        a
    }

    /// Row `r` of `B^{-1} [A | -I]` over all columns.
    fn tableau_alpha(&self, r: usize) -> Vec<f64> {
        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.lu().btran(&mut rho);
        let mut alpha = vec![0.0; self.n + self.m];
        for (i, &ri) in rho.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            for &(j, a) in &self.rows[i] {
                alpha[j] += ri * a;
            }
            alpha[self.n + i] = -ri;
        }
        alpha
    }

    fn replace_basic(&mut self, r: usize, q: usize, alpha_q: &[f64], leave_status: VarStatus) {
        let out = self.basic[r];
        self.status[out] = leave_status;
        self.pos_of[out] = NONE;
        self.status[q] = VarStatus::Basic;
        self.pos_of[q] = r;
        self.basic[r] = q;
        self.lu.as_mut().expect("basis is factored").update(r, alpha_q);
    }

    fn primal(&mut self) -> Result<PrimalEnd> {
        let ftol = self.opts.feas_tol;
        self.degenerate_streak = 0;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            self.maybe_refactor()?;
            let phase1 = self.basic.iter().any(|&j| self.infeasibility(j) > ftol);
            let cb: Vec<f64> = self
                .basic
                .iter()
                .map(|&j| {
                    if !phase1 {
                        self.cost[j]
                    } else if self.x[j] < self.lb[j] - ftol {
                        -1.0
                    } else if self.x[j] > self.ub[j] + ftol {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let y = self.duals_for(cb);
            let d = self.reduced_costs(&y, phase1);
            let bland = self.degenerate_streak > self.opts.bland_after;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                if let Some(dir) = self.improving_direction(j, d[j]) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if d[j].abs() > best {
                        best = d[j].abs();
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(if phase1 { PrimalEnd::Infeasible } else { PrimalEnd::Optimal });
            };
            let alpha = self.ftran_col(q);
            let (ratio, step) = self.primal_ratio(q, dir, &alpha, bland);
            let step = match ratio {
                Ratio::Unbounded => {
                    if phase1 {
                        return Err(Error::Numerical("phase 1 ray without blocking variable".into()));
                    }
                    return Ok(PrimalEnd::Unbounded);
                }
                _ => step,
            };
            self.iterations += 1;
            if step <= 1e-12 {
                self.degenerate_streak += 1;
            } else {
                self.degenerate_streak = 0;
            }
            trace!("primal it {} enter {q} dir {dir} step {step:e}", self.iterations);
            self.x[q] += dir * step;
            if step != 0.0 {
                for (p, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        let j = self.basic[p];
                        self.x[j] -= a * dir * step;
                    }
                }
            }
            match ratio {
                Ratio::Flip => {
                    self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                }
                Ratio::Pivot { pos, to_upper } => {
                    let out = self.basic[pos];
                    let target = if to_upper { self.ub[out] } else { self.lb[out] };
                    let drift = target - self.x[out];
                    self.x[out] = target;
                    let leave = if to_upper { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.replace_basic(pos, q, &alpha, leave);
                    if drift != 0.0 {
                        // Keep A x = s exact after snapping the leaving value.
                        let g = self.ftran_col(out);
                        for (p, &a) in g.iter().enumerate() {
                            if a != 0.0 {
                                let j = self.basic[p];
                                self.x[j] -= a * drift;
                            }
                        }
                    }
                }
                Ratio::Unbounded => unreachable!(),
            }
        }
    }

    /// Two-pass ratio test. Returns the step length along with the outcome.
    fn primal_ratio(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> (Ratio, f64) {
        let ftol = self.opts.feas_tol;
        let ptol = self.opts.pivot_tol;
        // (pos, exact ratio, relaxed ratio, |rate|, to_upper)
        let mut cands: Vec<(usize, f64, f64, f64, bool)> = Vec::new();
        for (p, &a) in alpha.iter().enumerate() {
            let rate = -a * dir;
            if rate.abs() <= ptol {
                continue;
            }
            let j = self.basic[p];
            let (v, l, u) = (self.x[j], self.lb[j], self.ub[j]);
            let (dist, to_upper) = if v < l - ftol {
                if rate > 0.0 {
                    (l - v, false)
                } else {
                    continue;
                }
            } else if v > u + ftol {
                if rate < 0.0 {
                    (v - u, true)
                } else {
                    continue;
                }
            } else if rate < 0.0 {
                if !l.is_finite() {
                    continue;
                }
                (v - l, false)
            } else {
                if !u.is_finite() {
                    continue;
                }
                (u - v, true)
            };
            let r = rate.abs();
            cands.push((p, dist.max(0.0) / r, (dist + ftol) / r, r, to_upper));
        }
        let flip = self.ub[q] - self.lb[q];
        if cands.is_empty() {
            return if flip.is_finite() { (Ratio::Flip, flip) } else { (Ratio::Unbounded, 0.0) };
        }
        let chosen = if bland {
            let tmin = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 <= tmin + 1e-12)
                .min_by_key(|c| self.basic[c.0])
                .copied()
                .expect("nonempty")
        } else {
            let tmax = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            let mut best = cands[0];
            let mut found = false;
            for &c in &cands {
                if c.1 <= tmax && (!found || c.3 > best.3) {
                    best = c;
                    found = true;
                }
            }
            best
        };
        if flip.is_finite() && flip <= chosen.1 {
            return (Ratio::Flip, flip);
        }
        (Ratio::Pivot { pos: chosen.0, to_upper: chosen.4 }, chosen.1)
    }

    fn dual(&mut self) -> Result<DualEnd> {
        let ftol = self.opts.feas_tol;
        let otol = self.opts.opt_tol;
        let ptol = self.opts.pivot_tol;
        self.degenerate_streak = 0;
        let mut just_refactored = false;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            let before = self.lu.as_ref().map_or(0, |lu| lu.num_updates());
            self.maybe_refactor()?;
            if self.lu().num_updates() < before {
                just_refactored = true;
            }
            let y = self.duals();
            let d = self.reduced_costs(&y, false);
            let mut flipped = false;
            for j in 0..self.n + self.m {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let wrong = match st {
                    VarStatus::AtLower => d[j] < -otol,
                    VarStatus::AtUpper => d[j] > otol,
                    _ => d[j].abs() > otol,
                };
                if !wrong {
                    continue;
                }
                if !(self.lb[j].is_finite() && self.ub[j].is_finite()) {
                    return Ok(DualEnd::LostDualFeasibility);
                }
                self.status[j] = if st == VarStatus::AtLower { VarStatus::AtUpper } else { VarStatus::AtLower };
                self.x[j] = resting_value(self.status[j], self.lb[j], self.ub[j]);
                flipped = true;
            }
            if flipped {
                self.recompute_basics();
            }
            let bland = self.degenerate_streak > self.opts.bland_after;
            let mut leaving: Option<(usize, f64)> = None;
            for (p, &j) in self.basic.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf <= ftol {
                    continue;
                }
                let better = match leaving {
                    None => true,
                    Some((bp, binf)) => {
                        if bland {
                            j < self.basic[bp]
                        } else {
                            inf > binf
                        }
                    }
                };
                if better {
                    leaving = Some((p, inf));
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(DualEnd::Optimal);
            };
            let out = self.basic[r];
            let below = self.x[out] < self.lb[out];
            let target = if below { self.lb[out] } else { self.ub[out] };
            let alpha_r = self.tableau_alpha(r);
            // (col, exact ratio, relaxed ratio, |alpha|)
            let mut cands: Vec<(usize, f64, f64, f64)> = Vec::new();
            for j in 0..self.n + self.m {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let a = alpha_r[j];
                if a.abs() <= ptol {
                    continue;
                }
                // Increasing x_j changes x_out by -a.
                let s = if below { -a } else { a };
                let slack = match st {
                    VarStatus::AtLower if s > 0.0 => d[j],
                    VarStatus::AtUpper if s < 0.0 => -d[j],
                    VarStatus::Free => d[j].abs(),
                    _ => continue,
                };
                cands.push((j, slack.max(0.0) / a.abs(), (slack + otol) / a.abs(), a.abs()));
            }
            if cands.is_empty() {
                return Ok(DualEnd::Infeasible);
            }
            let chosen = if bland {
                let tmin = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                cands.iter().filter(|c| c.1 <= tmin + 1e-12).min_by_key(|c| c.0).copied().expect("nonempty")
            } else {
                let tmax = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
                let mut best: Option<(usize, f64, f64, f64)> = None;
                for &c in &cands {
                    if c.1 <= tmax && best.is_none_or(|b| c.3 > b.3) {
                        best = Some(c);
                    }
                }
                best.expect("the minimum relaxed ratio admits a candidate")
            };
            let q = chosen.0;
            let alpha_q = self.ftran_col(q);
            let piv = alpha_q[r];
            if (piv - alpha_r[q]).abs() > 1e-7 * (1.0 + piv.abs()) || piv.abs() <= ptol {
                if !just_refactored {
                    debug!("pivot mismatch {piv:e} vs {:e}; refactoring", alpha_r[q]);
                    self.refactor()?;
                    just_refactored = true;
                    continue;
                }
                if piv.abs() <= ptol {
                    return Err(Error::Numerical("dual pivot vanished after refactorization".into()));
                }
            }
            just_refactored = false;
            self.iterations += 1;
            if chosen.1 <= 1e-12 {
                self.degenerate_streak += 1;
            } else {
                self.degenerate_streak = 0;
            }
            let delta = (self.x[out] - target) / piv;
            trace!("dual it {} leave {out} enter {q} delta {delta:e}", self.iterations);
            self.x[q] += delta;
            for (p, &a) in alpha_q.iter().enumerate() {
                if a != 0.0 {
                    let j = self.basic[p];
                    self.x[j] -= a * delta;
                }
            }
            self.x[out] = target;
            let leave = if below { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.replace_basic(r, q, &alpha_q, leave);
        }
    }

    /// Solves from the current basis: dual simplex when the basis is dual
    /// feasible (up to bound flips), primal simplex otherwise.
    pub fn solve(&mut self) -> Result<LpStatus> {
        self.refactor()?;
        for _ in 0..20 {
            let pinf = self.max_primal_infeasibility() > self.opts.feas_tol;
            let y = self.duals();
            let d = self.reduced_costs(&y, false);
            let dinf = self.max_dual_infeasibility(&d) > self.opts.opt_tol;
            if !pinf && !dinf {
                self.last = Some(LpStatus::Optimal);
                return Ok(LpStatus::Optimal);
            }
            let outcome = if pinf && self.dual_feasible_with_flips(&d) {
                match self.dual()? {
                    DualEnd::Optimal => None,
                    DualEnd::LostDualFeasibility => self.primal_status()?,
                    DualEnd::Infeasible => {
                        debug!("dual simplex reports infeasibility; confirming with phase 1");
                        self.primal_status()?
                    }
                }
            } else {
                self.primal_status()?
            };
            if let Some(status) = outcome {
                self.last = Some(status);
                return Ok(status);
            }
            self.refactor()?;
        }
        Err(Error::Numerical("simplex failed to settle on a consistent optimum".into()))
    }

    /// Runs the primal simplex; returns a final status, or `None` when the
    /// result needs the consistency check of the caller.
    fn primal_status(&mut self) -> Result<Option<LpStatus>> {
        match self.primal()? {
            PrimalEnd::Optimal => Ok(None),
            PrimalEnd::Unbounded => Ok(Some(LpStatus::Unbounded)),
            PrimalEnd::Infeasible => {
                self.refactor()?;
                if self.max_primal_infeasibility() > self.opts.feas_tol {
                    Ok(Some(LpStatus::Infeasible))
                } else {
                    Ok(None)
                }
            }
        }
    }

    pub fn status(&self) -> Option<LpStatus> {
        self.last
    }

    /// Snapshot of the last solve.
    pub fn result(&self) -> Result<LpResult> {
        let status = self
            .last
            .ok_or_else(|| Error::Numerical("result requested before a completed solve".into()))?;
        let y = self.duals();
        let d = self.reduced_costs(&y, false);
        let x = self.x[..self.n].to_vec();
        let objective = x.iter().zip(&self.cost).map(|(v, c)| v * c).sum();
        Ok(LpResult {
            status,
            x,
            objective,
            duals: (0..self.m).map(|i| d[self.n + i]).collect(),
            reduced_costs: d[..self.n].to_vec(),
            basis: self.basis(),
            iterations: self.iterations,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Tableau row of basic column `col` as `x_col = rhs - sum coef * t_j`,
    /// with `t_j` the distance of nonbasic `j` from its active bound.
    pub fn tableau_row(&mut self, col: usize) -> Result<TableauRow> {
        if col >= self.n + self.m || self.status[col] != VarStatus::Basic {
            return Err(Error::NotBasic(col));
        }
        if self.lu.is_none() {
            self.refactor()?;
        }
        let r = self.pos_of[col];
        let alpha = self.tableau_alpha(r);
        let entries = (0..self.n + self.m)
            .filter(|&j| self.status[j] != VarStatus::Basic && alpha[j].abs() > 1e-12)
            .map(|j| {
                let at_upper = self.status[j] == VarStatus::AtUpper;
                TableauEntry {
                    col: j,
                    coef: if at_upper { -alpha[j] } else { alpha[j] },
                    at_upper,
                }
            })
            .collect();
        Ok(TableauRow {
            basic: col,
            rhs: self.x[col],
            entries,
        })
    }

    /// Bounds of column `j` in the computational form (logicals included).
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    pub fn value(&self, j: usize) -> f64 {
        self.x[j]
    }

    pub fn is_basic(&self, j: usize) -> bool {
        self.status[j] == VarStatus::Basic
    }

    pub fn basic_columns(&self) -> &[usize] {
        &self.basic
    }
}
