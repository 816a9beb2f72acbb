//! MIR formulation cuts from model rows, GMI cuts from tableau rows, a
//! deduplicating pool and an enumeration oracle for cut validity.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpResult, LpStatus, SimplexOptions, SimplexSolver};
use crate::model::{fractionality, Constraint, LinearExpr, MipModel, Sense, Solution, VarId, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplementMode {
    Complement,
    NoComplement,
    Both,
}

impl fmt::Display for ComplementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplementMode::Complement => "complement",
            ComplementMode::NoComplement => "no-complement",
            ComplementMode::Both => "both",
        })
    }
}

impl FromStr for ComplementMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complement" => Ok(ComplementMode::Complement),
            "no-complement" => Ok(ComplementMode::NoComplement),
            "both" => Ok(ComplementMode::Both),
            _ => Err(Error::InvalidParameters(format!("unknown complement mode {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AsIs,
    Negated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationOptions {
    pub int_tol: f64,
    pub mir_eps: f64,
    pub violation_tol: f64,
    pub max_dynamism: f64,
    pub drop_tol: f64,
    pub complement_continuous: bool,
    pub max_bases_per_row: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            int_tol: 1e-6,
            mir_eps: 1e-6,
            violation_tol: 1e-6,
            max_dynamism: 1e8,
            drop_tol: 1e-12,
            complement_continuous: true,
            max_bases_per_row: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseProvenance {
    pub row: usize,
    pub tag: String,
    pub direction: Direction,
    pub divisor: VarId,
    pub divisor_coef: f64,
    pub complemented: Vec<VarId>,
}

/// One term of a base inequality, over the shifted variable
/// `t = v - bound` or, when complemented, `t = bound - v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseTerm {
    pub var: VarId,
    pub coef: f64,
    pub integer: bool,
    pub complemented: bool,
    pub bound: f64,
}

impl BaseTerm {
    fn shifted(&self, v: f64) -> f64 {
        if self.complemented {
            self.bound - v
        } else {
            v - self.bound
        }
    }
}

/// `sum coef_j t_j >= rhs` with every `t_j >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseInequality {
    pub terms: Vec<BaseTerm>,
    pub rhs: f64,
    pub provenance: Option<BaseProvenance>,
}

impl BaseInequality {
    /// A base over variables with lower bound zero and no complementing.
    pub fn from_parts(int_terms: &[(VarId, f64)], cont_terms: &[(VarId, f64)], rhs: f64) -> Self {
        let mk = |&(var, coef): &(VarId, f64), integer| BaseTerm {
            var,
            coef,
            integer,
            complemented: false,
            bound: 0.0,
        };
        let mut terms: Vec<BaseTerm> = int_terms.iter().map(|t| mk(t, true)).collect();
        terms.extend(cont_terms.iter().map(|t| mk(t, false)));
        BaseInequality {
            terms,
            rhs,
            provenance: None,
        }
    }

    /// `lhs - rhs` at `x`, in the shifted space.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coef * t.shifted(x[t.var])).sum::<f64>() - self.rhs
    }

    /// The inequality over the original variables.
    pub fn to_original(&self) -> (LinearExpr, f64) {
        undo_shift(self.terms.iter().map(|t| (t, t.coef)), self.rhs)
    }
}

/// Maps `sum g_j t_j >= r` back to the original variables.
fn undo_shift<'a>(terms: impl Iterator<Item = (&'a BaseTerm, f64)>, rhs: f64) -> (LinearExpr, f64) {
    let mut r = rhs;
    let mut out = Vec::new();
    for (t, g) in terms {
        if t.complemented {
            out.push((t.var, -g));
            r -= g * t.bound;
        } else {
            out.push((t.var, g));
            r += g * t.bound;
        }
    }
    (LinearExpr::from_terms(out), r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutFamily {
    MirFormulation,
    Gmi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CutProvenance {
    Base(BaseProvenance),
    TableauRow { basic: usize, name: String },
}

/// `expr >= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub expr: LinearExpr,
    pub rhs: f64,
    pub family: CutFamily,
    pub provenance: CutProvenance,
    pub rank: u32,
}

impl Cut {
    /// `rhs - expr(x)`; positive when `x` violates the cut.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.rhs - self.expr.eval(x)
    }

    pub fn normalized_violation(&self, x: &[f64]) -> f64 {
        let norm = self.expr.norm();
        if norm > 0.0 {
            self.violation(x) / norm
        } else {
            self.violation(x)
        }
    }

    pub fn to_constraint(&self, tag: impl Into<String>) -> Constraint {
        Constraint::new(self.expr.clone(), Sense::Ge, self.rhs, tag)
    }

    /// Source row tag for formulation cuts.
    pub fn source_row(&self) -> Option<(usize, &str)> {
        match &self.provenance {
            CutProvenance::Base(p) => Some((p.row, p.tag.as_str())),
            CutProvenance::TableauRow { .. } => None,
        }
    }
}

/// Drops tiny coefficients, relaxing the rhs by their largest possible
/// contribution, and applies the dynamism guard.
fn clean_cut(expr: LinearExpr, rhs: f64, model: &MipModel, opts: &SeparationOptions) -> Option<(LinearExpr, f64)> {
    let mut r = rhs;
    let mut kept = Vec::with_capacity(expr.len());
    for (j, c) in expr.iter() {
        if !c.is_finite() {
            return None;
        }
        if c.abs() < opts.drop_tol {
            let v = &model.variables[j];
            let worst = (c * v.lower).max(c * v.upper);
            if !worst.is_finite() {
                return None;
            }
            r -= worst;
        } else {
            kept.push((j, c));
        }
    }
    if kept.is_empty() || !r.is_finite() {
        return None;
    }
    let max = kept.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
    let min = kept.iter().map(|t| t.1.abs()).fold(f64::INFINITY, f64::min);
    if max / min > opts.max_dynamism {
        return None;
    }
    Some((LinearExpr::from_terms(kept), r))
}

fn integral(v: f64) -> bool {
    v.fract() == 0.0
}

fn is_integer_var(model: &MipModel, j: VarId) -> bool {
    model.variables[j].kind != VarKind::Continuous
}

/// Base inequalities of one model row, as described by the complement mode.
pub fn base_inequalities_from_row(
    model: &MipModel,
    row: usize,
    xstar: &[f64],
    mode: ComplementMode,
    opts: &SeparationOptions,
) -> Vec<BaseInequality> {
    let c = &model.constraints[row];
    let directions: &[Direction] = match c.sense {
        Sense::Ge => &[Direction::AsIs],
        Sense::Le => &[Direction::Negated],
        Sense::Eq => &[Direction::AsIs, Direction::Negated],
    };
    let divisors: Vec<(VarId, f64)> = c
        .expr
        .iter()
        .filter(|&(j, a)| a != 0.0 && is_integer_var(model, j) && fractionality(xstar[j]) > opts.int_tol)
        .collect();
    let mut out = Vec::new();
    if divisors.is_empty() {
        return out;
    }
    for &dir in directions {
        let sign = if dir == Direction::AsIs { 1.0 } else { -1.0 };
        let settings: &[bool] = match mode {
            ComplementMode::Complement => &[true],
            ComplementMode::NoComplement => &[false],
            ComplementMode::Both => &[false, true],
        };
        let mut choices: Vec<Vec<bool>> = Vec::new();
        for &complement in settings {
            let flags: Option<Vec<bool>> = c
                .expr
                .iter()
                .map(|(j, a)| complement_choice(model, j, sign * a, xstar[j], complement, opts))
                .collect();
            if let Some(flags) = flags {
                if !choices.contains(&flags) {
                    choices.push(flags);
                }
            }
        }
        for flags in &choices {
            for &(d, ad) in &divisors {
                let scale = 1.0 / ad.abs();
                let mut rhs = sign * c.rhs * scale;
                let mut complemented = Vec::new();
                let terms: Vec<BaseTerm> = c
                    .expr
                    .iter()
                    .zip(flags)
                    .map(|((j, a), &comp)| {
                        let v = &model.variables[j];
                        let coef = sign * a * scale;
                        let bound = if comp { v.upper } else { v.lower };
                        if comp {
                            complemented.push(j);
                        }
                        rhs -= coef * bound;
                        BaseTerm {
                            var: j,
                            coef: if comp { -coef } else { coef },
                            integer: is_integer_var(model, j) && integral(bound),
                            complemented: comp,
                            bound,
                        }
                    })
                    .collect();
                out.push(BaseInequality {
                    terms,
                    rhs,
                    provenance: Some(BaseProvenance {
                        row,
                        tag: c.tag.clone(),
                        direction: dir,
                        divisor: d,
                        divisor_coef: ad,
                        complemented,
                    }),
                });
            }
        }
    }
    out
}

/// Whether a variable is complemented; `None` when it has no usable bound.
fn complement_choice(model: &MipModel, j: VarId, coef: f64, x: f64, complement: bool, opts: &SeparationOptions) -> Option<bool> {
    let v = &model.variables[j];
    match (v.lower.is_finite(), v.upper.is_finite()) {
        (false, false) => None,
        (false, true) => Some(true),
        (true, false) => Some(false),
        (true, true) => {
            if !complement {
                return Some(false);
            }
            let integer = is_integer_var(model, j);
            if !integer && !opts.complement_continuous {
                return Some(false);
            }
            if !integer && coef < 0.0 {
                return Some(true);
            }
            Some(v.upper - x < x - v.lower)
        }
    }
}

/// The MIR inequality of a base, over the original variables.
pub fn mir_with(base: &BaseInequality, model: Option<&MipModel>, opts: &SeparationOptions) -> Option<Cut> {
    let b = base.rhs;
    let f = b - b.floor();
    if f <= opts.mir_eps || f >= 1.0 - opts.mir_eps {
        return None;
    }
    let coefs = base.terms.iter().map(|t| {
        let g = if t.integer {
            let fa = t.coef - t.coef.floor();
            f * t.coef.floor() + f.min(fa)
        } else {
            t.coef.max(0.0)
        };
        (t, g)
    });
    let (expr, rhs) = undo_shift(coefs, f * b.ceil());
    let (expr, rhs) = match model {
        Some(m) => clean_cut(expr, rhs, m, opts)?,
        None => {
            let expr = LinearExpr::from_terms(expr.iter().filter(|t| t.1.abs() >= opts.drop_tol));
            if expr.is_empty() {
                return None;
            }
            (expr, rhs)
        }
    };
    Some(Cut {
        expr,
        rhs,
        family: CutFamily::MirFormulation,
        provenance: CutProvenance::Base(base.provenance.clone().unwrap_or(BaseProvenance {
            row: usize::MAX,
            tag: String::new(),
            direction: Direction::AsIs,
            divisor: usize::MAX,
            divisor_coef: 0.0,
            complemented: Vec::new(),
        })),
        rank: 1,
    })
}

pub fn mir(base: &BaseInequality) -> Option<Cut> {
    mir_with(base, None, &SeparationOptions::default())
}

/// MIR cuts from the given rows, violated at `xstar`; each row contributes
/// its most violated cuts, up to the per-row cap.
pub fn separate_formulation_cuts(
    model: &MipModel,
    rows: std::ops::Range<usize>,
    xstar: &[f64],
    mode: ComplementMode,
    opts: &SeparationOptions,
) -> Vec<(Cut, f64)> {
    let per_row: Vec<Vec<(Cut, f64)>> = rows
        .into_par_iter()
        .map(|i| {
            let mut found: Vec<(Cut, f64)> = base_inequalities_from_row(model, i, xstar, mode, opts)
                .iter()
                .filter_map(|b| mir_with(b, Some(model), opts))
                .map(|c| {
                    let v = c.violation(xstar);
                    (c, v)
                })
                .filter(|(_, v)| *v >= opts.violation_tol)
                .collect();
            found.sort_by(|a, b| b.1.total_cmp(&a.1));
            found.truncate(opts.max_bases_per_row);
            found
        })
        .collect();
    per_row.into_iter().flatten().collect()
}

/// Rows whose logical takes integer values at integer points.
fn integer_rows(model: &MipModel) -> Vec<bool> {
    model
        .constraints
        .iter()
        .map(|c| {
            integral(c.rhs)
                && c.expr
                    .iter()
                    .all(|(j, a)| integral(a) && is_integer_var(model, j))
        })
        .collect()
}

/// GMI cuts from the tableau rows of fractional basic integer variables.
/// `model` must hold exactly the rows loaded into `solver`.
pub fn gmi_from_solver(solver: &mut SimplexSolver, model: &MipModel, opts: &SeparationOptions) -> Result<Vec<Cut>> {
    let n = model.num_vars();
    if solver.num_rows() != model.num_rows() || solver.num_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: model.num_rows(),
            got: solver.num_rows(),
        });
    }
    let int_rows = integer_rows(model);
    let xstar: Vec<f64> = solver.values().to_vec();
    let mut candidates: Vec<VarId> = solver
        .basic_columns()
        .iter()
        .copied()
        .filter(|&j| j < n && is_integer_var(model, j) && fractionality(xstar[j]) > opts.int_tol)
        .collect();
    candidates.sort_unstable();
    let mut cuts = Vec::new();
    'rows: for var in candidates {
        let row = solver.tableau_row(var)?;
        let f0 = row.rhs - row.rhs.floor();
        if f0 <= opts.mir_eps || f0 >= 1.0 - opts.mir_eps {
            continue;
        }
        let mut dense = vec![0.0; n];
        let mut rhs = 1.0;
        for e in &row.entries {
            let (lo, hi) = solver.bounds(e.col);
            if lo == hi {
                continue;
            }
            if e.col < n && solver.is_basic(e.col) {
                continue;
            }
            let integer = if e.col < n {
                is_integer_var(model, e.col) && integral(if e.at_upper { hi } else { lo })
            } else {
                int_rows[e.col - n] && integral(if e.at_upper { hi } else { lo })
            };
            let a = e.coef;
            let g = if integer {
                let fj = a - a.floor();
                if fj <= f0 {
                    fj / f0
                } else {
                    (1.0 - fj) / (1.0 - f0)
                }
            } else if a >= 0.0 {
                a / f0
            } else {
                -a / (1.0 - f0)
            };
            if g == 0.0 {
                continue;
            }
            let nonbasic_status_free = !e.at_upper && !lo.is_finite();
            if nonbasic_status_free {
                continue 'rows;
            }
            // t = x - lo at lower, hi - x at upper; logicals expand to a_i x
            let (sign, bound) = if e.at_upper { (-1.0, hi) } else { (1.0, lo) };
            rhs -= -sign * g * bound;
            if e.col < n {
                dense[e.col] += sign * g;
            } else {
                for (j, aij) in model.constraints[e.col - n].expr.iter() {
                    dense[j] += sign * g * aij;
                }
            }
        }
        let expr = LinearExpr::from_terms(dense.iter().copied().enumerate().filter(|t| t.1 != 0.0));
        let Some((expr, rhs)) = clean_cut(expr, rhs, model, opts) else {
            continue;
        };
        let cut = Cut {
            expr,
            rhs,
            family: CutFamily::Gmi,
            provenance: CutProvenance::TableauRow {
                basic: var,
                name: model.variables[var].name.clone(),
            },
            rank: 1,
        };
        if cut.violation(&xstar) >= opts.violation_tol {
            cuts.push(cut);
        }
    }
    Ok(cuts)
}

/// GMI cuts at the optimum `result` of the relaxation of `model`.
pub fn gmi(result: &LpResult, model: &MipModel) -> Result<Vec<Cut>> {
    if result.status != LpStatus::Optimal {
        return Ok(Vec::new());
    }
    let mut solver = SimplexSolver::new(model, SimplexOptions::default())?;
    solver.set_basis(&result.basis)?;
    solver.solve()?;
    gmi_from_solver(&mut solver, model, &SeparationOptions::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum CutValidity {
    Valid,
    ViolatedBy { solution: Solution },
    Skipped { combinations: f64 },
}

/// Exhaustive validity check: every integer assignment within bounds, with
/// the continuous restriction minimizing the cut left-hand side.
pub fn validate_cut(cut: &Cut, model: &MipModel, oracle_limit: u64) -> Result<CutValidity> {
    let ints: Vec<VarId> = model.integer_vars().collect();
    let conts: Vec<VarId> = (0..model.num_vars()).filter(|&j| !is_integer_var(model, j)).collect();
    let mut combos = 1.0f64;
    for &j in &ints {
        let v = &model.variables[j];
        if !v.lower.is_finite() || !v.upper.is_finite() {
            return Ok(CutValidity::Skipped { combinations: f64::INFINITY });
        }
        combos *= v.upper.floor() - v.lower.ceil() + 1.0;
    }
    if combos > oracle_limit as f64 {
        return Ok(CutValidity::Skipped { combinations: combos });
    }
    if combos < 1.0 {
        return Ok(CutValidity::Valid);
    }
    let tol = 1e-6 * cut.rhs.abs().max(1.0);
    let row_tol = 1e-9;
    // lower bound of the continuous part of the cut over the variable box
    let cont_floor: f64 = conts
        .iter()
        .map(|&j| {
            let c = cut.expr.coef(j);
            let v = &model.variables[j];
            if c > 0.0 {
                c * v.lower
            } else if c < 0.0 {
                c * v.upper
            } else {
                0.0
            }
        })
        .sum();
    let int_set: Vec<bool> = (0..model.num_vars()).map(|j| is_integer_var(model, j)).collect();
    let pure_int_rows: Vec<usize> = (0..model.num_rows())
        .filter(|&i| model.constraints[i].expr.iter().all(|(j, _)| int_set[j]))
        .collect();
    let mixed_rows: Vec<usize> = (0..model.num_rows())
        .filter(|&i| model.constraints[i].expr.iter().any(|(j, _)| !int_set[j]))
        .collect();
    let mut values: Vec<f64> = model.variables.iter().map(|v| if v.lower.is_finite() { v.lower } else { 0.0 }).collect();
    for &j in &ints {
        values[j] = model.variables[j].lower.ceil();
    }
    loop {
        let rows_ok = pure_int_rows
            .iter()
            .all(|&i| model.constraints[i].violation(&values) <= row_tol);
        if rows_ok {
            let int_part: f64 = ints.iter().map(|&j| cut.expr.coef(j) * values[j]).sum();
            if int_part + cont_floor < cut.rhs - tol {
                if let Some(point) = continuous_restriction(cut, model, &conts, &mixed_rows, &values)? {
                    if cut.expr.eval(&point) < cut.rhs - tol {
                        let solution = Solution::new(model, point);
                        return Ok(CutValidity::ViolatedBy { solution });
                    }
                }
            }
        }
        // odometer over the integer box
        let mut k = 0;
        loop {
            if k == ints.len() {
                return Ok(CutValidity::Valid);
            }
            let j = ints[k];
            if values[j] + 1.0 <= model.variables[j].upper.floor() {
                values[j] += 1.0;
                break;
            }
            values[j] = model.variables[j].lower.ceil();
            k += 1;
        }
    }
}

/// Minimizes the cut left-hand side over the continuous variables with the
/// integers fixed; `None` when that restriction is infeasible.
fn continuous_restriction(
    cut: &Cut,
    model: &MipModel,
    conts: &[VarId],
    mixed_rows: &[usize],
    fixed: &[f64],
) -> Result<Option<Vec<f64>>> {
    if conts.is_empty() {
        return Ok(Some(fixed.to_vec()));
    }
    let mut index = vec![usize::MAX; model.num_vars()];
    let mut sub = MipModel::new("restriction");
    for &j in conts {
        let v = &model.variables[j];
        index[j] = sub.add_var(v.name.clone(), v.lower, v.upper, VarKind::Continuous, v.tag.clone());
    }
    for &i in mixed_rows {
        let c = &model.constraints[i];
        let mut rhs = c.rhs;
        let mut terms = Vec::new();
        for (j, a) in c.expr.iter() {
            if index[j] == usize::MAX {
                rhs -= a * fixed[j];
            } else {
                terms.push((index[j], a));
            }
        }
        sub.add_constraint(LinearExpr::from_terms(terms), c.sense, rhs, c.tag.clone());
    }
    sub.set_objective(LinearExpr::from_terms(
        conts.iter().map(|&j| (index[j], cut.expr.coef(j))),
    ));
    let r = solve_lp(&sub, None)?;
    let mut point = fixed.to_vec();
    match r.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Optimal | LpStatus::Unbounded => {
            for &j in conts {
                point[j] = r.x[index[j]];
            }
            if r.status == LpStatus::Unbounded {
                // push every continuous variable along the cut's descent
                for &j in conts {
                    let c = cut.expr.coef(j);
                    let v = &model.variables[j];
                    if c > 0.0 && !v.lower.is_finite() || c < 0.0 && !v.upper.is_finite() {
                        point[j] -= c.signum() * 1e12;
                    }
                }
            }
            Ok(Some(point))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Fingerprint {
    terms: Vec<(VarId, i64)>,
    rhs: i64,
}

fn fingerprint(cut: &Cut) -> Fingerprint {
    let scale = cut.expr.max_abs_coef();
    let q = |v: f64| (v / scale / 1e-9).round() as i64;
    Fingerprint {
        terms: cut.expr.iter().map(|(j, c)| (j, q(c))).collect(),
        rhs: q(cut.rhs),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledCut {
    pub cut: Cut,
    pub round: usize,
    pub violation: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CutPool {
    cuts: Vec<PooledCut>,
    index: HashMap<Fingerprint, usize>,
}

impl CutPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn contains(&self, cut: &Cut) -> bool {
        self.index.contains_key(&fingerprint(cut))
    }

    /// Adds `cut` unless an equivalent cut is present; returns whether it was added.
    pub fn insert(&mut self, cut: Cut, round: usize, violation: f64) -> bool {
        let fp = fingerprint(&cut);
        if self.index.contains_key(&fp) {
            return false;
        }
        self.index.insert(fp, self.cuts.len());
        self.cuts.push(PooledCut { cut, round, violation });
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &PooledCut> {
        self.cuts.iter()
    }

    pub fn cuts(&self) -> &[PooledCut] {
        &self.cuts
    }
}

/// Cut dump record: `expr >= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub expr: Vec<(String, f64)>,
    pub rhs: f64,
    pub family: CutFamily,
    pub provenance: CutProvenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutDump {
    pub model: String,
    pub cuts: Vec<CutRecord>,
}

impl CutDump {
    pub fn new(model: &MipModel, cuts: &[Cut]) -> Self {
        CutDump {
            model: model.name.clone(),
            cuts: cuts
                .iter()
                .map(|c| CutRecord {
                    expr: c.expr.iter().map(|(j, a)| (model.variables[j].name.clone(), a)).collect(),
                    rhs: c.rhs,
                    family: c.family,
                    provenance: c.provenance.clone(),
                })
                .collect(),
        }
    }

    /// Resolves variable names against `model`.
    pub fn to_cuts(&self, model: &MipModel) -> Result<Vec<Cut>> {
        self.cuts
            .iter()
            .map(|r| {
                let terms = r
                    .expr
                    .iter()
                    .map(|(name, a)| {
                        model
                            .var_by_name(name)
                            .map(|j| (j, *a))
                            .ok_or_else(|| Error::Parse(format!("cut references unknown variable {name}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Cut {
                    expr: LinearExpr::from_terms(terms),
                    rhs: r.rhs,
                    family: r.family,
                    provenance: r.provenance.clone(),
                    rank: 1,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_model(vars: &[(f64, f64, VarKind)], rows: &[(&[(usize, f64)], Sense, f64)]) -> MipModel {
        let mut m = MipModel::new("t");
        for (j, &(lo, hi, kind)) in vars.iter().enumerate() {
            m.add_var(format!("v{j}"), lo, hi, kind, "v");
        }
        for (i, (terms, s, b)) in rows.iter().enumerate() {
            m.add_constraint(LinearExpr::from_terms(terms.iter().copied()), *s, *b, format!("r{i}"));
        }
        m
    }

    #[test]
    fn divides_by_fractional_integer_coefficient() {
        let m = int_model(
            &[(0.0, 5.0, VarKind::Integer), (0.0, 10.0, VarKind::Continuous)],
            &[(&[(0, 2.0), (1, 1.0)], Sense::Ge, 3.0)],
        );
        let bases = base_inequalities_from_row(&m, 0, &[0.7, 0.0], ComplementMode::NoComplement, &Default::default());
        assert_eq!(bases.len(), 1);
        let b = &bases[0];
        assert_eq!(b.rhs, 1.5);
        assert_eq!(b.terms.iter().map(|t| t.coef).collect::<Vec<_>>(), vec![1.0, 0.5]);
        assert_eq!(b.provenance.as_ref().unwrap().divisor, 0);
    }

    #[test]
    fn integral_point_gives_no_base() {
        let m = int_model(&[(0.0, 5.0, VarKind::Integer)], &[(&[(0, 2.0)], Sense::Ge, 3.0)]);
        assert!(base_inequalities_from_row(&m, 0, &[2.0], ComplementMode::Both, &Default::default()).is_empty());
    }

    #[test]
    fn link_row_bases_coincide_across_modes() {
        // y <= x  written as x - y >= 0 after negation of -x + y <= 0
        let m = int_model(
            &[(0.0, 3.0, VarKind::Continuous), (0.0, 1.0, VarKind::Binary)],
            &[(&[(1, 1.0), (0, -1.0)], Sense::Le, 0.0)],
        );
        let x = [0.4, 0.4];
        let opts = SeparationOptions::default();
        let both = base_inequalities_from_row(&m, 0, &x, ComplementMode::Both, &opts);
        let none = base_inequalities_from_row(&m, 0, &x, ComplementMode::NoComplement, &opts);
        assert_eq!(both.len(), 1);
        assert_eq!(none.len(), 1);
        assert_eq!(both[0].terms, none[0].terms);
    }

    #[test]
    fn mir_single_integer() {
        let cut = mir(&BaseInequality::from_parts(&[(0, 1.0)], &[], 1.5)).unwrap();
        assert_eq!(cut.expr.terms(), &[(0, 0.5)]);
        assert_eq!(cut.rhs, 1.0);
    }

    #[test]
    fn mir_mixed() {
        let cut = mir(&BaseInequality::from_parts(&[(0, 1.0)], &[(1, 1.0)], 1.5)).unwrap();
        assert_eq!(cut.expr.terms(), &[(0, 0.5), (1, 1.0)]);
        assert_eq!(cut.rhs, 1.0);
        for (x, v) in [(2.0, 0.0), (1.0, 0.5), (0.0, 1.5)] {
            assert!(cut.expr.eval(&[x, v]) >= cut.rhs - 1e-12);
        }
    }

    #[test]
    fn mir_integral_rhs() {
        assert!(mir(&BaseInequality::from_parts(&[(0, 1.0)], &[], 3.0)).is_none());
    }

    #[test]
    fn complement_is_undone() {
        // x in [0,3] integer complemented: t = 3 - x; base t >= 0.5 means x <= 2.5
        let base = BaseInequality {
            terms: vec![BaseTerm { var: 0, coef: 1.0, integer: true, complemented: true, bound: 3.0 }],
            rhs: 0.5,
            provenance: None,
        };
        let cut = mir(&base).unwrap();
        // 0.5 t >= 0.5 -> t >= 1 -> x <= 2, i.e. -0.5 x >= -1
        assert_eq!(cut.expr.terms(), &[(0, -0.5)]);
        assert!((cut.rhs + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmi_one_row() {
        let mut m = int_model(&[(0.0, 2.0, VarKind::Integer)], &[(&[(0, 2.0)], Sense::Le, 3.0)]);
        m.set_objective(LinearExpr::from_terms([(0, -1.0)]));
        let r = solve_lp(&m, None).unwrap();
        assert!((r.x[0] - 1.5).abs() < 1e-9);
        let cuts = gmi(&r, &m).unwrap();
        assert_eq!(cuts.len(), 1);
        let c = &cuts[0];
        // implies x <= 1
        let (_, a) = c.expr.terms()[0];
        assert!(a < 0.0);
        assert!((c.rhs / a - 1.0).abs() < 1e-9);
        assert!(c.violation(&r.x) >= 1e-6);
    }

    #[test]
    fn gmi_integral_optimum() {
        let mut m = int_model(&[(0.0, 2.0, VarKind::Integer)], &[(&[(0, 2.0)], Sense::Le, 4.0)]);
        m.set_objective(LinearExpr::from_terms([(0, -1.0)]));
        let r = solve_lp(&m, None).unwrap();
        assert!(gmi(&r, &m).unwrap().is_empty());
    }

    #[test]
    fn oracle_examples() {
        let m = int_model(&[(0.0, 10.0, VarKind::Integer)], &[(&[(0, 1.0)], Sense::Ge, 1.5)]);
        let mk = |rhs| Cut {
            expr: LinearExpr::from_terms([(0, 1.0)]),
            rhs,
            family: CutFamily::MirFormulation,
            provenance: CutProvenance::TableauRow { basic: 0, name: "v0".into() },
            rank: 1,
        };
        assert_eq!(validate_cut(&mk(2.0), &m, 1000).unwrap(), CutValidity::Valid);
        match validate_cut(&mk(3.0), &m, 1000).unwrap() {
            CutValidity::ViolatedBy { solution } => assert_eq!(solution.values, vec![2.0]),
            other => panic!("{other:?}"),
        }
        let big = int_model(&[(0.0, 999.0, VarKind::Integer); 3], &[]);
        assert!(matches!(validate_cut(&mk(0.0), &big, 1_000_000).unwrap(), CutValidity::Skipped { .. }));
    }

    #[test]
    fn oracle_uses_continuous_restriction() {
        // x integer in [0,2], v in [0,1], x + v >= 1.5: x = 0 is infeasible, so x >= 1 holds
        let m = int_model(
            &[(0.0, 2.0, VarKind::Integer), (0.0, 1.0, VarKind::Continuous)],
            &[(&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.5)],
        );
        let cut = |terms: &[(usize, f64)], rhs| Cut {
            expr: LinearExpr::from_terms(terms.iter().copied()),
            rhs,
            family: CutFamily::MirFormulation,
            provenance: CutProvenance::TableauRow { basic: 0, name: String::new() },
            rank: 1,
        };
        assert_eq!(validate_cut(&cut(&[(0, 1.0)], 1.0), &m, 100).unwrap(), CutValidity::Valid);
        // v >= 0.5 fails at x = 2, v = 0
        assert!(matches!(
            validate_cut(&cut(&[(1, 1.0)], 0.5), &m, 100).unwrap(),
            CutValidity::ViolatedBy { .. }
        ));
    }

    #[test]
    fn pool_dedups_scaled_copies() {
        let c = Cut {
            expr: LinearExpr::from_terms([(0, 1.0), (1, 2.0)]),
            rhs: 1.0,
            family: CutFamily::Gmi,
            provenance: CutProvenance::TableauRow { basic: 0, name: String::new() },
            rank: 1,
        };
        let mut pool = CutPool::new();
        assert!(pool.insert(c.clone(), 1, 0.1));
        assert!(!pool.insert(c.clone(), 2, 0.1));
        let mut scaled = c.clone();
        scaled.expr = c.expr.scaled(3.0);
        scaled.rhs = 3.0;
        assert!(!pool.insert(scaled, 2, 0.1));
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn dump_round_trip() {
        let m = int_model(&[(0.0, 2.0, VarKind::Integer), (0.0, 1.0, VarKind::Continuous)], &[]);
        let c = mir(&BaseInequality::from_parts(&[(0, 1.0)], &[(1, 1.0)], 1.5)).unwrap();
        let dump = CutDump::new(&m, std::slice::from_ref(&c));
        let text = serde_json::to_string(&dump).unwrap();
        let back: CutDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_cuts(&m).unwrap(), vec![c]);
    }
}
