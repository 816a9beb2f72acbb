//! Sparse mixed-integer linear models.
//!
//! A [`MipModel`] is the single representation emitted by every formulation
//! builder and consumed by the simplex, the separators and branch-and-bound.
//! Objectives are always minimized.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VarId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integer(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    #[serde(with = "lower_bound")]
    pub lower: f64,
    #[serde(with = "upper_bound")]
    pub upper: f64,
    pub kind: VarKind,
    /// Role label such as `x(i,j)` or `z(i,j,k)`.
    pub tag: String,
}

impl Variable {
    pub fn is_integer(&self) -> bool {
        self.kind.is_integer()
    }
}

/// Sparse linear expression. Terms are kept sorted by variable id with no
/// duplicates and no stored zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(VarId, f64)>", into = "Vec<(VarId, f64)>")]
pub struct LinearExpr {
    terms: Vec<(VarId, f64)>,
}

impl From<Vec<(VarId, f64)>> for LinearExpr {
    fn from(terms: Vec<(VarId, f64)>) -> Self {
        LinearExpr::from_terms(terms)
    }
}

impl From<LinearExpr> for Vec<(VarId, f64)> {
    fn from(expr: LinearExpr) -> Self {
        expr.terms
    }
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an expression, merging duplicate ids and dropping zeros.
    pub fn from_terms<I: IntoIterator<Item = (VarId, f64)>>(terms: I) -> Self {
        let mut terms: Vec<(VarId, f64)> = terms.into_iter().collect();
        terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        LinearExpr { terms: merged }
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.terms.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coef(&self, var: VarId) -> f64 {
        self.terms
            .binary_search_by_key(&var, |&(v, _)| v)
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, &(_, c)| m.max(c.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.terms.iter().map(|&(_, c)| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> LinearExpr {
        LinearExpr::from_terms(self.terms.iter().map(|&(v, c)| (v, c * factor)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: LinearExpr,
    pub sense: Sense,
    pub rhs: f64,
    /// Structured `family(indices)` label, e.g. `supply(3)`.
    pub tag: String,
}

impl Constraint {
    pub fn new(expr: LinearExpr, sense: Sense, rhs: f64, tag: impl Into<String>) -> Self {
        Constraint {
            expr,
            sense,
            rhs,
            tag: tag.into(),
        }
    }

    /// Row family: the tag up to the first `(`.
    pub fn family(&self) -> &str {
        tag_family(&self.tag)
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

pub fn tag_family(tag: &str) -> &str {
    tag.split('(').next().unwrap_or(tag)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MipModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Minimized.
    pub objective: LinearExpr,
}

impl MipModel {
    pub fn new(name: impl Into<String>) -> Self {
        MipModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        tag: impl Into<String>,
    ) -> VarId {
        let id = self.variables.len();
        self.variables.push(Variable {
            id,
            name: name.into(),
            lower,
            upper,
            kind,
            tag: tag.into(),
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>, tag: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary, tag)
    }

    pub fn add_constraint(
        &mut self,
        expr: LinearExpr,
        sense: Sense,
        rhs: f64,
        tag: impl Into<String>,
    ) -> usize {
        self.constraints.push(Constraint::new(expr, sense, rhs, tag));
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, objective: LinearExpr) {
        self.objective = objective;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables.iter().filter(|v| v.is_integer()).map(|v| v.id)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidModel(format!("variable {} has id {}", i, v.id)));
            }
            if !(v.lower <= v.upper) {
                return Err(Error::InvalidModel(format!(
                    "variable {} has lower {} > upper {}",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(Error::InvalidModel(format!(
                    "binary variable {} must have bounds [0,1]",
                    v.name
                )));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate variable name {}", v.name)));
            }
        }
        let n = self.variables.len();
        let check = |expr: &LinearExpr, what: &str| -> Result<()> {
            match expr.iter().find(|&(v, c)| v >= n || !c.is_finite()) {
                Some((v, c)) => Err(Error::InvalidModel(format!(
                    "{what} references variable {v} with coefficient {c}"
                ))),
                None => Ok(()),
            }
        };
        check(&self.objective, "objective")?;
        for c in &self.constraints {
            check(&c.expr, &c.tag)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl Solution {
    pub fn new(model: &MipModel, values: Vec<f64>) -> Self {
        let objective = model.objective_value(&values);
        Solution { values, objective }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// Violation of every row, indexed like `model.constraints`.
    pub row_violations: Vec<f64>,
    /// Bound violation of every variable.
    pub bound_violations: Vec<f64>,
    /// Distance to the nearest integer for integer variables, 0 otherwise.
    pub fractionality: Vec<f64>,
    pub max_row_violation: f64,
    pub max_bound_violation: f64,
    pub max_fractionality: f64,
    pub lp_feasible: bool,
    pub integer_feasible: bool,
}

pub fn fractionality(v: f64) -> f64 {
    (v - v.round()).abs()
}

pub fn check_feasibility(
    model: &MipModel,
    sol: &Solution,
    feas_tol: f64,
    int_tol: f64,
) -> Result<FeasibilityReport> {
    if sol.values.len() != model.num_vars() {
        return Err(Error::DimensionMismatch {
            expected: model.num_vars(),
            got: sol.values.len(),
        });
    }
    if !(feas_tol > 0.0 && int_tol > 0.0) {
        return Err(Error::InvalidParameters("tolerances must be positive".into()));
    }
    let x = &sol.values;
    let row_violations: Vec<f64> = model.constraints.iter().map(|c| c.violation(x)).collect();
    let bound_violations: Vec<f64> = model
        .variables
        .iter()
        .map(|v| (v.lower - x[v.id]).max(x[v.id] - v.upper).max(0.0))
        .collect();
    let fractionality: Vec<f64> = model
        .variables
        .iter()
        .map(|v| if v.is_integer() { fractionality(x[v.id]) } else { 0.0 })
        .collect();
    let max = |xs: &[f64]| xs.iter().fold(0.0_f64, |m, &v| m.max(v));
    let max_row_violation = max(&row_violations);
    let max_bound_violation = max(&bound_violations);
    let max_fractionality = max(&fractionality);
    let lp_feasible = max_row_violation <= feas_tol && max_bound_violation <= feas_tol;
    Ok(FeasibilityReport {
        row_violations,
        bound_violations,
        fractionality,
        max_row_violation,
        max_bound_violation,
        max_fractionality,
        lp_feasible,
        integer_feasible: lp_feasible && max_fractionality <= int_tol,
    })
}

/// Same model with every variable continuous. Bounds are unchanged.
pub fn lp_relaxation(model: &MipModel) -> MipModel {
    let mut relaxed = model.clone();
    for v in &mut relaxed.variables {
        v.kind = VarKind::Continuous;
    }
    relaxed
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub n_vars: usize,
    pub n_int_vars: usize,
    pub n_rows: usize,
    pub n_nonzeros: usize,
}

pub fn model_stats(model: &MipModel) -> ModelStats {
    ModelStats {
        n_vars: model.num_vars(),
        n_int_vars: model.integer_vars().count(),
        n_rows: model.num_rows(),
        n_nonzeros: model.constraints.iter().map(|c| c.expr.len()).sum(),
    }
}

// JSON has no infinities; infinite bounds are written as null.
mod lower_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod upper_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var_model() -> MipModel {
        let mut m = MipModel::new("t");
        let x = m.add_var("x", 0.0, 2.0, VarKind::Integer, "x");
        m.add_constraint(LinearExpr::from_terms([(x, 1.0)]), Sense::Ge, 1.0, "row(0)");
        m.set_objective(LinearExpr::from_terms([(x, 1.0)]));
        m
    }

    #[test]
    fn feasibility_examples() {
        let m = one_var_model();
        let r = check_feasibility(&m, &Solution::new(&m, vec![1.0]), 1e-7, 1e-6).unwrap();
        assert!(r.integer_feasible);
        assert_eq!(r.max_row_violation, 0.0);

        let r = check_feasibility(&m, &Solution::new(&m, vec![0.5]), 1e-7, 1e-6).unwrap();
        assert!(!r.lp_feasible);
        assert!((r.row_violations[0] - 0.5).abs() < 1e-15);

        let r = check_feasibility(&m, &Solution::new(&m, vec![1.4]), 1e-7, 1e-6).unwrap();
        assert!(r.lp_feasible);
        assert!(!r.integer_feasible);
        assert!((r.max_fractionality - 0.4).abs() < 1e-12);
    }

    #[test]
    fn feasibility_dimension_mismatch() {
        let m = one_var_model();
        let sol = Solution { values: vec![1.0, 2.0], objective: 0.0 };
        assert!(matches!(
            check_feasibility(&m, &sol, 1e-7, 1e-6),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn linear_expr_merges_and_drops_zeros() {
        let e = LinearExpr::from_terms([(3, 1.0), (1, 2.0), (3, -1.0), (2, 0.0), (1, 0.5)]);
        assert_eq!(e.terms(), &[(1, 2.5)]);
        assert_eq!(e.coef(3), 0.0);
    }

    #[test]
    fn relaxation_and_stats() {
        let m = one_var_model();
        let r = lp_relaxation(&m);
        assert_eq!(r.variables[0].kind, VarKind::Continuous);
        assert_eq!(r.variables[0].upper, 2.0);
        assert_eq!(model_stats(&r).n_int_vars, 0);
        assert_eq!(
            model_stats(&MipModel::default()),
            ModelStats { n_vars: 0, n_int_vars: 0, n_rows: 0, n_nonzeros: 0 }
        );
    }

    #[test]
    fn json_infinite_bounds() {
        let mut m = MipModel::new("inf");
        m.add_var("v", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, "v");
        let text = serde_json::to_string(&m).unwrap();
        let back: MipModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn validate_rejects_duplicates() {
        let mut m = one_var_model();
        m.add_var("x", 0.0, 1.0, VarKind::Continuous, "x");
        assert!(m.validate().is_err());
    }
}
