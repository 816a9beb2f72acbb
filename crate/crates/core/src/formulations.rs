//! Formulation builders for the FCT family and the CMST family.
//!
//! Every FCT-family builder creates the arc variables first and in the same
//! order (`x(i,j)` for all arcs, then `y(i,j)` for all arcs), so a solution of
//! the plain FCT model can be lifted into any binarized model by copying its
//! prefix and filling in the auxiliary variables (see [`VarMap::lift`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{build_multigraph, CmstInstance, FctInstance, MultiArc};
use crate::model::{LinearExpr, MipModel, Sense, VarId, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormulationKind {
    #[serde(rename = "fct")]
    Fct,
    #[serde(rename = "fullb")]
    FullB,
    #[serde(rename = "avv")]
    AvV,
    #[serde(rename = "unaryb+")]
    UnaryBPlus,
    #[serde(rename = "logb+")]
    LogBPlus,
    #[serde(rename = "avv-z")]
    AvVMinusZ,
    #[serde(rename = "avv+u")]
    AvVPlusU,
    #[serde(rename = "avv+u-z")]
    AvVPlusUMinusZ,
    #[serde(rename = "cmst-avv")]
    CmstAvV,
    #[serde(rename = "cmst-avv+u")]
    CmstAvVPlusU,
    #[serde(rename = "cmst-avv+u-z")]
    CmstAvVPlusUMinusZ,
}

impl FormulationKind {
    pub const FCT_FAMILY: [FormulationKind; 8] = [
        FormulationKind::Fct,
        FormulationKind::FullB,
        FormulationKind::AvV,
        FormulationKind::UnaryBPlus,
        FormulationKind::LogBPlus,
        FormulationKind::AvVMinusZ,
        FormulationKind::AvVPlusU,
        FormulationKind::AvVPlusUMinusZ,
    ];

    pub const CMST_FAMILY: [FormulationKind; 3] = [
        FormulationKind::CmstAvV,
        FormulationKind::CmstAvVPlusU,
        FormulationKind::CmstAvVPlusUMinusZ,
    ];

    pub fn is_cmst(self) -> bool {
        Self::CMST_FAMILY.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::Fct => "fct",
            FormulationKind::FullB => "fullb",
            FormulationKind::AvV => "avv",
            FormulationKind::UnaryBPlus => "unaryb+",
            FormulationKind::LogBPlus => "logb+",
            FormulationKind::AvVMinusZ => "avv-z",
            FormulationKind::AvVPlusU => "avv+u",
            FormulationKind::AvVPlusUMinusZ => "avv+u-z",
            FormulationKind::CmstAvV => "cmst-avv",
            FormulationKind::CmstAvVPlusU => "cmst-avv+u",
            FormulationKind::CmstAvVPlusUMinusZ => "cmst-avv+u-z",
        }
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        FormulationKind::FCT_FAMILY
            .iter()
            .chain(FormulationKind::CMST_FAMILY.iter())
            .copied()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::InvalidParameters(format!("unknown formulation kind {s}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Full,
    Unary,
    Log,
    /// Aggregate over arcs leaving a node.
    AggregateU,
    /// Aggregate over arcs entering a node.
    AggregateW,
}

/// Binarization schemes accepted by [`binarize_variable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binarization {
    Full,
    Unary,
    Log,
}

impl From<Binarization> for Scheme {
    fn from(b: Binarization) -> Self {
        match b {
            Binarization::Full => Scheme::Full,
            Binarization::Unary => Scheme::Unary,
            Binarization::Log => Scheme::Log,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxLink {
    pub var: VarId,
    pub scheme: Scheme,
    pub k: i64,
    /// Binarized variable, for the full/unary/log schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<VarId>,
    /// Node and summed variables, for the aggregate schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<VarId>,
}

/// `original = expr` where `expr` only uses that variable's auxiliaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub original: VarId,
    pub expr: LinearExpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FctArcVars {
    pub supplier: usize,
    pub customer: usize,
    pub x: VarId,
    pub y: VarId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmstArcVar {
    pub arc: MultiArc,
    pub z: VarId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VarMap {
    pub aux: Vec<AuxLink>,
    pub reconstruction: Vec<Reconstruction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fct_arcs: Vec<FctArcVars>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cmst_arcs: Vec<CmstArcVar>,
}

impl VarMap {
    /// Lifts values of the leading variables (the FCT `x`/`y` prefix, or the
    /// CMST arc variables) into a full assignment of the formulation.
    /// `base` must hold the values of every variable that is not auxiliary.
    pub fn lift(&self, n_vars: usize, base: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; n_vars];
        values[..base.len()].copy_from_slice(base);
        for link in &self.aux {
            if let Some(orig) = link.original {
                let x = values[orig].round() as i64;
                values[link.var] = match link.scheme {
                    Scheme::Full => (x == link.k) as i64 as f64,
                    Scheme::Unary => (x >= link.k) as i64 as f64,
                    Scheme::Log => ((x >> (link.k - 1)) & 1) as f64,
                    _ => unreachable!("aggregates carry no original"),
                };
            }
        }
        for link in &self.aux {
            if matches!(link.scheme, Scheme::AggregateU | Scheme::AggregateW) {
                values[link.var] = link.members.iter().map(|&m| values[m]).sum();
            }
        }
        values
    }

    /// Values of the original FCT `x`/`y` variables.
    pub fn project_fct(&self, values: &[f64]) -> Vec<f64> {
        let n = self.fct_arcs.len();
        let mut out = vec![0.0; 2 * n];
        for (e, arc) in self.fct_arcs.iter().enumerate() {
            out[e] = values[arc.x];
            out[n + e] = values[arc.y];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Build AvV-z by deleting the z-space flow rows without restoring the
    /// x-space supply/demand rows.
    #[serde(default)]
    pub literal_minus_z: bool,
}

/// Smallest `L` with `2^L >= a + 1`.
pub fn log_bits(a: i64) -> i64 {
    let mut bits = 0;
    while (1i64 << bits) < a + 1 {
        bits += 1;
    }
    bits
}

/// Adds the binaries and rows of one binarization of `var` to `model`.
fn binarize_in_place(
    model: &mut MipModel,
    var: VarId,
    scheme: Binarization,
    name_of: &dyn Fn(i64) -> String,
    label: &str,
    map: &mut VarMap,
) -> Result<Vec<VarId>> {
    let v = &model.variables[var];
    if !v.is_integer() {
        return Err(Error::InvalidModel(format!("{} is not an integer variable", v.name)));
    }
    if v.lower != 0.0 {
        return Err(Error::InvalidModel(format!(
            "{} has lower bound {}; shift it to 0 first",
            v.name, v.lower
        )));
    }
    if !v.upper.is_finite() || v.upper < 1.0 || v.upper.fract() != 0.0 {
        return Err(Error::InvalidModel(format!(
            "{} needs a finite integral upper bound of at least 1",
            v.name
        )));
    }
    let a = v.upper as i64;
    let count = match scheme {
        Binarization::Full | Binarization::Unary => a,
        Binarization::Log => log_bits(a),
    };
    let zs: Vec<VarId> = (1..=count)
        .map(|k| model.add_binary(name_of(k), format!("z({label},{k})")))
        .collect();
    let weight = |k: i64| match scheme {
        Binarization::Full => k as f64,
        Binarization::Unary => 1.0,
        Binarization::Log => (1i64 << (k - 1)) as f64,
    };
    let recon = LinearExpr::from_terms(zs.iter().zip(1..).map(|(&z, k)| (z, weight(k))));
    let link = LinearExpr::from_terms(recon.iter().chain(std::iter::once((var, -1.0))));
    model.add_constraint(link, Sense::Eq, 0.0, format!("link_zx({label})"));
    match scheme {
        Binarization::Full => {
            let sum = LinearExpr::from_terms(zs.iter().map(|&z| (z, 1.0)));
            model.add_constraint(sum, Sense::Le, 1.0, format!("fb_sum({label})"));
        }
        Binarization::Unary => {
            for k in 1..count as usize {
                let order = LinearExpr::from_terms([(zs[k], 1.0), (zs[k - 1], -1.0)]);
                model.add_constraint(order, Sense::Le, 0.0, format!("order({label},{k})"));
            }
        }
        Binarization::Log => {
            let ub = LinearExpr::from_terms([(var, 1.0)]);
            model.add_constraint(ub, Sense::Le, a as f64, format!("log_ub({label})"));
        }
    }
    for (&z, k) in zs.iter().zip(1..) {
        map.aux.push(AuxLink {
            var: z,
            scheme: scheme.into(),
            k,
            original: Some(var),
            node: None,
            members: Vec::new(),
        });
    }
    map.reconstruction.push(Reconstruction { original: var, expr: recon });
    Ok(zs)
}

/// Replaces nothing: `var` is kept and linked to new binaries by the rows of
/// the chosen scheme.
pub fn binarize_variable(
    model: &MipModel,
    var: VarId,
    scheme: Binarization,
) -> Result<(MipModel, VarMap)> {
    if var >= model.num_vars() {
        return Err(Error::InvalidModel(format!("variable {var} does not exist")));
    }
    let mut out = model.clone();
    let mut map = VarMap::default();
    let name = model.variables[var].name.clone();
    binarize_in_place(&mut out, var, scheme, &|k| format!("{name}_z{k}"), &name, &mut map)?;
    Ok((out, map))
}

struct FctBase {
    model: MipModel,
    arcs: Vec<FctArcVars>,
    /// capacity per arc, aligned with `arcs`
    cap: Vec<i64>,
}

fn fct_base(inst: &FctInstance, name: String, x_kind: VarKind, flow_rows: bool) -> Result<FctBase> {
    if inst.total_demand() > inst.total_supply() {
        return Err(Error::InvalidInstance("total demand exceeds total supply".into()));
    }
    let mut model = MipModel::new(name);
    let mut pairs = Vec::new();
    for i in 0..inst.n_suppliers {
        for j in 0..inst.n_customers {
            if inst.capacity[i][j] > 0 {
                pairs.push((i, j));
            }
        }
    }
    let xs: Vec<VarId> = pairs
        .iter()
        .map(|&(i, j)| {
            let cap = inst.capacity[i][j] as f64;
            model.add_var(format!("x({i},{j})"), 0.0, cap, x_kind, format!("x({i},{j})"))
        })
        .collect();
    let ys: Vec<VarId> = pairs
        .iter()
        .map(|&(i, j)| model.add_binary(format!("y({i},{j})"), format!("y({i},{j})")))
        .collect();
    let arcs: Vec<FctArcVars> = pairs
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(&(i, j), (&x, &y))| FctArcVars { supplier: i, customer: j, x, y })
        .collect();
    let cap: Vec<i64> = pairs.iter().map(|&(i, j)| inst.capacity[i][j]).collect();
    model.set_objective(LinearExpr::from_terms(
        arcs.iter().map(|a| (a.y, inst.cost[a.supplier][a.customer] as f64)),
    ));
    if flow_rows {
        add_x_flow_rows(&mut model, inst, &arcs);
    }
    for (a, &c) in arcs.iter().zip(&cap) {
        let (i, j) = (a.supplier, a.customer);
        model.add_constraint(
            LinearExpr::from_terms([(a.y, 1.0), (a.x, -1.0)]),
            Sense::Le,
            0.0,
            format!("link_yx({i},{j})"),
        );
        model.add_constraint(
            LinearExpr::from_terms([(a.x, 1.0), (a.y, -(c as f64))]),
            Sense::Le,
            0.0,
            format!("link_xy({i},{j})"),
        );
    }
    Ok(FctBase { model, arcs, cap })
}

fn add_x_flow_rows(model: &mut MipModel, inst: &FctInstance, arcs: &[FctArcVars]) {
    for i in 0..inst.n_suppliers {
        let expr = LinearExpr::from_terms(arcs.iter().filter(|a| a.supplier == i).map(|a| (a.x, 1.0)));
        model.add_constraint(expr, Sense::Le, inst.supply[i] as f64, format!("supply({i})"));
    }
    for j in 0..inst.n_customers {
        let expr = LinearExpr::from_terms(arcs.iter().filter(|a| a.customer == j).map(|a| (a.x, 1.0)));
        model.add_constraint(expr, Sense::Eq, inst.demand[j] as f64, format!("demand({j})"));
    }
}

/// Plain FCT model: continuous flows, binary arc indicators.
pub fn build_fct(inst: &FctInstance) -> Result<MipModel> {
    Ok(fct_base(inst, format!("{}-fct", inst.name), VarKind::Continuous, true)?.model)
}

fn fct_map(arcs: Vec<FctArcVars>) -> VarMap {
    VarMap {
        fct_arcs: arcs,
        ..Default::default()
    }
}

fn build_binarized(
    inst: &FctInstance,
    kind: FormulationKind,
    scheme: Binarization,
) -> Result<(MipModel, VarMap)> {
    let FctBase { mut model, arcs, .. } =
        fct_base(inst, format!("{}-{}", inst.name, kind), VarKind::Integer, true)?;
    let mut map = VarMap::default();
    for a in &arcs {
        let (i, j) = (a.supplier, a.customer);
        let label = format!("{i},{j}");
        let zs = binarize_in_place(
            &mut model,
            a.x,
            scheme,
            &|k| format!("z({i},{j},{k})"),
            &label,
            &mut map,
        )?;
        match kind {
            FormulationKind::UnaryBPlus => {
                model.add_constraint(
                    LinearExpr::from_terms([(zs[0], 1.0), (a.y, -1.0)]),
                    Sense::Eq,
                    0.0,
                    format!("ub_s({label})"),
                );
            }
            FormulationKind::LogBPlus => {
                let expr = LinearExpr::from_terms(
                    zs.iter().map(|&z| (z, 1.0)).chain(std::iter::once((a.y, -1.0))),
                );
                model.add_constraint(expr, Sense::Ge, 0.0, format!("lb_s({label})"));
            }
            _ => {}
        }
    }
    map.fct_arcs = arcs;
    Ok((model, map))
}

struct AvVParts {
    model: MipModel,
    map: VarMap,
    /// `z[e][k]` for arc `e`, `k = 0..=a_e`
    z: Vec<Vec<VarId>>,
    cap: Vec<i64>,
}

fn build_avv_core(
    inst: &FctInstance,
    kind: FormulationKind,
    z_flow_rows: bool,
    x_flow_rows: bool,
) -> Result<AvVParts> {
    let FctBase { mut model, arcs, cap } =
        fct_base(inst, format!("{}-{}", inst.name, kind), VarKind::Integer, x_flow_rows)?;
    let mut map = VarMap::default();
    let mut z = Vec::with_capacity(arcs.len());
    for (a, &c) in arcs.iter().zip(&cap) {
        let (i, j) = (a.supplier, a.customer);
        let zs: Vec<VarId> = (0..=c)
            .map(|k| model.add_binary(format!("z({i},{j},{k})"), format!("z({i},{j},{k})")))
            .collect();
        for (k, &zv) in zs.iter().enumerate() {
            map.aux.push(AuxLink {
                var: zv,
                scheme: Scheme::Full,
                k: k as i64,
                original: Some(a.x),
                node: None,
                members: Vec::new(),
            });
        }
        map.reconstruction.push(Reconstruction {
            original: a.x,
            expr: LinearExpr::from_terms(zs.iter().enumerate().map(|(k, &zv)| (zv, k as f64))),
        });
        z.push(zs);
    }
    if z_flow_rows {
        for i in 0..inst.n_suppliers {
            let expr = LinearExpr::from_terms(
                arcs.iter()
                    .zip(&z)
                    .filter(|(a, _)| a.supplier == i)
                    .flat_map(|(_, zs)| zs.iter().enumerate().map(|(k, &zv)| (zv, k as f64))),
            );
            model.add_constraint(expr, Sense::Le, inst.supply[i] as f64, format!("flow_z_supply({i})"));
        }
        for j in 0..inst.n_customers {
            let expr = LinearExpr::from_terms(
                arcs.iter()
                    .zip(&z)
                    .filter(|(a, _)| a.customer == j)
                    .flat_map(|(_, zs)| zs.iter().enumerate().map(|(k, &zv)| (zv, k as f64))),
            );
            model.add_constraint(expr, Sense::Eq, inst.demand[j] as f64, format!("flow_z_demand({j})"));
        }
    }
    for (a, zs) in arcs.iter().zip(&z) {
        let label = format!("{},{}", a.supplier, a.customer);
        let link_x = LinearExpr::from_terms(
            zs.iter()
                .enumerate()
                .map(|(k, &zv)| (zv, k as f64))
                .chain(std::iter::once((a.x, -1.0))),
        );
        model.add_constraint(link_x, Sense::Eq, 0.0, format!("link_zx({label})"));
        let link_y = LinearExpr::from_terms(
            zs.iter().skip(1).map(|&zv| (zv, 1.0)).chain(std::iter::once((a.y, -1.0))),
        );
        model.add_constraint(link_y, Sense::Eq, 0.0, format!("link_zy({label})"));
        let convex = LinearExpr::from_terms(zs.iter().map(|&zv| (zv, 1.0)));
        model.add_constraint(convex, Sense::Eq, 1.0, format!("convex({label})"));
    }
    map.fct_arcs = arcs;
    Ok(AvVParts { model, map, z, cap })
}

fn add_fct_aggregates(parts: &mut AvVParts, inst: &FctInstance) {
    let c_max = parts.cap.iter().copied().max().unwrap_or(0);
    let AvVParts { model, map, z, .. } = parts;
    let arcs = map.fct_arcs.clone();
    let mut out_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); inst.n_suppliers];
    let mut in_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); inst.n_customers];
    for k in 1..=c_max {
        for i in 0..inst.n_suppliers {
            let members: Vec<VarId> = arcs
                .iter()
                .zip(z.iter())
                .filter(|(a, zs)| a.supplier == i && zs.len() as i64 > k)
                .map(|(_, zs)| zs[k as usize])
                .collect();
            if members.is_empty() {
                continue;
            }
            let u = model.add_var(
                format!("u({i},{k})"),
                0.0,
                members.len() as f64,
                VarKind::Integer,
                format!("u({i},{k})"),
            );
            let expr = LinearExpr::from_terms(
                std::iter::once((u, 1.0)).chain(members.iter().map(|&m| (m, -1.0))),
            );
            model.add_constraint(expr, Sense::Eq, 0.0, format!("agg_u({i},{k})"));
            out_terms[i].push((u, k as f64));
            map.aux.push(AuxLink {
                var: u,
                scheme: Scheme::AggregateU,
                k,
                original: None,
                node: Some(i),
                members,
            });
        }
        for j in 0..inst.n_customers {
            let members: Vec<VarId> = arcs
                .iter()
                .zip(z.iter())
                .filter(|(a, zs)| a.customer == j && zs.len() as i64 > k)
                .map(|(_, zs)| zs[k as usize])
                .collect();
            if members.is_empty() {
                continue;
            }
            let w = model.add_var(
                format!("w({j},{k})"),
                0.0,
                members.len() as f64,
                VarKind::Integer,
                format!("w({j},{k})"),
            );
            let expr = LinearExpr::from_terms(
                std::iter::once((w, 1.0)).chain(members.iter().map(|&m| (m, -1.0))),
            );
            model.add_constraint(expr, Sense::Eq, 0.0, format!("agg_w({j},{k})"));
            in_terms[j].push((w, k as f64));
            map.aux.push(AuxLink {
                var: w,
                scheme: Scheme::AggregateW,
                k,
                original: None,
                node: Some(j),
                members,
            });
        }
    }
    for (i, terms) in out_terms.into_iter().enumerate() {
        model.add_constraint(
            LinearExpr::from_terms(terms),
            Sense::Le,
            inst.supply[i] as f64,
            format!("flow_u_supply({i})"),
        );
    }
    for (j, terms) in in_terms.into_iter().enumerate() {
        model.add_constraint(
            LinearExpr::from_terms(terms),
            Sense::Eq,
            inst.demand[j] as f64,
            format!("flow_w_demand({j})"),
        );
    }
}

pub fn build_fct_formulation(
    inst: &FctInstance,
    kind: FormulationKind,
    opts: BuildOptions,
) -> Result<(MipModel, VarMap)> {
    match kind {
        FormulationKind::Fct => {
            let base = fct_base(inst, format!("{}-fct", inst.name), VarKind::Continuous, true)?;
            Ok((base.model, fct_map(base.arcs)))
        }
        FormulationKind::FullB => build_binarized(inst, kind, Binarization::Full),
        FormulationKind::UnaryBPlus => build_binarized(inst, kind, Binarization::Unary),
        FormulationKind::LogBPlus => build_binarized(inst, kind, Binarization::Log),
        FormulationKind::AvV => {
            let p = build_avv_core(inst, kind, true, false)?;
            Ok((p.model, p.map))
        }
        FormulationKind::AvVMinusZ => {
            let p = build_avv_core(inst, kind, false, !opts.literal_minus_z)?;
            Ok((p.model, p.map))
        }
        FormulationKind::AvVPlusU | FormulationKind::AvVPlusUMinusZ => {
            let z_rows = kind == FormulationKind::AvVPlusU;
            let mut p = build_avv_core(inst, kind, z_rows, false)?;
            add_fct_aggregates(&mut p, inst);
            Ok((p.model, p.map))
        }
        _ => Err(Error::KindMismatch { kind: kind.to_string(), instance: "FCT" }),
    }
}

pub fn build_cmst_formulation(inst: &CmstInstance, kind: FormulationKind) -> Result<(MipModel, VarMap)> {
    if !kind.is_cmst() {
        return Err(Error::KindMismatch { kind: kind.to_string(), instance: "CMST" });
    }
    inst.validate()?;
    let mut model = MipModel::new(format!("{}-{}", inst.name, kind));
    let arcs = build_multigraph(inst);
    let arc_vars: Vec<CmstArcVar> = arcs
        .iter()
        .map(|&arc| {
            let name = format!("z({},{},{})", arc.tail, arc.head, arc.size);
            let z = model.add_binary(name.clone(), name);
            CmstArcVar { arc, z }
        })
        .collect();
    model.set_objective(LinearExpr::from_terms(
        arc_vars.iter().map(|a| (a.z, inst.cost[a.arc.tail][a.arc.head] as f64)),
    ));
    let n = inst.n;
    for i in 1..=n {
        let expr = LinearExpr::from_terms(arc_vars.iter().filter(|a| a.arc.head == i).map(|a| (a.z, 1.0)));
        model.add_constraint(expr, Sense::Eq, 1.0, format!("indeg({i})"));
    }
    if kind != FormulationKind::CmstAvVPlusUMinusZ {
        for i in 1..=n {
            let expr = LinearExpr::from_terms(arc_vars.iter().filter_map(|a| {
                if a.arc.head == i {
                    Some((a.z, a.arc.size as f64))
                } else if a.arc.tail == i {
                    Some((a.z, -(a.arc.size as f64)))
                } else {
                    None
                }
            }));
            model.add_constraint(expr, Sense::Eq, inst.demand[i] as f64, format!("flow({i})"));
        }
    }
    let mut map = VarMap {
        cmst_arcs: arc_vars.clone(),
        ..Default::default()
    };
    if kind != FormulationKind::CmstAvV {
        for i in 1..=n {
            let mut flow_terms = Vec::new();
            let mut degree_terms = Vec::new();
            for k in 1..=inst.capacity {
                let into: Vec<VarId> = arc_vars
                    .iter()
                    .filter(|a| a.arc.head == i && a.arc.size == k)
                    .map(|a| a.z)
                    .collect();
                if !into.is_empty() {
                    let g = model.add_var(
                        format!("g({i},{k})"),
                        0.0,
                        into.len() as f64,
                        VarKind::Integer,
                        format!("g({i},{k})"),
                    );
                    let expr = LinearExpr::from_terms(
                        std::iter::once((g, 1.0)).chain(into.iter().map(|&m| (m, -1.0))),
                    );
                    model.add_constraint(expr, Sense::Eq, 0.0, format!("agg_in({i},{k})"));
                    flow_terms.push((g, k as f64));
                    degree_terms.push((g, 1.0));
                    map.aux.push(AuxLink {
                        var: g,
                        scheme: Scheme::AggregateW,
                        k,
                        original: None,
                        node: Some(i),
                        members: into,
                    });
                }
                let out: Vec<VarId> = arc_vars
                    .iter()
                    .filter(|a| a.arc.tail == i && a.arc.size == k)
                    .map(|a| a.z)
                    .collect();
                if !out.is_empty() {
                    let h = model.add_var(
                        format!("h({i},{k})"),
                        0.0,
                        out.len() as f64,
                        VarKind::Integer,
                        format!("h({i},{k})"),
                    );
                    let expr = LinearExpr::from_terms(
                        std::iter::once((h, 1.0)).chain(out.iter().map(|&m| (m, -1.0))),
                    );
                    model.add_constraint(expr, Sense::Eq, 0.0, format!("agg_out({i},{k})"));
                    flow_terms.push((h, -(k as f64)));
                    map.aux.push(AuxLink {
                        var: h,
                        scheme: Scheme::AggregateU,
                        k,
                        original: None,
                        node: Some(i),
                        members: out,
                    });
                }
            }
            model.add_constraint(
                LinearExpr::from_terms(flow_terms),
                Sense::Eq,
                inst.demand[i] as f64,
                format!("flow_agg({i})"),
            );
            model.add_constraint(
                LinearExpr::from_terms(degree_terms),
                Sense::Eq,
                1.0,
                format!("indeg_agg({i})"),
            );
        }
    }
    Ok((model, map))
}

/// Either problem class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemInstance {
    Fct(FctInstance),
    Cmst(CmstInstance),
}

impl ProblemInstance {
    pub fn name(&self) -> &str {
        match self {
            ProblemInstance::Fct(i) => &i.name,
            ProblemInstance::Cmst(i) => &i.name,
        }
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            ProblemInstance::Fct(_) => "FCT",
            ProblemInstance::Cmst(_) => "CMST",
        }
    }

    pub fn supports(&self, kind: FormulationKind) -> bool {
        match self {
            ProblemInstance::Fct(_) => !kind.is_cmst(),
            ProblemInstance::Cmst(_) => kind.is_cmst(),
        }
    }
}

pub fn build_formulation(
    inst: &ProblemInstance,
    kind: FormulationKind,
    opts: BuildOptions,
) -> Result<(MipModel, VarMap)> {
    match inst {
        ProblemInstance::Fct(f) => build_fct_formulation(f, kind, opts),
        ProblemInstance::Cmst(c) => build_cmst_formulation(c, kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::model_stats;

    fn one_arc(s: i64, d: i64, q: i64) -> FctInstance {
        FctInstance::new("one", vec![s], vec![d], vec![vec![q]])
    }

    fn row<'a>(m: &'a MipModel, tag: &str) -> &'a crate::model::Constraint {
        m.constraints.iter().find(|c| c.tag == tag).unwrap_or_else(|| panic!("no row {tag}"))
    }

    fn coefs(m: &MipModel, tag: &str) -> Vec<(String, f64)> {
        row(m, tag).expr.iter().map(|(v, c)| (m.variables[v].name.clone(), c)).collect()
    }

    #[test]
    fn fct_counts() {
        let inst = FctInstance::new("sym", vec![2, 2], vec![2, 2], vec![vec![1, 2], vec![2, 1]]);
        let m = build_fct(&inst).unwrap();
        let st = model_stats(&m);
        assert_eq!(st.n_vars, 8);
        assert_eq!(st.n_rows, 2 + 2 + 4 + 4);
        m.validate().unwrap();
    }

    #[test]
    fn fct_single_arc_rows() {
        let m = build_fct(&one_arc(2, 1, 5)).unwrap();
        assert_eq!(m.variables[0].upper, 1.0);
        assert_eq!(row(&m, "supply(0)").rhs, 2.0);
        assert_eq!(row(&m, "demand(0)").sense, Sense::Eq);
        assert_eq!(coefs(&m, "link_xy(0,0)"), vec![("x(0,0)".into(), 1.0), ("y(0,0)".into(), -1.0)]);
        assert_eq!(m.objective.terms(), &[(1, 5.0)]);
    }

    #[test]
    fn fct_omits_zero_capacity_arcs() {
        let mut inst = FctInstance::new("z", vec![2, 2], vec![1, 1], vec![vec![1, 1], vec![1, 1]]);
        inst.capacity[0][1] = 0;
        let m = build_fct(&inst).unwrap();
        assert_eq!(m.num_vars(), 6);
        assert!(m.var_by_name("x(0,1)").is_none());
        assert!(m.constraints.iter().all(|c| !c.tag.contains("(0,1)")));
    }

    #[test]
    fn fct_rejects_excess_demand() {
        let inst = FctInstance::new("bad", vec![1], vec![2], vec![vec![1]]);
        assert!(build_fct(&inst).is_err());
    }

    #[test]
    fn avv_single_arc() {
        let (m, map) = build_fct_formulation(&one_arc(3, 3, 1), FormulationKind::AvV, BuildOptions::default()).unwrap();
        let st = model_stats(&m);
        assert_eq!((st.n_vars, st.n_rows), (6, 7));
        assert_eq!(
            coefs(&m, "link_zx(0,0)"),
            vec![
                ("x(0,0)".into(), -1.0),
                ("z(0,0,1)".into(), 1.0),
                ("z(0,0,2)".into(), 2.0),
                ("z(0,0,3)".into(), 3.0)
            ]
        );
        assert_eq!(coefs(&m, "link_zy(0,0)").len(), 4);
        assert_eq!(row(&m, "convex(0,0)").rhs, 1.0);
        assert_eq!(row(&m, "convex(0,0)").expr.len(), 4);
        assert_eq!(row(&m, "flow_z_supply(0)").sense, Sense::Le);
        assert_eq!(map.aux.len(), 4);
    }

    #[test]
    fn binarize_full_and_log() {
        let mut m = MipModel::new("b");
        let x = m.add_var("x", 0.0, 3.0, VarKind::Integer, "x");
        let (full, map) = binarize_variable(&m, x, Binarization::Full).unwrap();
        assert_eq!(full.num_vars(), 4);
        assert_eq!(coefs(&full, "link_zx(x)"), vec![("x".into(), -1.0), ("x_z1".into(), 1.0), ("x_z2".into(), 2.0), ("x_z3".into(), 3.0)]);
        assert_eq!(row(&full, "fb_sum(x)").rhs, 1.0);
        assert_eq!(map.aux.len(), 3);

        let (log, _) = binarize_variable(&m, x, Binarization::Log).unwrap();
        assert_eq!(log.num_vars(), 3);
        assert_eq!(coefs(&log, "link_zx(x)"), vec![("x".into(), -1.0), ("x_z1".into(), 1.0), ("x_z2".into(), 2.0)]);
        assert_eq!(row(&log, "log_ub(x)").rhs, 3.0);

        let (unary, _) = binarize_variable(&m, x, Binarization::Unary).unwrap();
        assert_eq!(unary.constraints.iter().filter(|c| c.family() == "order").count(), 2);
    }

    #[test]
    fn binarize_unit_range() {
        let mut m = MipModel::new("b");
        let x = m.add_var("x", 0.0, 1.0, VarKind::Integer, "x");
        for scheme in [Binarization::Full, Binarization::Unary, Binarization::Log] {
            let (b, _) = binarize_variable(&m, x, scheme).unwrap();
            assert_eq!(b.num_vars(), 2);
            assert_eq!(coefs(&b, "link_zx(x)"), vec![("x".into(), -1.0), ("x_z1".into(), 1.0)]);
        }
    }

    #[test]
    fn binarize_errors() {
        let mut m = MipModel::new("b");
        let c = m.add_var("c", 0.0, 3.0, VarKind::Continuous, "c");
        let s = m.add_var("s", 1.0, 3.0, VarKind::Integer, "s");
        assert!(binarize_variable(&m, c, Binarization::Full).is_err());
        assert!(binarize_variable(&m, s, Binarization::Full).is_err());
    }

    #[test]
    fn log_bit_counts() {
        assert_eq!(log_bits(1), 1);
        assert_eq!(log_bits(3), 2);
        assert_eq!(log_bits(4), 3);
        assert_eq!(log_bits(7), 3);
        assert_eq!(log_bits(8), 4);
    }

    #[test]
    fn aggregated_rows_present() {
        let inst = FctInstance::new("u", vec![3, 2], vec![2, 3], vec![vec![1, 2], vec![3, 4]]);
        let (m, map) =
            build_fct_formulation(&inst, FormulationKind::AvVPlusU, BuildOptions::default()).unwrap();
        for i in 0..2 {
            let r = row(&m, &format!("flow_u_supply({i})"));
            assert_eq!(r.sense, Sense::Le);
            assert_eq!(r.rhs, inst.supply[i] as f64);
            for (v, c) in r.expr.iter() {
                let link = map.aux.iter().find(|l| l.var == v).unwrap();
                assert_eq!(link.scheme, Scheme::AggregateU);
                assert_eq!(c, link.k as f64);
            }
        }
        assert!(m.constraints.iter().any(|c| c.family() == "flow_z_supply"));
        let (mz, _) =
            build_fct_formulation(&inst, FormulationKind::AvVPlusUMinusZ, BuildOptions::default()).unwrap();
        assert!(mz.constraints.iter().all(|c| !c.family().starts_with("flow_z")));
        assert!(mz.constraints.iter().all(|c| c.family() != "supply"));
    }

    #[test]
    fn avv_minus_z_variants() {
        let inst = FctInstance::new("u", vec![3, 2], vec![2, 3], vec![vec![1, 2], vec![3, 4]]);
        let (m, _) = build_fct_formulation(&inst, FormulationKind::AvVMinusZ, BuildOptions::default()).unwrap();
        assert!(m.constraints.iter().any(|c| c.family() == "supply"));
        assert!(m.constraints.iter().all(|c| !c.family().starts_with("flow_z")));
        let (lit, _) = build_fct_formulation(
            &inst,
            FormulationKind::AvVMinusZ,
            BuildOptions { literal_minus_z: true },
        )
        .unwrap();
        assert!(lit.constraints.iter().all(|c| c.family() != "supply" && c.family() != "demand"));
    }

    #[test]
    fn kind_mismatch() {
        let inst = ProblemInstance::Fct(one_arc(1, 1, 1));
        assert!(matches!(
            build_formulation(&inst, FormulationKind::CmstAvV, BuildOptions::default()),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn kinds_parse() {
        for k in FormulationKind::FCT_FAMILY.iter().chain(FormulationKind::CMST_FAMILY.iter()) {
            assert_eq!(k.name().parse::<FormulationKind>().unwrap(), *k);
        }
    }

    #[test]
    fn lift_unary_and_log() {
        let inst = one_arc(5, 5, 1);
        let (m, map) = build_fct_formulation(&inst, FormulationKind::LogBPlus, BuildOptions::default()).unwrap();
        let v = map.lift(m.num_vars(), &[5.0, 1.0]);
        // 5 = 1 + 4
        assert_eq!(&v[2..], &[1.0, 0.0, 1.0]);
        let (m, map) = build_fct_formulation(&inst, FormulationKind::UnaryBPlus, BuildOptions::default()).unwrap();
        let v = map.lift(m.num_vars(), &[3.0, 1.0]);
        assert_eq!(&v[2..], &[1.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
