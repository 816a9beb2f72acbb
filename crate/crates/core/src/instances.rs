//! Problem data: fixed-charge transportation (FCT) instances produced by a
//! seeded generator, and capacitated minimum spanning tree (CMST) instances
//! read from OR-Library style text files or the native JSON format.
//!
//! # Random numbers
//!
//! The generator uses Xoshiro256++ seeded through SplitMix64
//! (`seed_from_u64`). Bounded integers are drawn as `lo + next_u64() % (hi - lo + 1)`.
//! Given the same `(n, B, r, seed)` the instance is identical on every
//! platform.
//!
//! # FCT generator
//!
//! 1. `s_i` uniform on `{1..B}` for each supplier.
//! 2. raw `d_j` uniform on `{1..B}` for each customer.
//! 3. `T = round(r * sum(s))`; each `d_j` is rescaled to `round(d_j * T / sum(d))`
//!    and clamped to `[1, B]`.
//! 4. Repair: while `sum(d) != T`, a uniformly chosen customer is moved one unit
//!    towards `T` unless that would leave `[1, B]`.
//! 5. Costs `q_ij` uniform on `{1..100}`; capacities `a_ij = min(s_i, d_j)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FctMeta {
    #[serde(rename = "B")]
    pub b: i64,
    pub r: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FctInstance {
    pub name: String,
    pub n_suppliers: usize,
    pub n_customers: usize,
    pub supply: Vec<i64>,
    pub demand: Vec<i64>,
    /// `cost[i][j]`, supplier-major.
    pub cost: Vec<Vec<i64>>,
    /// `capacity[i][j] = min(supply[i], demand[j])`.
    pub capacity: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<FctMeta>,
}

impl FctInstance {
    /// Builds an instance from supplies, demands and costs, deriving capacities.
    pub fn new(name: impl Into<String>, supply: Vec<i64>, demand: Vec<i64>, cost: Vec<Vec<i64>>) -> Self {
        let capacity = supply
            .iter()
            .map(|&s| demand.iter().map(|&d| s.min(d)).collect())
            .collect();
        FctInstance {
            name: name.into(),
            n_suppliers: supply.len(),
            n_customers: demand.len(),
            supply,
            demand,
            cost,
            capacity,
            meta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.supply.len() != self.n_suppliers || self.demand.len() != self.n_customers {
            return bad("supply/demand length does not match node counts".into());
        }
        if self.cost.len() != self.n_suppliers
            || self.capacity.len() != self.n_suppliers
            || self.cost.iter().chain(&self.capacity).any(|r| r.len() != self.n_customers)
        {
            return bad("cost/capacity matrices must be n_suppliers x n_customers".into());
        }
        if let Some(i) = self.supply.iter().position(|&s| s < 1) {
            return bad(format!("supply {i} is below 1"));
        }
        if let Some(j) = self.demand.iter().position(|&d| d < 1) {
            return bad(format!("demand {j} is below 1"));
        }
        if let Some(meta) = &self.meta {
            if self.supply.iter().chain(&self.demand).any(|&v| v > meta.b) {
                return bad(format!("a supply or demand exceeds B={}", meta.b));
            }
        }
        if self.total_demand() > self.total_supply() {
            return bad("total demand exceeds total supply".into());
        }
        for i in 0..self.n_suppliers {
            for j in 0..self.n_customers {
                if self.capacity[i][j] != self.supply[i].min(self.demand[j]) {
                    return bad(format!("capacity ({i},{j}) is not min(s_i, d_j)"));
                }
                if self.cost[i][j] < 0 {
                    return bad(format!("cost ({i},{j}) is negative"));
                }
            }
        }
        Ok(())
    }

    pub fn total_supply(&self) -> i64 {
        self.supply.iter().sum()
    }

    pub fn total_demand(&self) -> i64 {
        self.demand.iter().sum()
    }

    /// Largest arc capacity, the `C` used by aggregated formulations.
    pub fn max_capacity(&self) -> i64 {
        self.capacity.iter().flatten().copied().max().unwrap_or(0)
    }
}

struct Draw(Xoshiro256PlusPlus);

impl Draw {
    fn new(seed: u64) -> Self {
        Draw(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform on `lo..=hi`.
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as u64;
        lo + (self.0.next_u64() % span) as i64
    }
}

pub fn generate_fct(n: usize, b: i64, r: f64, seed: u64) -> Result<FctInstance> {
    if n < 1 {
        return Err(Error::InvalidParameters("n must be at least 1".into()));
    }
    if b < 2 {
        return Err(Error::InvalidParameters("B must be at least 2".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameters("r must lie in (0, 1)".into()));
    }
    let mut rng = Draw::new(seed);
    let supply: Vec<i64> = (0..n).map(|_| rng.int(1, b)).collect();
    let raw: Vec<i64> = (0..n).map(|_| rng.int(1, b)).collect();
    let total_supply: i64 = supply.iter().sum();
    let target = (r * total_supply as f64).round() as i64;
    if target < n as i64 {
        return Err(Error::InvalidParameters(format!(
            "target demand {target} cannot give every one of {n} customers a demand of at least 1"
        )));
    }
    if target > n as i64 * b {
        return Err(Error::InvalidParameters(format!(
            "target demand {target} exceeds n*B"
        )));
    }
    let raw_total: i64 = raw.iter().sum();
    let mut demand: Vec<i64> = raw
        .iter()
        .map(|&d| ((d as f64 * target as f64 / raw_total as f64).round() as i64).clamp(1, b))
        .collect();
    let mut total: i64 = demand.iter().sum();
    while total != target {
        let j = rng.int(0, n as i64 - 1) as usize;
        if total < target && demand[j] < b {
            demand[j] += 1;
            total += 1;
        } else if total > target && demand[j] > 1 {
            demand[j] -= 1;
            total -= 1;
        }
    }
    let cost: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.int(1, 100)).collect())
        .collect();
    let mut inst = FctInstance::new(format!("fct-n{n}-B{b}-s{seed}"), supply, demand, cost);
    inst.meta = Some(FctMeta { b, r, seed });
    Ok(inst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmstInstance {
    pub name: String,
    /// Number of non-root vertices; vertices are `0..=n` with 0 the root.
    pub n: usize,
    /// `demand[0]` is 0.
    pub demand: Vec<i64>,
    pub capacity: i64,
    /// `(n+1) x (n+1)` arc costs.
    pub cost: Vec<Vec<i64>>,
}

impl CmstInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.demand.len() != self.n + 1 {
            return bad(format!("expected {} demands, got {}", self.n + 1, self.demand.len()));
        }
        if self.cost.len() != self.n + 1 || self.cost.iter().any(|r| r.len() != self.n + 1) {
            return bad("cost matrix must be (n+1) x (n+1)".into());
        }
        if self.demand[0] != 0 {
            return bad("root demand must be 0".into());
        }
        if let Some(i) = (1..=self.n).find(|&i| self.demand[i] < 1) {
            return bad(format!("non-positive demand at vertex {i}"));
        }
        let max_d = self.demand.iter().copied().max().unwrap_or(0);
        if self.capacity < max_d {
            return bad(format!("capacity {} is below the largest demand {max_d}", self.capacity));
        }
        if self.cost.iter().flatten().any(|&q| q < 0) {
            return bad("negative arc cost".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmstFormat {
    OrLib,
    NativeJson,
}

impl std::str::FromStr for CmstFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orlib" => Ok(CmstFormat::OrLib),
            "native-json" | "json" => Ok(CmstFormat::NativeJson),
            other => Err(Error::InvalidParameters(format!("unknown CMST format {other}"))),
        }
    }
}

/// Parses a CMST instance. For OR-Library files `capacity` is mandatory since
/// the files do not carry it; for JSON it overrides the stored value.
///
/// OR-Library layout: a vertex count `N` (root included), the cost matrix as
/// either `N*N` entries or the `N(N-1)/2` entries above the diagonal, then the
/// 1-based index of the central vertex. Demands are unitary. The central vertex
/// becomes vertex 0 and the others keep their relative order.
pub fn parse_cmst(text: &str, format: CmstFormat, capacity: Option<i64>) -> Result<CmstInstance> {
    let inst = match format {
        CmstFormat::NativeJson => {
            let value: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| Error::Parse(format!("instance JSON: {e}")))?;
            if value.get("capacity").is_none() && capacity.is_none() {
                return Err(Error::Parse("capacity missing".into()));
            }
            let mut inst: CmstInstance = serde_json::from_value(value)
                .map_err(|e| Error::Parse(format!("instance JSON: {e}")))?;
            if let Some(c) = capacity {
                inst.capacity = c;
            }
            inst
        }
        CmstFormat::OrLib => {
            let capacity =
                capacity.ok_or_else(|| Error::Parse("capacity missing (supply it separately)".into()))?;
            parse_orlib(text, capacity)?
        }
    };
    inst.validate().map_err(|e| match e {
        Error::InvalidInstance(m) => Error::Parse(m),
        other => other,
    })?;
    Ok(inst)
}

fn parse_orlib(text: &str, capacity: i64) -> Result<CmstInstance> {
    let tokens: Vec<i64> = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map(|v| v.round() as i64)
                .map_err(|_| Error::Parse(format!("non-numeric token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let (&count, rest) = tokens
        .split_first()
        .ok_or_else(|| Error::Parse("missing section: vertex count header".into()))?;
    if count < 2 {
        return Err(Error::Parse(format!("vertex count {count} must be at least 2")));
    }
    let nv = count as usize;
    let full = nv * nv;
    let upper = nv * (nv - 1) / 2;
    let mut cost = vec![vec![0i64; nv]; nv];
    let central = match rest.len() {
        l if l == full + 1 => {
            for i in 0..nv {
                cost[i].copy_from_slice(&rest[i * nv..(i + 1) * nv]);
            }
            rest[full]
        }
        l if l == upper + 1 => {
            let mut it = rest.iter();
            for i in 0..nv {
                for j in i + 1..nv {
                    let q = *it.next().unwrap();
                    cost[i][j] = q;
                    cost[j][i] = q;
                }
            }
            rest[upper]
        }
        l if l == full || l == upper => {
            return Err(Error::Parse("missing section: central vertex index".into()));
        }
        l => {
            return Err(Error::Parse(format!(
                "missing section: cost matrix is truncated ({l} entries after the header, expected {full} or {upper} plus the central vertex)"
            )));
        }
    };
    if central < 1 || central as usize > nv {
        return Err(Error::Parse(format!("central vertex {central} out of range 1..={nv}")));
    }
    let root = central as usize - 1;
    let order: Vec<usize> = std::iter::once(root).chain((0..nv).filter(|&v| v != root)).collect();
    let cost = order
        .iter()
        .map(|&i| order.iter().map(|&j| cost[i][j]).collect())
        .collect();
    let n = nv - 1;
    let mut demand = vec![1i64; nv];
    demand[0] = 0;
    Ok(CmstInstance {
        name: String::new(),
        n,
        demand,
        capacity,
        cost,
    })
}

/// Arc `(tail, head)` carrying exactly `size` units of demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiArc {
    pub tail: usize,
    pub head: usize,
    pub size: i64,
}

/// Capacity-indexed multigraph: `(i,j)^k` for every ordered pair with `j` not
/// the root and `k = 1..=C - d_i`.
pub fn build_multigraph(inst: &CmstInstance) -> Vec<MultiArc> {
    let mut arcs = Vec::new();
    for tail in 0..=inst.n {
        let max_size = inst.capacity - inst.demand[tail];
        for head in 1..=inst.n {
            if head == tail {
                continue;
            }
            for size in 1..=max_size {
                arcs.push(MultiArc { tail, head, size });
            }
        }
    }
    arcs
}
