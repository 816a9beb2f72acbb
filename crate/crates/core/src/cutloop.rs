//! Rank-1 cutting-plane loop: rounds of separation from the original rows,
//! each followed by a dual-simplex reoptimization.

use serde::{Deserialize, Serialize};

use crate::cuts::{gmi_from_solver, separate_formulation_cuts, ComplementMode, Cut, CutPool, SeparationOptions};
use crate::error::{Error, Result};
use crate::lp::{LpResult, LpStatus, SimplexOptions, SimplexSolver};
use crate::model::{fractionality, MipModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutLoopConfig {
    pub max_rounds: usize,
    pub cut_violation_tol: f64,
    pub max_cuts_per_round: usize,
    pub gmi_first_round: bool,
    pub complement_mode: ComplementMode,
    pub complement_continuous: bool,
    pub stall_rounds: usize,
    pub stall_tol: f64,
    pub max_bases_per_row: usize,
    pub int_tol: f64,
}

impl Default for CutLoopConfig {
    fn default() -> Self {
        CutLoopConfig {
            max_rounds: 50,
            cut_violation_tol: 1e-6,
            max_cuts_per_round: 200,
            gmi_first_round: false,
            complement_mode: ComplementMode::Complement,
            complement_continuous: true,
            stall_rounds: 3,
            stall_tol: 1e-9,
            max_bases_per_row: 4,
            int_tol: 1e-6,
        }
    }
}

impl CutLoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameters(format!("{what} must be positive")));
        if self.max_rounds == 0 {
            return bad("max_rounds");
        }
        if self.max_cuts_per_round == 0 {
            return bad("max_cuts_per_round");
        }
        if self.stall_rounds == 0 {
            return bad("stall_rounds");
        }
        if self.max_bases_per_row == 0 {
            return bad("max_bases_per_row");
        }
        if !(self.cut_violation_tol > 0.0) || !(self.stall_tol > 0.0) || !(self.int_tol > 0.0) {
            return bad("tolerances");
        }
        Ok(())
    }

    fn separation(&self) -> SeparationOptions {
        SeparationOptions {
            int_tol: self.int_tol,
            violation_tol: self.cut_violation_tol,
            complement_continuous: self.complement_continuous,
            max_bases_per_row: self.max_bases_per_row,
            ..SeparationOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Integral,
    NoViolatedCuts,
    MaxRounds,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub bound: f64,
    pub cuts_added: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutLoopReport {
    pub model: String,
    pub lp_value_initial: f64,
    pub lp_value_final: f64,
    pub rounds: usize,
    pub cuts_added: usize,
    pub stop_reason: StopReason,
    /// Round 0 is the initial relaxation.
    pub trajectory: Vec<RoundRecord>,
    pub opt: Option<f64>,
    pub lp_gap_pct: Option<f64>,
    pub gap_with_cuts_pct: Option<f64>,
    pub gap_closed_pct: Option<f64>,
}

impl CutLoopReport {
    /// Largest decrease between consecutive bounds (zero when monotone).
    pub fn max_bound_decrease(&self) -> f64 {
        self.trajectory
            .windows(2)
            .map(|w| w[0].bound - w[1].bound)
            .fold(0.0, f64::max)
    }
}

/// `100 (opt - bound) / opt`, undefined for `opt = 0`.
pub fn gap_percent(opt: f64, bound: f64) -> Option<f64> {
    if opt == 0.0 {
        None
    } else {
        Some(100.0 * (opt - bound) / opt)
    }
}

/// Share of the initial gap closed by the final bound, in percent.
pub fn gap_closed_percent(opt: f64, initial: f64, final_bound: f64) -> Option<f64> {
    let gap = opt - initial;
    if gap.abs() <= 1e-9 * opt.abs().max(1.0) {
        None
    } else {
        Some(100.0 * (final_bound - initial) / gap)
    }
}

fn lp_failure(status: LpStatus, after_cuts: bool) -> Error {
    match (status, after_cuts) {
        (LpStatus::Infeasible, true) => Error::InvalidCutDetected,
        (s, _) => Error::InvalidModel(format!("LP relaxation is {s:?}")),
    }
}

pub fn run_cut_loop(
    model: &MipModel,
    config: &CutLoopConfig,
    opt_value: Option<f64>,
) -> Result<(CutLoopReport, CutPool, LpResult)> {
    config.validate()?;
    let sep = config.separation();
    let mut solver = SimplexSolver::new(model, SimplexOptions::default())?;
    let status = solver.solve()?;
    if status != LpStatus::Optimal {
        return Err(lp_failure(status, false));
    }
    let original_rows = model.num_rows();
    let int_vars: Vec<usize> = model.integer_vars().collect();
    let initial = solver.result()?.objective;
    let mut bound = initial;
    let mut trajectory = vec![RoundRecord { round: 0, bound, cuts_added: 0 }];
    let mut pool = CutPool::new();
    let mut rounds = 0;
    let mut stalled = 0;
    let stop = loop {
        if rounds >= config.max_rounds {
            break StopReason::MaxRounds;
        }
        let x = solver.values().to_vec();
        if int_vars.iter().all(|&j| fractionality(x[j]) <= config.int_tol) {
            break StopReason::Integral;
        }
        let round = rounds + 1;
        let mut found: Vec<(Cut, f64)> = if round == 1 && config.gmi_first_round {
            gmi_from_solver(&mut solver, model, &sep)?
                .into_iter()
                .map(|c| {
                    let v = c.violation(&x);
                    (c, v)
                })
                .collect()
        } else {
            separate_formulation_cuts(model, 0..original_rows, &x, config.complement_mode, &sep)
        };
        found.retain(|(c, v)| *v >= config.cut_violation_tol && !pool.contains(c));
        let mut scored: Vec<(f64, usize)> = found
            .iter()
            .enumerate()
            .map(|(k, (c, _))| (c.normalized_violation(&x), k))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut rows = Vec::new();
        for (_, k) in scored {
            if rows.len() >= config.max_cuts_per_round {
                break;
            }
            let (cut, v) = &found[k];
            if pool.insert(cut.clone(), round, *v) {
                rows.push(cut.to_constraint(format!("cut({})", pool.len() - 1)));
            }
        }
        if rows.is_empty() {
            break StopReason::NoViolatedCuts;
        }
        rounds = round;
        solver.add_rows(&rows)?;
        let status = solver.solve()?;
        if status != LpStatus::Optimal {
            return Err(lp_failure(status, true));
        }
        let next = solver.result()?.objective;
        log::debug!("{} round {round}: {} cuts, bound {next}", model.name, rows.len());
        trajectory.push(RoundRecord { round, bound: next, cuts_added: rows.len() });
        if next - bound < config.stall_tol * bound.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        bound = next;
        if stalled >= config.stall_rounds {
            break StopReason::Stalled;
        }
    };
    let result = solver.result()?;
    let report = CutLoopReport {
        model: model.name.clone(),
        lp_value_initial: initial,
        lp_value_final: result.objective,
        rounds,
        cuts_added: pool.len(),
        stop_reason: stop,
        trajectory,
        opt: opt_value,
        lp_gap_pct: opt_value.and_then(|o| gap_percent(o, initial)),
        gap_with_cuts_pct: opt_value.and_then(|o| gap_percent(o, result.objective)),
        gap_closed_pct: opt_value.and_then(|o| gap_closed_percent(o, initial, result.objective)),
    };
    Ok((report, pool, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearExpr, Sense, VarKind};

    fn fixture_f1() -> MipModel {
        let mut m = MipModel::new("f1");
        let x = m.add_binary("x", "x");
        let y = m.add_binary("y", "y");
        m.add_constraint(LinearExpr::from_terms([(x, 2.0), (y, 2.0)]), Sense::Le, 3.0, "knap");
        m.set_objective(LinearExpr::from_terms([(x, -1.0), (y, -1.0)]));
        m
    }

    #[test]
    fn gap_examples() {
        assert!((gap_percent(100.0, 86.23).unwrap() - 13.77).abs() < 1e-9);
        assert_eq!(gap_percent(7.0, 7.0), Some(0.0));
        assert_eq!(gap_percent(50.0, 49.0), Some(2.0));
        assert_eq!(gap_percent(0.0, -1.0), None);
    }

    #[test]
    fn integral_relaxation_needs_no_rounds() {
        let mut m = MipModel::new("int");
        let x = m.add_var("x", 0.0, 4.0, VarKind::Integer, "x");
        m.add_constraint(LinearExpr::from_terms([(x, 1.0)]), Sense::Ge, 2.0, "lb");
        m.set_objective(LinearExpr::from_terms([(x, 1.0)]));
        let (rep, pool, _) = run_cut_loop(&m, &CutLoopConfig::default(), None).unwrap();
        assert_eq!(rep.rounds, 0);
        assert_eq!(rep.stop_reason, StopReason::Integral);
        assert_eq!(rep.lp_value_final, rep.lp_value_initial);
        assert!(pool.is_empty());
    }

    #[test]
    fn fixture_f1_closes() {
        for gmi in [false, true] {
            let cfg = CutLoopConfig { gmi_first_round: gmi, ..Default::default() };
            let (rep, pool, res) = run_cut_loop(&fixture_f1(), &cfg, Some(-1.0)).unwrap();
            assert!((rep.lp_value_initial + 1.5).abs() < 1e-9);
            assert!((rep.lp_value_final + 1.0).abs() < 1e-9, "gmi={gmi}: {rep:?}");
            assert!(rep.rounds >= 1);
            assert!(!pool.is_empty());
            assert!((res.objective + 1.0).abs() < 1e-9);
            assert!((rep.gap_with_cuts_pct.unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = CutLoopConfig { max_rounds: 0, ..Default::default() };
        assert!(run_cut_loop(&fixture_f1(), &cfg, None).is_err());
    }
}
