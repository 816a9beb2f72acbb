//! Experiment runner: resolves the instances of a manifest, runs the cut loop
//! on every (instance, formulation) cell and assembles a report whose row
//! order does not depend on scheduling.
//!
//! # CSV layout
//!
//! The first block has one row per cell, sorted by class, instance and
//! formulation (in [`FormulationKind`] declaration order):
//!
//! ```text
//! instance,class,formulation,opt,lp_value,lp_gap_pct,final_bound,gap_with_cuts_pct,gap_closed_pct,cuts_added,rounds,stop_reason
//! ```
//!
//! After an empty line comes one row per (class, formulation):
//!
//! ```text
//! class,formulation,instances,avg_lp_gap_pct,avg_gap_with_cuts_pct,avg_gap_closed_pct,avg_cuts_added,avg_rounds
//! ```
//!
//! Reals are printed with six decimals; a missing value (no OPT) is `NA`.
//! Averages skip missing values and are `NA` when every value is missing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{solve_mip, BnbStatus};
use crate::cutloop::{run_cut_loop, CutLoopConfig, RoundRecord, StopReason};
use crate::error::{Error, Result};
use crate::formulations::{build_formulation, BuildOptions, FormulationKind, ProblemInstance};
use crate::instances::{generate_fct, parse_cmst, CmstFormat, FctInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    /// OR-Library CMST layout; needs `capacity`.
    Orlib,
    /// Native CMST JSON.
    NativeJson,
    /// Serialized [`FctInstance`].
    FctJson,
    /// Any JSON instance: a tagged [`ProblemInstance`], an [`FctInstance`]
    /// or a native CMST instance, told apart by their fields.
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    Generated {
        n: usize,
        #[serde(rename = "B")]
        b: i64,
        #[serde(default = "default_r")]
        r: f64,
        seeds: Vec<u64>,
    },
    File {
        path: PathBuf,
        format: FileFormat,
        #[serde(default)]
        capacity: Option<i64>,
        /// Defaults to the file stem.
        #[serde(default)]
        name: Option<String>,
    },
}

fn default_r() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptSource {
    /// Exact OPT from branch-and-bound on the compact formulation (FCT for
    /// FCT instances, AvV for CMST). A node-limit hit leaves OPT missing.
    BranchBound {
        #[serde(default = "default_node_limit")]
        node_limit: usize,
    },
    /// Known values keyed by instance name; unlisted instances have no OPT.
    Supplied { values: BTreeMap<String, f64> },
}

fn default_node_limit() -> usize {
    1_000_000
}

impl Default for OptSource {
    fn default() -> Self {
        OptSource::BranchBound {
            node_limit: default_node_limit(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default)]
    pub name: String,
    pub instances: Vec<InstanceSpec>,
    pub kinds: Vec<FormulationKind>,
    #[serde(default)]
    pub cutloop: CutLoopConfig,
    #[serde(default)]
    pub opt: OptSource,
    #[serde(default)]
    pub build: BuildOptions,
    #[serde(default)]
    pub output: OutputPaths,
    /// Parallel cells; 0 uses every core.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

impl ExperimentManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolves every instance (reading files relative to `base_dir`) and
    /// checks that each kind applies to each instance.
    pub fn resolve(&self, base_dir: &Path) -> Result<Vec<ProblemInstance>> {
        if self.instances.is_empty() {
            return Err(Error::InvalidParameters("manifest lists no instances".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidParameters("manifest lists no formulation kinds".into()));
        }
        self.cutloop.validate()?;
        if let OptSource::BranchBound { node_limit: 0 } = self.opt {
            return Err(Error::InvalidParameters("opt.node_limit must be at least 1".into()));
        }
        let mut out = Vec::new();
        for spec in &self.instances {
            match spec {
                InstanceSpec::Generated { n, b, r, seeds } => {
                    if seeds.is_empty() {
                        return Err(Error::InvalidParameters("generated instances need at least one seed".into()));
                    }
                    for &seed in seeds {
                        out.push(ProblemInstance::Fct(generate_fct(*n, *b, *r, seed)?));
                    }
                }
                InstanceSpec::File { path, format, capacity, name } => {
                    out.push(load_instance(&base_dir.join(path), *format, *capacity, name.as_deref())?);
                }
            }
        }
        let mut names: Vec<&str> = out.iter().map(|i| i.name()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameters(format!("duplicate instance name {}", w[0])));
        }
        for inst in &out {
            for &kind in &self.kinds {
                if !inst.supports(kind) {
                    return Err(Error::KindMismatch {
                        kind: kind.name().to_string(),
                        instance: inst.class_name(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Reads an instance file; the name defaults to the file stem.
pub fn load_instance(
    path: &Path,
    format: FileFormat,
    capacity: Option<i64>,
    name: Option<&str>,
) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidParameters(format!("cannot read instance file {}: {e}", path.display()))
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    let mut inst = parse_instance(&text, format, capacity)?;
    let slot = match &mut inst {
        ProblemInstance::Fct(f) => &mut f.name,
        ProblemInstance::Cmst(c) => &mut c.name,
    };
    match name {
        Some(n) => *slot = n.to_string(),
        None if slot.is_empty() => *slot = stem,
        None => {}
    }
    Ok(inst)
}

fn json_value(text: &str) -> Result<serde_json::Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("instance JSON: {e}")))
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Parse(format!("instance JSON: {e}")))
}

/// Parses instance text. OR-Library instances come back unnamed.
pub fn parse_instance(text: &str, format: FileFormat, capacity: Option<i64>) -> Result<ProblemInstance> {
    match format {
        FileFormat::Orlib => Ok(ProblemInstance::Cmst(parse_cmst(text, CmstFormat::OrLib, capacity)?)),
        FileFormat::NativeJson => Ok(ProblemInstance::Cmst(parse_cmst(text, CmstFormat::NativeJson, capacity)?)),
        FileFormat::FctJson => {
            let f: FctInstance = from_value(json_value(text)?)?;
            f.validate()?;
            Ok(ProblemInstance::Fct(f))
        }
        FileFormat::Json => {
            let value = json_value(text)?;
            let inst = if value.get("problem").is_some() {
                from_value(value)?
            } else if value.get("n_suppliers").is_some() {
                ProblemInstance::Fct(from_value(value)?)
            } else {
                return parse_instance(text, FileFormat::NativeJson, capacity);
            };
            match inst {
                ProblemInstance::Fct(f) => {
                    f.validate()?;
                    Ok(ProblemInstance::Fct(f))
                }
                ProblemInstance::Cmst(mut c) => {
                    if let Some(cap) = capacity {
                        c.capacity = cap;
                    }
                    c.validate()?;
                    Ok(ProblemInstance::Cmst(c))
                }
            }
        }
    }
}

/// Aggregation class: `n{n}-B{B}` for generated FCT instances.
pub fn instance_class(inst: &ProblemInstance) -> String {
    match inst {
        ProblemInstance::Fct(f) => match &f.meta {
            Some(m) => format!("n{}-B{}", f.n_suppliers, m.b),
            None => format!("fct-n{}", f.n_suppliers),
        },
        ProblemInstance::Cmst(c) => format!("cmst-n{}-C{}", c.n, c.capacity),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub instance: String,
    pub class: String,
    pub formulation: FormulationKind,
    pub opt: Option<f64>,
    pub lp_value: f64,
    pub lp_gap_pct: Option<f64>,
    pub final_bound: f64,
    pub gap_with_cuts_pct: Option<f64>,
    pub gap_closed_pct: Option<f64>,
    pub cuts_added: usize,
    pub rounds: usize,
    pub stop_reason: StopReason,
    pub trajectory: Vec<RoundRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAverage {
    pub class: String,
    pub formulation: FormulationKind,
    pub instances: usize,
    pub avg_lp_gap_pct: Option<f64>,
    pub avg_gap_with_cuts_pct: Option<f64>,
    pub avg_gap_closed_pct: Option<f64>,
    pub avg_cuts_added: f64,
    pub avg_rounds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<ExperimentRow>,
    pub averages: Vec<ClassAverage>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Per-(class, formulation) averages of `rows`, in row order.
pub fn class_averages(rows: &[ExperimentRow]) -> Vec<ClassAverage> {
    let mut groups: Vec<((String, FormulationKind), Vec<&ExperimentRow>)> = Vec::new();
    for row in rows {
        let key = (row.class.clone(), row.formulation);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|((class, formulation), members)| ClassAverage {
            class,
            formulation,
            instances: members.len(),
            avg_lp_gap_pct: mean(members.iter().filter_map(|r| r.lp_gap_pct)),
            avg_gap_with_cuts_pct: mean(members.iter().filter_map(|r| r.gap_with_cuts_pct)),
            avg_gap_closed_pct: mean(members.iter().filter_map(|r| r.gap_closed_pct)),
            avg_cuts_added: mean(members.iter().map(|r| r.cuts_added as f64)).unwrap_or(0.0),
            avg_rounds: mean(members.iter().map(|r| r.rounds as f64)).unwrap_or(0.0),
        })
        .collect()
}

fn compute_opt(inst: &ProblemInstance, source: &OptSource) -> Result<Option<f64>> {
    match source {
        OptSource::Supplied { values } => Ok(values.get(inst.name()).copied()),
        OptSource::BranchBound { node_limit } => {
            let kind = match inst {
                ProblemInstance::Fct(_) => FormulationKind::Fct,
                ProblemInstance::Cmst(_) => FormulationKind::CmstAvV,
            };
            let (model, _) = build_formulation(inst, kind, BuildOptions::default())?;
            let r = solve_mip(&model, *node_limit, 1e-9)?;
            match r.status {
                BnbStatus::Optimal => Ok(Some(r.objective)),
                BnbStatus::NodeLimit => {
                    log::warn!("{}: node limit reached, OPT unavailable", inst.name());
                    Ok(None)
                }
                BnbStatus::Infeasible => Err(Error::InvalidInstance(format!("{} is infeasible", inst.name()))),
            }
        }
    }
}

/// Runs every cell of the manifest. Files are resolved against `base_dir`;
/// `jobs` overrides the manifest's setting when given.
pub fn run_experiment(manifest: &ExperimentManifest, base_dir: &Path, jobs: Option<usize>) -> Result<ExperimentReport> {
    let instances = manifest.resolve(base_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(manifest.jobs))
        .build()
        .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))?;
    pool.install(|| {
        let opts: Vec<Option<f64>> = instances
            .par_iter()
            .map(|inst| compute_opt(inst, &manifest.opt))
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, FormulationKind)> = (0..instances.len())
            .flat_map(|i| manifest.kinds.iter().map(move |&k| (i, k)))
            .collect();
        let mut rows: Vec<ExperimentRow> = cells
            .par_iter()
            .map(|&(i, kind)| {
                let inst = &instances[i];
                let (model, _) = build_formulation(inst, kind, manifest.build)?;
                let (rep, _, _) = run_cut_loop(&model, &manifest.cutloop, opts[i])?;
                log::info!(
                    "{} {kind}: {:.6} -> {:.6} ({} cuts, {} rounds)",
                    inst.name(),
                    rep.lp_value_initial,
                    rep.lp_value_final,
                    rep.cuts_added,
                    rep.rounds
                );
                Ok(ExperimentRow {
                    instance: inst.name().to_string(),
                    class: instance_class(inst),
                    formulation: kind,
                    opt: opts[i],
                    lp_value: rep.lp_value_initial,
                    lp_gap_pct: rep.lp_gap_pct,
                    final_bound: rep.lp_value_final,
                    gap_with_cuts_pct: rep.gap_with_cuts_pct,
                    gap_closed_pct: rep.gap_closed_pct,
                    cuts_added: rep.cuts_added,
                    rounds: rep.rounds,
                    stop_reason: rep.stop_reason,
                    trajectory: rep.trajectory,
                })
            })
            .collect::<Result<_>>()?;
        rows.sort_by(|a, b| (&a.class, &a.instance, a.formulation).cmp(&(&b.class, &b.instance, b.formulation)));
        let averages = class_averages(&rows);
        Ok(ExperimentReport {
            name: manifest.name.clone(),
            rows,
            averages,
        })
    })
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NA".into())
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "instance,class,formulation,opt,lp_value,lp_gap_pct,final_bound,gap_with_cuts_pct,gap_closed_pct,cuts_added,rounds,stop_reason";
pub const CSV_AVERAGE_HEADER: &str =
    "class,formulation,instances,avg_lp_gap_pct,avg_gap_with_cuts_pct,avg_gap_closed_pct,avg_cuts_added,avg_rounds";

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let stop = serde_json::to_value(r.stop_reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                field(&r.instance),
                field(&r.class),
                r.formulation.name(),
                opt_num(r.opt),
                num(r.lp_value),
                opt_num(r.lp_gap_pct),
                num(r.final_bound),
                opt_num(r.gap_with_cuts_pct),
                opt_num(r.gap_closed_pct),
                r.cuts_added,
                r.rounds,
                stop
            );
        }
        out.push('\n');
        out.push_str(CSV_AVERAGE_HEADER);
        out.push('\n');
        for a in &self.averages {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                field(&a.class),
                a.formulation.name(),
                a.instances,
                opt_num(a.avg_lp_gap_pct),
                opt_num(a.avg_gap_with_cuts_pct),
                opt_num(a.avg_gap_closed_pct),
                num(a.avg_cuts_added),
                num(a.avg_rounds)
            );
        }
        out
    }

    /// Writes the CSV and JSON outputs named in `paths`, relative to `base_dir`.
    pub fn write(&self, paths: &OutputPaths, base_dir: &Path) -> Result<()> {
        if let Some(p) = &paths.csv {
            write_file(&base_dir.join(p), &self.to_csv())?;
        }
        if let Some(p) = &paths.json {
            write_file(&base_dir.join(p), &serde_json::to_string_pretty(self)?)?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Runs the manifest and writes its outputs.
pub fn cmd_run(manifest: &ExperimentManifest, base_dir: &Path, jobs: Option<usize>) -> Result<ExperimentReport> {
    let report = run_experiment(manifest, base_dir, jobs)?;
    report.write(&manifest.output, base_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
kinds = ["fct", "fullb", "avv"]
instances = [{ source = "generated", n = 3, B = 3, seeds = [1, 2, 3] }]
[cutloop]
max_rounds = 5
"#;

    #[test]
    fn parses_manifest() {
        let m = ExperimentManifest::from_toml(SMALL).unwrap();
        assert_eq!(m.kinds.len(), 3);
        assert_eq!(m.cutloop.max_rounds, 5);
        assert_eq!(m.cutloop.max_cuts_per_round, 200);
        assert_eq!(m.opt, OptSource::default());
        assert!(ExperimentManifest::from_toml("kinds = [\"nope\"]\ninstances = []").is_err());
    }

    #[test]
    fn counts_rows_and_averages() {
        let m = ExperimentManifest::from_toml(SMALL).unwrap();
        let rep = run_experiment(&m, Path::new("."), None).unwrap();
        assert_eq!(rep.rows.len(), 9);
        assert_eq!(rep.averages.len(), 3);
        assert!(rep.averages.iter().all(|a| a.instances == 3));
        let again = class_averages(&rep.rows);
        assert_eq!(again, rep.averages);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + 9 + 1 + 1 + 3);
    }

    #[test]
    fn rejects_kind_mismatch_before_solving() {
        let text = r#"
kinds = ["cmst-avv"]
instances = [{ source = "generated", n = 3, B = 3, seeds = [1] }]
"#;
        let m = ExperimentManifest::from_toml(text).unwrap();
        assert!(matches!(m.resolve(Path::new(".")), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn missing_opt_is_na() {
        let text = r#"
kinds = ["avv"]
instances = [{ source = "generated", n = 2, B = 3, seeds = [4] }]
opt = { source = "supplied", values = {} }
"#;
        let m = ExperimentManifest::from_toml(text).unwrap();
        let rep = run_experiment(&m, Path::new("."), None).unwrap();
        assert_eq!(rep.rows[0].opt, None);
        let csv = rep.to_csv();
        let row = csv.lines().nth(1).unwrap();
        assert!(row.contains(",NA,"));
    }

    #[test]
    fn missing_file_is_an_error() {
        let text = r#"
kinds = ["cmst-avv"]
instances = [{ source = "file", path = "does/not/exist.txt", format = "orlib", capacity = 5 }]
"#;
        let m = ExperimentManifest::from_toml(text).unwrap();
        assert!(m.resolve(Path::new(".")).is_err());
    }
}
