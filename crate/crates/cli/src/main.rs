use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bincut::bnb::{solve_mip_with, BnbOptions};
use bincut::cuts::{validate_cut, ComplementMode, CutDump, CutValidity};
use bincut::cutloop::{run_cut_loop, CutLoopConfig};
use bincut::experiment::{cmd_run, load_instance, run_experiment, ExperimentManifest, FileFormat, OutputPaths};
use bincut::formulations::{build_formulation, BuildOptions, FormulationKind, ProblemInstance};
use bincut::instances::generate_fct;
use bincut::lp_format::{parse_lp, write_lp};
use bincut::model::MipModel;
use bincut::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bincut", version, about = "Binarized integer programs: formulations, LP bounds and rank-1 cuts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random FCT instance as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long = "B")]
        b: i64,
        #[arg(long, default_value_t = 0.95)]
        r: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert an instance file to the native JSON format.
    Ingest {
        #[command(flatten)]
        source: InstanceArgs,
        /// Instance name (defaults to the file stem).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a formulation and export it as LP text, optionally with its variable map.
    Build {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long)]
        kind: FormulationKind,
        /// Build AvV-z without restoring the x-space flow rows.
        #[arg(long)]
        literal_minus_z: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        varmap: Option<PathBuf>,
    },
    /// Run the cutting-plane loop on one formulation.
    Cutplane {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long)]
        kind: FormulationKind,
        #[command(flatten)]
        loop_args: LoopArgs,
        /// Cut-loop configuration file (TOML); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Known optimal value for the gap columns.
        #[arg(long)]
        opt: Option<f64>,
        /// Report JSON path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the generated cuts as a cut dump.
        #[arg(long)]
        cuts: Option<PathBuf>,
    },
    /// Solve a formulation (or an LP file) by branch-and-bound.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1_000_000)]
        node_limit: usize,
        #[arg(long, default_value_t = 1e-9)]
        gap_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every cut of a dump with the enumeration oracle.
    ValidateCuts {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        cuts: PathBuf,
        /// Largest number of integer assignments to enumerate per cut.
        #[arg(long, default_value_t = 1_000_000)]
        limit: u64,
    },
    /// Run an experiment manifest and write its CSV and JSON reports.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        loop_args: LoopArgs,
        /// Output directory for report.csv and report.json, replacing the
        /// manifest's output paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file.
    #[arg(long, conflicts_with_all = ["n", "seed"])]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    /// CMST capacity (required for OR-Library files).
    #[arg(long)]
    capacity: Option<i64>,
    /// Generate an FCT instance instead of reading one.
    #[arg(long, requires_all = ["b", "seed"])]
    n: Option<usize>,
    #[arg(long = "B")]
    b: Option<i64>,
    #[arg(long, default_value_t = 0.95)]
    r: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    /// LP file to read instead of building a formulation.
    #[arg(long, conflicts_with_all = ["instance", "n", "kind"])]
    model: Option<PathBuf>,
    #[command(flatten)]
    source: InstanceArgs,
    #[arg(long)]
    kind: Option<FormulationKind>,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    gmi_first: bool,
    #[arg(long)]
    complement_mode: Option<ComplementMode>,
}

impl LoopArgs {
    fn apply(&self, config: &mut CutLoopConfig) {
        if let Some(r) = self.rounds {
            config.max_rounds = r;
        }
        if self.gmi_first {
            config.gmi_first_round = true;
        }
        if let Some(m) = self.complement_mode {
            config.complement_mode = m;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// JSON by extension, otherwise OR-Library.
    Auto,
    Orlib,
    NativeJson,
    Json,
}

impl InstanceArgs {
    fn load(&self, name: Option<&str>) -> anyhow::Result<ProblemInstance> {
        match (&self.instance, self.n) {
            (Some(path), _) => {
                let format = match self.format {
                    Format::Orlib => FileFormat::Orlib,
                    Format::NativeJson => FileFormat::NativeJson,
                    Format::Json => FileFormat::Json,
                    Format::Auto if path.extension().is_some_and(|e| e == "json") => FileFormat::Json,
                    Format::Auto => FileFormat::Orlib,
                };
                Ok(load_instance(path, format, self.capacity, name)?)
            }
            (None, Some(n)) => {
                let b = self.b.ok_or_else(|| Error::InvalidParameters("--B is required with --n".into()))?;
                let seed = self.seed.ok_or_else(|| Error::InvalidParameters("--seed is required with --n".into()))?;
                Ok(ProblemInstance::Fct(generate_fct(n, b, self.r, seed)?))
            }
            (None, None) => Err(Error::InvalidParameters("give --instance or --n/--B/--seed".into()).into()),
        }
    }
}

impl ModelArgs {
    fn load(&self) -> anyhow::Result<MipModel> {
        if let Some(path) = &self.model {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(parse_lp(&text)?);
        }
        let kind = self
            .kind
            .ok_or_else(|| Error::InvalidParameters("--kind is required unless --model is given".into()))?;
        let inst = self.source.load(None)?;
        Ok(build_formulation(&inst, kind, BuildOptions::default())?.0)
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// Exit status for a failure: 3 for numerical trouble, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numerical(_) | Error::InvalidCutDetected) => 3,
        _ if err.downcast_ref::<InvalidCuts>().is_some() => 3,
        _ => 2,
    }
}

#[derive(Debug)]
struct InvalidCuts(usize);

impl std::fmt::Display for InvalidCuts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cut(s) are violated by an integer-feasible point", self.0)
    }
}

impl std::error::Error for InvalidCuts {}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { n, b, r, seed, out } => {
            let inst = ProblemInstance::Fct(generate_fct(n, b, r, seed)?);
            emit(out.as_deref(), &serde_json::to_string_pretty(&inst)?)
        }
        Command::Ingest { source, name, out } => {
            let inst = source.load(name.as_deref())?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&inst)?)
        }
        Command::Build {
            source,
            kind,
            literal_minus_z,
            out,
            varmap,
        } => {
            let inst = source.load(None)?;
            let (model, map) = build_formulation(&inst, kind, BuildOptions { literal_minus_z })?;
            emit(out.as_deref(), &write_lp(&model))?;
            if let Some(p) = varmap {
                emit(Some(&p), &serde_json::to_string_pretty(&map)?)?;
            }
            Ok(())
        }
        Command::Cutplane {
            source,
            kind,
            loop_args,
            config,
            opt,
            out,
            cuts,
        } => {
            let mut cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))?
                }
                None => CutLoopConfig::default(),
            };
            loop_args.apply(&mut cfg);
            let inst = source.load(None)?;
            let (model, _) = build_formulation(&inst, kind, BuildOptions::default())?;
            let (report, pool, _) = run_cut_loop(&model, &cfg, opt)?;
            if let Some(p) = cuts {
                let all: Vec<_> = pool.cuts().iter().map(|p| p.cut.clone()).collect();
                let dump = CutDump::new(&model, &all);
                emit(Some(&p), &serde_json::to_string_pretty(&dump)?)?;
            }
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
        Command::Solve {
            model,
            node_limit,
            gap_tol,
            out,
        } => {
            let model = model.load()?;
            let r = solve_mip_with(
                &model,
                BnbOptions {
                    node_limit,
                    gap_tol,
                    ..Default::default()
                },
            )?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&r)?)
        }
        Command::ValidateCuts { model, cuts, limit } => {
            let model = model.load()?;
            let text = std::fs::read_to_string(&cuts).with_context(|| format!("reading {}", cuts.display()))?;
            let dump: CutDump = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("cut dump: {e}")))?;
            let mut invalid = 0;
            for (k, cut) in dump.to_cuts(&model)?.iter().enumerate() {
                let verdict = match validate_cut(cut, &model, limit)? {
                    CutValidity::Valid => "valid".to_string(),
                    CutValidity::Skipped { combinations } => format!("skipped ({combinations:.3e} assignments)"),
                    CutValidity::ViolatedBy { solution } => {
                        invalid += 1;
                        format!("VIOLATED by a point with objective {}", solution.objective)
                    }
                };
                println!("cut {k}: {verdict}");
            }
            if invalid > 0 {
                return Err(InvalidCuts(invalid).into());
            }
            Ok(())
        }
        Command::Run {
            manifest,
            jobs,
            loop_args,
            out,
        } => {
            let mut m = ExperimentManifest::load(&manifest)?;
            loop_args.apply(&mut m.cutloop);
            let base = manifest.parent().unwrap_or(Path::new("."));
            let cwd = std::env::current_dir()?;
            let report = match out {
                Some(dir) => {
                    m.output = OutputPaths {
                        csv: Some(dir.join("report.csv")),
                        json: Some(dir.join("report.json")),
                    };
                    let report = run_experiment(&m, base, jobs)?;
                    report.write(&m.output, &cwd)?;
                    report
                }
                None if m.output.csv.is_none() && m.output.json.is_none() => {
                    let report = run_experiment(&m, base, jobs)?;
                    emit(None, &report.to_csv())?;
                    return Ok(());
                }
                None => cmd_run(&m, base, jobs)?,
            };
            log::info!("{} rows, {} class averages", report.rows.len(), report.averages.len());
            Ok(())
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
