//! Command-line front end: `run` executes an experiment configuration and
//! writes the report files, `list-families` prints the built-in map families.
//!
//! Exit status of `run`: 0 when every enabled check passes, 1 when a check
//! fails its tolerance, 2 for an unreadable or invalid configuration, 3 when
//! a pipeline stage fails or the report cannot be written.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, CHECKS};
use crate::maps::make_family;
use crate::report::VerificationReport;
use crate::verify::{run_checks, StageError};

#[derive(Debug, Parser)]
#[command(name = "glocal", version, about = "Global-local mixing experiments for AFN interval maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs the checks of an experiment configuration.
    Run(RunArgs),
    /// Lists the built-in map families and their parameters.
    ListFamilies,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (TOML).
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Comma-separated subset of eqY, eqJ, eqK, glocal; overrides `checks`.
    #[arg(long, value_delimiter = ',')]
    pub check: Option<Vec<String>>,
}

/// Failures of `run` that prevent a complete report.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
    #[error("cannot start the thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(_) | CliError::Output { .. } | CliError::Threads(_) => 3,
        }
    }
}

/// A finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: VerificationReport,
    pub dir: PathBuf,
    /// Files written to `dir`.
    pub files: Vec<String>,
    /// Contents of `summary.txt`.
    pub summary: String,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            1
        }
    }
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.display().to_string(), source }
}

/// Loads, validates and runs a configuration, then writes `report.json`,
/// one CSV per table and `summary.txt`.
pub fn run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    let bytes = fs::read(&args.config)
        .map_err(|source| ConfigError::Io { path: args.config.display().to_string(), source })?;
    let text = String::from_utf8_lossy(&bytes);
    let cfg = ExperimentConfig::from_toml(&text)?;
    let neutral = make_family(cfg.map.to_family()?).map_err(crate::config::map_error)?.alpha().is_some();
    let checks = match &args.check {
        Some(list) => {
            if let Some(bad) = list.iter().find(|c| !CHECKS.contains(&c.as_str())) {
                return Err(ConfigError::Invalid {
                    field: "--check".into(),
                    reason: format!("unknown check `{bad}`; expected one of {CHECKS:?}"),
                }
                .into());
            }
            list.clone()
        }
        None => cfg.enabled_checks(neutral),
    };

    let report = match args.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k as usize)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(|| run_checks(&cfg, &checks))?,
        None => run_checks(&cfg, &checks)?,
    };

    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir).map_err(output_error(&dir))?;
    let json = dir.join("report.json");
    report.write_json(&json).map_err(output_error(&json))?;
    let mut files = vec!["report.json".to_string()];
    files.extend(report.write_csvs(&dir).map_err(output_error(&dir))?);

    let summary = format!("{}{}", provenance(&args.config, &bytes, &cfg, &checks, &report), report.summary());
    let path = dir.join("summary.txt");
    fs::write(&path, &summary).map_err(output_error(&path))?;
    files.push("summary.txt".into());
    Ok(RunOutcome { report, dir, files, summary })
}

/// Header of `summary.txt`: version, config hash, map, depths and verdict.
fn provenance(path: &Path, bytes: &[u8], cfg: &ExperimentConfig, checks: &[String], report: &VerificationReport) -> String {
    let hash: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
    let d = &cfg.depths;
    let operator = match (d.operator, report.metadata.get("operator_depth")) {
        (Some(n), _) => n.to_string(),
        (None, Some(n)) => format!("auto ({n})"),
        (None, None) => "auto".into(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "# glocal {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# config: {}", path.display());
    let _ = writeln!(out, "# config sha256: {hash}");
    let _ = writeln!(
        out,
        "# map: {} (alpha {})",
        cfg.map.family,
        report.metadata.get("alpha").map_or("none", String::as_str)
    );
    let _ = writeln!(
        out,
        "# depths: tail={} ulam_cells={} tau_cap={} operator={operator} subcells={} entry_depth={} n_max={}",
        d.tail, d.ulam_cells, d.tau_cap, d.subcells, d.entry_depth, d.n_max
    );
    let _ = writeln!(out, "# checks: {}", checks.join(","));
    let _ = writeln!(out, "# result: {}", if report.passed() { "PASS" } else { "FAIL" });
    out
}

/// One row of [`list_families`].
struct FamilyRow {
    name: &'static str,
    parameters: &'static str,
    alpha: &'static str,
    notes: &'static str,
}

const FAMILIES: [FamilyRow; 9] = [
    FamilyRow {
        name: "lsv",
        parameters: "alpha",
        alpha: "(0, 1]",
        notes: "x(1 + 2^{1/α} x^{1/α}) on [0, 1/2], 2x - 1 on [1/2, 1]; Y = [1/2, 1]",
    },
    FamilyRow {
        name: "lsv2",
        parameters: "alpha, b, eta, [c, kappa]",
        alpha: "(0, 1]",
        notes: "neutral branch x + b x^{1+1/α} (+ c x^{1+κ}) onto [0, eta], then one linear branch",
    },
    FamilyRow {
        name: "qbranch",
        parameters: "alpha, q, [b = 2^{1/α}], [eta], [cuts]",
        alpha: "(0, 1]",
        notes: "neutral branch followed by q linear branches (equal spacing unless cuts given)",
    },
    FamilyRow {
        name: "qbranch_linear",
        parameters: "cuts or q",
        alpha: "none",
        notes: "uniformly expanding full-branch map; Lebesgue invariant; classical mixing control",
    },
    FamilyRow {
        name: "pm_mod1",
        parameters: "alpha, b",
        alpha: "(0, 1]",
        notes: "x + b x^{1+1/α} mod 1; number of branches ⌈b⌉ expanding plus the neutral one",
    },
    FamilyRow {
        name: "farey",
        parameters: "none",
        alpha: "α=1 fixed",
        notes: "x/(1-x) on [0, 1/2], (1-x)/x on [1/2, 1]; neutral fixed point at 0",
    },
    FamilyRow {
        name: "two_sided",
        parameters: "alpha, [b = 2^{1/α}]",
        alpha: "(0, 1]",
        notes: "neutral fixed points at 0 and 1",
    },
    FamilyRow {
        name: "thaler_d",
        parameters: "alpha, cuts",
        alpha: "(0, 1]",
        notes: "d = len(cuts) + 1 full branches, each with a neutral fixed point",
    },
    FamilyRow {
        name: "custom",
        parameters: "eta, branches",
        alpha: "from branches",
        notes: "user-supplied branch table on [0, eta]",
    },
];

/// Text table of the built-in families.
pub fn list_families() -> String {
    let width = |f: fn(&FamilyRow) -> &str, head: &str| {
        FAMILIES.iter().map(|r| f(r).chars().count()).chain([head.chars().count()]).max().unwrap_or(0)
    };
    let w0 = width(|r| r.name, "family");
    let w1 = width(|r| r.parameters, "parameters");
    let w2 = width(|r| r.alpha, "alpha");
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut out = String::new();
    let _ = writeln!(out, "{}  {}  {}  notes", pad("family", w0), pad("parameters", w1), pad("alpha", w2));
    for r in &FAMILIES {
        let _ = writeln!(out, "{}  {}  {}  {}", pad(r.name, w0), pad(r.parameters, w1), pad(r.alpha, w2), r.notes);
    }
    out
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::ListFamilies => {
            print!("{}", list_families());
            0
        }
        Command::Run(args) => match run(&args) {
            Ok(outcome) => {
                print!("{}", outcome.summary);
                println!("wrote {} files to {}", outcome.files.len(), outcome.dir.display());
                outcome.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    }
}
