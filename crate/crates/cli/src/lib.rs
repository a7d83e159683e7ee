//! Command-line front end: figure data, parameter curves, oracle QFIs and
//! verification suites, all written as CSV.

pub mod commands;
pub mod config;
pub mod table;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_curve, cmd_figures, cmd_oracle_qfi, OracleRequest, ProbeKind, DEFAULT_FIGURE_GRID};
use config::{resolve_budget, CliError, CliResult, Grid, ParamArgs, RunConfig, ScenarioKind, EXIT_OK, EXIT_USAGE};
use table::Table;
use verify::{report, run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "pcsense", version, about = "QFI bounds for phase-covariant bosonic channel sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-mode bound, TMSV and classical QFI over a parameter grid.
    Curve(CurveArgs),
    /// Figure presets, one CSV per panel.
    Figures(FigureArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Brute-force Fock-space QFI beside the closed form and the bound.
    OracleQfi(OracleArgs),
}

#[derive(Debug, Args)]
pub struct ParamFlags {
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// start:stop:count
    #[arg(long)]
    pub grid: Option<Grid>,
}

impl ParamFlags {
    fn params(&self) -> ParamArgs {
        ParamArgs {
            kappa: self.kappa,
            gamma: self.gamma,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioKind,
    #[command(flatten)]
    pub params: ParamFlags,
    /// Background brightness N_B (loss scenarios).
    #[arg(long)]
    pub nb: Option<f64>,
    /// Total mean photon number N.
    #[arg(long)]
    pub n: Option<f64>,
    /// Number of signal modes M (may be fractional).
    #[arg(long)]
    pub m: f64,
    /// Per-mode brightness N_S = N/M.
    #[arg(long)]
    pub ns: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(3..=5))]
    pub fig: u8,
    #[arg(long)]
    pub grid: Option<Grid>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Replace every deviation tolerance of the suite.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 20240917)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// tmsv, coherent, vacuum or fock:<n-list>
    #[arg(long)]
    pub probe: ProbeKind,
    #[arg(long, value_enum)]
    pub scenario: ScenarioKind,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Per-mode brightness of tmsv and coherent probes.
    #[arg(long, default_value_t = 0.0)]
    pub ns: f64,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Fock cutoff of tmsv and coherent probes; chosen from the tail when absent.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Estimate (kappa, nb) jointly.
    #[arg(long)]
    pub joint: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit(table: &Table, out: Option<&PathBuf>, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => table.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))?,
        None => table.write_to(stdout)?,
    }
    Ok(())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Curve(a) => {
            let scenario = a.scenario.resolve(a.nb)?;
            let cfg = RunConfig {
                subcommand: "curve",
                scenario,
                thetas: a.params.params().resolve(scenario)?,
                budget: resolve_budget(a.n, a.m, a.ns)?,
                cutoff: None,
                tol: None,
                out: a.out,
            };
            emit(&cmd_curve(&cfg)?, cfg.out.as_ref(), stdout)
        }
        Command::Figures(a) => {
            for path in cmd_figures(a.fig, a.grid.unwrap_or(DEFAULT_FIGURE_GRID), &a.out)? {
                writeln!(stdout, "{}", path.display())?;
            }
            Ok(())
        }
        Command::Verify(a) => {
            let checks = run_suite(a.suite, a.tol, a.seed)?;
            emit(&report(a.suite, a.seed, &checks), a.out.as_ref(), stdout)?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Verification(failed.join(", ")))
            }
        }
        Command::OracleQfi(a) => {
            let scenario = a.scenario.resolve(a.nb)?;
            let params = ParamArgs {
                kappa: a.kappa,
                gamma: a.gamma,
                grid: None,
            };
            let theta = params.resolve(scenario)?[0];
            let req = OracleRequest {
                probe: a.probe,
                scenario,
                theta,
                modes: a.m,
                ns: a.ns,
                cutoff: a.cutoff,
                joint: a.joint,
            };
            emit(&cmd_oracle_qfi(&req)?, a.out.as_ref(), stdout)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "pcsense: {e}");
            e.exit_code()
        }
    }
}
