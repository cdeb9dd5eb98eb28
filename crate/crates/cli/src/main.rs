//! Scenario runner for Neumann problems on multijunction structures.

mod diagnostic;
mod output;

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multijunction::mesh::{BuiltinGeometry, Coupling};
use multijunction::scenario::{
    run_convergence, run_kernel, run_relax, run_solve, OutputFormat, ScenarioConfig,
};
use multijunction::tensor::RelaxationMode;
use multijunction::{Error, Result};

#[derive(Parser)]
#[command(name = "multijunction", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at every level; write solution, gradient, report and trace files.
    Solve(Common),
    /// Refinement study with oracle errors, energies, traces and Poincare constants.
    Convergence(Common),
    /// Components of the kernel with their measures.
    Kernel(Common),
    /// Per-element relaxed tensors and the projected/Schur disagreement.
    RelaxTensor(Common),
    /// Poincare constants per component and level.
    Poincare(Common),
}

#[derive(Args)]
struct Common {
    /// Built-in geometry.
    #[arg(long, value_parser = parse_geometry)]
    geometry: Option<BuiltinGeometry>,
    /// Scenario file (JSON); flags given on the command line take precedence.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// `N` (the default first level up to N), `A..B` or a list `A,B,C`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Relative residual tolerance of the solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative tolerance of the compatibility check.
    #[arg(long)]
    compat_tol: Option<f64>,
    /// Seed of the random initial iterate.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Projected,
    Schur,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Auto,
    Coupled,
    Decoupled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_geometry(s: &str) -> std::result::Result<BuiltinGeometry, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_levels(spec: &str, default_first: usize) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse levels `{spec}`"));
    let number = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let levels: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        (number(a)?..=number(b)?).collect()
    } else if spec.contains(',') {
        spec.split(',').map(number).collect::<Result<_>>()?
    } else {
        let n = number(spec)?;
        (default_first.min(n)..=n).collect()
    };
    if levels.is_empty() || levels.contains(&0) {
        return Err(bad());
    }
    Ok(levels)
}

fn config(args: &Common) -> Result<ScenarioConfig> {
    let mut config = match (&args.scenario, args.geometry) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read scenario {}: {e}", path.display()))
            })?;
            let mut c = ScenarioConfig::from_json(&text)?;
            if let Some(g) = args.geometry {
                c.geometry = multijunction::scenario::GeometrySpec::Builtin(g);
            }
            c
        }
        (None, Some(g)) => ScenarioConfig::builtin(g),
        (None, None) => {
            return Err(Error::Config(
                "either --geometry or --scenario is required".into(),
            ))
        }
    };
    if let Some(spec) = &args.levels {
        let first = config.levels.iter().copied().min().unwrap_or(1);
        config.levels = parse_levels(spec, first)?;
    }
    if let Some(m) = args.mode {
        config.mode = match m {
            Mode::Projected => RelaxationMode::Projected,
            Mode::Schur => RelaxationMode::Schur,
        };
    }
    if let Some(c) = args.coupling {
        config.coupling = Some(match c {
            CouplingArg::Auto => Coupling::Auto,
            CouplingArg::Coupled => Coupling::Coupled,
            CouplingArg::Decoupled => Coupling::Decoupled,
        });
    }
    if let Some(t) = args.tol {
        config.tol = t;
    }
    if let Some(t) = args.compat_tol {
        config.compat_tol = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = &args.out {
        config.output = Some(o.clone());
    }
    if let Some(f) = args.format {
        config.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    config.validate()?;
    Ok(config)
}

/// Writes a table as CSV or a serializable value as JSON, to `name` under the
/// output directory or to stdout.
fn emit<T: serde::Serialize + ?Sized>(
    config: &ScenarioConfig,
    name: &str,
    table: (Vec<String>, Vec<Vec<String>>),
    value: &T,
) -> Result<()> {
    let json = config.format == OutputFormat::Json;
    let sink: Box<dyn Write> = match &config.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let ext = if json { "json" } else { "csv" };
            Box::new(File::create(dir.join(format!("{name}.{ext}")))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    if json {
        output::write_json(sink, value)
    } else {
        output::write_csv(sink, &table.0, &table.1)
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Solve(args) => {
            let config = config(args)?;
            let results = run_solve(&config)?;
            if let Some(dir) = &config.output {
                for r in &results {
                    output::write_level_files(dir, r, config.format == OutputFormat::Json)?;
                }
            }
            let reports: Vec<_> = results.iter().map(|r| r.report()).collect();
            emit(&config, "summary", output::summary_table(&results), &reports)
        }
        Command::Convergence(args) => {
            let config = config(args)?;
            let table = run_convergence(&config)?;
            emit(&config, "convergence", output::convergence_table(&table), &table)
        }
        Command::Kernel(args) => {
            let config = config(args)?;
            let rows = run_kernel(&config, false)?;
            emit(&config, "kernel", output::kernel_table(&rows), &rows)
        }
        Command::RelaxTensor(args) => {
            let config = config(args)?;
            let rows = run_relax(&config)?;
            emit(&config, "relaxed_tensor", output::tensor_table(&rows), &rows)
        }
        Command::Poincare(args) => {
            let config = config(args)?;
            let rows = run_kernel(&config, true)?;
            emit(&config, "poincare", output::poincare_table(&rows), &rows)
        }
    }
}

fn broken_pipe(e: &Error) -> bool {
    match e {
        Error::Io(io) => io.kind() == io::ErrorKind::BrokenPipe,
        Error::Json(j) => j.io_error_kind() == Some(io::ErrorKind::BrokenPipe),
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let diag = serde_json::json!({
                "error": "arguments",
                "message": e.to_string().trim_end(),
                "exit_code": diagnostic::EXIT_CONFIG,
                "details": {},
            });
            eprintln!("{diag}");
            return ExitCode::from(diagnostic::EXIT_CONFIG as u8);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = diagnostic::diagnostic(&e);
            eprintln!("{diag}");
            ExitCode::from(diagnostic::exit_code(&e) as u8)
        }
    }
}
