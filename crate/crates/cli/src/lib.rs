//! Command line front end for the Landau–de Gennes solvers: configuration
//! files, single solves, elastic-constant sweeps, field analysis and export.

pub mod config;
pub mod error;
pub mod export;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ldg_core::asymptotics;
use ldg_core::solve;

use crate::config::{parse_config, Format, RunConfig};
use crate::error::{CliError, Result};
use crate::export::Stamp;
use crate::report::Report;

#[derive(Debug, Parser)]
#[command(name = "ldg", version, about = "Landau–de Gennes Q-tensor minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for the field kernels.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides `[solver] seed`.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    /// Comma-separated subset of json, csv, vtk.
    #[arg(long, global = true, value_name = "F")]
    format: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the energy at the configured `L`.
    Solve,
    /// Minimize along the configured sequence of `L` and report the rates.
    Sweep,
    /// Summarize a field stored as CSV.
    Analyze {
        #[arg(value_name = "FIELD_CSV")]
        field: PathBuf,
    },
    /// Convert a CSV field to VTK (or rewrite it as CSV).
    Export {
        #[arg(value_name = "FIELD_CSV")]
        field: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("error[usage]: {}", e.render().to_string().trim_end());
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let work = || match &cli.command {
        Command::Solve => cmd_solve(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Analyze { field } => cmd_analyze(cli, field),
        Command::Export { field } => cmd_export(cli, field),
    };
    match cli.threads {
        None => work(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(work),
    }
}

/// The configuration with command-line overrides applied, plus its stamp.
fn load_config(cli: &Cli) -> Result<(RunConfig, Stamp)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let text = export::read_file(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
    }
    if let Some(f) = &cli.format {
        cfg.output.formats = parse_formats(f)?;
    }
    Ok((cfg, Stamp::new(report::sha256_hex(text.as_bytes()))))
}

fn parse_formats(s: &str) -> Result<Vec<Format>> {
    Format::parse_list(s).ok_or_else(|| CliError::Usage(format!("unknown format list `{s}`")))
}

/// Routes progress messages to stderr at the configured verbosity. Only the
/// first call in a process installs the logger.
fn init_logging(cfg: &RunConfig) {
    let level = match cfg.output.verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
    log::set_max_level(level);
}

fn cmd_solve(cli: &Cli) -> Result<()> {
    let (cfg, stamp) = load_config(cli)?;
    init_logging(&cfg);
    let grid = cfg.grid.grid()?;
    let p = cfg.material.params()?;
    cfg.solver.validate()?;
    let boundary = cfg.scenario.director_field(&grid);
    let (f, rep) = solve::minimize_q(&solve::initial_q(&boundary, &p), &p, &cfg.solver);
    log::info!(
        "solve: {} iterations, energy {:e}, residual {:e}",
        rep.iterations,
        rep.final_energy,
        rep.final_residual
    );
    let dir = &cfg.output.dir;
    let failure = rep.failure.clone();
    let summary = report::summarize(&f, &p, cfg.sweep.lambda)?;
    for format in &cfg.output.formats {
        match format {
            Format::Json => {
                let doc = Report::new(
                    "solve",
                    stamp.clone(),
                    Some(cfg.clone()),
                    report::SolveResult {
                        solver: rep.clone(),
                        field: summary.clone(),
                    },
                );
                export::write_file(&dir.join("solve.json"), &doc.to_json())?;
            }
            Format::Csv => export::export_csv(&dir.join("field.csv"), &f, &p, &stamp)?,
            Format::Vtk => export::export_vtk(&dir.join("field.vtk"), &f, &p, &stamp)?,
        }
    }
    match failure {
        Some(msg) => Err(ldg_core::Error::Solver(msg).into()),
        None => Ok(()),
    }
}

fn cmd_sweep(cli: &Cli) -> Result<()> {
    let (cfg, stamp) = load_config(cli)?;
    init_logging(&cfg);
    let sweep = cfg.sweep_config()?;
    let out = asymptotics::run_sweep_with_fields(&sweep)?;
    let dir = &cfg.output.dir;
    for r in &out.report.records {
        log::info!(
            "sweep: L = {:e}, {} iterations, energy {:e}, max β on K {:e}",
            r.l,
            r.iterations,
            r.energy,
            r.max_beta_k
        );
    }
    let limit_params = sweep.params(sweep.l_values[0])?;
    for format in &cfg.output.formats {
        match format {
            Format::Json => {
                let doc = Report::new("sweep", stamp.clone(), Some(cfg.clone()), out.report.clone());
                export::write_file(&dir.join("sweep.json"), &doc.to_json())?;
            }
            Format::Csv | Format::Vtk => {
                let ext = format.name();
                for (k, (f, l)) in out.fields.iter().zip(&sweep.l_values).enumerate() {
                    let p = sweep.params(*l)?;
                    let path = dir.join(format!("field_{k:02}.{ext}"));
                    write_field(*format, &path, f, &p, &stamp)?;
                }
                write_field(
                    *format,
                    &dir.join(format!("limit.{ext}")),
                    &out.limit,
                    &limit_params,
                    &stamp,
                )?;
            }
        }
    }
    match &out.report.failure {
        Some(msg) => Err(ldg_core::Error::Solver(msg.clone()).into()),
        None => Ok(()),
    }
}

fn write_field(
    format: Format,
    path: &Path,
    f: &ldg_core::field::QField,
    p: &ldg_core::MaterialParams,
    stamp: &Stamp,
) -> Result<()> {
    match format {
        Format::Csv => export::export_csv(path, f, p, stamp),
        Format::Vtk => export::export_vtk(path, f, p, stamp),
        Format::Json => Err(CliError::Usage("fields are exported as csv or vtk".into())),
    }
}

/// Material parameters of a stored field, replaced by the configuration's
/// when `--config` is given.
fn field_params(cli: &Cli, file: &export::FieldFile) -> Result<(ldg_core::MaterialParams, f64, Option<RunConfig>)> {
    match &cli.config {
        None => Ok((file.params, 0.5, None)),
        Some(_) => {
            let (cfg, _) = load_config(cli)?;
            Ok((cfg.material.params()?, cfg.sweep.lambda, Some(cfg)))
        }
    }
}

fn cmd_analyze(cli: &Cli, path: &Path) -> Result<()> {
    let file = export::import_csv(path)?;
    let (p, lambda, cfg) = field_params(cli, &file)?;
    if let Some(f) = &cli.format {
        if parse_formats(f)? != [Format::Json] {
            return Err(CliError::Usage("analyze writes json only".into()));
        }
    }
    let summary = report::summarize(&file.field, &p, lambda)?;
    let doc = Report::new("analyze", file.stamp.clone(), cfg, summary);
    let json = doc.to_json();
    match &cli.out {
        Some(dir) => export::write_file(&dir.join("analysis.json"), &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn cmd_export(cli: &Cli, path: &Path) -> Result<()> {
    let file = export::import_csv(path)?;
    let (p, _, _) = field_params(cli, &file)?;
    let formats = match &cli.format {
        Some(f) => parse_formats(f)?,
        None => vec![Format::Vtk],
    };
    let dir = match &cli.out {
        Some(d) => d.clone(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "field".into());
    for format in formats {
        let target = dir.join(format!("{stem}.{}", format.name()));
        if target == path {
            return Err(CliError::Usage(format!(
                "refusing to overwrite the input {}",
                path.display()
            )));
        }
        write_field(format, &target, &file.field, &p, &file.stamp)?;
    }
    Ok(())
}
