//! `brcomp`: privacy accounting for compositions of bounded-range mechanisms.
//!
//! Data goes to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 validation failure, 2 bad input or unreachable target, 3 refusal
//! (size cap, unsupported method, solver configuration), 4 unwritable output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use brcomp::accountant::{self, format_delta, format_sig, CurveRow, MethodId};
use brcomp::adaptive::gap_certificate;
use brcomp::validate::{run_validation, ValidationLevel};
use brcomp::{AccountantOptions, AdaptiveSolverConfig, Error, Exec, LambdaSearch};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Methods plotted when `curve` is given no `--methods`.
const DEFAULT_CURVE_METHODS: &str = "dp-optcomp-half,br-optcomp,mgf,optkl,dr19,drv10,dp-optcomp";

#[derive(Parser)]
#[command(
    name = "brcomp",
    version,
    about = "Composition accountant for bounded-range mechanisms"
)]
struct Cli {
    /// Run every solver on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    /// Worker threads for the parallel executor (default: all cores).
    #[arg(long, env = "BRCOMP_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal or bounding delta at a given eps_g.
    Delta {
        #[command(flatten)]
        mechs: Mechanisms,
        #[arg(long, allow_hyphen_values = true)]
        eps_g: f64,
        #[arg(long)]
        method: MethodId,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Smallest eps_g at which the method's delta is at most delta_g.
    Epsilon {
        #[command(flatten)]
        mechs: Mechanisms,
        #[arg(long)]
        delta_g: f64,
        #[arg(long)]
        method: MethodId,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// eps_g against k for several methods.
    Curve {
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        delta_g: f64,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_CURVE_METHODS)]
        methods: Vec<MethodId>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certifies the adaptive versus nonadaptive gap at one point (JSON).
    Gap {
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        eps_g: f64,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Runs the oracle self-check suite.
    Validate {
        #[arg(long, value_enum, default_value_t = Level::Fast)]
        level: Level,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct Mechanisms {
    /// Per-mechanism eps, repeated `--k` times.
    #[arg(
        long,
        required_unless_present = "eps_file",
        conflicts_with = "eps_file",
        allow_hyphen_values = true
    )]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1, conflicts_with = "eps_file")]
    k: usize,
    /// File with one eps per line; blank lines and `#` comments are skipped.
    #[arg(long)]
    eps_file: Option<PathBuf>,
}

impl Mechanisms {
    fn list(&self) -> anyhow::Result<Vec<f64>> {
        match (&self.eps_file, self.eps) {
            (Some(path), _) => read_eps_file(path),
            (None, Some(eps)) => Ok(vec![eps; self.k]),
            (None, None) => bail!("either --eps or --eps-file is required"),
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    /// Offsets per node in the adaptive grid search.
    #[arg(long)]
    t_grid: Option<usize>,
    /// Golden-section steps refining the grid optimum.
    #[arg(long)]
    refine_iters: Option<usize>,
    /// Largest k accepted by the adaptive solver.
    #[arg(long)]
    depth_cap: Option<usize>,
    /// Upper end of the lambda search for moment bounds.
    #[arg(long)]
    lambda_max: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

/// Failure to write the requested output file.
#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}")]
struct OutputError {
    path: String,
    source: io::Error,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<OutputError>().is_some() {
        return 4;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::SizeCap { .. } | Error::Unsupported(_) | Error::Config(_)) => 3,
        _ => 2,
    }
}

fn read_eps_file(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::Domain(format!(
                "{}:{}: not a number: {line}",
                path.display(),
                i + 1
            ))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Domain(format!("{} lists no eps values", path.display())).into());
    }
    Ok(out)
}

fn options(flags: &SolverFlags, exec: Exec) -> brcomp::Result<AccountantOptions> {
    let mut adaptive = AdaptiveSolverConfig {
        exec,
        ..Default::default()
    };
    if let Some(v) = flags.t_grid {
        adaptive.t_grid = v;
    }
    if let Some(v) = flags.refine_iters {
        adaptive.refine_iters = v;
    }
    if let Some(v) = flags.depth_cap {
        adaptive.depth_cap = v;
    }
    adaptive.validate()?;
    let mut lambda = LambdaSearch::default();
    if let Some(v) = flags.lambda_max {
        lambda.lambda_max = v;
    }
    lambda.validate()?;
    Ok(AccountantOptions {
        adaptive,
        lambda,
        exec,
    })
}

#[derive(Serialize)]
struct ValueRecord<'a> {
    method: MethodId,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_g: Option<f64>,
    value: f64,
    solver_meta: &'a str,
}

/// CSV view of a [`CurveRow`] with numbers at 12 significant digits.
#[derive(Serialize)]
struct CsvRow<'a> {
    k: usize,
    method: &'a str,
    eps: String,
    delta_g: String,
    eps_g: String,
    solver_meta: &'a str,
}

fn write_curve(rows: &[CurveRow], format: Format, out: &mut dyn Write) -> anyhow::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
        }
        Format::Csv | Format::Text => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(CsvRow {
                    k: r.k,
                    method: r.method.name(),
                    eps: format_sig(r.eps),
                    delta_g: format_sig(r.delta_g),
                    eps_g: format_sig(r.eps_g),
                    solver_meta: &r.solver_meta,
                })?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        eprintln!("note: built without the parallel feature; thread count ignored");
    }
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Delta {
            mechs,
            eps_g,
            method,
            solver,
            format,
        } => {
            let list = mechs.list()?;
            let opts = options(&solver, exec)?;
            let c = accountant::delta(method, &list, eps_g, &opts)?;
            let (text, underflow) = format_delta(c.value);
            let meta = if underflow {
                format!("{};underflow=true", c.meta)
            } else {
                c.meta
            };
            match format {
                Format::Json => {
                    let rec = ValueRecord {
                        method,
                        k: list.len(),
                        eps_g: Some(eps_g),
                        delta_g: None,
                        value: c.value,
                        solver_meta: &meta,
                    };
                    serde_json::to_writer_pretty(&mut stdout, &rec)?;
                    writeln!(stdout)?;
                }
                _ => writeln!(stdout, "{text}\t{meta}")?,
            }
        }
        Command::Epsilon {
            mechs,
            delta_g,
            method,
            solver,
            format,
        } => {
            let list = mechs.list()?;
            let opts = options(&solver, exec)?;
            let c = accountant::epsilon(method, &list, delta_g, &opts)?;
            match format {
                Format::Json => {
                    let rec = ValueRecord {
                        method,
                        k: list.len(),
                        eps_g: None,
                        delta_g: Some(delta_g),
                        value: c.value,
                        solver_meta: &c.meta,
                    };
                    serde_json::to_writer_pretty(&mut stdout, &rec)?;
                    writeln!(stdout)?;
                }
                _ => writeln!(stdout, "{}\t{}", format_sig(c.value), c.meta)?,
            }
        }
        Command::Curve {
            eps,
            k_max,
            delta_g,
            methods,
            solver,
            format,
            out,
        } => {
            let opts = options(&solver, exec)?;
            let rows = accountant::curve(eps, k_max, delta_g, &methods, &opts)?;
            match out {
                Some(path) => {
                    let wrap = |source| OutputError {
                        path: path.display().to_string(),
                        source,
                    };
                    let file = File::create(&path).map_err(wrap)?;
                    let mut w = BufWriter::new(file);
                    write_curve(&rows, format, &mut w)?;
                    w.flush().map_err(wrap)?;
                    eprintln!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => write_curve(&rows, format, &mut stdout)?,
            }
        }
        Command::Gap {
            eps,
            k,
            eps_g,
            solver,
        } => {
            let opts = options(&solver, exec)?;
            let cert = gap_certificate(eps, k, eps_g, &opts.adaptive)?;
            serde_json::to_writer_pretty(&mut stdout, &cert)?;
            writeln!(stdout)?;
        }
        Command::Validate {
            level,
            seed,
            format,
        } => {
            let level = match level {
                Level::Fast => ValidationLevel::Fast,
                Level::Full => ValidationLevel::Full,
            };
            let records = run_validation(level, seed, exec)?;
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &records)?;
                    writeln!(stdout)?;
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut stdout);
                    for r in &records {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
                Format::Text => {
                    for r in &records {
                        writeln!(
                            stdout,
                            "{}\t{}\t{}\texpected={}\tgot={}\ttol={}",
                            if r.pass { "PASS" } else { "FAIL" },
                            r.check,
                            r.params,
                            format_sig(r.expected),
                            format_sig(r.got),
                            format_sig(r.tol)
                        )?;
                    }
                }
            }
            let failed = records.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", records.len());
                return Ok(ExitCode::from(1));
            }
        }
    }
    stdout.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
