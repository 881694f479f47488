use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsemigroup::asymptotics::{decay_table, decay_times, to_csv};
use qsemigroup::dilation::{TimeGrid, DEFAULT_CAP};
use qsemigroup::matrixcore::Tolerances;
use qsemigroup::models::{resolve, LoadedModel};
use qsemigroup::report::{
    analyze, conjecture_batch, minimal_check, render_text, AnalysisOptions, ConjectureBatch, MinimalCheck, Report,
    Sections,
};

/// Number of sample times in the correlation decay table.
const DECAY_SAMPLES: usize = 51;

#[derive(Parser, Debug)]
#[command(
    name = "qsemigroup",
    version,
    about = "Analyze finite-dimensional quantum Markov semigroups"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalFlags {
    /// Relative residual bound for algebraic identities.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Time horizon for correlation limits (defaults to 50 / spectral gap).
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory that receives decay tables as CSV files.
    #[arg(long, global = true)]
    csv_dir: Option<PathBuf>,
    /// Largest number of time-ordered tuples a dilation space may use.
    #[arg(long, global = true, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: gates, invariant states, fixed points, adjoint, mixing, dilation.
    Analyze { model: String },
    /// Structural gates and invariant states only.
    Invariant { model: String },
    /// Fixed-point and multiplicative-domain algebras.
    FixedPoints { model: String },
    /// KMS adjoint, detailed balance and the associated expectation.
    Adjoint { model: String },
    /// Ergodicity, mixing and K-property verdicts.
    Mixing { model: String },
    /// Dilation identities on a time grid and the backward-shift probe.
    Dilation {
        model: String,
        /// Comma-separated time grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
        /// Comma-separated (negative) tail times for the shift probe.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tails: Option<Vec<f64>>,
    },
    /// Compares the minimal-semigroup iteration with the exponential.
    MinimalCheck {
        /// Models to check (defaults to dephasing and amplitude damping).
        models: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        mesh: f64,
    },
    /// Compares forward and adjoint K-property verdicts over seeded random models.
    #[command(name = "probe-conjecture43")]
    ProbeConjecture {
        /// Number of seeds.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
}

#[derive(Debug)]
struct InputError(String);

impl From<qsemigroup::error::Error> for InputError {
    fn from(e: qsemigroup::error::Error) -> Self {
        Self(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn tolerances(flags: &GlobalFlags) -> Result<Tolerances, InputError> {
    let base = Tolerances::default();
    match flags.tol {
        None => Ok(base),
        Some(t) => Ok(Tolerances::new(t, base.rank_cutoff_factor, base.psd_slack)?),
    }
}

fn options(flags: &GlobalFlags, tol: Tolerances, sections: Sections) -> Result<AnalysisOptions, InputError> {
    if let Some(h) = flags.horizon {
        if !(h.is_finite() && h > 0.0) {
            return Err(InputError("--horizon must be positive".into()));
        }
    }
    if flags.cap == 0 {
        return Err(InputError("--cap must be positive".into()));
    }
    Ok(AnalysisOptions {
        tol,
        horizon: flags.horizon,
        cap: flags.cap,
        sections,
        ..AnalysisOptions::default()
    })
}

fn run(cli: Cli) -> Result<u8, InputError> {
    let flags = &cli.global;
    let tol = tolerances(flags)?;
    if let Some(dir) = &flags.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| InputError(format!("cannot create `{}`: {e}", dir.display())))?;
    }
    let sections = match &cli.command {
        Command::Analyze { .. } => Sections::ALL,
        Command::Invariant { .. } => Sections::NONE,
        Command::FixedPoints { .. } => Sections {
            fixed_points: true,
            ..Sections::NONE
        },
        Command::Adjoint { .. } => Sections {
            adjoint: true,
            ..Sections::NONE
        },
        Command::Mixing { .. } => Sections {
            asymptotics: true,
            ..Sections::NONE
        },
        Command::Dilation { .. } => Sections {
            dilation: true,
            ..Sections::NONE
        },
        Command::MinimalCheck {
            models,
            time,
            steps,
            mesh,
        } => return run_minimal(flags, models, *time, *steps, *mesh, &tol),
        Command::ProbeConjecture { seeds, start } => return run_probe(flags, *start, *seeds, &tol),
    };
    let (model, grid, tails) = match cli.command {
        Command::Analyze { model }
        | Command::Invariant { model }
        | Command::FixedPoints { model }
        | Command::Adjoint { model }
        | Command::Mixing { model } => (model, None, None),
        Command::Dilation { model, grid, tails } => (model, grid, tails),
        Command::MinimalCheck { .. } | Command::ProbeConjecture { .. } => unreachable!("handled above"),
    };
    let model = resolve(&model, &tol)?;
    let mut opts = options(flags, tol, sections)?;
    if let Some(points) = grid {
        opts.grid = Some(TimeGrid::new(points)?);
    }
    if let Some(t) = &tails {
        if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
            return Err(InputError("--tails needs finite times".into()));
        }
    }
    opts.tails = tails;
    let report = analyze(&model, &opts)?;
    let dilation_csv = report.dilation.as_ref().map(|d| to_csv(&d.k_shift.rows));
    if let Some(dir) = &flags.csv_dir {
        if let Some(csv) = &dilation_csv {
            write_file(&dir.join("delta_decay.csv"), csv)?;
        }
        if let Some(a) = &report.asymptotics {
            let rows = decay_table(&model.qms, &model.state, &decay_times(a.horizon, DECAY_SAMPLES))?;
            write_file(&dir.join("correlation_decay.csv"), &to_csv(&rows))?;
        }
    }
    emit_report(flags, &model, &report, dilation_csv.as_deref());
    Ok(report.exit_code() as u8)
}

fn emit_report(flags: &GlobalFlags, model: &LoadedModel, report: &Report, dilation_csv: Option<&str>) {
    match flags.format {
        Format::Structured => println!("{}", report.to_json()),
        Format::Text => {
            print!("{}", render_text(report));
            if let (Some(csv), None) = (dilation_csv, &flags.csv_dir) {
                println!("delta decay for {}:", model.name);
                print!("{csv}");
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), InputError> {
    std::fs::write(path, text).map_err(|e| InputError(format!("cannot write `{}`: {e}", path.display())))
}

fn run_minimal(
    flags: &GlobalFlags,
    models: &[String],
    time: f64,
    steps: usize,
    mesh: f64,
    tol: &Tolerances,
) -> Result<u8, InputError> {
    let defaults = [
        "builtin:dephasing(0.5)".to_string(),
        "builtin:amplitude_damping(1)".to_string(),
    ];
    let specs = if models.is_empty() { &defaults[..] } else { models };
    let checks: Vec<MinimalCheck> = specs
        .iter()
        .map(|s| Ok(minimal_check(&resolve(s, tol)?, time, steps, mesh, tol)?))
        .collect::<Result<_, InputError>>()?;
    match flags.format {
        Format::Structured => println!("{}", serde_json::to_string_pretty(&checks).expect("checks serialize")),
        Format::Text => {
            for c in &checks {
                println!(
                    "{}: {} (t = {}, n = {}, mesh = {:e}) max error {:.2e} (bound {:.0e}), monotone {}{}",
                    c.model,
                    if c.passed() { "pass" } else { "FAIL" },
                    c.time,
                    c.steps,
                    c.mesh,
                    c.max_error,
                    c.error_bound,
                    c.monotone,
                    if c.mesh_too_coarse { ", mesh coarse" } else { "" }
                );
            }
        }
    }
    Ok(if checks.iter().all(MinimalCheck::passed) { 0 } else { 2 })
}

fn run_probe(flags: &GlobalFlags, start: u64, seeds: u64, tol: &Tolerances) -> Result<u8, InputError> {
    if seeds == 0 {
        return Err(InputError("--seeds must be positive".into()));
    }
    let batch = conjecture_batch(start, seeds, tol)?;
    match flags.format {
        Format::Structured => println!("{}", serde_json::to_string_pretty(&batch).expect("batch serializes")),
        Format::Text => print_batch(&batch),
    }
    Ok(batch.exit_code() as u8)
}

fn print_batch(batch: &ConjectureBatch) {
    for e in &batch.entries {
        println!(
            "{}: forward K {}, adjoint K {} (deviations {:.1e}, {:.1e})",
            e.model, e.record.forward_k, e.record.adjoint_k, e.record.forward_deviation, e.record.adjoint_deviation
        );
    }
    for s in &batch.skipped {
        println!("{s}: skipped, no faithful invariant state");
    }
    println!("(forward K, adjoint K) counts:");
    for ((f, a), n) in batch.counts() {
        println!("  ({f}, {a}): {n}");
    }
    if batch.disagreements.is_empty() {
        println!("disagreements: none");
    } else {
        for m in &batch.disagreements {
            println!("FINDING: forward and adjoint K-property verdicts differ for {m}");
        }
    }
}
