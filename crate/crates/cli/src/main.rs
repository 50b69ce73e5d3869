use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use nsms_core::driver::{
    energy_ledger_check, ledger_params, read_field, run_coupled, sharp_limit_experiment, step_energy_check,
    write_pgm, EnergyLedger, LedgerParams, RunConfig,
};
use nsms_core::Error;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Two-phase Navier–Stokes/Mullins–Sekerka simulator.
#[derive(Parser)]
#[command(name = "nsms", version)]
struct Cli {
    /// Log progress (repeat for per-step detail). `RUST_LOG` overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coupled scheme described by a TOML config.
    Run { config: PathBuf },
    /// Verify the summed and per-step energy inequalities of a ledger CSV.
    CheckLedger {
        ledger: PathBuf,
        /// Take h, kappa and mobility from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Time step; inferred from the t column when omitted.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        mobility: f64,
    },
    /// Compare Model H runs at several interface widths with the sharp scheme.
    SweepEps {
        config: PathBuf,
        /// Decreasing interface widths.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Convert a field dump to a PGM image.
    DumpView {
        field: PathBuf,
        /// Output file; defaults to the input with a .pgm extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e.root() {
            Error::Config(_)
            | Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::Resolution { .. }
            | Error::Format { .. }
            | Error::InvalidField(_)
            | Error::GridMismatch => 2,
            Error::LedgerViolation { .. } | Error::MassMismatch { .. } => 3,
            Error::NoConvergence { .. } => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Run { config } => run(&config),
        Command::CheckLedger {
            ledger,
            config,
            h,
            kappa,
            mobility,
        } => check_ledger(&ledger, config.as_deref(), h, kappa, mobility),
        Command::SweepEps { config, eps } => sweep(&config, &eps),
        Command::DumpView { field, output } => dump_view(&field, output),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message);
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let out = run_coupled(&cfg)?;
    let p = ledger_params(&cfg);
    let last = out.ledger.len() - 1;
    println!(
        "{} steps, energy {:.10e} -> {:.10e}, phase mass {} cells",
        out.steps,
        out.ledger.total_energy(0, p.kappa),
        out.ledger.total_energy(last, p.kappa),
        out.chi.mass()
    );
    match cfg.ledger_file() {
        Some(path) => println!("ledger written to {}", path.display()),
        None => print!("{}", String::from_utf8_lossy(&out.ledger.to_csv()?)),
    }
    Ok(())
}

fn check_ledger(path: &Path, config: Option<&Path>, h: Option<f64>, kappa: f64, mobility: f64) -> Result<(), Failure> {
    let ledger = EnergyLedger::read_csv(path)?;
    let params = match config {
        Some(c) => ledger_params(&RunConfig::load(c)?),
        None => {
            let h = match h {
                Some(h) => h,
                None if ledger.len() >= 2 => ledger.rows[1].t - ledger.rows[0].t,
                None => 1.0,
            };
            LedgerParams { h, kappa, mobility }
        }
    };
    let summed = energy_ledger_check(&ledger, &params);
    let step = step_energy_check(&ledger, &params);
    println!(
        "{} rows, h = {:e}, kappa = {}, mobility = {}: summed inequality {}, per-step inequality {}",
        ledger.len(),
        params.h,
        params.kappa,
        params.mobility,
        describe(summed.first_failure),
        describe(step)
    );
    match summed.first_failure.or(step) {
        None => Ok(()),
        Some(row) => Err(Failure {
            code: 3,
            message: format!("energy ledger violated at row {row}"),
        }),
    }
}

fn describe(failure: Option<usize>) -> String {
    match failure {
        None => "holds".into(),
        Some(row) => format!("fails at row {row}"),
    }
}

fn sweep(config: &Path, eps: &[f64]) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let report = sharp_limit_experiment(&cfg, eps)?;
    println!("kappa = {:.12}, one cell band = {:.6e}", report.kappa, report.band_area);
    println!("eps,steps,symdiff_cells,symdiff_area,energy,interface_length,energy_per_length,mass_drift,energy_monotone");
    for e in &report.entries {
        println!(
            "{},{},{},{:.6e},{:.10e},{:.10e},{:.10e},{:.3e},{}",
            e.eps,
            e.steps,
            e.symmetric_difference_cells,
            e.symmetric_difference_area,
            e.energy,
            e.interface_length,
            e.energy_per_length,
            e.mass_drift,
            e.energy_monotone
        );
    }
    if report.monotone() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "symmetric-difference areas are not monotone in eps".into(),
        })
    }
}

fn dump_view(field: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let file = read_field(field)?;
    let out = output.unwrap_or_else(|| field.with_extension("pgm"));
    write_pgm(&out, &file)?;
    println!("{} ({}x{} {}) -> {}", field.display(), file.n, file.n, file.kind, out.display());
    Ok(())
}
