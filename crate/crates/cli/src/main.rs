//! `cochannel-map`: Monte Carlo FER simulation of iterative co-channel
//! detection and decoding.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cochannel_core::harness::{emit_csv, preset_scenario, run_monte_carlo, validation_suite, write_csv, PRESET_NAMES};
use cochannel_core::{DetectorKind, DetectorSettings, FerPoint, Scenario};

#[derive(Parser)]
#[command(
    name = "cochannel-map",
    version,
    about = "Iterative joint MAP detection of co-channel signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate frame error rates over an SNR grid and write them as CSV.
    Run(Box<RunArgs>),
    /// Check the detectors against exhaustive enumeration and exact reductions.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print a built-in scenario as JSON.
    Preset { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON, same fields as the scenario type).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: fig6, fig7 or fig8.
    #[arg(long)]
    preset: Option<String>,
    /// Detectors to simulate, replacing the scenario's list.
    #[arg(long, value_delimiter = ',')]
    detector: Vec<DetectorKind>,
    /// Exact set size for fg_approx when --detector is given.
    #[arg(long, default_value_t = 3)]
    set_size: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    /// One or more SIR values; the grid is run once per value.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sir: Vec<f64>,
    /// Frames per grid point.
    #[arg(long)]
    frames: Option<usize>,
    /// Stop a grid point after this many frame errors (0 runs every frame).
    #[arg(long)]
    min_errors: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

fn load_scenario(args: &RunArgs) -> Result<Scenario> {
    let mut s = match (&args.scenario, &args.preset) {
        (Some(path), _) => {
            Scenario::from_json_file(path).with_context(|| format!("loading scenario {}", path.display()))?
        }
        (None, Some(name)) => preset_scenario(name)?,
        (None, None) => bail!("either --scenario or --preset is required"),
    };
    if !args.detector.is_empty() {
        s.receiver.detectors = args
            .detector
            .iter()
            .map(|&kind| {
                let size = if kind == DetectorKind::FgApprox {
                    args.set_size
                } else {
                    0
                };
                DetectorSettings::new(kind, size)
            })
            .collect();
    }
    if !args.snr.is_empty() {
        s.snr_grid_db = args.snr.clone();
    }
    if let Some(f) = args.frames {
        s.max_frames = f;
    }
    if let Some(e) = args.min_errors {
        s.min_frame_errors = e;
    }
    if let Some(i) = args.iterations {
        s.receiver.outer_iterations = i;
    }
    if let Some(seed) = args.seed {
        s.master_seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn run(args: RunArgs) -> Result<()> {
    let base = load_scenario(&args)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let sirs = if args.sir.is_empty() {
        vec![base.sir_db]
    } else {
        args.sir.clone()
    };
    let mut table: Vec<FerPoint> = Vec::new();
    for sir in sirs {
        let mut s = base.clone();
        s.sir_db = sir;
        eprintln!(
            "{}: SIR {sir} dB, SNR {:?} dB, {} frames, {} detector(s), {workers} worker(s)",
            s.name,
            s.snr_grid_db,
            s.max_frames,
            s.receiver.detectors.len()
        );
        table.extend(run_monte_carlo(&s, workers)?);
    }
    for p in table.iter().filter(|p| p.status.starts_with("error")) {
        eprintln!("{} at {} dB: {}", p.detector, p.snr_db, p.status);
    }
    match &args.out {
        Some(path) => {
            emit_csv(&table, path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", table.len(), path.display());
        }
        None => write_csv(&table, std::io::stdout().lock())?,
    }
    Ok(())
}

fn validate(seed: u64) -> Result<()> {
    let checks = validation_suite(seed)?;
    for c in &checks {
        writeln!(
            std::io::stdout().lock(),
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn preset(name: &str) -> Result<()> {
    let s = preset_scenario(name).map_err(|e| anyhow::anyhow!("{e} (known presets: {})", PRESET_NAMES.join(", ")))?;
    writeln!(std::io::stdout().lock(), "{}", s.to_json()?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(*args),
        Command::Validate { seed } => validate(seed),
        Command::Preset { name } => preset(&name),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
