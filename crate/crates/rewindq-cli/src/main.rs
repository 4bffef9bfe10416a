//! Command-line front end for the qubit-recycling toolkit: reproducible
//! fidelity-profile sweeps (`profile`), transfer-spectrum diagnostics
//! (`spectrum`), and recycling-schedule queries (`plan`).
//!
//! Conventions shared by every subcommand: runs are deterministic in the
//! master seed (trial `i` draws from substream `i`, independent of worker
//! count), data goes to stdout unless `--out` redirects it to a file,
//! diagnostics go to stderr, and any file output is accompanied by a
//! manifest recording the configuration and a SHA-256 hash of the bytes
//! written. Exit codes: 0 success, 2 usage error, 3 numerical failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use rewindq::experiments::{
    aggregate_median, haar_unitary, run_trials, steps_to_error, summarize, write_profiles_csv,
    ExperimentConfig, FidelityProfile, GateMode, Method,
};
use rewindq::planner::constant_gap_plan;
use rewindq::rng::trial_rng;
use rewindq::transfer::{
    contraction_coefficient, noisy_transfer_operator, operator_norm_distance, spectrum,
    transfer_operator,
};
use rewindq::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Failure carrying the process exit code alongside the diagnostic.
type Failure = (u8, String);

#[derive(Parser)]
#[command(
    name = "rewindq",
    version,
    about = "Qubit-recycling experiments: fidelity profiles, transfer spectra, recycling plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep Haar-random staircase circuits and emit per-trial fidelity
    /// profiles (CSV) plus a decay-fit summary (JSON).
    Profile(ProfileArgs),
    /// Analyze the transfer operator of Haar-random gates: spectrum,
    /// contraction estimates, and optional noisy-perturbation distances.
    Spectrum(SpectrumArgs),
    /// Build a constant-gap recycling schedule for a machine size and error
    /// budget.
    Plan(PlanArgs),
}

#[derive(Args)]
struct ProfileArgs {
    /// Chain width (number of qubits).
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// Number of Haar trials.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Master seed; trial i draws its gates from substream i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-qubit depolarizing probability applied after every gate.
    #[arg(long, default_value_t = 0.0)]
    noise_p: f64,
    /// Profile back-end: recursion, mps, or dense.
    #[arg(long, default_value = "recursion")]
    method: String,
    /// Bulk-gate sampling: independent or shared_bulk.
    #[arg(long, default_value = "independent")]
    gate_mode: String,
    /// Write the per-trial CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the pointwise-median curve as gnuplot-ready columns.
    #[arg(long)]
    median_out: Option<PathBuf>,
    /// Write the summary JSON here (default: stdout when --out is set).
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Master seed; sample i draws its gate from substream i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of Haar-random gates to analyze (must be positive).
    #[arg(long)]
    samples: usize,
    /// Also report the operator-norm distance to the depolarized transfer
    /// operator at this probability.
    #[arg(long)]
    noise_p: Option<f64>,
    /// Channel-difference pairs sampled per contraction estimate.
    #[arg(long, default_value_t = 50)]
    contraction_samples: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Physical qubits available per round.
    #[arg(long)]
    nq: usize,
    /// Total error budget in (0,1).
    #[arg(long)]
    epsilon: f64,
    /// Exponential convergence rate of the rewinding protocol.
    #[arg(long)]
    alpha: f64,
    /// Prefactor of the per-round error bound.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Write the plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("rewindq: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Profile(args) => cmd_profile(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Plan(args) => cmd_plan(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("rewindq: {msg}");
            ExitCode::from(code)
        }
    }
}

/// Caps the rayon worker pool from `REWINDQ_THREADS` when set. Results never
/// depend on the worker count; only wall-clock does.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("REWINDQ_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| format!("REWINDQ_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("could not size the worker pool: {e}"))
}

/// Maps library errors to exit codes: domain/configuration problems are
/// usage errors, everything downstream is a numerical failure.
fn as_failure(err: Error) -> Failure {
    let code = match err {
        Error::Validation(_) | Error::Config(_) | Error::Shape(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    };
    (code, err.to_string())
}

fn usage(msg: String) -> Failure {
    (EXIT_USAGE, msg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String, Failure> {
    std::fs::write(path, bytes)
        .map_err(|e| (EXIT_NUMERICAL, format!("cannot write {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

/// Sidecar manifest path: `<out>.manifest.json`.
fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Writes the run manifest next to the primary output: configuration echo,
/// master seed, library version, wall-clock, and a SHA-256 per output file.
fn write_manifest(
    primary_out: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    started: SystemTime,
    elapsed_s: f64,
    outputs: &[(PathBuf, String)],
) -> Result<(), Failure> {
    let entries: Vec<serde_json::Value> = outputs
        .iter()
        .map(|(path, sha256)| serde_json::json!({ "path": path.display().to_string(), "sha256": sha256 }))
        .collect();
    let manifest = serde_json::json!({
        "command": command,
        "config": config,
        "master_seed": seed,
        "library_version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": unix_seconds(started),
        "elapsed_s": elapsed_s,
        "outputs": entries,
    });
    let text = format!("{:#}\n", manifest);
    write_file(&manifest_path(primary_out), text.as_bytes())?;
    Ok(())
}

/// Median curve as gnuplot-ready two-column data.
fn gnuplot_median(median: &FidelityProfile, trials: usize) -> String {
    let mut data = format!("# x fidelity (pointwise median of {trials} trials)\n");
    for (&x, &f) in median.x_values().iter().zip(median.fidelity().iter()) {
        let _ = writeln!(data, "{x} {f}");
    }
    data
}

fn cmd_profile(args: ProfileArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let timer = Instant::now();
    let method: Method = args.method.parse().map_err(as_failure)?;
    let gate_mode: GateMode = args.gate_mode.parse().map_err(as_failure)?;
    let config = ExperimentConfig {
        n: args.n,
        trials: args.trials,
        seed: args.seed,
        noise_p: args.noise_p,
        method,
        gate_mode,
    };
    config.validate().map_err(as_failure)?;

    let profiles = run_trials(&config).map_err(as_failure)?;
    let median = aggregate_median(&profiles).map_err(as_failure)?;
    // Curves too short for a decay fit are still valid data: degrade the
    // summary to nulls plus the step counts instead of failing the run.
    let summary_json = match summarize(&profiles) {
        Ok(summary) => summary.to_json().map_err(as_failure)?,
        Err(Error::Fit(msg)) => {
            eprintln!("rewindq: decay fit skipped: {msg}");
            let partial = serde_json::json!({
                "alpha_median": null,
                "alpha_iqr": null,
                "c": null,
                "steps_to_1e-2": steps_to_error(&median, 1e-2),
                "steps_to_1e-3": steps_to_error(&median, 1e-3),
            });
            serde_json::to_string_pretty(&partial)
                .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?
        }
        Err(other) => return Err(as_failure(other)),
    };

    let mut csv = Vec::new();
    write_profiles_csv(&mut csv, &profiles).map_err(as_failure)?;

    let mut outputs: Vec<(PathBuf, String)> = Vec::new();
    if let Some(path) = &args.out {
        outputs.push((path.clone(), write_file(path, &csv)?));
    }
    if let Some(path) = &args.median_out {
        let data = gnuplot_median(&median, args.trials);
        outputs.push((path.clone(), write_file(path, data.as_bytes())?));
    }
    if let Some(path) = &args.summary_out {
        let text = format!("{summary_json}\n");
        outputs.push((path.clone(), write_file(path, text.as_bytes())?));
    }

    match (&args.out, &args.summary_out) {
        // Data on stdout: nothing else may interleave with the CSV.
        (None, _) => std::io::stdout()
            .write_all(&csv)
            .map_err(|e| (EXIT_NUMERICAL, format!("cannot write stdout: {e}")))?,
        (Some(_), None) => println!("{summary_json}"),
        (Some(_), Some(_)) => {}
    }

    if let Some(out) = &args.out {
        let echo = serde_json::json!({
            "n": config.n,
            "trials": config.trials,
            "seed": config.seed,
            "noise_p": config.noise_p,
            "method": method.as_str(),
            "gate_mode": gate_mode.as_str(),
        });
        write_manifest(
            out,
            "profile",
            echo,
            Some(config.seed),
            started,
            timer.elapsed().as_secs_f64(),
            &outputs,
        )?;
    }
    Ok(())
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let timer = Instant::now();
    if args.samples == 0 {
        return Err(usage("need at least one sample (--samples ≥ 1)".into()));
    }
    if args.contraction_samples == 0 {
        return Err(usage("need at least one contraction pair".into()));
    }
    if let Some(p) = args.noise_p {
        if !(0.0..=1.0).contains(&p) {
            return Err(usage(format!("noise probability must lie in [0,1], got {p}")));
        }
    }

    let records: Vec<serde_json::Value> = (0..args.samples as u64)
        .into_par_iter()
        .map(|i| -> Result<serde_json::Value, Failure> {
            let mut rng = trial_rng(args.seed, i);
            let gate = haar_unitary(4, &mut rng);
            let operator = transfer_operator(&gate).map_err(as_failure)?;
            let spec = spectrum(&operator).map_err(as_failure)?;
            let contraction =
                contraction_coefficient(&operator, args.contraction_samples, args.seed)
                    .map_err(as_failure)?;
            let noisy_distance = args
                .noise_p
                .map(|p| -> Result<f64, Failure> {
                    let noisy = noisy_transfer_operator(&gate, p).map_err(as_failure)?;
                    operator_norm_distance(&noisy, &operator).map_err(as_failure)
                })
                .transpose()?;
            let eigenvalues: Vec<[f64; 2]> =
                spec.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
            Ok(serde_json::json!({
                "sample": i,
                "lambda2": spec.lambda2,
                "alpha_pred": spec.alpha_pred,
                "non_generic": spec.non_generic,
                "gamma_sampled": contraction.sampled_max,
                "gamma_subspace": contraction.subspace_bound,
                "noisy_distance": noisy_distance,
                "eigenvalues": eigenvalues,
            }))
        })
        .collect::<Result<_, _>>()?;

    let report = serde_json::json!({
        "seed": args.seed,
        "noise_p": args.noise_p,
        "samples": records,
    });
    let text = format!("{:#}\n", report);
    if let Some(path) = &args.out {
        let sha = write_file(path, text.as_bytes())?;
        write_manifest(
            path,
            "spectrum",
            serde_json::json!({
                "seed": args.seed,
                "samples": args.samples,
                "noise_p": args.noise_p,
                "contraction_samples": args.contraction_samples,
            }),
            Some(args.seed),
            started,
            timer.elapsed().as_secs_f64(),
            &[(path.clone(), sha)],
        )?;
    } else {
        print!("{text}");
    }
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let timer = Instant::now();
    let plan = constant_gap_plan(args.nq, args.epsilon, args.alpha, args.c).map_err(as_failure)?;
    if plan.degenerate {
        eprintln!(
            "rewindq: no recycling advantage at {} qubits for this budget; emitting the degenerate plan",
            args.nq
        );
    }
    let text = format!("{}\n", plan.to_json().map_err(as_failure)?);
    if let Some(path) = &args.out {
        let sha = write_file(path, text.as_bytes())?;
        write_manifest(
            path,
            "plan",
            serde_json::json!({
                "nq": args.nq,
                "epsilon": args.epsilon,
                "alpha": args.alpha,
                "c": args.c,
            }),
            None,
            started,
            timer.elapsed().as_secs_f64(),
            &[(path.clone(), sha)],
        )?;
    } else {
        print!("{text}");
    }
    Ok(())
}
