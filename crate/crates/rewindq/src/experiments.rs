//! Haar-random sweeps over staircase circuits: per-qubit fidelity profiles,
//! exponential decay fits, median aggregation, and steps-to-target-error
//! extraction.
//!
//! The central quantity is the *fidelity profile*: for a rewound staircase on
//! `n` qubits, qubit `i` ends up in a state whose overlap with `|0⟩` depends
//! only on how many rewind steps `x = n − i` (1-based `i`) separate it from
//! the end of the line. Profiles can be computed three ways — the channel
//! recursion (fast, any `n`, supports noise), the exact MPS back-end
//! (noiseless, any `n`), or dense vectors (small `n`, the oracle) — and decay
//! exponentially toward fidelity 1 at a rate set by the transfer-operator
//! spectrum.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channels::depolarizing;
use crate::circuits::build_rewound_convolutional_seq;
use crate::error::{Error, Result};
use crate::linalg::{determinant, qr_positive, CMat, C64};
use crate::rng::trial_rng;
use crate::simulator::{qubit_fidelity, run_density, run_mps, run_statevector, NoiseModel};
use crate::transfer::{base_channel, TransferKernel};

/// Haar-distributed element of `SU(d)`.
///
/// QR of a complex Ginibre matrix with the standard phase correction (the
/// diagonal phases of `R` divided out, which [`qr_positive`] performs), then
/// the determinant phase is removed to land in `SU(d)`.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> CMat {
    assert!(d >= 1, "dimension must be positive");
    let g = CMat::from_shape_fn((d, d), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
    });
    let (q, _) = qr_positive(&g);
    // det(q) has unit modulus; divide out its d-th root.
    let det = determinant(&q);
    let phase = det.powf(1.0 / d as f64);
    q.mapv(|z| z / phase)
}

/// How a fidelity profile is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Single-qubit channel recursion through the transfer operator.
    Recursion,
    /// Exact matrix-product-state simulation of the full circuit.
    Mps,
    /// Dense statevector / density-matrix simulation (small widths).
    Dense,
}

impl Method {
    /// Stable lowercase name used in CSV rows and CLI flags.
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Recursion => "recursion",
            Method::Mps => "mps",
            Method::Dense => "dense",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursion" => Ok(Method::Recursion),
            "mps" => Ok(Method::Mps),
            "dense" => Ok(Method::Dense),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected recursion, mps, or dense)"
            ))),
        }
    }
}

/// Whether every bulk position shares one Haar gate or draws its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// One Haar bulk gate repeated at every staircase position.
    SharedBulk,
    /// An independent Haar gate at every staircase position.
    Independent,
}

impl GateMode {
    /// Stable lowercase name used in CLI flags.
    pub fn as_str(&self) -> &'static str {
        match self {
            GateMode::SharedBulk => "shared_bulk",
            GateMode::Independent => "independent",
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared_bulk" => Ok(GateMode::SharedBulk),
            "independent" => Ok(GateMode::Independent),
            other => Err(Error::Config(format!(
                "unknown gate mode '{other}' (expected shared_bulk or independent)"
            ))),
        }
    }
}

/// Parameters of a profile sweep.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentConfig {
    /// Chain width (number of qubits).
    pub n: usize,
    /// Number of independent Haar trials.
    pub trials: usize,
    /// Master seed; each trial uses its own substream.
    pub seed: u64,
    /// Per-qubit depolarizing probability after every gate (0 = noiseless).
    pub noise_p: f64,
    /// Profile back-end.
    pub method: Method,
    /// Bulk gate sampling mode.
    pub gate_mode: GateMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 150,
            trials: 2000,
            seed: 0,
            noise_p: 0.0,
            method: Method::Recursion,
            gate_mode: GateMode::SharedBulk,
        }
    }
}

impl ExperimentConfig {
    /// Checks the cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Config(format!(
                "a staircase needs at least 3 qubits, got {}",
                self.n
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("at least one trial required".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::Config(format!(
                "noise probability must lie in [0,1], got {}",
                self.noise_p
            )));
        }
        if self.method == Method::Dense && self.n > 8 {
            return Err(Error::Config(format!(
                "dense profiles are capped at 8 qubits, got {}",
                self.n
            )));
        }
        if self.method == Method::Mps && self.noise_p > 0.0 {
            return Err(Error::Config(
                "the MPS back-end is noiseless; use recursion or dense for noisy profiles".into(),
            ));
        }
        Ok(())
    }
}

/// One trial's fidelity-versus-rewind-step curve.
#[derive(Debug, Clone)]
pub struct FidelityProfile {
    x_values: Vec<usize>,
    fidelity: Vec<f64>,
    method: Method,
    noise_p: f64,
    seed: u64,
    trial: Option<u64>,
}

impl FidelityProfile {
    /// Wraps a curve, validating the grid and fidelity ranges.
    pub fn new(
        x_values: Vec<usize>,
        fidelity: Vec<f64>,
        method: Method,
        noise_p: f64,
        seed: u64,
        trial: Option<u64>,
    ) -> Result<Self> {
        if x_values.len() != fidelity.len() || x_values.is_empty() {
            return Err(Error::Shape(format!(
                "profile needs matching nonempty grids, got {} x-values and {} fidelities",
                x_values.len(),
                fidelity.len()
            )));
        }
        if x_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("x grid must be strictly increasing".into()));
        }
        let fidelity = fidelity
            .into_iter()
            .map(|f| {
                if !(-1e-9..=1.0 + 1e-9).contains(&f) {
                    Err(Error::Validation(format!("fidelity {f} outside [0,1]")))
                } else {
                    Ok(f.clamp(0.0, 1.0))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            x_values,
            fidelity,
            method,
            noise_p,
            seed,
            trial,
        })
    }

    /// Rewind-step grid (strictly increasing).
    pub fn x_values(&self) -> &[usize] {
        &self.x_values
    }

    /// Fidelity at each grid point, all in `[0, 1]`.
    pub fn fidelity(&self) -> &[f64] {
        &self.fidelity
    }

    /// Back-end that produced the curve.
    pub fn method(&self) -> Method {
        self.method
    }

    /// Depolarizing probability the curve was computed with.
    pub fn noise_p(&self) -> f64 {
        self.noise_p
    }

    /// Master seed of the sweep.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Trial substream index; `None` for aggregated curves.
    pub fn trial(&self) -> Option<u64> {
        self.trial
    }

    /// Whether fidelity is non-decreasing on the part of the grid with
    /// `x ≥ x_from` (up to float jitter). Generic noiseless profiles converge
    /// monotonically once past the first few steps; a `false` here flags a
    /// non-generic spectrum rather than an error.
    pub fn is_monotone_after(&self, x_from: usize) -> bool {
        self.x_values
            .iter()
            .zip(self.fidelity.iter())
            .filter(|(&x, _)| x >= x_from)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| *w[1].1 >= *w[0].1 - 1e-12)
    }
}

/// Draws one trial's gates: `n − 2` bulk gates plus the final gate, from the
/// substream `(config.seed, trial)`.
///
/// Draw order is part of the reproducibility contract: `shared_bulk` draws
/// one bulk gate then the final gate; `independent` draws the bulk gates in
/// staircase order and then the final gate.
pub fn sample_trial_gates(config: &ExperimentConfig, trial: u64) -> (Vec<CMat>, CMat) {
    let mut rng = trial_rng(config.seed, trial);
    match config.gate_mode {
        GateMode::SharedBulk => {
            let u = haar_unitary(4, &mut rng);
            let v = haar_unitary(4, &mut rng);
            (vec![u; config.n - 2], v)
        }
        GateMode::Independent => {
            let bulks = (0..config.n - 2).map(|_| haar_unitary(4, &mut rng)).collect();
            let v = haar_unitary(4, &mut rng);
            (bulks, v)
        }
    }
}

/// Computes the fidelity curve for explicit gates: `bulks[j]` acts on the
/// qubit pair `(j, j+1)` and `last` on the final pair. Returns fidelities on
/// the grid `x = 1..=n−1`.
pub fn fidelities_from_gates(
    n: usize,
    method: Method,
    noise_p: f64,
    bulks: &[CMat],
    last: &CMat,
) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::Config(format!(
            "a staircase needs at least 3 qubits, got {n}"
        )));
    }
    if bulks.len() != n - 2 {
        return Err(Error::Shape(format!(
            "need {} bulk gates for {n} qubits, got {}",
            n - 2,
            bulks.len()
        )));
    }
    match method {
        Method::Recursion => {
            let mut seed = base_channel(last)?;
            if noise_p > 0.0 {
                seed = seed.then(&depolarizing(noise_p)?)?;
            }
            let mut phi = seed.into_matrix();
            let mut fidelities = Vec::with_capacity(n - 1);
            // Fidelity of the channel applied to |0⟩⟨0|, evaluated at |0⟩:
            // with column-stacking that is just the superoperator's (0,0).
            fidelities.push(phi[[0, 0]].re);
            for k in 1..=n - 2 {
                let gate = &bulks[n - 2 - k];
                let kernel = if noise_p > 0.0 {
                    TransferKernel::new_noisy(gate, noise_p)?
                } else {
                    TransferKernel::new(gate)?
                };
                phi = kernel.image(&phi);
                fidelities.push(phi[[0, 0]].re);
            }
            Ok(fidelities)
        }
        Method::Mps => {
            if noise_p > 0.0 {
                return Err(Error::Config(
                    "the MPS back-end is noiseless; use recursion or dense".into(),
                ));
            }
            let circuit = build_rewound_convolutional_seq(n, bulks, last)?;
            let state = run_mps(&circuit, 16)?;
            let marginals = state.single_site_marginals();
            // Qubit j is recycled x = n−1−j steps before the end of the
            // protocol; walk from the last recycled qubit back to qubit 0.
            Ok((1..=n - 1).map(|x| marginals[n - 1 - x][[0, 0]].re).collect())
        }
        Method::Dense => {
            let circuit = build_rewound_convolutional_seq(n, bulks, last)?;
            if noise_p > 0.0 {
                let state = run_density(&circuit, &NoiseModel::new(noise_p)?)?;
                (1..=n - 1).map(|x| qubit_fidelity(&state, n - 1 - x)).collect()
            } else {
                let state = run_statevector(&circuit)?;
                (1..=n - 1).map(|x| qubit_fidelity(&state, n - 1 - x)).collect()
            }
        }
    }
}

/// Runs one trial of the configured sweep.
pub fn fidelity_profile(config: &ExperimentConfig, trial: u64) -> Result<FidelityProfile> {
    config.validate()?;
    let (bulks, last) = sample_trial_gates(config, trial);
    let fidelity = fidelities_from_gates(config.n, config.method, config.noise_p, &bulks, &last)?;
    FidelityProfile::new(
        (1..=config.n - 1).collect(),
        fidelity,
        config.method,
        config.noise_p,
        config.seed,
        Some(trial),
    )
}

/// Runs every trial of the sweep in parallel.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<FidelityProfile>> {
    config.validate()?;
    (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| fidelity_profile(config, trial))
        .collect()
}

/// An exponential fit `F(x) ≈ F_∞ − c·e^{−α·x}` of a profile's tail.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Decay rate per rewind step (natural log).
    pub alpha: f64,
    /// Prefactor of the fitted exponential.
    pub c: f64,
    /// Inclusive x range of the points the regression used.
    pub fit_window: (usize, usize),
    /// Root-mean-square residual of the regression in log space.
    pub residual: f64,
}

/// Infidelity window for noiseless fits: below the float noise floor and
/// above the non-asymptotic head are both excluded.
const NOISELESS_WINDOW: (f64, f64) = (1e-12, 1e-1);
/// Minimum number of in-window points for a meaningful regression.
const MIN_FIT_POINTS: usize = 5;

/// Fits the exponential approach of a profile to its limit.
///
/// Noiseless profiles regress `ln(1 − F)` against `x` over the infidelity
/// window `[1e-12, 1e-1]`. Noisy profiles approach a plateau below 1, so the
/// limit is estimated as the largest observed fidelity (nudged up by a
/// relative 1e-9), the plateau fluctuation scale as the mean gap over the
/// last 20 points, and the regression runs on `ln(F_∞ − F)` restricted to
/// points clearly above that fluctuation and within the asymptotic regime.
pub fn fit_decay(profile: &FidelityProfile) -> Result<DecayFit> {
    let xs = profile.x_values();
    let fs = profile.fidelity();
    let points: Vec<(usize, f64)> = if profile.noise_p() == 0.0 {
        xs.iter()
            .zip(fs.iter())
            .filter_map(|(&x, &f)| {
                let gap = 1.0 - f;
                (NOISELESS_WINDOW.0 ..= NOISELESS_WINDOW.1)
                    .contains(&gap)
                    .then(|| (x, gap.ln()))
            })
            .collect()
    } else {
        let f_inf = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * (1.0 + 1e-9);
        let tail = &fs[fs.len().saturating_sub(20)..];
        let fluctuation = tail.iter().map(|f| f_inf - f).sum::<f64>() / tail.len() as f64;
        xs.iter()
            .zip(fs.iter())
            .filter_map(|(&x, &f)| {
                let gap = f_inf - f;
                (gap >= 3.0 * fluctuation && gap <= 0.1).then(|| (x, gap.ln()))
            })
            .collect()
    };
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} point(s) inside the fit window, need at least {MIN_FIT_POINTS}",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|&(x, _)| x as f64).sum();
    let sy: f64 = points.iter().map(|&(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|&(x, _)| (x as f64) * (x as f64)).sum();
    let sxy: f64 = points.iter().map(|&(x, y)| x as f64 * y).sum();
    let denom = m * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::Fit("degenerate x spread in the fit window".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let residual = (points
        .iter()
        .map(|&(x, y)| {
            let err = y - (intercept + slope * x as f64);
            err * err
        })
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        alpha: -slope,
        c: intercept.exp(),
        fit_window: (points[0].0, points[points.len() - 1].0),
        residual,
    })
}

/// Pointwise median of profiles sharing one x grid (lower median for even
/// counts, so aggregation is deterministic). Provenance fields are taken
/// from the first profile, with the trial index cleared.
pub fn aggregate_median(profiles: &[FidelityProfile]) -> Result<FidelityProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Validation("cannot aggregate zero profiles".into()))?;
    if profiles.iter().any(|p| p.x_values() != first.x_values()) {
        return Err(Error::Shape("profiles use different x grids".into()));
    }
    let mut column = Vec::with_capacity(profiles.len());
    let fidelity = (0..first.x_values().len())
        .map(|k| {
            column.clear();
            column.extend(profiles.iter().map(|p| p.fidelity()[k]));
            column.sort_by(|a, b| a.total_cmp(b));
            column[(column.len() - 1) / 2]
        })
        .collect();
    FidelityProfile::new(
        first.x_values().to_vec(),
        fidelity,
        first.method(),
        first.noise_p(),
        first.seed(),
        None,
    )
}

/// Smallest x at which the infidelity has dropped to `epsilon` or below;
/// `None` if the profile never reaches it. `epsilon` is expected in `(0, 1)`.
pub fn steps_to_error(profile: &FidelityProfile, epsilon: f64) -> Option<usize> {
    debug_assert!((0.0..1.0).contains(&epsilon) || epsilon >= 0.0);
    profile
        .x_values()
        .iter()
        .zip(profile.fidelity().iter())
        .find(|(_, &f)| 1.0 - f <= epsilon)
        .map(|(&x, _)| x)
}

/// Writes profiles as CSV: a version header, a column header, then one row
/// `trial,method,noise_p,x,fidelity` per grid point (aggregated curves write
/// `median` in the trial column).
pub fn write_profiles_csv<W: std::io::Write>(
    out: &mut W,
    profiles: &[FidelityProfile],
) -> Result<()> {
    writeln!(out, "# rewindq-csv v1")?;
    writeln!(out, "trial,method,noise_p,x,fidelity")?;
    for profile in profiles {
        let trial = profile
            .trial()
            .map_or_else(|| "median".to_string(), |t| t.to_string());
        for (&x, &f) in profile.x_values().iter().zip(profile.fidelity().iter()) {
            writeln!(
                out,
                "{trial},{},{},{x},{f}",
                profile.method(),
                profile.noise_p()
            )?;
        }
    }
    Ok(())
}

/// Headline numbers of a sweep: median and spread of the per-trial decay
/// rates, the prefactor of the median curve, and its steps to standard
/// error targets.
#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    /// Lower median of the per-trial decay rates.
    pub alpha_median: f64,
    /// Interquartile range of the per-trial decay rates.
    pub alpha_iqr: f64,
    /// Prefactor fitted on the median curve.
    pub c: f64,
    /// Steps for the median curve to reach infidelity 1e-2.
    pub steps_to_1e2: Option<usize>,
    /// Steps for the median curve to reach infidelity 1e-3.
    pub steps_to_1e3: Option<usize>,
}

impl RunSummary {
    /// JSON export with the stable field names.
    pub fn to_json(&self) -> Result<String> {
        let doc = serde_json::json!({
            "alpha_median": self.alpha_median,
            "alpha_iqr": self.alpha_iqr,
            "c": self.c,
            "steps_to_1e-2": self.steps_to_1e2,
            "steps_to_1e-3": self.steps_to_1e3,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Summarizes a sweep: fits every trial (skipping the ones whose curve never
/// enters the fit window), takes the lower median and interquartile range of
/// the rates, and reads the prefactor and error-target steps off the median
/// curve.
pub fn summarize(profiles: &[FidelityProfile]) -> Result<RunSummary> {
    let mut alphas: Vec<f64> = profiles
        .iter()
        .filter_map(|p| fit_decay(p).ok().map(|fit| fit.alpha))
        .collect();
    if alphas.is_empty() {
        return Err(Error::Fit("no trial produced a fittable profile".into()));
    }
    alphas.sort_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| alphas[((alphas.len() - 1) as f64 * q) as usize];
    let median_profile = aggregate_median(profiles)?;
    let median_fit = fit_decay(&median_profile)?;
    Ok(RunSummary {
        alpha_median: quantile(0.5),
        alpha_iqr: quantile(0.75) - quantile(0.25),
        c: median_fit.c,
        steps_to_1e2: steps_to_error(&median_profile, 1e-2),
        steps_to_1e3: steps_to_error(&median_profile, 1e-3),
    })
}
