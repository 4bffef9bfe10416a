//! Recycling schedules: how many staircase rounds an `n_q`-qubit machine can
//! chain together while keeping the accumulated rewind error below a budget.
//!
//! Running a staircase over `k_0 = n_q` qubits, rewinding, and keeping the
//! `k_1` best-converged qubits as fresh ancillae for the next round (and so
//! on for `t` rounds) effectively simulates a circuit on `Σ k_i` qubits. Each
//! round's keep-set inherits an error `c·e^{−α·(k_{i−1} − k_i)}` from the
//! qubits it recycles, and earlier errors propagate into every later round,
//! so the total is a weighted sum over rounds. This module evaluates that
//! budget exactly, builds constant-gap schedules that honor it, and sizes the
//! measurement-sampling cost of estimating the resulting fidelity.

use serde::Serialize;

use crate::error::{Error, Result};

/// A constant-gap recycling schedule together with its exact error bound.
#[derive(Debug, Clone, Serialize)]
pub struct RecyclingPlan {
    /// Physical qubits available per round.
    pub n_q: usize,
    /// Total error budget the schedule was built for.
    pub epsilon: f64,
    /// Exponential convergence rate of the rewinding protocol.
    pub alpha: f64,
    /// Prefactor of the per-round error `c·e^{−α·gap}`.
    pub c: f64,
    /// Number of recycling rounds actually scheduled.
    pub t: usize,
    /// Constant gap `k_{i−1} − k_i` between consecutive keep-counts.
    pub delta_k: usize,
    /// Keep-counts `k_0 = n_q, k_1, …, k_t`, strictly decreasing, all ≥ 1.
    pub k_values: Vec<usize>,
    /// Exact accumulated error bound of the schedule (≤ `epsilon`).
    pub epsilon_total_bound: f64,
    /// Effective circuit width `Σ k_i` the schedule simulates.
    pub n_circuit: usize,
    /// Set when no schedule beats using the machine without recycling
    /// (`t = 0`, `n_circuit = n_q`).
    pub degenerate: bool,
}

impl RecyclingPlan {
    /// JSON export with every field of the plan.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Exact accumulated error of a keep-count schedule:
/// `Σ_{i=1}^{t} c·(t−i+1)·e^{−α·(k_{i−1} − k_i)}`.
///
/// The weight `t−i+1` counts the rounds that inherit round `i`'s error: an
/// early rewind contaminates every batch recycled after it.
pub fn error_budget(k_values: &[usize], c: f64, alpha: f64) -> Result<f64> {
    if k_values.is_empty() {
        return Err(Error::Validation("schedule needs at least k_0".into()));
    }
    if k_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation(
            "keep-counts must be strictly decreasing".into(),
        ));
    }
    let t = k_values.len() - 1;
    Ok(k_values
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let gap = (w[0] - w[1]) as f64;
            c * (t - i) as f64 * (-alpha * gap).exp()
        })
        .sum())
}

/// Leading-order effective width `α·n_q²/(2·ln(1/ε)·ln n_q)` of a
/// constant-gap schedule. A conservative estimate: exact schedules built by
/// [`constant_gap_plan`] beat it (see its tests), and it first exceeds `n_q`
/// — i.e. first predicts an advantage — near 90 qubits for `ε = 0.01`,
/// `α = 0.22`.
pub fn leading_order_n_circuit(n_q: usize, epsilon: f64, alpha: f64) -> f64 {
    let n = n_q as f64;
    alpha * n * n / (2.0 * (1.0 / epsilon).ln() * n.ln())
}

/// Builds a constant-gap schedule for an `n_q`-qubit machine and error
/// budget `epsilon`, given the rewinding decay parameters `alpha` and `c`.
///
/// The round count starts from `⌊α·n_q/(ln(1/ε)·ln n_q)⌋` and the gap from
/// `⌈ln(c·t²/ε)/α⌉`; both are leading-order estimates, so the exact bound
/// [`error_budget`] is re-evaluated and `t` shrunk until it holds. When no
/// positive round count is feasible the plan degenerates to "use the machine
/// as is" (`t = 0`, `n_circuit = n_q`) with the advisory flag set.
pub fn constant_gap_plan(n_q: usize, epsilon: f64, alpha: f64, c: f64) -> Result<RecyclingPlan> {
    if n_q < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 physical qubits, got {n_q}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Validation(format!(
            "error budget must lie in (0,1), got {epsilon}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Validation(format!(
            "decay rate must be positive, got {alpha}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Validation(format!(
            "decay prefactor must be positive, got {c}"
        )));
    }
    let n = n_q as f64;
    let t_init = (alpha * n / ((1.0 / epsilon).ln() * n.ln())).floor() as usize;
    for t in (1..=t_init).rev() {
        let tf = t as f64;
        let delta_k = ((c * tf * tf / epsilon).ln() / alpha).ceil().max(1.0) as usize;
        // Keep-counts below 1 are unusable; truncating them shortens the
        // schedule to however many full gaps fit.
        let k_values: Vec<usize> = (0..=t)
            .map_while(|i| n_q.checked_sub(i * delta_k).filter(|&k| k >= 1))
            .collect();
        if k_values.len() < 2 {
            continue;
        }
        let epsilon_total_bound = error_budget(&k_values, c, alpha)?;
        if epsilon_total_bound <= epsilon {
            let n_circuit = k_values.iter().sum();
            return Ok(RecyclingPlan {
                n_q,
                epsilon,
                alpha,
                c,
                t: k_values.len() - 1,
                delta_k,
                k_values,
                epsilon_total_bound,
                n_circuit,
                degenerate: false,
            });
        }
    }
    Ok(RecyclingPlan {
        n_q,
        epsilon,
        alpha,
        c,
        t: 0,
        delta_k: 0,
        k_values: vec![n_q],
        epsilon_total_bound: 0.0,
        n_circuit: n_q,
        degenerate: true,
    })
}

/// Smallest machine size (searching `2..=n_max`) whose constant-gap plan is
/// non-degenerate, i.e. where the schedule arithmetic first detects an
/// advantage over running without recycling.
pub fn break_even_qubits(epsilon: f64, alpha: f64, c: f64, n_max: usize) -> Result<Option<usize>> {
    for n_q in 2..=n_max {
        if !constant_gap_plan(n_q, epsilon, alpha, c)?.degenerate {
            return Ok(Some(n_q));
        }
    }
    Ok(None)
}

/// Measurement repetitions needed to estimate an expected infidelity `delta`
/// to additive precision `epsilon_est`: `⌈δ(1−δ)/ε²⌉` (binomial variance).
///
/// Quotients within a relative 1e-9 of an integer snap to it before the
/// ceiling, so exact-ratio inputs are not bumped up by float round-off.
pub fn sample_budget(delta: f64, epsilon_est: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation(format!(
            "expected infidelity must lie in (0,1), got {delta}"
        )));
    }
    if !(epsilon_est > 0.0 && epsilon_est.is_finite()) {
        return Err(Error::Validation(format!(
            "estimation error must be positive, got {epsilon_est}"
        )));
    }
    let q = delta * (1.0 - delta) / (epsilon_est * epsilon_est);
    if !q.is_finite() || q >= u64::MAX as f64 {
        return Err(Error::Numerical(format!(
            "sample budget overflows a 64-bit count (quotient {q:e})"
        )));
    }
    let snapped = q.round();
    let budget = if snapped >= 1.0 && (q - snapped).abs() <= 1e-9 * snapped {
        snapped
    } else {
        q.ceil()
    };
    Ok(budget as u64)
}
