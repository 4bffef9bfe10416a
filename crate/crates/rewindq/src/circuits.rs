//! Circuit values, idle-qubit analysis, rewinding, and the convolutional
//! (staircase) circuit family.
//!
//! A circuit is an ordered gate list over `width` qubits. The staircase
//! builders produce the family this crate revolves around: a two-qubit gate
//! sliding down the line (`U` on `(0,1)`, `(1,2)`, …, then a final gate `V`
//! on the last pair), optionally followed by the *rewinding* sequence — the
//! adjoints of the already-idle gates in reverse order — which returns the
//! leading qubits toward `|0⟩` so they can be reused.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dagger, is_unitary, CMat, C64};

/// Unitarity tolerance enforced on gate construction.
pub const GATE_UNITARITY_TOL: f64 = 1e-10;

/// A dense unitary gate on an ordered list of target qubits.
///
/// `targets[0]` is the most significant bit of the gate's local index space:
/// a two-qubit gate matrix `G` acts on basis states `|q_{t0} q_{t1}⟩` with
/// `t0`'s bit contributing `2` and `t1`'s bit contributing `1` to the local
/// row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    matrix: CMat,
    targets: Vec<usize>,
}

impl Gate {
    /// Validates and wraps a gate.
    ///
    /// The matrix must be square with dimension `2^targets.len()`, unitary to
    /// [`GATE_UNITARITY_TOL`], and the targets pairwise distinct.
    pub fn new(matrix: CMat, targets: Vec<usize>) -> Result<Self> {
        let dim = 1usize << targets.len();
        if matrix.dim() != (dim, dim) {
            return Err(Error::Shape(format!(
                "gate on {} target(s) needs a {dim}×{dim} matrix, got {}×{}",
                targets.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut seen = BTreeSet::new();
        for &t in &targets {
            if !seen.insert(t) {
                return Err(Error::Validation(format!("duplicate gate target {t}")));
            }
        }
        if !is_unitary(&matrix, GATE_UNITARITY_TOL) {
            return Err(Error::Validation(
                "gate matrix is not unitary within 1e-10".into(),
            ));
        }
        Ok(Self { matrix, targets })
    }

    /// The gate's unitary matrix.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Ordered target qubits (first = most significant local bit).
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// The adjoint gate on the same targets.
    pub fn adjoint(&self) -> Gate {
        Gate {
            matrix: dagger(&self.matrix),
            targets: self.targets.clone(),
        }
    }
}

/// An ordered gate sequence over a fixed number of qubits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
    window: Option<usize>,
}

impl Circuit {
    /// Empty circuit (the identity) on `width` qubits.
    pub fn new(width: usize) -> Self {
        Self {
            width,
            gates: Vec::new(),
            window: None,
        }
    }

    /// Builds a circuit from parts, checking every gate fits the width.
    pub fn with_gates(width: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Circuit::new(width);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    /// Appends a gate after checking its targets against the width.
    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&bad) = gate.targets.iter().find(|&&t| t >= self.width) {
            return Err(Error::Shape(format!(
                "gate target {bad} outside circuit width {}",
                self.width
            )));
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Qubit count.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Gates in application order.
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Declared sliding-window size, when the circuit is convolutional.
    pub fn window(&self) -> Option<usize> {
        self.window
    }

    /// Sets the declared window size.
    pub fn set_window(&mut self, window: Option<usize>) {
        self.window = window;
    }
}

/// A set of qubits no longer touched by the remaining gates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdleSet {
    indices: BTreeSet<usize>,
}

impl IdleSet {
    /// Builds from any collection of indices.
    pub fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self {
            indices: iter.into_iter().collect(),
        }
    }

    /// Membership test.
    pub fn contains(&self, q: usize) -> bool {
        self.indices.contains(&q)
    }

    /// Ascending iteration.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// Number of idle qubits.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// True when no qubit is idle.
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Qubits untouched by every gate from position `split` onward.
///
/// Qubits no gate ever touches are idle as well. `split` may equal the gate
/// count, in which case every qubit is idle.
pub fn idle_qubits(circuit: &Circuit, split: usize) -> Result<IdleSet> {
    if split > circuit.gates.len() {
        return Err(Error::Shape(format!(
            "split {split} beyond gate count {}",
            circuit.gates.len()
        )));
    }
    let mut touched = vec![false; circuit.width];
    for gate in &circuit.gates[split..] {
        for &t in gate.targets() {
            touched[t] = true;
        }
    }
    Ok(IdleSet::from_iter(
        (0..circuit.width).filter(|&q| !touched[q]),
    ))
}

/// The subsequence of `prefix` acting exclusively on `idle` qubits, order
/// preserved.
pub fn restrict_to_idle(prefix: &Circuit, idle: &IdleSet) -> Circuit {
    let gates = prefix
        .gates
        .iter()
        .filter(|g| g.targets().iter().all(|&t| idle.contains(t)))
        .cloned()
        .collect();
    Circuit {
        width: prefix.width,
        gates,
        window: None,
    }
}

/// The rewinding of a gate sequence: gates reversed, each adjointed, targets
/// unchanged. Applying a circuit followed by the rewinding of all its gates
/// is the identity; the operation is an involution.
pub fn rewinding_circuit(sub: &Circuit) -> Circuit {
    Circuit {
        width: sub.width,
        gates: sub.gates.iter().rev().map(Gate::adjoint).collect(),
        window: None,
    }
}

/// Forward staircase: `U` on `(0,1), (1,2), …, (n−3,n−2)`, then `V` on
/// `(n−2,n−1)`. For `n = 2` the circuit is the single gate `V`.
pub fn build_convolutional(n: usize, bulk: &CMat, last: &CMat) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::Shape(format!(
            "convolutional circuit needs at least 2 qubits, got {n}"
        )));
    }
    let mut circuit = Circuit::new(n);
    for i in 0..n.saturating_sub(2) {
        circuit.push(Gate::new(bulk.clone(), vec![i, i + 1])?)?;
    }
    circuit.push(Gate::new(last.clone(), vec![n - 2, n - 1])?)?;
    circuit.set_window(Some(2));
    Ok(circuit)
}

/// Forward staircase followed by the rewinding of every bulk gate (the final
/// gate `V` is not rewound): `U†` on `(n−3,n−2), …, (0,1)`. Total gate count
/// `2n − 3` for `n ≥ 3`, and the bare gate `V` for `n = 2`.
pub fn build_rewound_convolutional(n: usize, bulk: &CMat, last: &CMat) -> Result<Circuit> {
    let mut circuit = build_convolutional(n, bulk, last)?;
    let prefix = Circuit {
        width: n,
        // All gates except the final V.
        gates: circuit.gates[..circuit.gates.len() - 1].to_vec(),
        window: None,
    };
    for gate in rewinding_circuit(&prefix).gates {
        circuit.push(gate)?;
    }
    Ok(circuit)
}

/// Same rewound staircase but with an independent bulk gate at every
/// position: `bulks[i]` acts forward on `(i, i+1)` and its adjoint is
/// rewound in reverse order. `bulks.len()` must be `n − 2`.
pub fn build_rewound_convolutional_seq(n: usize, bulks: &[CMat], last: &CMat) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::Shape(format!(
            "convolutional circuit needs at least 2 qubits, got {n}"
        )));
    }
    if bulks.len() + 2 != n {
        return Err(Error::Shape(format!(
            "need {} bulk gates for width {n}, got {}",
            n - 2,
            bulks.len()
        )));
    }
    let mut circuit = Circuit::new(n);
    for (i, u) in bulks.iter().enumerate() {
        circuit.push(Gate::new(u.clone(), vec![i, i + 1])?)?;
    }
    circuit.push(Gate::new(last.clone(), vec![n - 2, n - 1])?)?;
    for (i, u) in bulks.iter().enumerate().rev() {
        circuit.push(Gate::new(dagger(u), vec![i, i + 1])?)?;
    }
    circuit.set_window(Some(2));
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// Common gate matrices.
// ---------------------------------------------------------------------------

/// Frequently used fixed gates.
pub mod standard_gates {
    use super::{CMat, C64};

    fn mat(d: usize, entries: &[(usize, usize, C64)]) -> CMat {
        let mut m = CMat::zeros((d, d));
        for &(i, j, z) in entries {
            m[[i, j]] = z;
        }
        m
    }

    /// 2×2 identity.
    pub fn identity2() -> CMat {
        ndarray::Array2::eye(2)
    }

    /// Pauli X.
    pub fn pauli_x() -> CMat {
        let one = C64::new(1.0, 0.0);
        mat(2, &[(0, 1, one), (1, 0, one)])
    }

    /// Pauli Y.
    pub fn pauli_y() -> CMat {
        mat(2, &[(0, 1, C64::new(0.0, -1.0)), (1, 0, C64::new(0.0, 1.0))])
    }

    /// Pauli Z.
    pub fn pauli_z() -> CMat {
        mat(2, &[(0, 0, C64::new(1.0, 0.0)), (1, 1, C64::new(-1.0, 0.0))])
    }

    /// Hadamard.
    pub fn hadamard() -> CMat {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        mat(2, &[(0, 0, s), (0, 1, s), (1, 0, s), (1, 1, -s)])
    }

    /// Two-qubit SWAP.
    pub fn swap() -> CMat {
        let one = C64::new(1.0, 0.0);
        mat(4, &[(0, 0, one), (1, 2, one), (2, 1, one), (3, 3, one)])
    }

    /// CNOT with the first (most significant) qubit as control.
    pub fn cnot() -> CMat {
        let one = C64::new(1.0, 0.0);
        mat(4, &[(0, 0, one), (1, 1, one), (2, 3, one), (3, 2, one)])
    }
}

// ---------------------------------------------------------------------------
// JSON serialization: {width, gates:[{targets, matrix:[[re,im],...] row-major}]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GateJson {
    targets: Vec<usize>,
    /// Row-major complex entries as `[re, im]` pairs.
    matrix: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    width: usize,
    gates: Vec<GateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
}

impl Circuit {
    /// Serializes to the crate's JSON schema (row-major `[re, im]` matrices).
    pub fn to_json(&self) -> Result<String> {
        let doc = CircuitJson {
            width: self.width,
            window: self.window,
            gates: self
                .gates
                .iter()
                .map(|g| GateJson {
                    targets: g.targets.clone(),
                    matrix: g
                        .matrix
                        .rows()
                        .into_iter()
                        .flat_map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses the JSON schema, re-validating all invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CircuitJson = serde_json::from_str(text)?;
        let mut circuit = Circuit::new(doc.width);
        for gj in doc.gates {
            let dim = 1usize
                .checked_shl(gj.targets.len() as u32)
                .ok_or_else(|| Error::Shape("gate target list too long".into()))?;
            if gj.matrix.len() != dim * dim {
                return Err(Error::Shape(format!(
                    "gate matrix has {} entries, expected {}",
                    gj.matrix.len(),
                    dim * dim
                )));
            }
            let matrix = CMat::from_shape_fn((dim, dim), |(i, j)| {
                let [re, im] = gj.matrix[i * dim + j];
                C64::new(re, im)
            });
            circuit.push(Gate::new(matrix, gj.targets)?)?;
        }
        circuit.set_window(doc.window);
        Ok(circuit)
    }
}
