//! Exact circuit simulation back-ends: dense statevector, dense density
//! matrix with depolarizing noise, and a zero-truncation matrix-product-state
//! engine for nearest-neighbor circuits.
//!
//! All three produce the same marginals on circuits they can both run, which
//! is what makes the small-system back-ends usable as brute-force oracles for
//! the channel recursion and the MPS engine usable at widths where dense
//! simulation is impossible. Qubit 0 is the most significant bit of every
//! basis index, and a gate's first target is the most significant bit of its
//! local index.

use ndarray::Array3;

use crate::circuits::Circuit;
use crate::error::{Error, Result};
use crate::linalg::{self, is_hermitian, svd_thin, CMat, CVec, C64};

/// Default qubit cap for dense statevector simulation (16 MiB of amplitudes).
pub const DEFAULT_STATEVECTOR_CAP: usize = 20;
/// Default qubit cap for dense density-matrix simulation.
pub const DEFAULT_DENSITY_CAP: usize = 8;

/// Relative threshold below which singular values are treated as exact
/// zeros (numerical rank detection, not truncation).
const RANK_CUTOFF: f64 = 1e-12;

/// A pure state on `n` qubits: `2ⁿ` amplitudes, unit 2-norm.
#[derive(Debug, Clone)]
pub struct PureState {
    n: usize,
    amplitudes: CVec,
}

impl PureState {
    /// The all-zeros computational basis state.
    pub fn zero(n: usize) -> Self {
        let mut amplitudes = CVec::zeros(1 << n);
        amplitudes[0] = C64::new(1.0, 0.0);
        Self { n, amplitudes }
    }

    /// Wraps an amplitude vector, checking the length and normalization.
    pub fn from_amplitudes(n: usize, amplitudes: CVec) -> Result<Self> {
        if amplitudes.len() != 1 << n {
            return Err(Error::Shape(format!(
                "a {n}-qubit state needs {} amplitudes, got {}",
                1usize << n,
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "state vector must have unit norm, got {norm}"
            )));
        }
        Ok(Self { n, amplitudes })
    }

    /// Qubit count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The amplitude vector (qubit 0 is the most significant index bit).
    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }
}

/// A mixed state on `n` qubits as a dense `2ⁿ × 2ⁿ` density matrix.
#[derive(Debug, Clone)]
pub struct DensityState {
    n: usize,
    matrix: CMat,
}

impl DensityState {
    /// `|0…0⟩⟨0…0|`.
    pub fn zero(n: usize) -> Self {
        let dim = 1 << n;
        let mut matrix = CMat::zeros((dim, dim));
        matrix[[0, 0]] = C64::new(1.0, 0.0);
        Self { n, matrix }
    }

    /// Qubit count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The density matrix.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Checks Hermiticity, unit trace, and positivity (up to 1e-9).
    pub fn validate(&self) -> Result<()> {
        if !is_hermitian(&self.matrix, 1e-9) {
            return Err(Error::Numerical("density matrix is not Hermitian".into()));
        }
        let tr = linalg::trace(&self.matrix);
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let min_eig = linalg::self_adjoint_eigvals(&self.matrix)?
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -1e-9 {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min_eig}"
            )));
        }
        Ok(())
    }
}

/// Per-qubit depolarizing noise applied after every gate on its targets.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    p: f64,
}

impl NoiseModel {
    /// A model that depolarizes each gate target with probability `p`.
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!(
                "depolarizing probability must lie in [0,1], got {p}"
            )));
        }
        Ok(Self { p })
    }

    /// The noiseless model.
    pub fn noiseless() -> Self {
        Self { p: 0.0 }
    }

    /// The per-qubit depolarizing probability.
    pub fn p(&self) -> f64 {
        self.p
    }
}

/// A matrix-product state: site tensors of shape `(bond_left, 2, bond_right)`
/// with open boundary bonds of dimension 1.
#[derive(Debug, Clone)]
pub struct MpsState {
    n: usize,
    tensors: Vec<Array3<C64>>,
    max_bond: usize,
    max_bond_seen: usize,
    truncation_error: f64,
}

impl MpsState {
    /// The all-zeros product state.
    pub fn zero(n: usize, max_bond: usize) -> Self {
        let tensors = (0..n)
            .map(|_| {
                let mut t = Array3::zeros((1, 2, 1));
                t[[0, 0, 0]] = C64::new(1.0, 0.0);
                t
            })
            .collect();
        Self {
            n,
            tensors,
            max_bond,
            max_bond_seen: 1,
            truncation_error: 0.0,
        }
    }

    /// Qubit count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest bond dimension reached during the run.
    pub fn max_bond_seen(&self) -> usize {
        self.max_bond_seen
    }

    /// Accumulated weight of discarded singular values; stays exactly `0.0`
    /// because this engine never truncates — it reduces numerical rank only
    /// (singular values below `1e-12` of the largest) and errors out instead
    /// of capping a genuine bond.
    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    /// Current bond dimensions (length `n − 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors
            .iter()
            .take(self.n.saturating_sub(1))
            .map(|t| t.dim().2)
            .collect()
    }

    /// Reduced density matrix of every qubit, computed with one left and one
    /// right environment sweep — far cheaper than `n` separate
    /// [`Marginals::marginal`] calls on long chains.
    pub fn single_site_marginals(&self) -> Vec<CMat> {
        let site_matrix = |t: &Array3<C64>, s: usize| -> CMat {
            let (chi_l, _, chi_r) = t.dim();
            CMat::from_shape_fn((chi_l, chi_r), |(a, b)| t[[a, s, b]])
        };
        // lefts[k]: bra×ket bond environment of sites < k.
        let mut lefts: Vec<CMat> = Vec::with_capacity(self.n + 1);
        lefts.push(CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0)));
        for t in &self.tensors {
            let prev = lefts.last().expect("seeded above");
            let mut next = CMat::zeros((t.dim().2, t.dim().2));
            for s in 0..2 {
                let a = site_matrix(t, s);
                let a_dag = a.mapv(|z| z.conj()).reversed_axes();
                next = next + a_dag.dot(prev).dot(&a);
            }
            lefts.push(next);
        }
        // rights[k]: bra×ket bond environment of sites ≥ k (stored reversed).
        let mut rights: Vec<CMat> = Vec::with_capacity(self.n + 1);
        rights.push(CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0)));
        for t in self.tensors.iter().rev() {
            let prev = rights.last().expect("seeded above");
            let mut next = CMat::zeros((t.dim().0, t.dim().0));
            for s in 0..2 {
                let a = site_matrix(t, s);
                let a_conj = a.mapv(|z| z.conj());
                next = next + a_conj.dot(prev).dot(&a.reversed_axes());
            }
            rights.push(next);
        }
        (0..self.n)
            .map(|k| {
                let t = &self.tensors[k];
                let left = &lefts[k];
                let right = &rights[self.n - 1 - k];
                CMat::from_shape_fn((2, 2), |(r, c)| {
                    // ρ[r, c] = ⟨bra = c | ket = r⟩ environment contraction.
                    let m = left.dot(&site_matrix(t, r)).dot(&right.t());
                    site_matrix(t, c)
                        .iter()
                        .zip(m.iter())
                        .map(|(bra, ket)| bra.conj() * ket)
                        .sum()
                })
            })
            .collect()
    }

    /// Contracts the chain into a dense statevector (small `n` only).
    pub fn to_statevector(&self) -> Result<PureState> {
        if self.n > DEFAULT_STATEVECTOR_CAP {
            return Err(Error::Resource(format!(
                "refusing to densify a {}-qubit matrix product state",
                self.n
            )));
        }
        // Carry a (basis_index, bond) matrix through the chain.
        let mut acc = CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0));
        for t in &self.tensors {
            let (chi_l, _, chi_r) = t.dim();
            debug_assert_eq!(acc.ncols(), chi_l);
            let rows = acc.nrows();
            let mut next = CMat::zeros((rows * 2, chi_r));
            for r in 0..rows {
                for s in 0..2 {
                    for b in 0..chi_r {
                        let mut z = C64::new(0.0, 0.0);
                        for a in 0..chi_l {
                            z += acc[[r, a]] * t[[a, s, b]];
                        }
                        next[[r * 2 + s, b]] = z;
                    }
                }
            }
            acc = next;
        }
        let amplitudes = CVec::from_iter(acc.column(0).iter().copied());
        PureState::from_amplitudes(self.n, amplitudes)
    }

    fn apply_single(&mut self, m: &CMat, q: usize) {
        let t = &self.tensors[q];
        let (chi_l, _, chi_r) = t.dim();
        let mut out = Array3::zeros((chi_l, 2, chi_r));
        for a in 0..chi_l {
            for b in 0..chi_r {
                for s in 0..2 {
                    let mut z = C64::new(0.0, 0.0);
                    for sp in 0..2 {
                        z += m[[s, sp]] * t[[a, sp, b]];
                    }
                    out[[a, s, b]] = z;
                }
            }
        }
        self.tensors[q] = out;
    }

    /// Applies a two-qubit gate on the adjacent pair `(q, q+1)` with the
    /// matrix ordered so qubit `q` is the most significant local bit.
    fn apply_adjacent(&mut self, m: &CMat, q: usize) -> Result<()> {
        let left = &self.tensors[q];
        let right = &self.tensors[q + 1];
        let (chi_l, _, chi_m) = left.dim();
        let chi_r = right.dim().2;

        // θ[a, s1, s2, b], gate applied on the joint physical index.
        let mut theta = CMat::zeros((chi_l * 2, 2 * chi_r));
        for a in 0..chi_l {
            for b in 0..chi_r {
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let mut raw = C64::new(0.0, 0.0);
                        for t1 in 0..2 {
                            for t2 in 0..2 {
                                let mut contracted = C64::new(0.0, 0.0);
                                for c in 0..chi_m {
                                    contracted += left[[a, t1, c]] * right[[c, t2, b]];
                                }
                                raw += m[[s1 * 2 + s2, t1 * 2 + t2]] * contracted;
                            }
                        }
                        theta[[a * 2 + s1, s2 * chi_r + b]] = raw;
                    }
                }
            }
        }

        let (u, s, vh) = svd_thin(&theta)?;
        let cutoff = s.first().copied().unwrap_or(0.0) * RANK_CUTOFF;
        let rank = s.iter().filter(|&&x| x > cutoff).count().max(1);
        if rank > self.max_bond {
            return Err(Error::Resource(format!(
                "bond dimension {rank} exceeds the configured cap {}",
                self.max_bond
            )));
        }
        self.max_bond_seen = self.max_bond_seen.max(rank);

        let mut new_left = Array3::zeros((chi_l, 2, rank));
        for a in 0..chi_l {
            for s1 in 0..2 {
                for c in 0..rank {
                    new_left[[a, s1, c]] = u[[a * 2 + s1, c]];
                }
            }
        }
        let mut new_right = Array3::zeros((rank, 2, chi_r));
        for c in 0..rank {
            for s2 in 0..2 {
                for b in 0..chi_r {
                    new_right[[c, s2, b]] = C64::new(s[c], 0.0) * vh[[c, s2 * chi_r + b]];
                }
            }
        }
        self.tensors[q] = new_left;
        self.tensors[q + 1] = new_right;
        Ok(())
    }
}

/// Bit mask of qubit `q` in an `n`-qubit basis index (qubit 0 most
/// significant).
fn qubit_mask(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

/// Applies a `k`-qubit gate to a dense amplitude vector, with `targets[0]`
/// the most significant local bit.
fn apply_gate_dense(amps: &mut [C64], n: usize, m: &CMat, targets: &[usize]) {
    let k = targets.len();
    let dk = 1 << k;
    let masks: Vec<usize> = targets.iter().map(|&q| qubit_mask(n, q)).collect();
    let tmask: usize = masks.iter().sum();
    let full = 1usize << n;
    let mut gathered = vec![C64::new(0.0, 0.0); dk];
    for base in 0..full {
        if base & tmask != 0 {
            continue;
        }
        for (local, slot) in gathered.iter_mut().enumerate() {
            let mut idx = base;
            for (b, &mask) in masks.iter().enumerate() {
                if local & (1 << (k - 1 - b)) != 0 {
                    idx |= mask;
                }
            }
            *slot = amps[idx];
        }
        for local_out in 0..dk {
            let mut z = C64::new(0.0, 0.0);
            for (local_in, &g) in gathered.iter().enumerate() {
                z += m[[local_out, local_in]] * g;
            }
            let mut idx = base;
            for (b, &mask) in masks.iter().enumerate() {
                if local_out & (1 << (k - 1 - b)) != 0 {
                    idx |= mask;
                }
            }
            amps[idx] = z;
        }
    }
}

/// Runs a circuit on `|0…0⟩` with the default width cap.
pub fn run_statevector(circuit: &Circuit) -> Result<PureState> {
    run_statevector_with_cap(circuit, DEFAULT_STATEVECTOR_CAP)
}

/// Runs a circuit on `|0…0⟩`, rejecting widths above `cap`.
pub fn run_statevector_with_cap(circuit: &Circuit, cap: usize) -> Result<PureState> {
    let n = circuit.width();
    if n > cap {
        return Err(Error::Resource(format!(
            "statevector simulation capped at {cap} qubits, circuit has {n}"
        )));
    }
    let mut state = PureState::zero(n);
    let amps = state
        .amplitudes
        .as_slice_mut()
        .expect("freshly allocated amplitudes are contiguous");
    for gate in circuit.gates() {
        apply_gate_dense(amps, n, gate.matrix(), gate.targets());
        debug_assert!(
            (amps.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-9,
            "gate application must preserve the norm"
        );
    }
    Ok(state)
}

/// Depolarizes qubit `q` of a density matrix with probability `p`.
fn depolarize_qubit(rho: &CMat, n: usize, q: usize, p: f64) -> CMat {
    let mask = qubit_mask(n, q);
    let dim = rho.nrows();
    CMat::from_shape_fn((dim, dim), |(i, j)| {
        let kept = rho[[i, j]] * (1.0 - p);
        if i & mask == j & mask {
            let (i0, j0) = (i & !mask, j & !mask);
            let (i1, j1) = (i | mask, j | mask);
            kept + C64::new(p / 2.0, 0.0) * (rho[[i0, j0]] + rho[[i1, j1]])
        } else {
            kept
        }
    })
}

/// Runs a circuit on `|0…0⟩⟨0…0|`, applying the gate and then depolarizing
/// each of its targets, with the default width cap.
pub fn run_density(circuit: &Circuit, noise: &NoiseModel) -> Result<DensityState> {
    run_density_with_cap(circuit, noise, DEFAULT_DENSITY_CAP)
}

/// [`run_density`] with an explicit width cap.
pub fn run_density_with_cap(
    circuit: &Circuit,
    noise: &NoiseModel,
    cap: usize,
) -> Result<DensityState> {
    let n = circuit.width();
    if n > cap {
        return Err(Error::Resource(format!(
            "density-matrix simulation capped at {cap} qubits, circuit has {n}"
        )));
    }
    let mut state = DensityState::zero(n);
    let dim = 1usize << n;
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    for gate in circuit.gates() {
        let m = gate.matrix();
        let conj = m.mapv(|z| z.conj());
        // ρ ← UρU†: U along every column, then conj(U) along every row.
        for col in 0..dim {
            for (r, slot) in buf.iter_mut().enumerate() {
                *slot = state.matrix[[r, col]];
            }
            apply_gate_dense(&mut buf, n, m, gate.targets());
            for (r, slot) in buf.iter().enumerate() {
                state.matrix[[r, col]] = *slot;
            }
        }
        for row in 0..dim {
            for (c, slot) in buf.iter_mut().enumerate() {
                *slot = state.matrix[[row, c]];
            }
            apply_gate_dense(&mut buf, n, &conj, gate.targets());
            for (c, slot) in buf.iter().enumerate() {
                state.matrix[[row, c]] = *slot;
            }
        }
        for &q in gate.targets() {
            state.matrix = depolarize_qubit(&state.matrix, n, q, noise.p());
        }
        debug_assert!(
            (linalg::trace(&state.matrix).re - 1.0).abs() < 1e-9,
            "noise and gates must preserve the trace"
        );
    }
    Ok(state)
}

/// Runs a nearest-neighbor circuit through the exact MPS engine.
///
/// Gates must touch a single qubit or an adjacent pair; anything else is an
/// unsupported-topology error. Bond growth beyond `max_bond` is a resource
/// error rather than a truncation.
pub fn run_mps(circuit: &Circuit, max_bond: usize) -> Result<MpsState> {
    let n = circuit.width();
    let mut state = MpsState::zero(n, max_bond);
    for gate in circuit.gates() {
        match *gate.targets() {
            [q] => state.apply_single(gate.matrix(), q),
            [q1, q2] if q2 == q1 + 1 => state.apply_adjacent(gate.matrix(), q1)?,
            [q1, q2] if q1 == q2 + 1 => {
                // Descending pair: reorder the matrix so the lower index is
                // the most significant local bit, then apply ascending.
                let sw = crate::circuits::standard_gates::swap();
                let reordered = sw.dot(gate.matrix()).dot(&sw);
                state.apply_adjacent(&reordered, q2)?;
            }
            ref other => {
                return Err(Error::UnsupportedTopology(format!(
                    "MPS engine handles single-qubit and nearest-neighbor gates, got targets {other:?}"
                )));
            }
        }
    }
    Ok(state)
}

/// Anything that can produce reduced density matrices on qubit subsets.
pub trait Marginals {
    /// Qubit count.
    fn qubit_count(&self) -> usize;

    /// Reduced density matrix on `targets`, in the given order (first target
    /// is the most significant bit of the output index).
    fn marginal(&self, targets: &[usize]) -> Result<CMat>;
}

fn check_targets(n: usize, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Validation("at least one target qubit required".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &q in targets {
        if q >= n {
            return Err(Error::Validation(format!(
                "qubit index {q} out of range for a {n}-qubit state"
            )));
        }
        if !seen.insert(q) {
            return Err(Error::Validation(format!("duplicate target qubit {q}")));
        }
    }
    Ok(())
}

impl Marginals for PureState {
    fn qubit_count(&self) -> usize {
        self.n
    }

    fn marginal(&self, targets: &[usize]) -> Result<CMat> {
        check_targets(self.n, targets)?;
        let k = targets.len();
        let dk = 1usize << k;
        let masks: Vec<usize> = targets.iter().map(|&q| qubit_mask(self.n, q)).collect();
        let tmask: usize = masks.iter().sum();
        let mut rho = CMat::zeros((dk, dk));
        let mut gathered = vec![C64::new(0.0, 0.0); dk];
        for base in 0..(1usize << self.n) {
            if base & tmask != 0 {
                continue;
            }
            for (local, slot) in gathered.iter_mut().enumerate() {
                let mut idx = base;
                for (b, &mask) in masks.iter().enumerate() {
                    if local & (1 << (k - 1 - b)) != 0 {
                        idx |= mask;
                    }
                }
                *slot = self.amplitudes[idx];
            }
            for r in 0..dk {
                for c in 0..dk {
                    rho[[r, c]] += gathered[r] * gathered[c].conj();
                }
            }
        }
        Ok(rho)
    }
}

impl Marginals for DensityState {
    fn qubit_count(&self) -> usize {
        self.n
    }

    fn marginal(&self, targets: &[usize]) -> Result<CMat> {
        check_targets(self.n, targets)?;
        let k = targets.len();
        let dk = 1usize << k;
        let masks: Vec<usize> = targets.iter().map(|&q| qubit_mask(self.n, q)).collect();
        let tmask: usize = masks.iter().sum();
        let spread = |base: usize, local: usize| -> usize {
            let mut idx = base;
            for (b, &mask) in masks.iter().enumerate() {
                if local & (1 << (k - 1 - b)) != 0 {
                    idx |= mask;
                }
            }
            idx
        };
        let mut rho = CMat::zeros((dk, dk));
        for base in 0..(1usize << self.n) {
            if base & tmask != 0 {
                continue;
            }
            for r in 0..dk {
                for c in 0..dk {
                    rho[[r, c]] += self.matrix[[spread(base, r), spread(base, c)]];
                }
            }
        }
        Ok(rho)
    }
}

impl Marginals for MpsState {
    fn qubit_count(&self) -> usize {
        self.n
    }

    fn marginal(&self, targets: &[usize]) -> Result<CMat> {
        check_targets(self.n, targets)?;
        let k = targets.len();
        let mut sorted = targets.to_vec();
        sorted.sort_unstable();

        // Sweep left to right carrying one (bra_bond × ket_bond) environment
        // per accumulated open physical pair, ordered site-ascending.
        let mut envs: Vec<CMat> = vec![CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0))];
        for (site, t) in self.tensors.iter().enumerate() {
            let (chi_l, _, chi_r) = t.dim();
            let is_target = sorted.binary_search(&site).is_ok();
            let mut next: Vec<CMat> = Vec::with_capacity(envs.len() * if is_target { 4 } else { 1 });
            let propagate = |env: &CMat, s_bra: usize, s_ket: usize| -> CMat {
                let mut out = CMat::zeros((chi_r, chi_r));
                for bp in 0..chi_r {
                    for b in 0..chi_r {
                        let mut z = C64::new(0.0, 0.0);
                        for ap in 0..chi_l {
                            for a in 0..chi_l {
                                z += t[[ap, s_bra, bp]].conj() * env[[ap, a]] * t[[a, s_ket, b]];
                            }
                        }
                        out[[bp, b]] = z;
                    }
                }
                out
            };
            if is_target {
                for env in &envs {
                    for s_bra in 0..2 {
                        for s_ket in 0..2 {
                            next.push(propagate(env, s_bra, s_ket));
                        }
                    }
                }
            } else {
                for env in &envs {
                    let mut acc = CMat::zeros((chi_r, chi_r));
                    for s in 0..2 {
                        acc = acc + propagate(env, s, s);
                    }
                    next.push(acc);
                }
            }
            envs = next;
        }

        // Each environment is now 1×1; index m encodes (bra, ket) pairs in
        // site-ascending order, earliest site most significant.
        let dk = 1usize << k;
        let mut rho = CMat::zeros((dk, dk));
        let position_of = |q: usize| sorted.iter().position(|&s| s == q).expect("checked above");
        for (m, env) in envs.iter().enumerate() {
            let mut row = 0usize;
            let mut col = 0usize;
            for (j, &q) in targets.iter().enumerate() {
                let pair = (m >> (2 * (k - 1 - position_of(q)))) & 3;
                let (s_bra, s_ket) = (pair >> 1, pair & 1);
                row |= s_ket << (k - 1 - j);
                col |= s_bra << (k - 1 - j);
            }
            rho[[row, col]] += env[[0, 0]];
        }
        Ok(rho)
    }
}

/// `⟨0|ρ_i|0⟩` for the single-qubit marginal `ρ_i`, clamped to `[0, 1]`.
pub fn qubit_fidelity<S: Marginals>(state: &S, i: usize) -> Result<f64> {
    let rho = state.marginal(&[i])?;
    let f = rho[[0, 0]].re;
    debug_assert!((-1e-9..=1.0 + 1e-9).contains(&f), "fidelity {f} out of range");
    Ok(f.clamp(0.0, 1.0))
}

/// `Tr[ρ_targets · O]` for a Hermitian observable `O` on the given targets.
pub fn expectation<S: Marginals>(state: &S, observable: &CMat, targets: &[usize]) -> Result<f64> {
    let dk = 1usize << targets.len();
    if observable.dim() != (dk, dk) {
        return Err(Error::Shape(format!(
            "observable on {} targets must be {dk}×{dk}, got {}×{}",
            targets.len(),
            observable.nrows(),
            observable.ncols()
        )));
    }
    if !is_hermitian(observable, 1e-10) {
        return Err(Error::Validation(
            "expectation values need a Hermitian observable".into(),
        ));
    }
    let rho = state.marginal(targets)?;
    let mut val = C64::new(0.0, 0.0);
    for r in 0..dk {
        for c in 0..dk {
            val += rho[[r, c]] * observable[[c, r]];
        }
    }
    debug_assert!(val.im.abs() < 1e-9, "expectation of Hermitian observable is real");
    Ok(val.re)
}
