//! Matrix-product states with boundary vectors, and their compilation into
//! staircase circuits.
//!
//! A state is stored as site matrices `A_i^{(s)}` (one `χ×χ` matrix per
//! physical value `s`) between two boundary vectors, with amplitudes
//! `⟨φ_F| A_1^{(s_1)} ⋯ A_n^{(s_n)} |φ_I⟩`. Canonicalization turns every
//! site into an isometry from the virtual space into (virtual ⊗ physical);
//! each isometry then extends to a unitary on one physical qubit plus a
//! `log₂ χ`-qubit virtual register, and interleaving those unitaries with a
//! register relabeling yields the same staircase layout used by the
//! convolutional circuits. The residual virtual register is checked against
//! `φ_F` by projection.

use serde::{Deserialize, Serialize};

use crate::circuits::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{dagger, frobenius_norm, identity, qr_positive, CMat, CVec, C64};
use crate::simulator::PureState;

/// Isometry tolerance used when validating canonicalized sites.
const ISOMETRY_TOL: f64 = 1e-8;
/// Relative diagonal threshold below which a QR step is considered to have
/// hit a rank collapse (the missing directions are padded orthonormally).
const RANK_TOL: f64 = 1e-12;
/// Widest chain the dense contraction oracle will materialize.
const CONTRACT_CAP: usize = 20;

/// A matrix-product state with open boundary vectors.
#[derive(Debug, Clone)]
pub struct BoundaryMps {
    n: usize,
    d: usize,
    chi: usize,
    /// `tensors[site][s]` is the `χ×χ` matrix for physical value `s`.
    tensors: Vec<Vec<CMat>>,
    phi_i: CVec,
    phi_f: CVec,
}

impl BoundaryMps {
    /// Wraps site tensors and boundary vectors, validating all shapes.
    pub fn new(tensors: Vec<Vec<CMat>>, phi_i: CVec, phi_f: CVec) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::Validation("a chain needs at least one site".into()));
        }
        let d = tensors[0].len();
        if d == 0 {
            return Err(Error::Validation("local dimension must be at least 1".into()));
        }
        let chi = phi_i.len();
        if chi == 0 {
            return Err(Error::Validation("bond dimension must be at least 1".into()));
        }
        if phi_f.len() != chi {
            return Err(Error::Shape(format!(
                "boundary vectors disagree: {} vs {} entries",
                chi,
                phi_f.len()
            )));
        }
        for (site, blocks) in tensors.iter().enumerate() {
            if blocks.len() != d {
                return Err(Error::Shape(format!(
                    "site {site} has {} physical blocks, expected {d}",
                    blocks.len()
                )));
            }
            for (s, block) in blocks.iter().enumerate() {
                if block.dim() != (chi, chi) {
                    return Err(Error::Shape(format!(
                        "site {site}, value {s}: block is {}×{}, expected {chi}×{chi}",
                        block.nrows(),
                        block.ncols()
                    )));
                }
            }
        }
        let norm_i = phi_i.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let norm_f = phi_f.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm_i == 0.0 || norm_f == 0.0 {
            return Err(Error::Validation("boundary vectors must be nonzero".into()));
        }
        Ok(Self {
            n,
            d,
            chi,
            tensors,
            phi_i,
            phi_f,
        })
    }

    /// Number of sites.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Physical dimension per site.
    pub fn local_dim(&self) -> usize {
        self.d
    }

    /// Virtual (bond) dimension.
    pub fn bond_dim(&self) -> usize {
        self.chi
    }

    /// The `χ×χ` matrix at `site` for physical value `s`.
    pub fn tensor(&self, site: usize, s: usize) -> &CMat {
        &self.tensors[site][s]
    }

    /// Initial boundary vector (the end the chain is applied to first).
    pub fn phi_i(&self) -> &CVec {
        &self.phi_i
    }

    /// Final boundary vector (contracted against the leftover virtual state).
    pub fn phi_f(&self) -> &CVec {
        &self.phi_f
    }

    /// Whether every site satisfies the isometry condition `W†W = I` at the
    /// given tolerance, where `W` stacks the physical blocks of a site.
    pub fn is_isometric(&self, tol: f64) -> bool {
        self.tensors.iter().all(|blocks| {
            let w = stack_site(blocks, self.chi);
            let gram = dagger(&w).dot(&w);
            frobenius_norm(&(&gram - &identity(self.chi))) <= tol
        })
    }

    /// Serializes to the JSON schema
    /// `{n, d, chi, tensors[site][s][row][col] = [re, im], phi_I, phi_F}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = MpsJson {
            n: self.n,
            d: self.d,
            chi: self.chi,
            tensors: self
                .tensors
                .iter()
                .map(|blocks| {
                    blocks
                        .iter()
                        .map(|m| {
                            (0..self.chi)
                                .map(|r| (0..self.chi).map(|c| pack(m[[r, c]])).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            phi_i: self.phi_i.iter().map(|&z| pack(z)).collect(),
            phi_f: self.phi_f.iter().map(|&z| pack(z)).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses the JSON schema, re-validating all invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MpsJson = serde_json::from_str(text)?;
        // Check nested lengths before building any matrix so allocation stays
        // proportional to the input size.
        if doc.tensors.len() != doc.n {
            return Err(Error::Shape(format!(
                "document claims {} sites but lists {}",
                doc.n,
                doc.tensors.len()
            )));
        }
        if doc.phi_i.len() != doc.chi || doc.phi_f.len() != doc.chi {
            return Err(Error::Shape(
                "boundary vector length disagrees with the declared bond dimension".into(),
            ));
        }
        let mut tensors = Vec::with_capacity(doc.n);
        for (site, blocks) in doc.tensors.iter().enumerate() {
            if blocks.len() != doc.d {
                return Err(Error::Shape(format!(
                    "site {site} lists {} physical blocks, declared d = {}",
                    blocks.len(),
                    doc.d
                )));
            }
            let mut mats = Vec::with_capacity(doc.d);
            for rows in blocks {
                if rows.len() != doc.chi || rows.iter().any(|r| r.len() != doc.chi) {
                    return Err(Error::Shape(format!(
                        "site {site}: block is not {0}×{0}",
                        doc.chi
                    )));
                }
                mats.push(CMat::from_shape_fn((doc.chi, doc.chi), |(r, c)| {
                    unpack(rows[r][c])
                }));
            }
            tensors.push(mats);
        }
        let phi_i = CVec::from_iter(doc.phi_i.iter().map(|&p| unpack(p)));
        let phi_f = CVec::from_iter(doc.phi_f.iter().map(|&p| unpack(p)));
        Self::new(tensors, phi_i, phi_f)
    }
}

#[derive(Serialize, Deserialize)]
struct MpsJson {
    n: usize,
    d: usize,
    chi: usize,
    tensors: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
    #[serde(rename = "phi_I")]
    phi_i: Vec<[f64; 2]>,
    #[serde(rename = "phi_F")]
    phi_f: Vec<[f64; 2]>,
}

fn pack(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpack(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

/// Stacks the physical blocks of one site into the `(d·χ)×χ` matrix whose
/// row `s·χ + β` holds `A^{(s)}[β, ·]` — the site viewed as a map from the
/// virtual space into (physical ⊗ virtual).
fn stack_site(blocks: &[CMat], chi: usize) -> CMat {
    let d = blocks.len();
    CMat::from_shape_fn((d * chi, chi), |(row, col)| {
        blocks[row / chi][[row % chi, col]]
    })
}

/// Inverse of [`stack_site`].
fn unstack_site(w: &CMat, d: usize, chi: usize) -> Vec<CMat> {
    (0..d)
        .map(|s| CMat::from_shape_fn((chi, chi), |(r, c)| w[[s * chi + r, c]]))
        .collect()
}

/// Result of the dense contraction: the normalized state plus the norm of
/// the raw amplitude vector before normalization.
#[derive(Debug, Clone)]
pub struct ContractedState {
    /// The 2-normalized statevector.
    pub state: PureState,
    /// Euclidean norm of the amplitudes before normalization.
    pub norm: f64,
}

/// Contracts the chain into a dense, normalized statevector.
///
/// Restricted to qubit chains (`d = 2`) of at most [`CONTRACT_CAP`] sites;
/// a chain that contracts to the zero vector is a degeneracy error.
pub fn contract(mps: &BoundaryMps) -> Result<ContractedState> {
    if mps.d != 2 {
        return Err(Error::Validation(format!(
            "dense contraction handles qubit chains only, local dimension is {}",
            mps.d
        )));
    }
    if mps.n > CONTRACT_CAP {
        return Err(Error::Resource(format!(
            "contraction capped at {CONTRACT_CAP} sites, chain has {}",
            mps.n
        )));
    }
    // Sweep left to right carrying ⟨φ_F|A_1^{(s_1)}⋯A_i^{(s_i)} as one row
    // vector per physical prefix.
    let mut rows = CMat::from_shape_fn((1, mps.chi), |(_, c)| mps.phi_f[c].conj());
    for blocks in &mps.tensors {
        let prefixes = rows.nrows();
        let mut next = CMat::zeros((prefixes * 2, mps.chi));
        for p in 0..prefixes {
            for (s, block) in blocks.iter().enumerate() {
                for c in 0..mps.chi {
                    let mut z = C64::new(0.0, 0.0);
                    for k in 0..mps.chi {
                        z += rows[[p, k]] * block[[k, c]];
                    }
                    next[[p * 2 + s, c]] = z;
                }
            }
        }
        rows = next;
    }
    let mut amplitudes = CVec::zeros(1 << mps.n);
    for p in 0..amplitudes.len() {
        let mut z = C64::new(0.0, 0.0);
        for k in 0..mps.chi {
            z += rows[[p, k]] * mps.phi_i[k];
        }
        amplitudes[p] = z;
    }
    let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return Err(Error::Numerical(
            "chain contracts to the zero vector (orthogonal boundary data)".into(),
        ));
    }
    let amplitudes = amplitudes.mapv(|z| z / norm);
    Ok(ContractedState {
        state: PureState::from_amplitudes(mps.n, amplitudes)?,
        norm,
    })
}

/// A chain brought to isometric form by [`canonicalize`].
#[derive(Debug, Clone)]
pub struct CanonicalMps {
    /// The rewritten chain; every site passes the isometry condition.
    pub mps: BoundaryMps,
    /// Scalar absorbed when renormalizing the initial boundary vector.
    pub absorbed_norm: f64,
    /// Whether any QR step hit a rank collapse and padded the missing
    /// directions with an orthonormal completion.
    pub rank_padded: bool,
}

/// Rewrites every site tensor as an isometry by a sweep of QR
/// decompositions, pushing the triangular remainders toward the initial
/// boundary vector. The contraction is unchanged up to normalization.
pub fn canonicalize(mps: &BoundaryMps) -> Result<CanonicalMps> {
    let chi = mps.chi;
    let mut tensors = mps.tensors.clone();
    let mut rank_padded = false;
    let mut carry: Option<CMat> = None;
    for site in 0..mps.n {
        if let Some(r) = carry.take() {
            for block in &mut tensors[site] {
                *block = r.dot(block);
            }
        }
        let w = stack_site(&tensors[site], chi);
        let (q, r) = qr_positive(&w);
        let max_diag = (0..chi).map(|j| r[[j, j]].norm()).fold(0.0f64, f64::max);
        if (0..chi).any(|j| r[[j, j]].norm() <= RANK_TOL * max_diag.max(1e-300)) {
            rank_padded = true;
        }
        tensors[site] = unstack_site(&q, mps.d, chi);
        carry = Some(r);
    }
    let r = carry.expect("chain has at least one site");
    let mut phi_i = CVec::zeros(chi);
    for b in 0..chi {
        for a in 0..chi {
            phi_i[b] += r[[b, a]] * mps.phi_i[a];
        }
    }
    let absorbed_norm = phi_i.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if absorbed_norm < 1e-14 {
        return Err(Error::Numerical(
            "canonicalization annihilated the initial boundary vector".into(),
        ));
    }
    let phi_i = phi_i.mapv(|z| z / absorbed_norm);
    let canonical = BoundaryMps::new(tensors, phi_i, mps.phi_f.clone())?;
    debug_assert!(canonical.is_isometric(1e-10));
    Ok(CanonicalMps {
        mps: canonical,
        absorbed_norm,
        rank_padded,
    })
}

/// Extends an isometry `V` (a `(d·χ)×χ` matrix with `V†V = I`) to a
/// `(d·χ)×(d·χ)` unitary whose first `χ` columns are exactly `V`, so that
/// `U(|0⟩⊗I) = V` with the physical factor as the most significant index.
///
/// The remaining columns come from a deterministic orthonormal completion
/// against the standard basis, so repeated runs give identical circuits.
pub fn isometry_to_unitary(v: &CMat) -> Result<CMat> {
    let (rows, cols) = v.dim();
    if cols == 0 || rows < cols || rows % cols != 0 {
        return Err(Error::Shape(format!(
            "a virtual-to-(physical ⊗ virtual) isometry must be (d·χ)×χ, got {rows}×{cols}"
        )));
    }
    let gram = dagger(v).dot(v);
    let defect = frobenius_norm(&(&gram - &identity(cols)));
    if defect > ISOMETRY_TOL {
        return Err(Error::Validation(format!(
            "input is not an isometry: ‖V†V − I‖ = {defect:.3e}"
        )));
    }
    let mut columns: Vec<CVec> = (0..cols)
        .map(|j| CVec::from_iter((0..rows).map(|i| v[[i, j]])))
        .collect();
    for k in 0..rows {
        if columns.len() == rows {
            break;
        }
        let mut cand = CVec::zeros(rows);
        cand[k] = C64::new(1.0, 0.0);
        // Two passes of modified Gram–Schmidt for numerical orthogonality.
        for _ in 0..2 {
            for col in &columns {
                let overlap = col
                    .iter()
                    .zip(cand.iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum::<C64>();
                for i in 0..rows {
                    let sub = overlap * col[i];
                    cand[i] -= sub;
                }
            }
        }
        let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            columns.push(cand.mapv(|z| z / norm));
        }
    }
    if columns.len() != rows {
        return Err(Error::Numerical(
            "orthonormal completion failed to span the full space".into(),
        ));
    }
    Ok(CMat::from_shape_fn((rows, rows), |(i, j)| columns[j][i]))
}

/// The relabeling permutation sending (physical ⊗ virtual) to
/// (virtual ⊗ physical): basis state `s·χ + α ↦ α·d + s`.
fn flip_permutation(d: usize, chi: usize) -> CMat {
    let dim = d * chi;
    let mut f = CMat::zeros((dim, dim));
    for s in 0..d {
        for alpha in 0..chi {
            f[[alpha * d + s, s * chi + alpha]] = C64::new(1.0, 0.0);
        }
    }
    f
}

/// Zero-pads the bond dimension up to the next power of two, leaving the
/// contraction unchanged (the padded directions never mix with the chain).
pub fn embed_bond_to_power_of_two(mps: &BoundaryMps) -> BoundaryMps {
    let chi = mps.chi.next_power_of_two();
    if chi == mps.chi {
        return mps.clone();
    }
    let tensors = mps
        .tensors
        .iter()
        .map(|blocks| {
            blocks
                .iter()
                .map(|m| {
                    CMat::from_shape_fn((chi, chi), |(r, c)| {
                        if r < mps.chi && c < mps.chi {
                            m[[r, c]]
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                })
                .collect()
        })
        .collect();
    let pad = |v: &CVec| {
        let mut out = CVec::zeros(chi);
        for (i, &z) in v.iter().enumerate() {
            out[i] = z;
        }
        out
    };
    BoundaryMps::new(tensors, pad(&mps.phi_i), pad(&mps.phi_f))
        .expect("padding preserves validity")
}

/// Compiles a qubit chain with power-of-two bond dimension into a staircase
/// circuit on `n + b` qubits, `b = log₂ χ`.
///
/// Layout: qubits `0..b` form the residual virtual register (to be checked
/// against `φ_F`, e.g. with [`project_virtual`]); qubit `b + j` carries
/// physical site `j`. The circuit prepares the initial boundary vector on
/// the bottom `b` qubits, then applies one completed site unitary per site,
/// from the last site up to the first, each acting on a physical qubit and
/// the `b` qubits below it.
pub fn mps_to_circuit(mps: &BoundaryMps) -> Result<Circuit> {
    if mps.d != 2 {
        return Err(Error::Validation(format!(
            "circuit compilation handles qubit chains only, local dimension is {}",
            mps.d
        )));
    }
    if !mps.chi.is_power_of_two() {
        return Err(Error::UnsupportedTopology(format!(
            "bond dimension {} is not a power of two; embed it first if zero-padding is acceptable",
            mps.chi
        )));
    }
    let b = mps.chi.trailing_zeros() as usize;
    let canonical = canonicalize(mps)?;
    let chain = &canonical.mps;
    let flip = flip_permutation(2, chain.chi);
    let mut circuit = Circuit::new(chain.n + b);
    if b > 0 {
        // State preparation for the initial boundary vector: any unitary
        // whose first column is φ_I, acting on the bottom b qubits.
        let column = CMat::from_shape_fn((chain.chi, 1), |(i, _)| chain.phi_i[i]);
        let prep = isometry_to_unitary(&column)?;
        circuit.push(Gate::new(prep, (chain.n..chain.n + b).collect())?)?;
    }
    for site in (0..chain.n).rev() {
        let w = stack_site(&chain.tensors[site], chain.chi);
        let mut unitary = flip.dot(&isometry_to_unitary(&w)?);
        if b == 0 {
            // No virtual wire exists to carry the boundary scalars; fold the
            // (unit-modulus) initial phase into the first applied gate.
            if site == chain.n - 1 {
                let phase = chain.phi_i[0];
                unitary = unitary.mapv(|z| z * phase);
            }
        }
        circuit.push(Gate::new(unitary, (site..=site + b).collect())?)?;
    }
    Ok(circuit)
}

/// Projects the top `virtual_width` qubits of a state onto `phi_f`,
/// returning the normalized remainder and the landing probability.
pub fn project_virtual(
    state: &PureState,
    virtual_width: usize,
    phi_f: &CVec,
) -> Result<(PureState, f64)> {
    let b = virtual_width;
    if state.n() < b {
        return Err(Error::Shape(format!(
            "cannot project {b} virtual qubits out of a {}-qubit state",
            state.n()
        )));
    }
    if phi_f.len() != 1 << b {
        return Err(Error::Shape(format!(
            "boundary vector has {} entries, virtual register holds {}",
            phi_f.len(),
            1usize << b
        )));
    }
    let fnorm = phi_f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if fnorm == 0.0 {
        return Err(Error::Validation("cannot project onto the zero vector".into()));
    }
    let n_phys = state.n() - b;
    let block = 1usize << n_phys;
    let mut reduced = CVec::zeros(block);
    for v in 0..(1usize << b) {
        let weight = phi_f[v].conj() / fnorm;
        for p in 0..block {
            reduced[p] += weight * state.amplitudes()[v * block + p];
        }
    }
    let prob = reduced.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if prob < 1e-12 {
        return Err(Error::Numerical(
            "virtual register is orthogonal to the requested boundary vector".into(),
        ));
    }
    let reduced = reduced.mapv(|z| z / prob.sqrt());
    Ok((PureState::from_amplitudes(n_phys, reduced)?, prob))
}

/// GHZ chain `(|0…0⟩ + |1…1⟩)/√2` with bond dimension 2.
pub fn ghz_mps(n: usize) -> BoundaryMps {
    let a0 = CMat::from_shape_fn((2, 2), |(r, c)| {
        C64::new(if r == 0 && c == 0 { 1.0 } else { 0.0 }, 0.0)
    });
    let a1 = CMat::from_shape_fn((2, 2), |(r, c)| {
        C64::new(if r == 1 && c == 1 { 1.0 } else { 0.0 }, 0.0)
    });
    let phi = CVec::from_iter([
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ]);
    BoundaryMps::new(vec![vec![a0, a1]; n], phi.clone(), phi).expect("fixed shapes")
}

/// W chain `(|10…0⟩ + |010…0⟩ + … + |0…01⟩)/√n` with bond dimension 2.
pub fn w_state_mps(n: usize) -> BoundaryMps {
    let a0 = identity(2);
    let mut a1 = CMat::zeros((2, 2));
    a1[[1, 0]] = C64::new(1.0, 0.0);
    let mut phi_i = CVec::zeros(2);
    phi_i[0] = C64::new(1.0, 0.0);
    let mut phi_f = CVec::zeros(2);
    phi_f[1] = C64::new(1.0, 0.0);
    BoundaryMps::new(vec![vec![a0, a1]; n], phi_i, phi_f).expect("fixed shapes")
}

/// 1D cluster chain (`H` on every qubit, then `CZ` on every adjacent pair)
/// with bond dimension 2.
pub fn cluster_state_mps(n: usize) -> BoundaryMps {
    let mut a0 = CMat::zeros((2, 2));
    a0[[0, 0]] = C64::new(1.0, 0.0);
    a0[[0, 1]] = C64::new(1.0, 0.0);
    let mut a1 = CMat::zeros((2, 2));
    a1[[1, 0]] = C64::new(1.0, 0.0);
    a1[[1, 1]] = C64::new(-1.0, 0.0);
    let mut phi_i = CVec::zeros(2);
    phi_i[0] = C64::new(1.0, 0.0);
    let phi_f = CVec::from_iter([C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
    BoundaryMps::new(vec![vec![a0, a1]; n], phi_i, phi_f).expect("fixed shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::standard_gates::hadamard;
    use crate::experiments::haar_unitary;
    use crate::linalg::{is_unitary, spectral_norm};
    use crate::rng::trial_rng;
    use crate::simulator::run_statevector;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_mps<R: Rng>(n: usize, chi: usize, rng: &mut R) -> BoundaryMps {
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let mut blocks = Vec::with_capacity(2);
            for _ in 0..2 {
                let mut m = CMat::zeros((chi, chi));
                for r in 0..chi {
                    for c in 0..chi {
                        m[[r, c]] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    }
                }
                blocks.push(m);
            }
            tensors.push(blocks);
        }
        let mut raw_i = CVec::zeros(chi);
        let mut raw_f = CVec::zeros(chi);
        for k in 0..chi {
            raw_i[k] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            raw_f[k] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        BoundaryMps::new(tensors, raw_i, raw_f).unwrap()
    }

    fn fidelity(a: &PureState, b: &PureState) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes().iter())
            .map(|(x, y)| x.conj() * y)
            .sum::<C64>()
            .norm_sqr()
    }

    /// Compile, simulate, project the virtual register, and compare with
    /// the dense contraction.
    fn compile_and_check(mps: &BoundaryMps) -> (f64, f64) {
        let circuit = mps_to_circuit(mps).unwrap();
        let b = mps.bond_dim().trailing_zeros() as usize;
        assert_eq!(circuit.width(), mps.n() + b);
        let state = run_statevector(&circuit).unwrap();
        let (projected, prob) = project_virtual(&state, b, mps.phi_f()).unwrap();
        let oracle = contract(mps).unwrap();
        (fidelity(&projected, &oracle.state), prob)
    }

    #[test]
    fn builders_reject_bad_input() {
        let blocks = vec![vec![identity(2), identity(2)]];
        let phi2 = CVec::from_iter([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let phi3 = CVec::zeros(3);
        assert!(BoundaryMps::new(vec![], phi2.clone(), phi2.clone()).is_err());
        assert!(BoundaryMps::new(blocks.clone(), phi2.clone(), phi3).is_err());
        assert!(BoundaryMps::new(blocks.clone(), CVec::zeros(2), phi2.clone()).is_err());
        let skewed = vec![vec![identity(2), identity(3)]];
        assert!(BoundaryMps::new(skewed, phi2.clone(), phi2).is_err());
    }

    #[test]
    fn product_chain_contracts_to_basis_state() {
        let a0 = CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0));
        let a1 = CMat::from_shape_fn((1, 1), |_| C64::new(0.0, 0.0));
        let phi = CVec::from_iter([C64::new(1.0, 0.0)]);
        let mps = BoundaryMps::new(vec![vec![a0, a1]; 3], phi.clone(), phi).unwrap();
        let out = contract(&mps).unwrap();
        assert_abs_diff_eq!(out.state.amplitudes()[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(out.norm, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ghz_contraction_matches_closed_form() {
        let out = contract(&ghz_mps(4)).unwrap();
        let amps = out.state.amplitudes();
        let root_half = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(amps[0].re, root_half, epsilon = 1e-12);
        assert_abs_diff_eq!(amps[15].re, root_half, epsilon = 1e-12);
        for k in 1..15 {
            assert!(amps[k].norm() < 1e-14);
        }
        // Pre-normalization norm: two branches of weight 1/2 each.
        assert_abs_diff_eq!(out.norm, root_half, epsilon = 1e-12);
    }

    #[test]
    fn w_contraction_matches_closed_form() {
        let n = 5;
        let out = contract(&w_state_mps(n)).unwrap();
        let expect = 1.0 / (n as f64).sqrt();
        for k in 0..(1usize << n) {
            let want = if k.count_ones() == 1 { expect } else { 0.0 };
            assert_abs_diff_eq!(out.state.amplitudes()[k].re, want, epsilon = 1e-12);
            assert!(out.state.amplitudes()[k].im.abs() < 1e-14);
        }
    }

    #[test]
    fn cluster_contraction_matches_gate_construction() {
        let n = 5;
        let out = contract(&cluster_state_mps(n)).unwrap();
        // Oracle: Hadamard everywhere, then CZ on each adjacent pair.
        let mut cz = identity(4);
        cz[[3, 3]] = C64::new(-1.0, 0.0);
        let mut circuit = Circuit::new(n);
        for q in 0..n {
            circuit.push(Gate::new(hadamard(), vec![q]).unwrap()).unwrap();
        }
        for q in 0..n - 1 {
            circuit.push(Gate::new(cz.clone(), vec![q, q + 1]).unwrap()).unwrap();
        }
        let oracle = run_statevector(&circuit).unwrap();
        for k in 0..(1usize << n) {
            assert!(
                (out.state.amplitudes()[k] - oracle.amplitudes()[k]).norm() < 1e-12,
                "amplitude {k}"
            );
        }
    }

    #[test]
    fn degenerate_boundaries_are_reported() {
        let a = CMat::from_shape_fn((2, 2), |(r, c)| {
            C64::new(if r == 0 && c == 0 { 1.0 } else { 0.0 }, 0.0)
        });
        let mut phi_i = CVec::zeros(2);
        phi_i[0] = C64::new(1.0, 0.0);
        let mut phi_f = CVec::zeros(2);
        phi_f[1] = C64::new(1.0, 0.0);
        let mps = BoundaryMps::new(vec![vec![a.clone(), a]; 3], phi_i, phi_f).unwrap();
        assert!(matches!(contract(&mps), Err(Error::Numerical(_))));
    }

    #[test]
    fn contraction_respects_the_site_cap() {
        let a0 = CMat::from_shape_fn((1, 1), |_| C64::new(1.0, 0.0));
        let a1 = CMat::from_shape_fn((1, 1), |_| C64::new(0.0, 0.0));
        let phi = CVec::from_iter([C64::new(1.0, 0.0)]);
        let mps = BoundaryMps::new(vec![vec![a0, a1]; 25], phi.clone(), phi).unwrap();
        assert!(matches!(contract(&mps), Err(Error::Resource(_))));
    }

    #[test]
    fn canonicalize_makes_random_sites_isometric() {
        let mut rng = trial_rng(51, 0);
        let mps = random_mps(6, 3, &mut rng);
        assert!(!mps.is_isometric(1e-10));
        let canon = canonicalize(&mps).unwrap();
        assert!(canon.mps.is_isometric(1e-10));
        assert!(canon.absorbed_norm > 0.0);
        // Contraction is preserved up to normalization.
        let before = contract(&mps).unwrap();
        let after = contract(&canon.mps).unwrap();
        assert!(fidelity(&before.state, &after.state) > 1.0 - 1e-10);
        // And the recorded scalar ties the two raw norms together: the raw
        // boundary norms divide out since contract() reports them.
        assert_abs_diff_eq!(
            after.norm * canon.absorbed_norm,
            before.norm,
            epsilon = 1e-9 * before.norm.max(1.0)
        );
    }

    #[test]
    fn canonicalize_is_idempotent_and_fixes_isometric_input() {
        let ghz = ghz_mps(4);
        assert!(ghz.is_isometric(1e-12));
        let canon = canonicalize(&ghz).unwrap();
        assert!(!canon.rank_padded);
        assert_abs_diff_eq!(canon.absorbed_norm, 1.0, epsilon = 1e-12);
        for site in 0..4 {
            for s in 0..2 {
                let diff = canon.mps.tensor(site, s) - ghz.tensor(site, s);
                assert!(frobenius_norm(&diff) < 1e-12);
            }
        }
        let mut rng = trial_rng(52, 0);
        let twice = canonicalize(&canonicalize(&random_mps(5, 3, &mut rng)).unwrap().mps).unwrap();
        assert_abs_diff_eq!(twice.absorbed_norm, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn canonicalize_flags_rank_collapse() {
        // One physical block and a zero block: the stacked site has rank 1.
        let mut a0 = CMat::zeros((2, 2));
        a0[[0, 0]] = C64::new(1.0, 0.0);
        let a1 = CMat::zeros((2, 2));
        let mut phi = CVec::zeros(2);
        phi[0] = C64::new(1.0, 0.0);
        let mps = BoundaryMps::new(vec![vec![a0, a1]; 3], phi.clone(), phi).unwrap();
        let canon = canonicalize(&mps).unwrap();
        assert!(canon.rank_padded);
        assert!(canon.mps.is_isometric(1e-10));
        let before = contract(&mps).unwrap();
        let after = contract(&canon.mps).unwrap();
        assert!(fidelity(&before.state, &after.state) > 1.0 - 1e-10);
    }

    #[test]
    fn isometry_completion_examples() {
        // V = |0⟩⊗I: already the first block of the identity.
        let v = CMat::from_shape_fn((4, 2), |(i, j)| {
            C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
        });
        let u = isometry_to_unitary(&v).unwrap();
        assert!(frobenius_norm(&(&u - &identity(4))) < 1e-12);

        // χ = 1: a single normalized column.
        let mut rng = trial_rng(53, 0);
        let haar = haar_unitary(4, &mut rng);
        let column = CMat::from_shape_fn((4, 1), |(i, _)| haar[[i, 0]]);
        let u = isometry_to_unitary(&column).unwrap();
        assert!(is_unitary(&u, 1e-10));
        for i in 0..4 {
            assert!((u[[i, 0]] - column[[i, 0]]).norm() < 1e-12);
        }

        // Random 8×4 isometry via QR.
        let raw = CMat::from_shape_fn((8, 4), |_| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let (q, _) = qr_positive(&raw);
        let u = isometry_to_unitary(&q).unwrap();
        assert!(is_unitary(&u, 1e-10));
        let restricted = CMat::from_shape_fn((8, 4), |(i, j)| u[[i, j]]);
        assert!(spectral_norm(&(&restricted - &q)).unwrap() < 1e-10);

        // Non-isometric input is rejected.
        let bad = raw.mapv(|z| z * C64::new(2.0, 0.0));
        assert!(matches!(isometry_to_unitary(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn ghz_circuit_prepares_ghz() {
        let mps = ghz_mps(6);
        let (fid, prob) = compile_and_check(&mps);
        assert!(fid >= 1.0 - 1e-9, "fidelity {fid}");
        // The leftover virtual register is (|0⟩+|1⟩)/√2-correlated with the
        // chain, so the boundary projection lands with probability 1/2.
        assert_abs_diff_eq!(prob, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn w_and_cluster_circuits_prepare_their_states() {
        for mps in [w_state_mps(6), cluster_state_mps(6)] {
            let (fid, prob) = compile_and_check(&mps);
            assert!(fid >= 1.0 - 1e-9, "fidelity {fid}");
            assert!(prob > 1e-3, "landing probability {prob}");
        }
    }

    #[test]
    fn product_chain_compiles_to_single_qubit_gates() {
        let mut rng = trial_rng(54, 0);
        let n = 5;
        let tensors: Vec<Vec<CMat>> = (0..n)
            .map(|_| {
                let u = haar_unitary(2, &mut rng);
                (0..2)
                    .map(|s| CMat::from_shape_fn((1, 1), |_| u[[s, 0]]))
                    .collect()
            })
            .collect();
        let phi = CVec::from_iter([C64::new(0.6, 0.8)]);
        let mps = BoundaryMps::new(tensors, phi.clone(), phi).unwrap();
        let circuit = mps_to_circuit(&mps).unwrap();
        assert_eq!(circuit.width(), n);
        assert_eq!(circuit.gates().len(), n);
        assert!(circuit.gates().iter().all(|g| g.targets().len() == 1));
        let state = run_statevector(&circuit).unwrap();
        let oracle = contract(&mps).unwrap();
        assert!(fidelity(&state, &oracle.state) >= 1.0 - 1e-9);
    }

    #[test]
    fn random_chains_compile_end_to_end() {
        let mut rng = trial_rng(55, 0);
        for (trial, &(n, chi)) in [(5usize, 1usize), (6, 2), (8, 2), (5, 4), (7, 4)]
            .iter()
            .enumerate()
        {
            let mps = random_mps(n, chi, &mut rng);
            let (fid, prob) = compile_and_check(&mps);
            assert!(
                fid >= 1.0 - 1e-9,
                "trial {trial} (n = {n}, χ = {chi}): fidelity {fid}"
            );
            assert!(prob > 1e-9, "trial {trial}: landing probability {prob}");
        }
    }

    #[test]
    fn odd_bond_dimension_needs_explicit_embedding() {
        let mut rng = trial_rng(56, 0);
        let mps = random_mps(5, 3, &mut rng);
        assert!(matches!(
            mps_to_circuit(&mps),
            Err(Error::UnsupportedTopology(_))
        ));
        let embedded = embed_bond_to_power_of_two(&mps);
        assert_eq!(embedded.bond_dim(), 4);
        // Padding leaves the contraction untouched.
        let a = contract(&mps).unwrap();
        let b = contract(&embedded).unwrap();
        assert!(fidelity(&a.state, &b.state) > 1.0 - 1e-12);
        assert_abs_diff_eq!(a.norm, b.norm, epsilon = 1e-12);
        let (fid, _) = compile_and_check(&embedded);
        assert!(fid >= 1.0 - 1e-9, "fidelity {fid}");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = trial_rng(57, 0);
        for mps in [ghz_mps(4), random_mps(3, 3, &mut rng)] {
            let text = mps.to_json().unwrap();
            let back = BoundaryMps::from_json(&text).unwrap();
            assert_eq!(back.n(), mps.n());
            assert_eq!(back.local_dim(), mps.local_dim());
            assert_eq!(back.bond_dim(), mps.bond_dim());
            for site in 0..mps.n() {
                for s in 0..mps.local_dim() {
                    assert_eq!(back.tensor(site, s), mps.tensor(site, s));
                }
            }
            assert_eq!(back.phi_i(), mps.phi_i());
            assert_eq!(back.phi_f(), mps.phi_f());
        }
    }

    #[test]
    fn json_rejects_malformed_documents() {
        assert!(BoundaryMps::from_json("not json").is_err());
        assert!(BoundaryMps::from_json("{}").is_err());
        // Declared shapes must match the listed data.
        let text = ghz_mps(3).to_json().unwrap();
        let lying = text.replace("\"n\": 3", "\"n\": 4");
        assert!(BoundaryMps::from_json(&lying).is_err());
        let lying = text.replace("\"chi\": 2", "\"chi\": 3");
        assert!(BoundaryMps::from_json(&lying).is_err());
    }
}
