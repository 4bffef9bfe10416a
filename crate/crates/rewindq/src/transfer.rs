//! Transfer operators on one-qubit channel space.
//!
//! One rewinding step — a forward two-qubit gate `U`, the channel `Φ`
//! carried on the lower qubit, then the rewind gate `U†` — induces a linear
//! map on channels:
//!
//! ```text
//! T_U[Φ] = Tr_B ∘ 𝒰† ∘ (ℐ_A ⊗ Φ) ∘ 𝒰 ∘ 𝓔,      𝓔(ρ) = ρ ⊗ |0⟩⟨0|,
//! ```
//!
//! where `A` is the first tensor factor, `𝒰(ρ) = UρU†`, and composition reads
//! right to left in circuit time order. On column-stacked one-qubit
//! superoperators this is a `16 × 16` matrix. The identity channel is always
//! a fixed point, every eigenvalue has modulus at most one, and the modulus
//! `λ₂` of the largest non-unit eigenvalue sets the convergence rate of the
//! iteration `Φ_{k+1} = T_U[Φ_k]`.
//!
//! This module builds the matrix (noiseless and with depolarizing noise
//! attached after both gates), iterates it, extracts spectra, estimates
//! contraction coefficients on channel differences, and measures operator
//! norms between transfer operators. Norms here are unnormalized Frobenius /
//! spectral norms of the underlying matrices (the Choi reshuffle is a
//! Frobenius isometry, so these agree with Choi-matrix norms entrywise).

use ndarray::s;
use rand::Rng;

use crate::channels::{depolarizing_on_targets, Superoperator};
use crate::error::{Error, Result};
use crate::experiments::haar_unitary;
use crate::linalg::{
    self, dagger, frobenius_norm, is_unitary, kron, partial_trace_second, singular_values,
    spectral_norm, unvec_col, vec_col, CMat, C64,
};
use crate::rng::trial_rng;

/// Tolerance for accepting a gate matrix as unitary.
const UNITARY_TOL: f64 = 1e-10;

/// Eigenvalues within this modulus of the unit circle leave the contraction
/// hypothesis (a unique unit eigenvector) unverifiable.
const GENERIC_GAP: f64 = 1e-9;

/// The linear action of one forward/rewind gate pair on channel space.
///
/// `matrix` acts on column-stacked superoperator matrices: for a one-qubit
/// channel the input is the 16-vector `vec(S_Φ)` and the output `vec(S_{T[Φ]})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOperator {
    dim_a: usize,
    dim_b: usize,
    matrix: CMat,
}

impl TransferOperator {
    /// Wraps a raw `dim_a⁴ × dim_b⁴` matrix.
    pub fn from_matrix(dim_a: usize, dim_b: usize, matrix: CMat) -> Result<Self> {
        let (rows, cols) = (dim_a.pow(4), dim_b.pow(4));
        if matrix.dim() != (rows, cols) {
            return Err(Error::Shape(format!(
                "transfer operator between dimensions {dim_b} and {dim_a} needs a \
                 {rows}×{cols} matrix, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            dim_a,
            dim_b,
            matrix,
        })
    }

    /// Output Hilbert-space dimension.
    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    /// Input Hilbert-space dimension.
    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    /// The underlying matrix on vectorized superoperators.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Applies the transfer operator to a channel.
    pub fn apply(&self, phi: &Superoperator) -> Result<Superoperator> {
        if phi.dim() != self.dim_b {
            return Err(Error::Shape(format!(
                "transfer operator expects a channel on dimension {}, got {}",
                self.dim_b,
                phi.dim()
            )));
        }
        let img = self.matrix.dot(&vec_col(phi.matrix()));
        Superoperator::from_matrix(self.dim_a, unvec_col(&img, self.dim_a * self.dim_a))
    }
}

/// Precomputed forward/rewind conjugation superoperators for one staircase
/// step, with optional depolarizing noise folded in after each gate. This is
/// the hot path of the recursion: one `image` call advances the carried
/// channel by one step without materializing the 16×16 transfer matrix.
#[derive(Debug, Clone)]
pub(crate) struct TransferKernel {
    su: CMat,
    sud: CMat,
}

impl TransferKernel {
    /// Noiseless kernel for the gate `U`.
    pub(crate) fn new(u: &CMat) -> Result<Self> {
        if u.dim() != (4, 4) || !is_unitary(u, UNITARY_TOL) {
            return Err(Error::Validation(
                "transfer operators require a 4×4 unitary gate matrix".into(),
            ));
        }
        let ud = dagger(u);
        Ok(Self {
            su: kron(&u.mapv(|z| z.conj()), u),
            sud: kron(&ud.mapv(|z| z.conj()), &ud),
        })
    }

    /// Kernel with `D_p ⊗ D_p` attached after the forward gate and after the
    /// rewind gate.
    pub(crate) fn new_noisy(u: &CMat, p: f64) -> Result<Self> {
        let base = Self::new(u)?;
        let noise = depolarizing_on_targets(p, 2)?;
        Ok(Self {
            su: noise.matrix().dot(&base.su),
            sud: noise.matrix().dot(&base.sud),
        })
    }

    /// Image of a one-qubit superoperator (as its raw 4×4 matrix) under the
    /// step map: inject `ρ ⊗ |0⟩⟨0|`, conjugate forward, apply `ℐ_A ⊗ Φ`
    /// blockwise, conjugate back, trace out the second qubit.
    pub(crate) fn image(&self, phi: &CMat) -> CMat {
        let p0 = ground_projector();
        let mut out = CMat::zeros((4, 4));
        for j in 0..4 {
            let mut basis = ndarray::Array1::<C64>::zeros(4);
            basis[j] = C64::new(1.0, 0.0);
            let e = unvec_col(&basis, 2);
            let injected = kron(&e, &p0);
            let fwd = unvec_col(&self.su.dot(&vec_col(&injected)), 4);
            let mut mid = CMat::zeros((4, 4));
            for a in 0..2 {
                for b in 0..2 {
                    let blk = fwd.slice(s![2 * a..2 * a + 2, 2 * b..2 * b + 2]).to_owned();
                    let img = unvec_col(&phi.dot(&vec_col(&blk)), 2);
                    mid.slice_mut(s![2 * a..2 * a + 2, 2 * b..2 * b + 2])
                        .assign(&img);
                }
            }
            let back = unvec_col(&self.sud.dot(&vec_col(&mid)), 4);
            let reduced = partial_trace_second(&back, 2, 2);
            out.column_mut(j).assign(&vec_col(&reduced));
        }
        out
    }

    /// Assembles the full 16×16 matrix by pushing the matrix-unit
    /// superoperator basis through [`TransferKernel::image`].
    fn to_operator(&self) -> TransferOperator {
        let mut m = CMat::zeros((16, 16));
        for col in 0..16 {
            let mut basis = ndarray::Array1::<C64>::zeros(16);
            basis[col] = C64::new(1.0, 0.0);
            let img = self.image(&unvec_col(&basis, 4));
            m.column_mut(col).assign(&vec_col(&img));
        }
        TransferOperator {
            dim_a: 2,
            dim_b: 2,
            matrix: m,
        }
    }
}

fn ground_projector() -> CMat {
    let mut p0 = CMat::zeros((2, 2));
    p0[[0, 0]] = C64::new(1.0, 0.0);
    p0
}

/// Builds the noiseless transfer operator of a two-qubit gate.
pub fn transfer_operator(u: &CMat) -> Result<TransferOperator> {
    Ok(TransferKernel::new(u)?.to_operator())
}

/// Builds the transfer operator with depolarizing noise of strength `p`
/// attached after the forward gate and after the rewind gate (on both qubits
/// each gate touches).
pub fn noisy_transfer_operator(u: &CMat, p: f64) -> Result<TransferOperator> {
    Ok(TransferKernel::new_noisy(u, p)?.to_operator())
}

/// The one-qubit channel obtained by feeding `ρ ⊗ |0⟩⟨0|` through the final
/// gate `V` and tracing out the second qubit; this seeds the staircase
/// recursion.
pub fn base_channel(v: &CMat) -> Result<Superoperator> {
    if v.dim() != (4, 4) || !is_unitary(v, UNITARY_TOL) {
        return Err(Error::Validation(
            "base_channel requires a 4×4 unitary gate matrix".into(),
        ));
    }
    let p0 = ground_projector();
    let vd = dagger(v);
    let mut m = CMat::zeros((4, 4));
    for j in 0..4 {
        let mut basis = ndarray::Array1::<C64>::zeros(4);
        basis[j] = C64::new(1.0, 0.0);
        let e = unvec_col(&basis, 2);
        let rho = v.dot(&kron(&e, &p0)).dot(&vd);
        m.column_mut(j).assign(&vec_col(&partial_trace_second(&rho, 2, 2)));
    }
    Superoperator::from_matrix(2, m)
}

/// Iterates `Φ_{i} = T[Φ_{i−1}]` and returns the whole trajectory
/// `Φ_0, …, Φ_steps`.
pub fn iterate(
    t: &TransferOperator,
    phi0: &Superoperator,
    steps: usize,
) -> Result<Vec<Superoperator>> {
    if t.dim_a != t.dim_b {
        return Err(Error::Shape(format!(
            "iteration needs matching input/output dimensions, got {} and {}",
            t.dim_b, t.dim_a
        )));
    }
    let mut seq = Vec::with_capacity(steps + 1);
    seq.push(phi0.clone());
    let mut cur = phi0.clone();
    for _ in 0..steps {
        cur = t.apply(&cur)?;
        seq.push(cur.clone());
    }
    Ok(seq)
}

/// Eigenvalue summary of a transfer operator.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// All eigenvalues, sorted by descending modulus, then descending real
    /// part, then descending imaginary part.
    pub eigenvalues: Vec<C64>,
    /// Modulus of the largest eigenvalue after removing the one closest to 1
    /// (ties broken by removing the candidate with the largest real part).
    pub lambda2: f64,
    /// Predicted per-step decay rate `−ln λ₂`; `None` when `λ₂ = 0` (the
    /// iteration converges in one step).
    pub alpha_pred: Option<f64>,
    /// True when `λ₂` sits on the unit circle (within 1e-9): the spectrum is
    /// degenerate and no contraction rate can be read off.
    pub non_generic: bool,
}

impl SpectrumResult {
    /// JSON export: `{"eigenvalues": [[re, im], …], "lambda2": …,
    /// "alpha_pred": … | null, "non_generic": …}`.
    pub fn to_json(&self) -> String {
        let eigs: Vec<[f64; 2]> = self.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
        serde_json::json!({
            "eigenvalues": eigs,
            "lambda2": self.lambda2,
            "alpha_pred": self.alpha_pred,
            "non_generic": self.non_generic,
        })
        .to_string()
    }
}

/// Index of the eigenvalue to treat as "the" unit eigenvalue (closest to 1;
/// ties resolved toward the largest real part), plus the index of the
/// largest remaining one, in an unsorted eigenvalue list.
fn split_unit_eigenvalue(vals: &[C64]) -> (usize, Option<usize>) {
    let one = C64::new(1.0, 0.0);
    let min_dist = vals
        .iter()
        .map(|z| (z - one).norm())
        .fold(f64::INFINITY, f64::min);
    let removed = vals
        .iter()
        .enumerate()
        .filter(|(_, z)| (*z - one).norm() <= min_dist + 1e-12)
        .max_by(|a, b| a.1.re.partial_cmp(&b.1.re).expect("finite eigenvalues"))
        .map(|(i, _)| i)
        .expect("non-empty spectrum");
    let second = vals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != removed)
        .max_by(|a, b| {
            (a.1.norm(), a.1.re, a.1.im)
                .partial_cmp(&(b.1.norm(), b.1.re, b.1.im))
                .expect("finite eigenvalues")
        })
        .map(|(i, _)| i);
    (removed, second)
}

/// Full eigenvalue analysis: sorted spectrum, `λ₂`, predicted decay rate,
/// and a degeneracy flag.
pub fn spectrum(t: &TransferOperator) -> Result<SpectrumResult> {
    if t.dim_a != t.dim_b {
        return Err(Error::Shape(
            "spectrum requires a square transfer operator".into(),
        ));
    }
    let (vals, _) = linalg::eig(&t.matrix)?;
    let (_, second) = split_unit_eigenvalue(&vals);
    let lambda2 = second.map(|i| vals[i].norm()).unwrap_or(0.0);
    let mut eigenvalues = vals;
    eigenvalues.sort_by(|a, b| {
        (b.norm(), b.re, b.im)
            .partial_cmp(&(a.norm(), a.re, a.im))
            .expect("finite eigenvalues")
    });
    Ok(SpectrumResult {
        eigenvalues,
        lambda2,
        alpha_pred: (lambda2 > 0.0).then(|| -lambda2.ln()),
        non_generic: lambda2 >= 1.0 - GENERIC_GAP,
    })
}

/// Contraction diagnostics of a transfer operator on channel differences.
#[derive(Debug, Clone, Copy)]
pub struct ContractionEstimate {
    /// Largest singular value of the restriction to the
    /// Hermiticity-preserving, trace-annihilating subspace — an upper bound
    /// for the amplification of any channel difference.
    pub subspace_bound: f64,
    /// Largest amplification ratio actually observed: random channel pairs
    /// plus the realized eigen-direction of `λ₂`; a lower estimate of the
    /// true contraction coefficient, never above `subspace_bound`.
    pub sampled_max: f64,
}

/// Frobenius inner product `⟨a, b⟩ = Tr(a† b)`.
fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Conjugation that fixes exactly the Hermiticity-preserving superoperators:
/// `S ↦ S*` with both vec-index pairs `(i,j)`, `(k,l)` swapped.
fn hp_conj(m: &CMat) -> CMat {
    const SW: [usize; 4] = [0, 2, 1, 3];
    CMat::from_shape_fn((4, 4), |(r, c)| m[[SW[r], SW[c]]].conj())
}

fn hp_part(m: &CMat) -> CMat {
    (m + &hp_conj(m)).mapv(|z| z * C64::new(0.5, 0.0))
}

/// Maximal ratio `‖T[v]‖/‖v‖` over real combinations `v = c₁x + c₂y`,
/// via the 2×2 generalized eigenproblem of the two Gram matrices.
fn plane_max_ratio(tm: &CMat, x: &CMat, y: &CMat) -> f64 {
    let single = |v: &CMat| -> f64 {
        let n = frobenius_norm(v);
        if n < 1e-12 {
            return 0.0;
        }
        frobenius_norm(&unvec_col(&tm.dot(&vec_col(v)), 4)) / n
    };
    let (nx2, ny2) = (frobenius_norm(x).powi(2), frobenius_norm(y).powi(2));
    let cross = frob_inner(x, y).re;
    let det_b = nx2 * ny2 - cross * cross;
    // Nearly collinear (or vanishing) plane: fall back to the individual rays.
    if det_b <= 1e-12 * (nx2 * ny2).max(1e-300) {
        return single(x).max(single(y));
    }
    let tx = unvec_col(&tm.dot(&vec_col(x)), 4);
    let ty = unvec_col(&tm.dot(&vec_col(y)), 4);
    let (ax, ay) = (frobenius_norm(&tx).powi(2), frobenius_norm(&ty).powi(2));
    let axy = frob_inner(&tx, &ty).re;
    // Largest eigenvalue of B⁻¹A for the symmetric pencil (A, B).
    let inv = 1.0 / det_b;
    let c00 = inv * (ny2 * ax - cross * axy);
    let c01 = inv * (ny2 * axy - cross * ay);
    let c10 = inv * (nx2 * axy - cross * ax);
    let c11 = inv * (nx2 * ay - cross * axy);
    let tr = c00 + c11;
    let disc = (tr * tr - 4.0 * (c00 * c11 - c01 * c10)).max(0.0);
    (0.5 * (tr + disc.sqrt())).max(0.0).sqrt()
}

/// Estimates the contraction coefficient of `T` on channel differences:
/// an exact singular-value bound on the difference subspace plus a sampled
/// maximum over realized channel pairs and the `λ₂` eigen-direction.
pub fn contraction_coefficient(
    t: &TransferOperator,
    samples: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if samples == 0 {
        return Err(Error::Validation(
            "contraction estimation needs at least one sample pair".into(),
        ));
    }
    if t.dim_a != 2 || t.dim_b != 2 {
        return Err(Error::Shape(
            "contraction estimation is implemented for one-qubit channels".into(),
        ));
    }

    // Orthonormal basis of the Hermiticity-preserving, trace-annihilating
    // subspace: S_ab = ½·vec(σ_a)vec(σ_b)ᴴ with σ_a ∈ {X,Y,Z}, σ_b ∈ {I,X,Y,Z}.
    let sigmas = [
        crate::circuits::standard_gates::identity2(),
        crate::circuits::standard_gates::pauli_x(),
        crate::circuits::standard_gates::pauli_y(),
        crate::circuits::standard_gates::pauli_z(),
    ];
    let mut basis = Vec::with_capacity(12);
    for a in 1..4 {
        for b in 0..4 {
            let (va, vb) = (vec_col(&sigmas[a]), vec_col(&sigmas[b]));
            basis.push(CMat::from_shape_fn((4, 4), |(r, c)| {
                C64::new(0.5, 0.0) * va[r] * vb[c].conj()
            }));
        }
    }
    // The transfer operator preserves this real subspace, so the inner
    // products below are real up to rounding; the restriction is a real
    // 12×12 matrix.
    let mut restr = CMat::zeros((12, 12));
    for (j, sb) in basis.iter().enumerate() {
        let img = unvec_col(&t.matrix.dot(&vec_col(sb)), 4);
        for (i, sa) in basis.iter().enumerate() {
            restr[[i, j]] = C64::new(frob_inner(sa, &img).re, 0.0);
        }
    }
    let subspace_bound = singular_values(&restr)?[0];

    let mut rng = trial_rng(seed, 0);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let d = random_channel(&mut rng).into_matrix() - random_channel(&mut rng).into_matrix();
        let n = frobenius_norm(&d);
        if n < 1e-14 {
            continue;
        }
        let ratio = frobenius_norm(&unvec_col(&t.matrix.dot(&vec_col(&d)), 4)) / n;
        best = best.max(ratio);
    }

    // Realize the λ₂ eigen-direction: the Hermiticity-preserving parts of the
    // eigenvector and of i·(eigenvector) span a plane invariant under T with
    // |determinant| = λ₂², so the maximal ratio over the plane is ≥ λ₂.
    let (vals, vecs) = linalg::eig(&t.matrix)?;
    if let (_, Some(i2)) = split_unit_eigenvalue(&vals) {
        let w = unvec_col(&vecs.column(i2).to_owned(), 4);
        let x = hp_part(&w);
        let y = hp_part(&w.mapv(|z| z * C64::new(0.0, 1.0)));
        best = best.max(plane_max_ratio(&t.matrix, &x, &y));
    }

    Ok(ContractionEstimate {
        subspace_bound,
        sampled_max: best,
    })
}

/// Operator-norm distance between two transfer operators: the largest
/// singular value of the difference of their matrices.
pub fn operator_norm_distance(t1: &TransferOperator, t2: &TransferOperator) -> Result<f64> {
    if t1.matrix.dim() != t2.matrix.dim() {
        return Err(Error::Shape(format!(
            "cannot compare transfer operators of shapes {:?} and {:?}",
            t1.matrix.dim(),
            t2.matrix.dim()
        )));
    }
    spectral_norm(&(&t1.matrix - &t2.matrix))
}

/// A Haar-random one-qubit channel from a Stinespring dilation: a random
/// isometry `C² → C² ⊗ C⁴` (the first two columns of an 8×8 Haar unitary)
/// followed by tracing out the four-dimensional environment.
pub fn random_channel<R: Rng>(rng: &mut R) -> Superoperator {
    let w = haar_unitary(8, rng);
    let mut m = CMat::zeros((4, 4));
    for e in 0..4 {
        let k = CMat::from_shape_fn((2, 2), |(o, i)| w[[o * 4 + e, i]]);
        m = m + kron(&k.mapv(|z| z.conj()), &k);
    }
    Superoperator::from_matrix(2, m).expect("Kraus assembly yields a 4×4 matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{apply_channel, validate_cptp};
    use crate::circuits::standard_gates::{cnot, identity2, swap};
    use crate::linalg::{identity, trace};
    use approx::assert_abs_diff_eq;

    fn identity_superop_matrix() -> CMat {
        identity(16)
    }

    fn two_qubit_identity() -> CMat {
        identity(4)
    }

    /// Independent route: apply the step map at the density-matrix level with
    /// plain matrix conjugation instead of the vectorized kernel.
    fn direct_image_on_state(u: &CMat, phi: &Superoperator, rho: &CMat) -> CMat {
        let injected = kron(rho, &ground_projector());
        let fwd = u.dot(&injected).dot(&dagger(u));
        let mut mid = CMat::zeros((4, 4));
        for a in 0..2 {
            for b in 0..2 {
                let blk = fwd.slice(s![2 * a..2 * a + 2, 2 * b..2 * b + 2]).to_owned();
                let img = apply_channel(phi, &blk).unwrap();
                mid.slice_mut(s![2 * a..2 * a + 2, 2 * b..2 * b + 2])
                    .assign(&img);
            }
        }
        let back = dagger(u).dot(&mid).dot(u);
        partial_trace_second(&back, 2, 2)
    }

    #[test]
    fn builders_reject_bad_input() {
        let not_unitary = CMat::from_shape_fn((4, 4), |_| C64::new(0.4, 0.1));
        assert!(transfer_operator(&not_unitary).is_err());
        assert!(base_channel(&not_unitary).is_err());
        assert!(transfer_operator(&identity2()).is_err(), "wrong size");
        assert!(noisy_transfer_operator(&two_qubit_identity(), -0.2).is_err());
        assert!(noisy_transfer_operator(&two_qubit_identity(), 1.5).is_err());
        assert!(TransferOperator::from_matrix(2, 2, identity(15)).is_err());
    }

    #[test]
    fn swap_gate_gives_identity_transfer() {
        let t = transfer_operator(&swap()).unwrap();
        assert!(frobenius_norm(&(t.matrix() - &identity_superop_matrix())) < 1e-12);
        let sp = spectrum(&t).unwrap();
        assert!(sp.non_generic, "unit spectrum must be flagged");
        assert_abs_diff_eq!(sp.lambda2, 1.0, epsilon = 1e-10);
        for z in &sp.eigenvalues {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-10);
        }
        // Iterating the identity transfer never moves the channel.
        let mut rng = trial_rng(11, 0);
        let phi = random_channel(&mut rng);
        for step in iterate(&t, &phi, 5).unwrap() {
            assert!(frobenius_norm(&(step.matrix() - phi.matrix())) < 1e-12);
        }
    }

    #[test]
    fn identity_gate_collapses_every_channel() {
        let t = transfer_operator(&two_qubit_identity()).unwrap();
        let sp = spectrum(&t).unwrap();
        assert!(sp.lambda2 < 1e-12, "λ₂ = {}", sp.lambda2);
        assert!(sp.alpha_pred.is_none(), "no decay rate at λ₂ = 0");
        assert!(!sp.non_generic);
        let mut rng = trial_rng(12, 0);
        for _ in 0..5 {
            let phi = random_channel(&mut rng);
            let seq = iterate(&t, &phi, 2).unwrap();
            // One application already lands on the identity channel.
            assert!(frobenius_norm(&(seq[1].matrix() - &identity(4))) < 1e-12);
            assert!(frobenius_norm(&(seq[2].matrix() - &identity(4))) < 1e-12);
        }
    }

    #[test]
    fn cnot_spectrum_and_direct_conjugation_agree() {
        let t = transfer_operator(&cnot()).unwrap();
        let sp = spectrum(&t).unwrap();
        let near_one = sp.eigenvalues.iter().filter(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-10).count();
        let near_zero = sp.eigenvalues.iter().filter(|z| z.norm() < 1e-10).count();
        assert_eq!(near_one, 4, "spectrum {:?}", sp.eigenvalues);
        assert_eq!(near_zero, 12);
        assert!(sp.non_generic);

        // Brute-force cross-check of the action on 50 random channels.
        let mut rng = trial_rng(13, 0);
        for _ in 0..50 {
            let phi = random_channel(&mut rng);
            let img = t.apply(&phi).unwrap();
            for j in 0..4 {
                let mut basis = ndarray::Array1::<C64>::zeros(4);
                basis[j] = C64::new(1.0, 0.0);
                let rho = unvec_col(&basis, 2);
                let via_matrix = apply_channel(&img, &rho).unwrap();
                let direct = direct_image_on_state(&cnot(), &phi, &rho);
                assert!(
                    frobenius_norm(&(&via_matrix - &direct)) < 1e-12,
                    "transfer image must match direct conjugation"
                );
            }
        }
    }

    #[test]
    fn identity_channel_is_fixed_point_for_haar_gates() {
        let mut rng = trial_rng(14, 0);
        let id = Superoperator::identity(2);
        for _ in 0..100 {
            let u = haar_unitary(4, &mut rng);
            let t = transfer_operator(&u).unwrap();
            let img = t.apply(&id).unwrap();
            let dist = frobenius_norm(&(img.matrix() - id.matrix()));
            assert!(dist < 1e-12, "‖T[ℐ] − ℐ‖ = {dist}");
        }
    }

    #[test]
    fn spectral_radius_never_exceeds_one() {
        let mut rng = trial_rng(15, 0);
        for _ in 0..200 {
            let u = haar_unitary(4, &mut rng);
            let sp = spectrum(&transfer_operator(&u).unwrap()).unwrap();
            let radius = sp.eigenvalues[0].norm();
            assert!(radius <= 1.0 + 1e-10, "spectral radius {radius}");
        }
    }

    #[test]
    fn base_channel_of_identity_is_identity() {
        let s = base_channel(&two_qubit_identity()).unwrap();
        assert!(frobenius_norm(&(s.matrix() - &identity(4))) < 1e-14);
    }

    #[test]
    fn base_channel_of_swap_prepares_ground_state() {
        let s = base_channel(&swap()).unwrap();
        // ρ ↦ Tr(ρ)·|0⟩⟨0| has matrix vec(|0⟩⟨0|)·vec(I)ᴴ.
        let expected = CMat::from_shape_fn((4, 4), |(r, c)| {
            let in_trace = c == 0 || c == 3;
            C64::new(if r == 0 && in_trace { 1.0 } else { 0.0 }, 0.0)
        });
        assert!(frobenius_norm(&(s.matrix() - &expected)) < 1e-14);
    }

    #[test]
    fn base_channel_of_random_unitary_is_cptp() {
        let mut rng = trial_rng(16, 0);
        for _ in 0..20 {
            let v = haar_unitary(4, &mut rng);
            let report = validate_cptp(&base_channel(&v).unwrap()).unwrap();
            assert!(report.is_channel(1e-10), "{report:?}");
        }
    }

    #[test]
    fn noisy_transfer_at_p_zero_is_exactly_noiseless() {
        let mut rng = trial_rng(17, 0);
        let u = haar_unitary(4, &mut rng);
        let clean = transfer_operator(&u).unwrap();
        let noisy = noisy_transfer_operator(&u, 0.0).unwrap();
        let max_dev = (clean.matrix() - noisy.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert_eq!(max_dev, 0.0, "p = 0 must reproduce the noiseless matrix bit for bit");
    }

    #[test]
    fn full_noise_collapses_to_depolarizing_output() {
        let mut rng = trial_rng(18, 0);
        let u = haar_unitary(4, &mut rng);
        let t = noisy_transfer_operator(&u, 1.0).unwrap();
        // ρ ↦ Tr(ρ)·I/2 has matrix ½·vec(I)vec(I)ᴴ.
        let vi = vec_col(&identity(2));
        let collapse = CMat::from_shape_fn((4, 4), |(r, c)| C64::new(0.5, 0.0) * vi[r] * vi[c].conj());
        for _ in 0..3 {
            let phi = random_channel(&mut rng);
            let img = t.apply(&phi).unwrap();
            assert!(frobenius_norm(&(img.matrix() - &collapse)) < 1e-12);
        }
        let sp = spectrum(&t).unwrap();
        assert!(sp.lambda2 < 1e-9, "rank-one map has λ₂ = 0, got {}", sp.lambda2);
    }

    #[test]
    fn kernel_and_matrix_route_agree() {
        let mut rng = trial_rng(19, 0);
        for &p in &[0.0, 0.03] {
            let u = haar_unitary(4, &mut rng);
            let kernel = TransferKernel::new_noisy(&u, p).unwrap();
            let t = noisy_transfer_operator(&u, p).unwrap();
            for _ in 0..5 {
                let phi = random_channel(&mut rng);
                let via_kernel = kernel.image(phi.matrix());
                let via_matrix = t.apply(&phi).unwrap();
                assert!(frobenius_norm(&(&via_kernel - via_matrix.matrix())) < 1e-12);
            }
        }
    }

    #[test]
    fn iterate_preserves_cptp() {
        let mut rng = trial_rng(20, 0);
        for _ in 0..5 {
            let u = haar_unitary(4, &mut rng);
            let t = transfer_operator(&u).unwrap();
            for _ in 0..10 {
                let phi = random_channel(&mut rng);
                for step in iterate(&t, &phi, 12).unwrap() {
                    let report = validate_cptp(&step).unwrap();
                    assert!(report.is_channel(1e-9), "{report:?}");
                }
            }
        }
    }

    #[test]
    fn iterate_rejects_dimension_mismatch() {
        let t = transfer_operator(&swap()).unwrap();
        let phi = Superoperator::identity(4);
        assert!(t.apply(&phi).is_err());
        assert!(iterate(&t, &phi, 3).is_err());
    }

    #[test]
    fn iterate_norm_ratio_approaches_lambda2() {
        // Pick the first Haar gate (deterministic scan) whose λ₂ is real,
        // isolated, and large enough that 45 iterations stay above the
        // floating-point floor; the successive norm ratios must then settle
        // on λ₂.
        let mut chosen = None;
        for k in 0..100 {
            let mut rng = trial_rng(4242, k);
            let u = haar_unitary(4, &mut rng);
            let t = transfer_operator(&u).unwrap();
            let sp = spectrum(&t).unwrap();
            if sp.non_generic || !(0.6..=0.95).contains(&sp.lambda2) {
                continue;
            }
            let lambda2_is_real = sp
                .eigenvalues
                .iter()
                .any(|z| (z.norm() - sp.lambda2).abs() < 1e-12 && z.im.abs() <= 1e-9 * z.norm());
            let next_modulus = sp
                .eigenvalues
                .iter()
                .map(|z| z.norm())
                .filter(|&m| m < sp.lambda2 * (1.0 - 1e-9))
                .fold(0.0, f64::max);
            if lambda2_is_real && next_modulus <= 0.9 * sp.lambda2 {
                chosen = Some((t, sp.lambda2, k));
                break;
            }
        }
        let (t, lambda2, k) = chosen.expect("a generic real-rate gate within 100 draws");
        let mut rng = trial_rng(4242, 1000 + k);
        let phi0 = base_channel(&haar_unitary(4, &mut rng)).unwrap();
        let traj = iterate(&t, &phi0, 46).unwrap();
        let norms: Vec<f64> = traj
            .iter()
            .map(|s| frobenius_norm(&(s.matrix() - &identity(4))))
            .collect();
        for k in 30..=45 {
            if norms[k] < 1e-11 {
                continue;
            }
            let ratio = norms[k + 1] / norms[k];
            assert!(
                (ratio - lambda2).abs() <= 0.02 * lambda2,
                "ratio {ratio} vs λ₂ {lambda2} at step {k}"
            );
        }
    }

    #[test]
    fn tail_norms_bounded_by_lambda2_power() {
        // Geometric-decay check: fit the constant at step 10 and require the
        // tail (above the float noise floor) to stay within a factor 10 of
        // K·λ₂^k. The factor absorbs interference dips at the fit point for
        // complex λ₂; the pre-fit transient is not covered by a tail constant.
        let mut rng = trial_rng(21, 0);
        let mut tested = 0usize;
        for _ in 0..100 {
            let u = haar_unitary(4, &mut rng);
            let v = haar_unitary(4, &mut rng);
            let t = transfer_operator(&u).unwrap();
            let sp = spectrum(&t).unwrap();
            if sp.lambda2 >= 1.0 - 1e-3 {
                continue;
            }
            let traj = iterate(&t, &base_channel(&v).unwrap(), 60).unwrap();
            let norms: Vec<f64> = traj
                .iter()
                .map(|s| frobenius_norm(&(s.matrix() - &identity(4))))
                .collect();
            if norms[10] <= 1e-12 {
                continue;
            }
            tested += 1;
            let k_const = norms[10] / sp.lambda2.powi(10);
            for (k, &n) in norms.iter().enumerate().take(61).skip(10) {
                if n <= 1e-12 {
                    continue;
                }
                let bound = 10.0 * k_const * sp.lambda2.powi(k as i32);
                assert!(n <= bound, "step {k}: norm {n} exceeds bound {bound}");
            }
        }
        assert!(tested >= 80, "only {tested} generic gates in the sweep");
    }

    #[test]
    fn contraction_of_identity_gate_transfer_is_zero() {
        let t = transfer_operator(&two_qubit_identity()).unwrap();
        let est = contraction_coefficient(&t, 10, 1).unwrap();
        assert!(est.subspace_bound < 1e-12, "{est:?}");
        assert!(est.sampled_max < 1e-12, "{est:?}");
    }

    #[test]
    fn contraction_of_swap_is_one() {
        let t = transfer_operator(&swap()).unwrap();
        let est = contraction_coefficient(&t, 10, 2).unwrap();
        assert_abs_diff_eq!(est.subspace_bound, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(est.sampled_max, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn contraction_rejects_zero_samples() {
        let t = transfer_operator(&swap()).unwrap();
        assert!(contraction_coefficient(&t, 0, 3).is_err());
    }

    #[test]
    fn sampled_contraction_reaches_lambda2() {
        let mut rng = trial_rng(22, 0);
        for k in 0..25 {
            let u = haar_unitary(4, &mut rng);
            let t = transfer_operator(&u).unwrap();
            let sp = spectrum(&t).unwrap();
            let est = contraction_coefficient(&t, 20, 100 + k).unwrap();
            assert!(
                est.sampled_max >= sp.lambda2 - 1e-9,
                "sampled {} below λ₂ {}",
                est.sampled_max,
                sp.lambda2
            );
            assert!(
                est.sampled_max <= est.subspace_bound + 1e-9,
                "sampled {} above subspace bound {}",
                est.sampled_max,
                est.subspace_bound
            );
        }
    }

    #[test]
    fn norm_distance_is_a_metric() {
        let mut rng = trial_rng(23, 0);
        let ts: Vec<TransferOperator> = (0..3)
            .map(|_| transfer_operator(&haar_unitary(4, &mut rng)).unwrap())
            .collect();
        assert_abs_diff_eq!(operator_norm_distance(&ts[0], &ts[0]).unwrap(), 0.0, epsilon = 1e-14);
        let dab = operator_norm_distance(&ts[0], &ts[1]).unwrap();
        let dba = operator_norm_distance(&ts[1], &ts[0]).unwrap();
        assert_abs_diff_eq!(dab, dba, epsilon = 1e-12);
        let dac = operator_norm_distance(&ts[0], &ts[2]).unwrap();
        let dcb = operator_norm_distance(&ts[2], &ts[1]).unwrap();
        assert!(dab <= dac + dcb + 1e-12, "triangle inequality");
    }

    #[test]
    fn norm_distance_rejects_shape_mismatch() {
        let t = transfer_operator(&swap()).unwrap();
        let small = TransferOperator::from_matrix(1, 1, identity(1)).unwrap();
        assert!(operator_norm_distance(&t, &small).is_err());
    }

    #[test]
    fn noise_perturbation_scales_linearly_in_p() {
        let ps: Vec<f64> = (0..6).map(|k| 1e-3 * 50f64.powf(k as f64 / 5.0)).collect();
        let mut rng = trial_rng(24, 0);
        for _ in 0..10 {
            let u = haar_unitary(4, &mut rng);
            let clean = transfer_operator(&u).unwrap();
            let ds: Vec<f64> = ps
                .iter()
                .map(|&p| {
                    operator_norm_distance(&noisy_transfer_operator(&u, p).unwrap(), &clean)
                        .unwrap()
                })
                .collect();
            // Least-squares slope through the origin.
            let c: f64 = ds.iter().zip(&ps).map(|(d, p)| d * p).sum::<f64>()
                / ps.iter().map(|p| p * p).sum::<f64>();
            assert!(c > 0.0);
            for (d, p) in ds.iter().zip(&ps) {
                let dev = (d - c * p).abs() / (c * p);
                assert!(dev <= 0.10, "deviation {dev} from the linear fit at p = {p}");
            }
            // In particular the p = 0.01 distance sits on the fitted line.
            let d001 = operator_norm_distance(&noisy_transfer_operator(&u, 0.01).unwrap(), &clean)
                .unwrap();
            assert!(d001 > 0.0 && d001 <= c * 0.01 * 1.10);
        }
    }

    #[test]
    fn noisy_fixed_point_stays_near_identity_when_contractive() {
        let ps_fit: Vec<f64> = (0..6).map(|k| 1e-3 * 50f64.powf(k as f64 / 5.0)).collect();
        let mut rng = trial_rng(25, 0);
        let mut contractive_seen = 0usize;
        for k in 0..12 {
            let u = haar_unitary(4, &mut rng);
            let clean = transfer_operator(&u).unwrap();
            let est = contraction_coefficient(&clean, 100, 500 + k).unwrap();
            if est.sampled_max >= 1.0 {
                continue;
            }
            contractive_seen += 1;
            let ds: Vec<f64> = ps_fit
                .iter()
                .map(|&p| {
                    operator_norm_distance(&noisy_transfer_operator(&u, p).unwrap(), &clean)
                        .unwrap()
                })
                .collect();
            let c: f64 = ds.iter().zip(&ps_fit).map(|(d, p)| d * p).sum::<f64>()
                / ps_fit.iter().map(|p| p * p).sum::<f64>();
            for &p in &[0.001, 0.01] {
                let noisy = noisy_transfer_operator(&u, p).unwrap();
                let (vals, vecs) = linalg::eig(noisy.matrix()).unwrap();
                let (unit_idx, _) = split_unit_eigenvalue(&vals);
                let mut fp = unvec_col(&vecs.column(unit_idx).to_owned(), 4);
                // Rescale the eigenvector to a trace-preserving map.
                let vi = vec_col(&identity(2));
                let sv = fp.dot(&vi);
                let scale: C64 = vi.iter().zip(sv.iter()).map(|(a, b)| a.conj() * b).sum();
                fp = fp.mapv(|z| z * (C64::new(2.0, 0.0) / scale));
                let dist = frobenius_norm(&(&fp - &identity(4)));
                let bound = 3.0 * c * p / (1.0 - est.sampled_max);
                assert!(
                    dist <= bound,
                    "fixed point distance {dist} exceeds {bound} at p = {p} (γ = {})",
                    est.sampled_max
                );
            }
        }
        assert!(contractive_seen >= 3, "only {contractive_seen} contractive draws");
    }

    #[test]
    fn spectrum_json_exports_expected_fields() {
        let t = transfer_operator(&cnot()).unwrap();
        let js: serde_json::Value = serde_json::from_str(&spectrum(&t).unwrap().to_json()).unwrap();
        assert_eq!(js["eigenvalues"].as_array().unwrap().len(), 16);
        assert!(js["lambda2"].is_number());
        assert!(js["non_generic"].as_bool().unwrap());
        let ti = transfer_operator(&two_qubit_identity()).unwrap();
        let js: serde_json::Value =
            serde_json::from_str(&spectrum(&ti).unwrap().to_json()).unwrap();
        assert!(js["alpha_pred"].is_null(), "λ₂ = 0 exports a null rate");
    }

    #[test]
    fn random_channels_are_cptp_and_normalized() {
        let mut rng = trial_rng(26, 0);
        for _ in 0..20 {
            let s = random_channel(&mut rng);
            assert_eq!(s.dim(), 2);
            let report = validate_cptp(&s).unwrap();
            assert!(report.is_channel(1e-10), "{report:?}");
            // Trace preservation implies the image of a state has unit trace.
            let rho = CMat::from_shape_fn((2, 2), |(i, j)| {
                C64::new(if i == j { 0.5 } else { 0.2 }, 0.0)
            });
            let out = apply_channel(&s, &rho).unwrap();
            assert_abs_diff_eq!(trace(&out).re, 1.0, epsilon = 1e-12);
        }
    }
}
