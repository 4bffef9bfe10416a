//! Superoperator algebra: unitary conjugation channels, depolarizing noise,
//! product channels, Choi matrices, CPTP diagnostics, and the 2-norm used on
//! channel space.
//!
//! A superoperator stores the `d² × d²` matrix acting on column-stacked
//! density matrices (`vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`). The channel norm is the
//! Frobenius norm of the (unnormalized) Choi matrix scaled by `1/√2`, fixed
//! so the one-qubit identity channel has norm `√2`; because the Choi matrix
//! is an entry permutation of the superoperator matrix, this equals
//! `‖S‖_F/√2` as well.

use crate::error::{Error, Result};
use crate::linalg::{
    self, identity, is_unitary, kron, self_adjoint_eigvals, unvec_col, vec_col, CMat, C64,
};

/// A linear map on `d × d` matrices in column-stacking representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMat,
}

impl Superoperator {
    /// Wraps a raw `d² × d²` matrix.
    pub fn from_matrix(dim: usize, matrix: CMat) -> Result<Self> {
        if matrix.dim() != (dim * dim, dim * dim) {
            return Err(Error::Shape(format!(
                "superoperator on dimension {dim} needs a {0}×{0} matrix, got {1}×{2}",
                dim * dim,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dim, matrix })
    }

    /// The identity channel on dimension `d`.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: identity(dim * dim),
        }
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The underlying `d² × d²` matrix.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Consumes self, returning the matrix.
    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    /// Sequential composition: `self.then(next) = next ∘ self`.
    pub fn then(&self, next: &Superoperator) -> Result<Superoperator> {
        if self.dim != next.dim {
            return Err(Error::Shape(format!(
                "cannot compose superoperators of dimensions {} and {}",
                self.dim, next.dim
            )));
        }
        Ok(Superoperator {
            dim: self.dim,
            matrix: next.matrix.dot(&self.matrix),
        })
    }
}

/// The conjugation channel `ρ ↦ UρU†` as a superoperator, `conj(U) ⊗ U`.
pub fn unitary_to_superop(u: &CMat) -> Result<Superoperator> {
    if !is_unitary(u, 1e-10) {
        return Err(Error::Validation(
            "matrix handed to unitary_to_superop is not unitary within 1e-10".into(),
        ));
    }
    let u_conj = u.mapv(|z| z.conj());
    Superoperator::from_matrix(u.nrows(), kron(&u_conj, u))
}

/// Applies a superoperator: `unvec(S · vec(ρ))`.
pub fn apply_channel(s: &Superoperator, rho: &CMat) -> Result<CMat> {
    if rho.dim() != (s.dim, s.dim) {
        return Err(Error::Shape(format!(
            "state dimension {}×{} does not match channel dimension {}",
            rho.nrows(),
            rho.ncols(),
            s.dim
        )));
    }
    let out = s.matrix.dot(&vec_col(rho));
    Ok(unvec_col(&out, s.dim))
}

/// Single-qubit depolarizing channel `D_p(ρ) = (1−p)ρ + p·Tr(ρ)·I/2`.
pub fn depolarizing(p: f64) -> Result<Superoperator> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!(
            "depolarizing probability must lie in [0,1], got {p}"
        )));
    }
    let vec_i = vec_col(&identity(2));
    let mut m = identity(4).mapv(|z| z * C64::new(1.0 - p, 0.0));
    for r in 0..4 {
        for c in 0..4 {
            m[[r, c]] += C64::new(p / 2.0, 0.0) * vec_i[r] * vec_i[c].conj();
        }
    }
    Superoperator::from_matrix(2, m)
}

/// Product channel `Φ_A ⊗ Φ_B` on the composite system (first factor most
/// significant). Note this is *not* a plain Kronecker product of the two
/// superoperator matrices: row/column indices interleave as
/// `(i_A·d_B + i_B) + d_A d_B (j_A·d_B + j_B)`.
pub fn tensor_superop(sa: &Superoperator, sb: &Superoperator) -> Superoperator {
    let (da, db) = (sa.dim, sb.dim);
    let d = da * db;
    let idx = |i: usize, j: usize, dd: usize| i + dd * j;
    let mut m = CMat::zeros((d * d, d * d));
    for ia in 0..da {
        for ja in 0..da {
            for ka in 0..da {
                for la in 0..da {
                    let a = sa.matrix[[idx(ia, ja, da), idx(ka, la, da)]];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for ib in 0..db {
                        for jb in 0..db {
                            for kb in 0..db {
                                for lb in 0..db {
                                    let b = sb.matrix[[idx(ib, jb, db), idx(kb, lb, db)]];
                                    let row = idx(ia * db + ib, ja * db + jb, d);
                                    let col = idx(ka * db + kb, la * db + lb, d);
                                    m[[row, col]] += a * b;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Superoperator { dim: d, matrix: m }
}

/// Depolarizing noise on every target of a gate: `D_p` tensored across
/// `n_targets` qubits.
pub fn depolarizing_on_targets(p: f64, n_targets: usize) -> Result<Superoperator> {
    let single = depolarizing(p)?;
    let mut out = single.clone();
    for _ in 1..n_targets {
        out = tensor_superop(&out, &single);
    }
    if n_targets == 0 {
        return Err(Error::Shape("noise needs at least one target".into()));
    }
    Ok(out)
}

/// Unnormalized Choi matrix `Σ_{ij} E_ij ⊗ S(E_ij)`.
pub fn choi(s: &Superoperator) -> CMat {
    let d = s.dim;
    let mut c = CMat::zeros((d * d, d * d));
    for i in 0..d {
        for j in 0..d {
            let mut e = CMat::zeros((d, d));
            e[[i, j]] = C64::new(1.0, 0.0);
            let img = unvec_col(&s.matrix.dot(&vec_col(&e)), d);
            for r in 0..d {
                for cc in 0..d {
                    c[[i * d + r, j * d + cc]] += img[[r, cc]];
                }
            }
        }
    }
    c
}

/// Diagnostic result of [`validate_cptp`].
#[derive(Debug, Clone, Copy)]
pub struct CptpReport {
    /// `‖vec(I)ᴴS − vec(I)ᴴ‖₂`: how far the map is from trace preservation.
    pub tp_defect: f64,
    /// Smallest eigenvalue of the Hermitized Choi matrix; negative values
    /// witness failure of complete positivity.
    pub min_choi_eigenvalue: f64,
}

impl CptpReport {
    /// True when both diagnostics are within `tol`.
    pub fn is_channel(&self, tol: f64) -> bool {
        self.tp_defect < tol && self.min_choi_eigenvalue > -tol
    }
}

/// Trace-preservation and complete-positivity diagnostics.
pub fn validate_cptp(s: &Superoperator) -> Result<CptpReport> {
    let d = s.dim;
    let vi = vec_col(&identity(d));
    // Row vector vec(I)ᴴ S, compared against vec(I)ᴴ.
    let mut defect = 0.0f64;
    for c in 0..d * d {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..d * d {
            acc += vi[r].conj() * s.matrix[[r, c]];
        }
        defect += (acc - vi[c].conj()).norm_sqr();
    }
    let ch = choi(s);
    let herm = (&ch + &linalg::dagger(&ch)).mapv(|z| z * C64::new(0.5, 0.0));
    let eigs = self_adjoint_eigvals(&herm)?;
    Ok(CptpReport {
        tp_defect: defect.sqrt(),
        min_choi_eigenvalue: eigs.first().copied().unwrap_or(0.0),
    })
}

/// Norm on channel space: `‖Choi(S)‖_F / √2`, fixed so the one-qubit
/// identity channel has norm `√2`.
pub fn channel_norm(s: &Superoperator) -> f64 {
    linalg::frobenius_norm(&choi(s)) / std::f64::consts::SQRT_2
}

/// Distance induced by [`channel_norm`].
pub fn channel_distance(s1: &Superoperator, s2: &Superoperator) -> Result<f64> {
    if s1.dim != s2.dim {
        return Err(Error::Shape(format!(
            "cannot compare channels of dimensions {} and {}",
            s1.dim, s2.dim
        )));
    }
    let diff = &choi(s1) - &choi(s2);
    Ok(linalg::frobenius_norm(&diff) / std::f64::consts::SQRT_2)
}
