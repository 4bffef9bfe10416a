//! Complex dense linear algebra shared by every module.
//!
//! Thin layer over [`ndarray`] for storage/arithmetic and [`faer`] for
//! factorizations (general eigendecomposition, SVD, QR, determinants). The
//! vectorization convention is column stacking: `vec(ρ)[i + d·j] = ρ[i][j]`,
//! under which `vec(A X Bᵀ) = (B ⊗ A) vec(X)` and a unitary conjugation
//! `ρ ↦ U ρ U†` becomes the matrix `conj(U) ⊗ U`.

use faer::Mat;
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = Array2<C64>;
/// Dense complex vector.
pub type CVec = Array1<C64>;

/// `d × d` identity matrix.
pub fn identity(d: usize) -> CMat {
    Array2::eye(d)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Kronecker product with the first factor as the most significant index
/// block: `kron(A, B)[(iA·dB + iB), (jA·dB + jB)] = A[iA][jA]·B[iB][jB]`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(&a.view(), &b.view())
}

/// Column-stacking vectorization `vec(ρ)[i + d·j] = ρ[i][j]`.
pub fn vec_col(m: &CMat) -> CVec {
    let (rows, cols) = m.dim();
    CVec::from_shape_fn(rows * cols, |k| m[[k % rows, k / rows]])
}

/// Inverse of [`vec_col`] for a square `d × d` matrix.
pub fn unvec_col(v: &CVec, d: usize) -> CMat {
    debug_assert_eq!(v.len(), d * d, "vector length must be d²");
    CMat::from_shape_fn((d, d), |(i, j)| v[i + d * j])
}

/// Frobenius norm `√Σ|m_ij|²`.
pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> Result<f64> {
    let sv = singular_values(m)?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    let svd = to_faer(m)
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let mut out: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    out.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    Ok(out)
}

/// Thin singular value decomposition `m = U · diag(s) · Vᴴ`.
///
/// Returns `(U, s, Vᴴ)` with `U` of shape `rows×k`, `Vᴴ` of shape `k×cols`,
/// `k = min(rows, cols)`, and `s` in descending order.
pub fn svd_thin(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let sv = svd.S().column_vector();
    let (fu, fv) = (svd.U(), svd.V());
    // faer already returns the singular values in descending order.
    let s: Vec<f64> = (0..k).map(|i| sv[i].re).collect();
    let u = CMat::from_shape_fn((rows, k), |(i, j)| fu[(i, j)]);
    let vh = CMat::from_shape_fn((k, cols), |(i, j)| fv[(j, i)].conj());
    Ok((u, s, vh))
}

/// Full eigendecomposition of a general complex square matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` stored in
/// column `k`, in the eigensolver's native order (no sorting applied here).
pub fn eig(m: &CMat) -> Result<(Vec<C64>, CMat)> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {rows}×{cols}"
        )));
    }
    let evd = to_faer(m)
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<C64> = (0..s.nrows()).map(|i| s[i]).collect();
    let u = evd.U();
    let vectors = CMat::from_shape_fn((rows, cols), |(i, j)| u[(i, j)]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix, ascending, as reals.
pub fn self_adjoint_eigvals(m: &CMat) -> Result<Vec<f64>> {
    let evd = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("self-adjoint eigensolve failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let mut out: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(out)
}

/// Thin QR factorization with the sign convention fixed so every diagonal
/// entry of `R` is real and nonnegative; this makes the factorization (and
/// everything built on it) deterministic and idempotent.
pub fn qr_positive(m: &CMat) -> (CMat, CMat) {
    let qr = to_faer(m).qr();
    let q_raw = qr.compute_thin_Q();
    let r_raw = qr.thin_R();
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    let mut q = CMat::from_shape_fn((rows, k), |(i, j)| q_raw[(i, j)]);
    let mut r = CMat::from_shape_fn((k, cols), |(i, j)| r_raw[(i, j)]);
    for d in 0..k {
        let rdd = r[[d, d]];
        if rdd.norm() > 0.0 {
            let phase = rdd / rdd.norm();
            // Scale row d of R by conj(phase) and column d of Q by phase so
            // the product is unchanged while R[d][d] becomes |R[d][d]|.
            for j in 0..cols {
                r[[d, j]] *= phase.conj();
            }
            for i in 0..rows {
                q[[i, d]] *= phase;
            }
        }
    }
    (q, r)
}

/// Determinant of a square complex matrix.
pub fn determinant(m: &CMat) -> C64 {
    to_faer(m).determinant()
}

/// `‖U†U − I‖_F < tol`.
pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    let (rows, cols) = m.dim();
    if rows != cols {
        return false;
    }
    let gram = dagger(m).dot(m);
    frobenius_norm(&(&gram - &identity(rows))) < tol
}

/// `‖M − M†‖_F < tol`.
pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    let (rows, cols) = m.dim();
    rows == cols && frobenius_norm(&(m - &dagger(m))) < tol
}

/// Partial trace over the **second** factor of a `dA·dB`-dimensional system.
pub fn partial_trace_second(m: &CMat, da: usize, db: usize) -> CMat {
    debug_assert_eq!(m.dim(), (da * db, da * db));
    CMat::from_shape_fn((da, da), |(i, j)| {
        (0..db).map(|b| m[[i * db + b, j * db + b]]).sum()
    })
}

/// Partial trace over the **first** factor of a `dA·dB`-dimensional system.
pub fn partial_trace_first(m: &CMat, da: usize, db: usize) -> CMat {
    debug_assert_eq!(m.dim(), (da * db, da * db));
    CMat::from_shape_fn((db, db), |(i, j)| {
        (0..da).map(|a| m[[a * db + i, a * db + j]]).sum()
    })
}

/// Trace of a square matrix.
pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

fn to_faer(m: &CMat) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}
