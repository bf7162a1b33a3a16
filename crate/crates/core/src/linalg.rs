//! Dense helpers shared by the reducers: symmetric eigensolves with a fixed
//! ordering and sign gauge, PSD solves, orthonormalization and seeded draws.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues below `PINV_CUTOFF * λ_max` are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-12;

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Flip `v` so that its largest-magnitude entry is positive. Ties go to the
/// lowest index.
pub fn apply_sign_gauge(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Symmetrize `s` after checking it is symmetric within [`SYMMETRY_TOL`]
/// (relative to its largest entry, floored at 1).
pub fn symmetrized(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric eigensolve"));
    }
    let scale = s.amax().max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..s.nrows() {
        for j in (i + 1)..s.ncols() {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok((s + s.transpose()) * 0.5)
}

/// Full eigendecomposition of a symmetric matrix, eigenpairs sorted by
/// descending eigenvalue, each eigenvector sign-gauged.
pub fn sym_eigen_desc(s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let sym = symmetrized(s)?;
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps solver order on exact ties
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        apply_sign_gauge(vectors.column_mut(dst));
    }
    Ok((values, vectors))
}

/// How symmetric positive semi-definite systems `X B = N` are solved.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsdSolver {
    /// Eigendecomposition pseudo-inverse with relative cutoff [`PINV_CUTOFF`].
    PseudoInverse,
    /// Cholesky factorization; fails on singular systems unless a ridge is set.
    Cholesky,
}

/// Inverse (or pseudo-inverse) of a symmetric PSD matrix.
///
/// `ridge_rel > 0` adds `ridge_rel * trace(B) / dim` to the diagonal, but only
/// when `B` is numerically singular.
pub fn psd_inverse(b: &DMatrix<f64>, solver: PsdSolver, ridge_rel: f64) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PSD solve"));
    }
    let ridge = ridge_rel * b.trace().max(0.0) / n as f64;
    match solver {
        PsdSolver::PseudoInverse => {
            let (values, vectors) = sym_eigen_desc(b)?;
            let lmax = values[0].max(0.0);
            let cutoff = PINV_CUTOFF * lmax;
            let singular = values[n - 1] <= cutoff;
            let shift = if singular && ridge > 0.0 { ridge } else { 0.0 };
            let mut scaled = vectors.clone();
            for (j, &lambda) in values.iter().enumerate() {
                let l = lambda + shift;
                let inv = if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 };
                scaled.column_mut(j).scale_mut(inv);
            }
            Ok(scaled * vectors.transpose())
        }
        PsdSolver::Cholesky => {
            let sym = symmetrized(b)?;
            if let Some(inv) = well_conditioned_cholesky(sym.clone()) {
                return Ok(inv);
            }
            if ridge > 0.0 {
                if let Some(inv) = well_conditioned_cholesky(sym + DMatrix::identity(n, n) * ridge) {
                    return Ok(inv);
                }
            }
            Err(Error::Singular(format!(
                "{n}x{n} Gram matrix is not positive definite; retry with a ridge"
            )))
        }
    }
}

// Rounding lets an exactly singular Gram factor with a tiny positive pivot, so
// pivots are held to the same relative cutoff as the pseudo-inverse.
fn well_conditioned_cholesky(b: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ch = nalgebra::Cholesky::new(b)?;
    let pivots: Vec<f64> = ch.l_dirty().diagonal().iter().map(|d| d * d).collect();
    let max = pivots.iter().copied().fold(0.0, f64::max);
    if pivots.iter().any(|&p| p <= PINV_CUTOFF * max) {
        return None;
    }
    Some(ch.inverse())
}

/// Thin QR orthonormalization of the columns of `m` (`rows >= cols`), with
/// each column sign-gauged.
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let mut q = m.qr().q();
    q = q.columns(0, cols).into_owned();
    for j in 0..cols {
        apply_sign_gauge(q.column_mut(j));
    }
    q
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // fill in column-major order so the draw sequence is layout-independent
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    orthonormalize(gaussian_matrix(rng, rows, cols, 1.0))
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    (g - DMatrix::identity(q.ncols(), q.ncols())).norm()
}

pub fn to_dvector(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}
