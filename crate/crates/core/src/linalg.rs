//! Dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices. The centered
//! products avoid materializing the `n × n` centering matrix `A_n`: for a
//! `p × n` sample `X`, `X A_n Xᵀ` is accumulated as `XXᵀ − (1/n)(Xi)(Xi)ᵀ`,
//! which costs `O(p²n)` and never touches `O(n²)` storage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of constructed scale/covariance matrices may dip below zero
/// by rounding; anything above this floor is treated as positive
/// semidefinite, anything below it is rejected.
pub const PSD_EIGENVALUE_FLOOR: f64 = -1e-10;

/// Reciprocal condition numbers below this count as singular.
pub const RCOND_SINGULAR: f64 = 1e-12;

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Largest absolute entry of `A − Aᵀ`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = a
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    DVector::from_vec(ev)
}

/// Checks all entries finite and the smallest eigenvalue above the PSD
/// floor.
///
/// The floor is `PSD_EIGENVALUE_FLOOR` for unit-scale covariances and
/// scales with the largest diagonal entry beyond that: eigenvalues of a
/// matrix with norm `s` are only computable to absolute accuracy
/// `O(s·eps)`, so an absolute floor would spuriously reject large, genuinely
/// PSD covariances (the shifted-support testing moments at high polynomial
/// degree reach norms above 1e7).
pub fn check_psd(name: &str, a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCovariance(format!(
            "{name} contains non-finite entries"
        )));
    }
    if a.nrows() == 0 {
        return Ok(());
    }
    let scale = a.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let min_eig = sym_eigenvalues(a)[0];
    if min_eig < PSD_EIGENVALUE_FLOOR * scale {
        return Err(Error::InvalidCovariance(format!(
            "{name} is not positive semidefinite: smallest eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

/// Spectral condition number of a symmetric PSD matrix (max |eig| / min |eig|).
/// Returns `f64::INFINITY` when the smallest eigenvalue is zero.
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(a);
    let max = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 || max == 0.0 {
        return f64::INFINITY;
    }
    max / min
}

/// Reciprocal condition number; 0.0 for an exactly singular matrix.
pub fn spd_rcond(a: &DMatrix<f64>) -> f64 {
    let c = spd_condition(a);
    if c.is_infinite() {
        0.0
    } else {
        1.0 / c
    }
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues in `[PSD_EIGENVALUE_FLOOR, 0)` are clipped to zero; anything
/// below the floor is an error rather than a silent clip.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(a).symmetric_eigen();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < PSD_EIGENVALUE_FLOOR {
            return Err(Error::InvalidCovariance(format!(
                "matrix square root of an indefinite matrix (eigenvalue {v:.3e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.column_mean();
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// `X A_n Xᵀ` (symmetric), without materializing `A_n`.
///
/// Two-pass: columns are centered first, then multiplied. The one-pass
/// `XXᵀ − (1/n)(Xi)(Xi)ᵀ` rearrangement cancels catastrophically when the
/// column mean dominates the spread; centering first keeps the result
/// translation-invariant to ~1e-13.
pub fn centered_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = center_columns(x);
    symmetrize(&(&c * c.transpose()))
}

/// `X A_n Yᵀ`, without materializing `A_n`.
pub fn centered_cross(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let cx = center_columns(x);
    let cy = center_columns(y);
    cx * cy.transpose()
}

/// Relative Frobenius distance `‖a − b‖ / max(‖a‖, ‖b‖)`; absolute when both
/// norms vanish.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    let diff = (a - b).norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Relative difference of two scalars, absolute near zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}
