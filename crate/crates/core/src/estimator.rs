//! Conditional distribution of the ridge estimator and matrix-normal
//! machinery.
//!
//! With conditionally normal, homoscedastic residuals (constant conditional
//! covariance `Σ^λ_{ε|x}`), the residual matrix satisfies
//! `E_λ | X ~ MN(M_{E_λ|X}, Σ^λ_{ε|x}, I_N)` and the estimator error is
//! matrix-normal:
//!
//! ```text
//! (B̂_λ − B_λ) | X ~ MN(−λN R_λ B_λ + R_λ X A_N M_{E_λ|X}ᵀ,  Z_λ R_λ,  Σ^λ_{ε|x})
//! ```
//!
//! The row scale admits two transcriptions, `Z_λ R_λ` and
//! `R_λ (X A_N Xᵀ) R_λ`; they coincide because `A_N` is idempotent. Both are
//! computed here and compared, and the manifestly symmetric product form is
//! the one returned.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, RCOND_SINGULAR};

/// Tolerance for the row-scale transcription cross-check.
const SCALE_FORM_TOL: f64 = 1e-10;

/// Matrix-variate normal law `MN(M, U, V)`: mean `M ∈ R^{m×n}`, row scale
/// `U ∈ S_m`, column scale `V ∈ S_n`, so `Cov(vec X) = V ⊗ U`.
#[derive(Debug, Clone)]
pub struct MatrixNormalLaw {
    mean: DMatrix<f64>,
    row_scale: DMatrix<f64>,
    col_scale: DMatrix<f64>,
    row_sqrt: DMatrix<f64>,
    col_sqrt: DMatrix<f64>,
}

impl MatrixNormalLaw {
    pub fn new(
        mean: DMatrix<f64>,
        row_scale: DMatrix<f64>,
        col_scale: DMatrix<f64>,
    ) -> Result<Self> {
        let (m, n) = mean.shape();
        if row_scale.shape() != (m, m) || col_scale.shape() != (n, n) {
            return Err(Error::InvalidDimension(format!(
                "mean is {m}×{n} but scales are {}×{} and {}×{}",
                row_scale.nrows(),
                row_scale.ncols(),
                col_scale.nrows(),
                col_scale.ncols()
            )));
        }
        for (name, s) in [("row scale", &row_scale), ("column scale", &col_scale)] {
            let asym = linalg::max_asymmetry(s);
            if asym > 1e-12 {
                return Err(Error::InvalidCovariance(format!(
                    "{name} is asymmetric by {asym:.3e}"
                )));
            }
        }
        let row_scale = linalg::symmetrize(&row_scale);
        let col_scale = linalg::symmetrize(&col_scale);
        let row_sqrt = linalg::sym_sqrt(&row_scale)?;
        let col_sqrt = linalg::sym_sqrt(&col_scale)?;
        Ok(Self {
            mean,
            row_scale,
            col_scale,
            row_sqrt,
            col_sqrt,
        })
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn row_scale(&self) -> &DMatrix<f64> {
        &self.row_scale
    }

    pub fn col_scale(&self) -> &DMatrix<f64> {
        &self.col_scale
    }

    /// `Cov(vec X) = V ⊗ U`.
    pub fn vec_covariance(&self) -> DMatrix<f64> {
        self.col_scale.kronecker(&self.row_scale)
    }
}

/// One draw `M + U^{1/2} G V^{1/2}` with `G` iid standard normal.
pub fn sample_matrix_normal(law: &MatrixNormalLaw, rng: &mut impl Rng) -> DMatrix<f64> {
    let (m, n) = law.mean.shape();
    let g = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng));
    &law.mean + &law.row_sqrt * g * &law.col_sqrt
}

/// Conditional law of the estimator error `D_λ = B̂_λ − B_λ` given `X`
/// (or of `B̂_λ − B` for the linear model), plus the pieces it was built
/// from.
#[derive(Debug, Clone)]
pub struct EstimatorLaw {
    law: MatrixNormalLaw,
    bias: DMatrix<f64>,
    resolvent: DMatrix<f64>,
    shrink: DMatrix<f64>,
    /// `Z_λ (X A_N Xᵀ)⁻¹ Z_λ`, available when the centered gram matrix is
    /// invertible; algebraically equal to the row scale.
    alt_row_scale: Option<DMatrix<f64>>,
}

impl EstimatorLaw {
    pub fn law(&self) -> &MatrixNormalLaw {
        &self.law
    }

    /// Mean of `D_λ`: `M_{D_λ} = −λN R_λ B_λ + R_λ X A_N M_{E_λ|X}ᵀ`.
    pub fn bias(&self) -> &DMatrix<f64> {
        &self.bias
    }

    pub fn resolvent(&self) -> &DMatrix<f64> {
        &self.resolvent
    }

    pub fn shrink(&self) -> &DMatrix<f64> {
        &self.shrink
    }

    pub fn alt_row_scale(&self) -> Option<&DMatrix<f64>> {
        self.alt_row_scale.as_ref()
    }
}

struct ResolventParts {
    gram: DMatrix<f64>,
    resolvent: DMatrix<f64>,
    shrink: DMatrix<f64>,
    row_scale: DMatrix<f64>,
}

/// Builds `R_λ`, `Z_λ`, and the row scale from a covariate sample,
/// asserting the two row-scale transcriptions against each other.
fn resolvent_parts(x_sample: &DMatrix<f64>, lambda: f64) -> Result<ResolventParts> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "estimator law requires lambda > 0, got {lambda}"
        )));
    }
    let p = x_sample.nrows();
    let n = x_sample.ncols() as f64;
    let gram = linalg::centered_gram(x_sample);
    let system = &gram + (lambda * n) * DMatrix::identity(p, p);
    let chol = system.cholesky().ok_or_else(|| Error::SingularSystem {
        context: "Cholesky factorization of (X A_N Xᵀ + lambda N I) failed".into(),
        cond: linalg::spd_condition(&gram),
    })?;
    let resolvent = chol.inverse();
    let shrink = DMatrix::identity(p, p) - (lambda * n) * &resolvent;

    // Symmetric product form R (X A_N Xᵀ) R, cross-checked against Z·R.
    // The deviation is normalized by ‖R‖ rather than ‖ZR‖: ‖Z‖ ≤ 1 always,
    // and at extreme λN the literal Z = I − λN R cancels catastrophically
    // while remaining correct to eps·‖R‖.
    let row_scale = linalg::symmetrize(&(&resolvent * &gram * &resolvent));
    let literal = &shrink * &resolvent;
    let dev = (&row_scale - literal).norm() / resolvent.norm();
    if dev > SCALE_FORM_TOL {
        return Err(Error::InternalConsistency(format!(
            "row-scale transcriptions Z_λR_λ and R_λXA_NXᵀR_λ disagree by {dev:.3e}"
        )));
    }
    Ok(ResolventParts {
        gram,
        resolvent,
        shrink,
        row_scale,
    })
}

/// Conditional law of `D_λ = B̂_λ − B_λ` given `X`, for homoscedastic
/// residuals with conditional mean matrix `cond_resid_mean` (`q × N`) and
/// constant conditional covariance `cond_resid_cov` (`q × q`).
pub fn estimator_conditional_law(
    x_sample: &DMatrix<f64>,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean: &DMatrix<f64>,
    cond_resid_cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<EstimatorLaw> {
    let (p, n) = x_sample.shape();
    let q = b_lambda.ncols();
    if b_lambda.nrows() != p {
        return Err(Error::InvalidDimension(
            "b_lambda row count must match the covariate dimension".into(),
        ));
    }
    if cond_resid_mean.shape() != (q, n) {
        return Err(Error::InvalidDimension(format!(
            "conditional residual mean must be {q}×{n}, got {}×{}",
            cond_resid_mean.nrows(),
            cond_resid_mean.ncols()
        )));
    }
    linalg::check_psd("conditional residual covariance", cond_resid_cov)?;
    let parts = resolvent_parts(x_sample, lambda)?;
    let bias = -(lambda * n as f64) * &parts.resolvent * b_lambda
        + &parts.resolvent * linalg::centered_cross(x_sample, cond_resid_mean);
    let law = MatrixNormalLaw::new(
        bias.clone(),
        parts.row_scale.clone(),
        linalg::symmetrize(cond_resid_cov),
    )?;
    Ok(EstimatorLaw {
        law,
        bias,
        resolvent: parts.resolvent,
        shrink: parts.shrink,
        alt_row_scale: None,
    })
}

/// Conditional law of `B̂_λ − B` given `X` for the linear model
/// `y = Bᵀx + ε`, `ε ~ N(0, Σ_ε)` independent of `x`:
/// `MN(−λN R_λ B, Z_λ R_λ, Σ_ε)`.
///
/// When `X A_N Xᵀ` is invertible the equivalent row scale
/// `Z_λ (X A_N Xᵀ)⁻¹ Z_λ` is exposed as well.
pub fn estimator_law_linear_model(
    x_sample: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma_eps: &DMatrix<f64>,
    lambda: f64,
) -> Result<EstimatorLaw> {
    let (p, n) = x_sample.shape();
    if b.nrows() != p {
        return Err(Error::InvalidDimension(
            "B row count must match the covariate dimension".into(),
        ));
    }
    linalg::check_psd("sigma_eps", sigma_eps)?;
    let parts = resolvent_parts(x_sample, lambda)?;
    let bias = -(lambda * n as f64) * &parts.resolvent * b;
    let alt_row_scale = if linalg::spd_condition(&parts.gram) < 1.0 / RCOND_SINGULAR {
        let gram_inv = parts
            .gram
            .clone()
            .cholesky()
            .ok_or(Error::SingularSystem {
                context: "Cholesky of X A_N Xᵀ failed".into(),
                cond: linalg::spd_condition(&parts.gram),
            })?
            .inverse();
        Some(linalg::symmetrize(
            &(&parts.shrink * gram_inv * parts.shrink.transpose()),
        ))
    } else {
        None
    };
    let law = MatrixNormalLaw::new(
        bias.clone(),
        parts.row_scale.clone(),
        linalg::symmetrize(sigma_eps),
    )?;
    Ok(EstimatorLaw {
        law,
        bias,
        resolvent: parts.resolvent,
        shrink: parts.shrink,
        alt_row_scale,
    })
}

/// Second moment of the estimator error:
/// `E[D_λ D_λᵀ | X] = trace(Σ^λ_{ε|x})·Z_λR_λ + M_{D_λ} M_{D_λ}ᵀ`.
pub fn second_moment_outer(law: &EstimatorLaw) -> DMatrix<f64> {
    law.law.col_scale().trace() * law.law.row_scale() + &law.bias * law.bias.transpose()
}

/// Empirical check of the homoscedastic second-moment identities for a
/// collection of residual-matrix draws `E_λ | X`:
///
/// ```text
/// E[E_λᵀE_λ | X] − MᵀM = trace(Σ)·I_N
/// E[E_λE_λᵀ | X] − MMᵀ = N·Σ
/// ```
#[derive(Debug, Clone)]
pub struct ResidualMomentReport {
    /// Largest absolute deviation from `trace(Σ)·I_N` (the `N × N`
    /// identity).
    pub max_dev_trace_identity: f64,
    /// Largest deviation in standard-error units for the identity above.
    pub max_z_trace_identity: f64,
    /// Largest absolute deviation from `N·Σ` (the `q × q` identity).
    pub max_dev_outer_identity: f64,
    /// Largest deviation in standard-error units for the identity above.
    pub max_z_outer_identity: f64,
    pub replications: usize,
}

/// Compares empirical second moments of residual draws against the
/// homoscedastic identities. `cond_mean` is `M_{E_λ|X}` (`q × N`) and
/// `cond_cov` the assumed constant conditional covariance (`q × q`).
pub fn homoscedastic_residual_identities(
    residual_draws: &[DMatrix<f64>],
    cond_mean: &DMatrix<f64>,
    cond_cov: &DMatrix<f64>,
) -> Result<ResidualMomentReport> {
    if residual_draws.is_empty() {
        return Err(Error::InvalidArgument(
            "no residual draws supplied".into(),
        ));
    }
    let (q, n) = cond_mean.shape();
    for draw in residual_draws {
        if draw.shape() != (q, n) {
            return Err(Error::InvalidDimension(format!(
                "residual draw is {}×{}, expected {q}×{n}",
                draw.nrows(),
                draw.ncols()
            )));
        }
    }
    let reps = residual_draws.len() as f64;

    // Identity (i): columns-Gram statistic G = EᵀE, theory MᵀM + tr(Σ)·I_N.
    let theory_gram = cond_mean.transpose() * cond_mean
        + cond_cov.trace() * DMatrix::identity(n, n);
    // Identity (ii): rows-Gram statistic H = EEᵀ, theory MMᵀ + N·Σ.
    let theory_outer = cond_mean * cond_mean.transpose() + n as f64 * cond_cov;

    let mut sum_gram = DMatrix::zeros(n, n);
    let mut sumsq_gram = DMatrix::zeros(n, n);
    let mut sum_outer = DMatrix::zeros(q, q);
    let mut sumsq_outer = DMatrix::zeros(q, q);
    for draw in residual_draws {
        let gram = draw.transpose() * draw;
        sumsq_gram += gram.map(|v| v * v);
        sum_gram += gram;
        let outer = draw * draw.transpose();
        sumsq_outer += outer.map(|v| v * v);
        sum_outer += outer;
    }

    let stats = |sum: &DMatrix<f64>, sumsq: &DMatrix<f64>, theory: &DMatrix<f64>| {
        let mean = sum / reps;
        let mut max_dev = 0.0_f64;
        let mut max_z = 0.0_f64;
        for i in 0..mean.nrows() {
            for j in 0..mean.ncols() {
                let dev = (mean[(i, j)] - theory[(i, j)]).abs();
                max_dev = max_dev.max(dev);
                let var = (sumsq[(i, j)] / reps - mean[(i, j)] * mean[(i, j)]).max(0.0);
                let se = (var / reps).sqrt();
                if se > 0.0 {
                    max_z = max_z.max(dev / se);
                } else if dev > 0.0 {
                    max_z = f64::INFINITY;
                }
            }
        }
        (max_dev, max_z)
    };
    let (max_dev_trace_identity, max_z_trace_identity) =
        stats(&sum_gram, &sumsq_gram, &theory_gram);
    let (max_dev_outer_identity, max_z_outer_identity) =
        stats(&sum_outer, &sumsq_outer, &theory_outer);

    Ok(ResidualMomentReport {
        max_dev_trace_identity,
        max_z_trace_identity,
        max_dev_outer_identity,
        max_z_outer_identity,
        replications: residual_draws.len(),
    })
}
