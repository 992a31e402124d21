//! Population ridge solution, finite-sample ridge estimator, and residual
//! constructions.
//!
//! The population problem minimizes
//! `trace(E[(Bᵀx − y)(Bᵀx − y)ᵀ]) + λ‖B‖²_Frob` over `p × q` matrices; its
//! unique solution is `B_λ = (Σ_x + λI_p)⁻¹ Σ_xy`, which exists for every
//! positive semidefinite `Σ_x` — including singular ones — as long as
//! `λ > 0`. The finite-sample counterpart replaces the moments by their
//! `1/N`-normalized centered estimators, giving
//! `B̂_λ = (X A_N Xᵀ + λN I_p)⁻¹ X A_N Yᵀ`.
//!
//! Two derived `p × p` matrices recur throughout the error formulas:
//! the resolvent `R_λ = (X A_N Xᵀ + λN I_p)⁻¹` and the shrink multiplier
//! `Z_λ = R_λ X A_N Xᵀ = I_p − λN R_λ`. When `X A_N Xᵀ` is invertible a
//! third form holds, `Z_λ = (I_p + λN (X A_N Xᵀ)⁻¹)⁻¹`, and the ridge
//! estimator factors over ordinary least squares as `B̂_λ = Z_λ B̂`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RCOND_SINGULAR};
use crate::moments::{MomentSpec, SamplePair};

/// Population ridge solution `B_λ` together with the moments it came from.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    b_lambda: DMatrix<f64>,
    lambda: f64,
    moments: MomentSpec,
}

impl RidgeSolution {
    pub fn b_lambda(&self) -> &DMatrix<f64> {
        &self.b_lambda
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn moments(&self) -> &MomentSpec {
        &self.moments
    }

    /// Residual `‖(Σ_x + λI) B_λ − Σ_xy‖ / max(‖Σ_xy‖, 1)` of the defining
    /// linear system.
    pub fn defining_residual(&self) -> f64 {
        let p = self.moments.p();
        let lhs =
            (self.moments.sigma_x() + self.lambda * DMatrix::identity(p, p)) * &self.b_lambda;
        let scale = self.moments.sigma_xy().norm().max(1.0);
        (lhs - self.moments.sigma_xy()).norm() / scale
    }
}

/// Finite-sample ridge estimate with its resolvent and shrink multiplier.
#[derive(Debug, Clone)]
pub struct RidgeEstimate {
    b_hat: DMatrix<f64>,
    lambda: f64,
    resolvent: DMatrix<f64>,
    shrink: DMatrix<f64>,
    n: usize,
}

impl RidgeEstimate {
    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `R_λ = (X A_N Xᵀ + λN I_p)⁻¹`.
    pub fn resolvent(&self) -> &DMatrix<f64> {
        &self.resolvent
    }

    /// `Z_λ = I_p − λN R_λ`.
    pub fn shrink(&self) -> &DMatrix<f64> {
        &self.shrink
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// A point at which conditional residual moments can be evaluated: a full
/// covariate vector for multivariate models, or the scalar driver `ξ` for
/// models whose covariates are functions of one variable.
#[derive(Debug, Clone)]
pub enum CovariatePoint {
    Vector(DVector<f64>),
    Scalar(f64),
}

type ConditionalEval =
    Arc<dyn Fn(&CovariatePoint) -> Result<(DVector<f64>, DMatrix<f64>)> + Send + Sync>;

/// Distribution summary of the ridge residuals `ε_λ = y − B_λᵀ x`:
/// unconditional mean and covariance, plus optional evaluators for the
/// conditional mean and covariance at a covariate point.
#[derive(Clone)]
pub struct ResidualLaw {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    lambda: f64,
    conditional: Option<ConditionalEval>,
}

impl fmt::Debug for ResidualLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResidualLaw")
            .field("mu", &self.mu)
            .field("sigma", &self.sigma)
            .field("lambda", &self.lambda)
            .field("conditional", &self.conditional.is_some())
            .finish()
    }
}

impl ResidualLaw {
    pub fn unconditional(mu: DVector<f64>, sigma: DMatrix<f64>, lambda: f64) -> Self {
        Self {
            mu,
            sigma,
            lambda,
            conditional: None,
        }
    }

    pub fn with_conditional(mut self, eval: ConditionalEval) -> Self {
        self.conditional = Some(eval);
        self
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn has_conditional(&self) -> bool {
        self.conditional.is_some()
    }

    /// Conditional mean `μ_{ε_λ|x}` at a covariate point.
    pub fn conditional_mean(&self, point: &CovariatePoint) -> Result<DVector<f64>> {
        Ok(self.conditional_moments(point)?.0)
    }

    /// Conditional covariance `Σ_{ε_λ|x}` at a covariate point.
    pub fn conditional_cov(&self, point: &CovariatePoint) -> Result<DMatrix<f64>> {
        Ok(self.conditional_moments(point)?.1)
    }

    pub fn conditional_moments(
        &self,
        point: &CovariatePoint,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match &self.conditional {
            Some(eval) => eval(point),
            None => Err(Error::InvalidArgument(
                "residual law carries no conditional evaluator".into(),
            )),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularization strength must be a nonnegative real, got {lambda}"
        )));
    }
    Ok(())
}

/// Solves `(Σ_x + λI_p) B = Σ_xy` by Cholesky factorization.
///
/// For `λ > 0` this never fails on a valid [`MomentSpec`], no matter how
/// singular `Σ_x` is. For `λ = 0` the covariance must be numerically
/// invertible (reciprocal condition number at least 1e-12).
pub fn ridge_matrix(moments: &MomentSpec, lambda: f64) -> Result<RidgeSolution> {
    check_lambda(lambda)?;
    let p = moments.p();
    if lambda == 0.0 {
        let cond = moments.sigma_x_condition_number();
        if !(cond < 1.0 / RCOND_SINGULAR) {
            return Err(Error::SingularSystem {
                context: "sigma_x is singular and lambda = 0; the unregularized \
                          problem has no solution"
                    .into(),
                cond,
            });
        }
    }
    let system = moments.sigma_x() + lambda * DMatrix::identity(p, p);
    let chol = system.cholesky().ok_or_else(|| Error::SingularSystem {
        context: "Cholesky factorization of (sigma_x + lambda I) failed".into(),
        cond: moments.sigma_x_condition_number(),
    })?;
    let b_lambda = chol.solve(moments.sigma_xy());
    Ok(RidgeSolution {
        b_lambda,
        lambda,
        moments: moments.clone(),
    })
}

/// Unconditional residual moments of `ε_λ = y − B_λᵀ x`.
///
/// Expanding the covariance bilinearly,
///
/// ```text
/// μ_{ε_λ} = μ_y − B_λᵀ μ_x
/// Σ_{ε_λ} = Σ_y − B_λᵀ Σ_xy − Σ_xyᵀ B_λ + B_λᵀ Σ_x B_λ
/// ```
///
/// with every `Σ` a central covariance. The returned law carries no
/// conditional evaluator; data-generating models attach one.
pub fn residual_moments(moments: &MomentSpec, solution: &RidgeSolution) -> Result<ResidualLaw> {
    if moments.p() != solution.b_lambda.nrows() || moments.q() != solution.b_lambda.ncols() {
        return Err(Error::InvalidDimension(format!(
            "moments are ({}, {}) but solution is {}×{}",
            moments.p(),
            moments.q(),
            solution.b_lambda.nrows(),
            solution.b_lambda.ncols()
        )));
    }
    let b = &solution.b_lambda;
    let mu = moments.mu_y() - b.transpose() * moments.mu_x();
    let bt_sxy = b.transpose() * moments.sigma_xy();
    let sigma =
        moments.sigma_y() - &bt_sxy - bt_sxy.transpose() + b.transpose() * moments.sigma_x() * b;
    Ok(ResidualLaw::unconditional(
        mu,
        linalg::symmetrize(&sigma),
        solution.lambda,
    ))
}

/// Finite-sample ridge estimate `B̂_λ = (X A_N Xᵀ + λN I_p)⁻¹ X A_N Yᵀ`,
/// together with `R_λ` and `Z_λ`.
pub fn ridge_estimate(sample: &SamplePair, lambda: f64) -> Result<RidgeEstimate> {
    check_lambda(lambda)?;
    if sample.is_degenerate() {
        return Err(Error::DegenerateSample(format!(
            "ridge estimation requires N ≥ 2, got N = {}",
            sample.n()
        )));
    }
    let p = sample.p();
    let n = sample.n() as f64;
    let gram = linalg::centered_gram(sample.x());
    if lambda == 0.0 {
        let cond = linalg::spd_condition(&gram);
        if !(cond < 1.0 / RCOND_SINGULAR) {
            return Err(Error::SingularSystem {
                context: "X A_N Xᵀ is singular and lambda = 0".into(),
                cond,
            });
        }
    }
    let system = &gram + (lambda * n) * DMatrix::identity(p, p);
    let chol = system.cholesky().ok_or_else(|| Error::SingularSystem {
        context: "Cholesky factorization of (X A_N Xᵀ + lambda N I) failed".into(),
        cond: linalg::spd_condition(&gram),
    })?;
    let cross = linalg::centered_cross(sample.x(), sample.y());
    let b_hat = chol.solve(&cross);
    let resolvent = chol.inverse();
    let shrink = DMatrix::identity(p, p) - (lambda * n) * &resolvent;
    Ok(RidgeEstimate {
        b_hat,
        lambda,
        resolvent,
        shrink,
        n: sample.n(),
    })
}

/// Ordinary least squares `B̂ = (X A_N Xᵀ)⁻¹ X A_N Yᵀ`.
///
/// This is exactly the estimator that stops existing in the singular
/// setting, so rank deficiency is reported as an error and never silently
/// regularized away.
pub fn ols_estimate(sample: &SamplePair) -> Result<DMatrix<f64>> {
    if sample.is_degenerate() {
        return Err(Error::DegenerateSample(format!(
            "least squares requires N ≥ 2, got N = {}",
            sample.n()
        )));
    }
    let gram = linalg::centered_gram(sample.x());
    let cond = linalg::spd_condition(&gram);
    if !(cond < 1.0 / RCOND_SINGULAR) {
        return Err(Error::SingularSystem {
            context: "X A_N Xᵀ is singular; no least-squares estimator exists".into(),
            cond,
        });
    }
    let chol = gram.cholesky().ok_or(Error::SingularSystem {
        context: "Cholesky factorization of X A_N Xᵀ failed".into(),
        cond,
    })?;
    Ok(chol.solve(&linalg::centered_cross(sample.x(), sample.y())))
}

/// The three algebraic forms of the shrink multiplier `Z_λ`.
#[derive(Debug, Clone)]
pub struct ShrinkForms {
    /// `R_λ X A_N Xᵀ`.
    pub product: DMatrix<f64>,
    /// `I_p − λN R_λ`.
    pub identity: DMatrix<f64>,
    /// `(I_p + λN (X A_N Xᵀ)⁻¹)⁻¹`; `None` when `X A_N Xᵀ` is singular.
    pub inverse: Option<DMatrix<f64>>,
}

impl ShrinkForms {
    /// True when the third form was unavailable.
    pub fn gram_singular(&self) -> bool {
        self.inverse.is_none()
    }
}

/// Computes `Z_λ` three ways; the first two exist for any sample, the third
/// needs `X A_N Xᵀ` invertible.
pub fn shrink_multiplier_forms(sample: &SamplePair, lambda: f64) -> Result<ShrinkForms> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shrink multiplier forms require lambda > 0, got {lambda}"
        )));
    }
    let estimate = ridge_estimate(sample, lambda)?;
    let gram = linalg::centered_gram(sample.x());
    let product = estimate.resolvent() * &gram;
    let identity = estimate.shrink().clone();
    let inverse = if linalg::spd_condition(&gram) < 1.0 / RCOND_SINGULAR {
        let p = sample.p();
        let gram_inv = gram
            .clone()
            .cholesky()
            .ok_or(Error::SingularSystem {
                context: "Cholesky of X A_N Xᵀ failed".into(),
                cond: linalg::spd_condition(&gram),
            })?
            .inverse();
        let inner = DMatrix::identity(p, p) + (lambda * sample.n() as f64) * gram_inv;
        Some(
            inner
                .cholesky()
                .ok_or(Error::SingularSystem {
                    context: "Cholesky of (I + lambda N (X A_N Xᵀ)⁻¹) failed".into(),
                    cond: f64::INFINITY,
                })?
                .inverse(),
        )
    } else {
        None
    };
    Ok(ShrinkForms {
        product,
        identity,
        inverse,
    })
}

/// Residual matrix `E_λ = Y − B_λᵀ X`.
pub fn residual_matrix(sample: &SamplePair, solution: &RidgeSolution) -> Result<DMatrix<f64>> {
    let b = solution.b_lambda();
    if b.nrows() != sample.p() || b.ncols() != sample.q() {
        return Err(Error::InvalidDimension(format!(
            "solution is {}×{} but sample has p = {}, q = {}",
            b.nrows(),
            b.ncols(),
            sample.p(),
            sample.q()
        )));
    }
    Ok(sample.y() - b.transpose() * sample.x())
}
