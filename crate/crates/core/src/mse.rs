//! Closed-form regression error functionals.
//!
//! Four error notions, all in units of `y²`:
//!
//! - **characteristic** error: `E[ε_λᵀ ε_λ] = trace(Σ_{ε_λ} + μ_{ε_λ}μ_{ε_λ}ᵀ)`,
//!   the error of the regression with *known* coefficient `B_λ` (the
//!   irreducible error of the regularized model);
//! - **conditional characteristic** error: the same conditional on a
//!   covariate value;
//! - **conditional total training** error:
//!   `(1/N)·trace(E_X[(Y − B̂_λᵀX)ᵀ(Y − B̂_λᵀX)])`, which folds in the
//!   estimation error of fitting `B̂_λ` on the very sample being scored;
//! - **conditional total testing** error: the expected out-of-sample MSE
//!   given the training covariates `X₁`, over fresh testing samples whose
//!   distribution may differ from the training one.
//!
//! The training formula is evaluated in two independently transcribed
//! forms — one keeping the full `−(2/N)trace((XᵀR_λXA_N − I_N)XᵀB_λM)`
//! cross term, one with that term collapsed through `Z_λ = I − λN R_λ`
//! into `+2λ·trace(XᵀR_λB_λM)` — and their disagreement is a hard
//! [`Error::InternalConsistency`] failure: the equivalence is exact
//! algebra, so any gap is a transcription bug.
//!
//! Traces of long products are parenthesized so intermediates stay at most
//! `p × p` or `q × q`; the only `N`-sized objects ever formed are `p × N`
//! and `q × N` factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{AdditiveModel, MultiplicativeModel};
use crate::moments::MomentSpec;
use crate::quad;
use crate::ridge::{CovariatePoint, ResidualLaw};

/// Relative tolerance for the dual-form training check.
const FORM_EQUIVALENCE_TOL: f64 = 1e-10;

/// Numerical slack below zero an error value may carry.
const VALUE_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Characteristic,
    ConditionalCharacteristic,
    Training,
    Testing,
}

impl ErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Characteristic => "characteristic",
            ErrorKind::ConditionalCharacteristic => "conditional-characteristic",
            ErrorKind::Training => "training",
            ErrorKind::Testing => "testing",
        }
    }
}

/// An evaluated error with the named terms that sum to it.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub lambda: f64,
    pub value: f64,
    pub breakdown: Vec<(&'static str, f64)>,
}

impl ErrorReport {
    fn from_breakdown(
        kind: ErrorKind,
        lambda: f64,
        breakdown: Vec<(&'static str, f64)>,
    ) -> Result<Self> {
        let value: f64 = breakdown.iter().map(|(_, v)| v).sum();
        if !value.is_finite() || value < VALUE_FLOOR {
            return Err(Error::InternalConsistency(format!(
                "{} error evaluated to {value:.6e}",
                kind.as_str()
            )));
        }
        Ok(Self {
            kind,
            lambda,
            value,
            breakdown,
        })
    }

    pub fn term(&self, label: &str) -> Option<f64> {
        self.breakdown
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, v)| *v)
    }
}

/// CSV rows `kind,lambda,p,n1,n2,value,<term>...` for a batch of reports of
/// one kind. `n1`/`n2` are zero where a sample length does not apply.
pub fn reports_to_csv(rows: &[(ErrorReport, usize, usize, usize)]) -> Result<String> {
    let Some((first, ..)) = rows.first() else {
        return Err(Error::InvalidArgument("no reports to serialize".into()));
    };
    let labels: Vec<&'static str> = first.breakdown.iter().map(|(l, _)| *l).collect();
    let mut out = String::from("kind,lambda,p,n1,n2,value");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (report, p, n1, n2) in rows {
        if report.kind != first.kind {
            return Err(Error::InvalidArgument(
                "mixed report kinds in one CSV batch".into(),
            ));
        }
        out.push_str(&format!(
            "{},{:.16e},{p},{n1},{n2},{:.16e}",
            report.kind.as_str(),
            report.lambda,
            report.value
        ));
        for l in &labels {
            let v = report.term(l).ok_or_else(|| {
                Error::InvalidArgument(format!("report missing breakdown term {l}"))
            })?;
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Characteristic (irreducible) error `trace(Σ_{ε_λ}) + ‖μ_{ε_λ}‖²`.
pub fn characteristic_error(resid: &ResidualLaw) -> Result<ErrorReport> {
    ErrorReport::from_breakdown(
        ErrorKind::Characteristic,
        resid.lambda(),
        vec![
            ("irreducible", resid.sigma().trace()),
            ("mean_offset", resid.mu().norm_squared()),
        ],
    )
}

/// Conditional characteristic error
/// `trace(Σ_{ε_λ|x}) + ‖μ_{ε_λ|x}‖²` at a covariate point.
pub fn conditional_characteristic_error(
    resid: &ResidualLaw,
    point: &CovariatePoint,
) -> Result<ErrorReport> {
    let (mu, sigma) = resid.conditional_moments(point)?;
    ErrorReport::from_breakdown(
        ErrorKind::ConditionalCharacteristic,
        resid.lambda(),
        vec![
            ("irreducible", sigma.trace()),
            ("mean_offset", mu.norm_squared()),
        ],
    )
}

/// Closed-form characteristic error of an additive model under a ridge
/// vector `B_λ`: `σ_ε² + E[f²] + B_λᵀΣ_xB_λ − 2B_λᵀΣ_xy`.
pub fn characteristic_error_additive(
    model: &AdditiveModel,
    b_lambda: &DMatrix<f64>,
    lambda: f64,
) -> Result<ErrorReport> {
    let moments = crate::models::population_moments_additive(model)?;
    let (a, b) = model.xi().support();
    let g = model.xi().density();
    let f2 = quad::integrate(|z| model.f().eval(z).powi(2) * g, a, b, 1e-12)?.value;
    let model_energy = (b_lambda.transpose() * moments.sigma_x() * b_lambda)[(0, 0)];
    let alignment = -2.0 * (b_lambda.transpose() * moments.sigma_xy())[(0, 0)];
    ErrorReport::from_breakdown(
        ErrorKind::Characteristic,
        lambda,
        vec![
            ("noise", model.sigma_eps() * model.sigma_eps()),
            ("signal_energy", f2),
            ("model_energy", model_energy),
            ("alignment", alignment),
        ],
    )
}

/// Closed-form characteristic error of a multiplicative model:
/// `(σ_ε² + μ_ε²)·E[f²] + B_λᵀΣ_xB_λ − 2B_λᵀΣ_xy`.
///
/// The noise energy carries the full raw second moment `σ_ε² + μ_ε²` of the
/// disturbance: averaging the conditional characteristic error
/// `σ_ε²f(ξ)² + f(ξ)²μ_ε² − 2μ_εf(ξ)B_λᵀx + B_λᵀxxᵀB_λ` over `ξ` produces
/// exactly that coefficient, and the Monte Carlo oracle confirms it.
pub fn characteristic_error_multiplicative(
    model: &MultiplicativeModel,
    b_lambda: &DMatrix<f64>,
    lambda: f64,
) -> Result<ErrorReport> {
    let moments = crate::models::population_moments_multiplicative(model)?;
    let (a, b) = model.xi_density().support();
    let g = model.xi_density().density();
    let f2 = quad::integrate(|z| model.f().eval(z).powi(2) * g, a, b, 1e-12)?.value;
    let model_energy = (b_lambda.transpose() * moments.sigma_x() * b_lambda)[(0, 0)];
    let alignment = -2.0 * (b_lambda.transpose() * moments.sigma_xy())[(0, 0)];
    let noise = (model.sigma_eps() * model.sigma_eps() + model.mu_eps() * model.mu_eps()) * f2;
    ErrorReport::from_breakdown(
        ErrorKind::Characteristic,
        lambda,
        vec![
            ("noise", noise),
            ("model_energy", model_energy),
            ("alignment", alignment),
        ],
    )
}

/// Shared factorization pieces for the training/testing formulas, all built
/// from the training design.
struct TrainingParts {
    n: f64,
    /// `X Xᵀ` (uncentered).
    gram_raw: DMatrix<f64>,
    /// `X A_N Xᵀ`.
    gram_centered: DMatrix<f64>,
    /// `R_λ`.
    resolvent: DMatrix<f64>,
    /// `Z_λ = I − λN R_λ`.
    shrink: DMatrix<f64>,
    /// `Z_λ R_λ`, in the symmetric form `R_λ (X A_N Xᵀ) R_λ`.
    row_scale: DMatrix<f64>,
    /// `M_{D_λ} = −λN R_λ B_λ + R_λ X A_N Mᵀ`.
    bias: DMatrix<f64>,
    /// `X A_N Mᵀ` (p × q).
    cross_centered: DMatrix<f64>,
    /// `M Xᵀ` (q × p).
    mean_xt: DMatrix<f64>,
}

fn training_parts(
    x_sample: &DMatrix<f64>,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean: &DMatrix<f64>,
    cond_resid_cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<TrainingParts> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "the error formulas require lambda > 0, got {lambda}"
        )));
    }
    let (p, n) = x_sample.shape();
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "error formulas require N ≥ 2, got N = {n}"
        )));
    }
    let q = b_lambda.ncols();
    if b_lambda.nrows() != p {
        return Err(Error::InvalidDimension(
            "b_lambda must have one row per covariate".into(),
        ));
    }
    if cond_resid_mean.shape() != (q, n) {
        return Err(Error::InvalidDimension(format!(
            "conditional residual mean must be {q}×{n}, got {}×{}",
            cond_resid_mean.nrows(),
            cond_resid_mean.ncols()
        )));
    }
    if cond_resid_cov.shape() != (q, q) {
        return Err(Error::InvalidDimension(
            "conditional residual covariance must be q×q".into(),
        ));
    }
    linalg::check_psd("conditional residual covariance", cond_resid_cov)?;

    let nf = n as f64;
    let gram_centered = linalg::centered_gram(x_sample);
    let system = &gram_centered + (lambda * nf) * DMatrix::identity(p, p);
    let chol = system.cholesky().ok_or_else(|| Error::SingularSystem {
        context: "Cholesky factorization of (X A_N Xᵀ + lambda N I) failed".into(),
        cond: linalg::spd_condition(&gram_centered),
    })?;
    let resolvent = chol.inverse();
    let shrink = DMatrix::identity(p, p) - (lambda * nf) * &resolvent;
    let row_scale = linalg::symmetrize(&(&resolvent * &gram_centered * &resolvent));
    let cross_centered = linalg::centered_cross(x_sample, cond_resid_mean);
    let bias = -(lambda * nf) * &resolvent * b_lambda + &resolvent * &cross_centered;
    let mean_xt = cond_resid_mean * x_sample.transpose();
    Ok(TrainingParts {
        n: nf,
        gram_raw: x_sample * x_sample.transpose(),
        gram_centered,
        resolvent,
        shrink,
        row_scale,
        bias,
        cross_centered,
        mean_xt,
    })
}

fn training_terms(
    parts: &TrainingParts,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean: &DMatrix<f64>,
    cond_resid_cov: &DMatrix<f64>,
    lambda: f64,
) -> (Vec<(&'static str, f64)>, f64, f64) {
    let n = parts.n;
    let tr_sigma = cond_resid_cov.trace();
    let g = &parts.gram_raw;

    // (1/N)·tr(Σ)·trace(Z_λ(R_λXXᵀ − 2I)), p×p intermediates only.
    let t_var = tr_sigma / n
        * ((&parts.shrink * (&parts.resolvent * g)).trace() - 2.0 * parts.shrink.trace());
    // (1/N)·trace(M_D M_Dᵀ XXᵀ) = (1/N)·trace(M_Dᵀ (XXᵀ) M_D).
    let t_bias = (parts.bias.transpose() * g * &parts.bias).trace() / n;

    // trace((XᵀR_λXA_N − ½I_N)MᵀM)
    //   = trace(R_λ·(XA_NMᵀ)·(MXᵀ)) − ½‖M‖²_Frob.
    let t_mean = (&parts.resolvent * &parts.cross_centered * &parts.mean_xt).trace()
        - 0.5 * cond_resid_mean.norm_squared();

    // Short form collapses the coupling term to +2λ·trace(XᵀR_λB_λM)
    //   = +2λ·trace(R_λ·B_λ·(MXᵀ)).
    let t_coupling_short = (&parts.resolvent * b_lambda * &parts.mean_xt).trace();
    let short_cross = -2.0 / n * t_mean + 2.0 * lambda * t_coupling_short;

    // Long form keeps trace((XᵀR_λXA_N − I_N)·XᵀB_λM)
    //   = trace(R_λ·(XA_NXᵀ)·B_λ·(MXᵀ)) − trace(B_λ·(MXᵀ)).
    let t_coupling_long = (&parts.resolvent * (&parts.gram_centered * b_lambda)
        * &parts.mean_xt)
        .trace()
        - (b_lambda * &parts.mean_xt).trace();
    let long_cross = -2.0 / n * (t_mean + t_coupling_long);

    let common = tr_sigma + t_var + t_bias;
    let breakdown = vec![
        ("irreducible", tr_sigma),
        ("estimation_variance", t_var),
        ("estimation_bias", t_bias),
        ("cross", short_cross),
    ];
    (breakdown, common + long_cross, common + short_cross)
}

/// Both transcriptions of the conditional total training error, returned as
/// `(long, short)`; see the module docs.
pub fn training_error_forms(
    x_sample: &DMatrix<f64>,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean: &DMatrix<f64>,
    cond_resid_cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<(f64, f64)> {
    let parts = training_parts(x_sample, b_lambda, cond_resid_mean, cond_resid_cov, lambda)?;
    let (_, long, short) =
        training_terms(&parts, b_lambda, cond_resid_mean, cond_resid_cov, lambda);
    Ok((long, short))
}

/// Conditional total training error under homoscedastic residuals.
///
/// Evaluates both printed forms, errors if they disagree beyond 1e-10
/// relative, and reports the short form's term breakdown:
/// `irreducible + estimation_variance + estimation_bias + cross`.
pub fn training_error(
    x_sample: &DMatrix<f64>,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean: &DMatrix<f64>,
    cond_resid_cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<ErrorReport> {
    let parts = training_parts(x_sample, b_lambda, cond_resid_mean, cond_resid_cov, lambda)?;
    let (breakdown, long, short) =
        training_terms(&parts, b_lambda, cond_resid_mean, cond_resid_cov, lambda);
    let dev = linalg::rel_diff(long, short);
    if dev > FORM_EQUIVALENCE_TOL {
        return Err(Error::InternalConsistency(format!(
            "training-error forms disagree: long {long:.12e} vs short {short:.12e} \
             (relative {dev:.3e})"
        )));
    }
    ErrorReport::from_breakdown(ErrorKind::Training, lambda, breakdown)
}

/// Training error specialization for the linear model `y = Bᵀx + ε`:
/// `trace(Σ_ε) + (1/N)trace(Σ_ε)trace(Z_λ(R_λXXᵀ − 2I)) + λ²N·trace(R_λBBᵀR_λXXᵀ)`.
pub fn training_error_linear_model(
    x_sample: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma_eps: &DMatrix<f64>,
    lambda: f64,
) -> Result<ErrorReport> {
    let q = b.ncols();
    let n = x_sample.ncols() as f64;
    let zero_mean = DMatrix::zeros(q, x_sample.ncols());
    let parts = training_parts(x_sample, b, &zero_mean, sigma_eps, lambda)?;
    let g = &parts.gram_raw;
    let tr_sigma = sigma_eps.trace();
    let t_var = tr_sigma / n
        * ((&parts.shrink * (&parts.resolvent * g)).trace() - 2.0 * parts.shrink.trace());
    // λ²N·trace(R_λ B Bᵀ R_λ XXᵀ), p×p intermediates.
    let rb = &parts.resolvent * b;
    let t_bias = lambda * lambda * n * (rb.transpose() * g * &rb).trace();
    ErrorReport::from_breakdown(
        ErrorKind::Training,
        lambda,
        vec![
            ("irreducible", tr_sigma),
            ("estimation_variance", t_var),
            ("estimation_bias", t_bias),
        ],
    )
}

/// Conditional total testing (generalization) error.
///
/// `x1_sample` is the training design; `testing_moments` describes the
/// testing pair `(x⁽²⁾, y⁽²⁾)`, which may follow a different distribution.
/// The value does not depend on the testing sample length.
pub fn testing_error(
    x1_sample: &DMatrix<f64>,
    b_lambda: &DMatrix<f64>,
    cond_resid_mean_1: &DMatrix<f64>,
    cond_resid_cov_1: &DMatrix<f64>,
    testing_moments: &MomentSpec,
    lambda: f64,
) -> Result<ErrorReport> {
    let parts = training_parts(
        x1_sample,
        b_lambda,
        cond_resid_mean_1,
        cond_resid_cov_1,
        lambda,
    )?;
    let (p, q) = b_lambda.shape();
    if testing_moments.p() != p || testing_moments.q() != q {
        return Err(Error::InvalidDimension(format!(
            "testing moments are ({}, {}) but the solution is {p}×{q}",
            testing_moments.p(),
            testing_moments.q()
        )));
    }

    let q_x = testing_moments.raw_second_moment_x();
    let q_xy =
        testing_moments.sigma_xy() + testing_moments.mu_x() * testing_moments.mu_y().transpose();
    let t_response = testing_moments.sigma_y().trace() + testing_moments.mu_y().norm_squared();

    let m_d = &parts.bias;
    let tr_sigma1 = cond_resid_cov_1.trace();

    // Grouping around the exact-coefficient prediction B_λ:
    //   characteristic  = trace(Q_y) − 2·trace(Q_xy B_λᵀ) + trace(Q_x B_λ B_λᵀ)
    //   estimation_var  = trace(Σ⁽¹⁾)·trace(Q_x Z_λR_λ)
    //   estimation_bias = trace(Q_x M_D M_Dᵀ)
    //   cross           = 2·trace((Q_x B_λ − Q_xy) M_Dᵀ)
    let characteristic = t_response - 2.0 * (&q_xy * b_lambda.transpose()).trace()
        + (b_lambda.transpose() * &q_x * b_lambda).trace();
    let estimation_variance = tr_sigma1 * (&q_x * &parts.row_scale).trace();
    let estimation_bias = (m_d.transpose() * &q_x * m_d).trace();
    let cross = 2.0 * ((&q_x * b_lambda - &q_xy) * m_d.transpose()).trace();

    // Direct evaluation with the estimator mean M_{B̂_λ} = B_λ + M_D, as an
    // internal guard on the regrouping above.
    let m_bhat = b_lambda + m_d;
    let direct = t_response - 2.0 * (&q_xy * m_bhat.transpose()).trace()
        + (&q_x * (tr_sigma1 * &parts.row_scale + &m_bhat * m_bhat.transpose())).trace();
    let grouped = characteristic + estimation_variance + estimation_bias + cross;
    let dev = linalg::rel_diff(direct, grouped);
    if dev > FORM_EQUIVALENCE_TOL {
        return Err(Error::InternalConsistency(format!(
            "testing-error groupings disagree by {dev:.3e}"
        )));
    }

    ErrorReport::from_breakdown(
        ErrorKind::Testing,
        lambda,
        vec![
            ("characteristic", characteristic),
            ("estimation_variance", estimation_variance),
            ("estimation_bias", estimation_bias),
            ("cross", cross),
        ],
    )
}

/// Testing error specialization for the linear model: the estimator mean
/// collapses to `Z_λB` and the quadratic term to
/// `trace(Σ_ε⁽¹⁾)Z_λR_λ + Z_λBBᵀZ_λᵀ`.
pub fn testing_error_linear_model(
    x1_sample: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma_eps_1: &DMatrix<f64>,
    testing_moments: &MomentSpec,
    lambda: f64,
) -> Result<ErrorReport> {
    let q = b.ncols();
    let zero_mean = DMatrix::zeros(q, x1_sample.ncols());
    let parts = training_parts(x1_sample, b, &zero_mean, sigma_eps_1, lambda)?;
    if testing_moments.p() != b.nrows() || testing_moments.q() != q {
        return Err(Error::InvalidDimension(
            "testing moments inconsistent with B".into(),
        ));
    }
    let q_x = testing_moments.raw_second_moment_x();
    let q_xy =
        testing_moments.sigma_xy() + testing_moments.mu_x() * testing_moments.mu_y().transpose();
    let t_response = testing_moments.sigma_y().trace() + testing_moments.mu_y().norm_squared();
    let zb = &parts.shrink * b;
    let alignment = -2.0 * (&q_xy * zb.transpose()).trace();
    let estimation_variance = sigma_eps_1.trace() * (&q_x * &parts.row_scale).trace();
    let prediction_energy = (zb.transpose() * &q_x * &zb).trace();
    ErrorReport::from_breakdown(
        ErrorKind::Testing,
        lambda,
        vec![
            ("response_energy", t_response),
            ("alignment", alignment),
            ("estimation_variance", estimation_variance),
            ("prediction_energy", prediction_energy),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        self, AdditiveModel, ExpPolyModel, FeatureSet, Model, ScalarFn, UniformDensity,
    };
    use crate::ridge;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = random_matrix(rng, n, n);
        &g * g.transpose() + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn characteristic_error_isotropic() {
        let q = 3;
        let sigma = 0.49;
        let law = ResidualLaw::unconditional(
            DVector::zeros(q),
            DMatrix::identity(q, q) * sigma,
            0.5,
        );
        let report = characteristic_error(&law).unwrap();
        assert_abs_diff_eq!(report.value, q as f64 * sigma, epsilon = 1e-14);
    }

    #[test]
    fn characteristic_error_exp_poly_matches_closed_form() {
        let model = ExpPolyModel::new(3, 0.3, (-1.0, 1.0)).unwrap();
        let moments = model.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 0.9).unwrap();
        let law = ridge::residual_moments(&moments, &sol).unwrap();
        let generic = characteristic_error(&law).unwrap();
        let closed =
            characteristic_error_additive(&model.to_additive().unwrap(), sol.b_lambda(), 0.9)
                .unwrap();
        assert_abs_diff_eq!(generic.value, closed.value, epsilon = 1e-9);
        // μ_{ε_λ} = 0 for this instance.
        assert!(law.mu().amax() < 1e-14);
    }

    #[test]
    fn conditional_characteristic_pure_noise() {
        let model = Model::Additive(
            AdditiveModel::new(
                ScalarFn::Polynomial(vec![0.0]),
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(2),
                0.7,
            )
            .unwrap(),
        );
        let moments = model.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 1.0).unwrap();
        assert!(sol.b_lambda().amax() < 1e-14);
        let law = model.residual_law(&sol).unwrap();
        for z in [-0.8, 0.0, 0.3] {
            let rep =
                conditional_characteristic_error(&law, &CovariatePoint::Scalar(z)).unwrap();
            assert_abs_diff_eq!(rep.value, 0.49, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_characteristic_linear_model_form() {
        // trace(Σ_ε + (B − B_λ)ᵀ x xᵀ (B − B_λ)) at a point.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 3;
        let q = 2;
        let b = random_matrix(&mut rng, p, q);
        let sigma_eps = random_psd(&mut rng, q);
        let sigma_x = random_psd(&mut rng, p);
        let mu_x = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        let linear = models::LinearModel::new(b.clone(), sigma_eps.clone(), mu_x, sigma_x).unwrap();
        let model = Model::Linear(linear);
        let moments = model.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 0.7).unwrap();
        let law = model.residual_law(&sol).unwrap();
        let x = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        let rep =
            conditional_characteristic_error(&law, &CovariatePoint::Vector(x.clone())).unwrap();
        let diff = &b - sol.b_lambda();
        let expected =
            sigma_eps.trace() + (diff.transpose() * &x * x.transpose() * &diff).trace();
        assert_abs_diff_eq!(rep.value, expected, epsilon = 1e-10);
    }

    #[test]
    fn conditional_characteristic_multiplicative_form() {
        let mult = models::MultiplicativeModel::new(
            ScalarFn::ExpMinusK,
            UniformDensity::new(-1.0, 1.0).unwrap(),
            FeatureSet::Monomials(3),
            0.6,
            0.4,
        )
        .unwrap();
        let model = Model::Multiplicative(mult.clone());
        let moments = model.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 0.8).unwrap();
        let law = model.residual_law(&sol).unwrap();
        for z in [-0.5, 0.0, 0.5] {
            let rep =
                conditional_characteristic_error(&law, &CovariatePoint::Scalar(z)).unwrap();
            let fz = mult.f().eval(z);
            let x = mult.covariate(z);
            let bx = (sol.b_lambda().transpose() * &x)[(0, 0)];
            let expected = 0.16 * fz * fz + fz * fz * 0.36 - 2.0 * 0.6 * fz * bx + bx * bx;
            assert_abs_diff_eq!(rep.value, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn training_error_pure_noise_formula() {
        // q = 1, B_λ = 0, centered conditional mean: the value reduces to
        // σ²(1 + (1/N)·trace(Z_λ(R_λXXᵀ − 2I))).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 3, 20);
        let sigma = DMatrix::from_element(1, 1, 0.49);
        let lambda = 0.9;
        let report = training_error(
            &x,
            &DMatrix::zeros(3, 1),
            &DMatrix::zeros(1, 20),
            &sigma,
            lambda,
        )
        .unwrap();
        let est = ridge::ridge_estimate(
            &crate::moments::SamplePair::new(x.clone(), DMatrix::zeros(1, 20), None).unwrap(),
            lambda,
        )
        .unwrap();
        let g = &x * x.transpose();
        let expected = 0.49
            * (1.0
                + ((est.shrink() * (est.resolvent() * g)).trace()
                    - 2.0 * est.shrink().trace())
                    / 20.0);
        assert_abs_diff_eq!(report.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn training_error_matches_linear_model_specialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let p = 2 + trial % 4;
            let q = 1 + trial % 3;
            let n = 10 + 3 * trial;
            let x = random_matrix(&mut rng, p, n);
            let b = random_matrix(&mut rng, p, q);
            let sigma_eps = random_psd(&mut rng, q);
            for lambda in [0.1, 1.0, 10.0] {
                // B_λ for the sample-conditional formulas is the population
                // solution of the generating model.
                let gram = linalg::centered_gram(&x);
                let system = &gram + lambda * n as f64 * DMatrix::identity(p, p);
                let b_lambda = system.clone().cholesky().unwrap().solve(&(&gram * &b));
                let cond_mean = (&b - &b_lambda).transpose() * &x;
                let general =
                    training_error(&x, &b_lambda, &cond_mean, &sigma_eps, lambda).unwrap();
                let special =
                    training_error_linear_model(&x, &b, &sigma_eps, lambda).unwrap();
                assert!(
                    linalg::rel_diff(general.value, special.value) < 1e-10,
                    "p={p} q={q} n={n} λ={lambda}: {} vs {}",
                    general.value,
                    special.value
                );
            }
        }
    }

    #[test]
    fn training_error_linear_limit_lambda_to_zero() {
        // Centered X, λ → 0: trace(Σ_ε)(1 − p/N).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 3;
        let n = 30;
        let mut x = random_matrix(&mut rng, p, n);
        let mean = x.column_mean();
        for mut col in x.column_iter_mut() {
            col -= &mean;
        }
        let b = random_matrix(&mut rng, p, 2);
        let sigma_eps = random_psd(&mut rng, 2);
        let report = training_error_linear_model(&x, &b, &sigma_eps, 1e-10).unwrap();
        let expected = sigma_eps.trace() * (1.0 - p as f64 / n as f64);
        assert!(
            linalg::rel_diff(report.value, expected) < 1e-6,
            "{} vs {expected}",
            report.value
        );
    }

    #[test]
    fn training_error_linear_zero_coefficient_drops_bias_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_matrix(&mut rng, 3, 15);
        let sigma = random_psd(&mut rng, 2);
        for lambda in [0.2, 2.0, 20.0] {
            let report =
                training_error_linear_model(&x, &DMatrix::zeros(3, 2), &sigma, lambda).unwrap();
            assert_eq!(report.term("estimation_bias"), Some(0.0));
        }
    }

    #[test]
    fn form_equivalence_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..100 {
            let p = 1 + trial % 5;
            let q = 1 + trial % 3;
            let n = 5 + trial % 36;
            let x = random_matrix(&mut rng, p, n);
            let b_lambda = random_matrix(&mut rng, p, q);
            let m = random_matrix(&mut rng, q, n);
            let sigma = random_psd(&mut rng, q);
            for lambda in [0.1, 1.0, 10.0] {
                let (long, short) =
                    training_error_forms(&x, &b_lambda, &m, &sigma, lambda).unwrap();
                assert!(
                    linalg::rel_diff(long, short) <= 1e-10,
                    "trial {trial} λ={lambda}: long {long} vs short {short}"
                );
            }
        }
    }

    #[test]
    fn testing_error_zero_coefficient_structure() {
        // B = 0 and centered testing response: only the response energy and
        // the estimation variance survive.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = 3;
        let x1 = random_matrix(&mut rng, p, 25);
        let sigma_eps = DMatrix::from_element(1, 1, 0.25);
        let sigma_x2 = random_psd(&mut rng, p);
        let mu_x2 = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let testing = MomentSpec::new(
            mu_x2.clone(),
            DVector::zeros(1),
            sigma_x2.clone(),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::zeros(p, 1),
        )
        .unwrap();
        let lambda = 0.8;
        let report = testing_error_linear_model(
            &x1,
            &DMatrix::zeros(p, 1),
            &sigma_eps,
            &testing,
            lambda,
        )
        .unwrap();
        let parts_est = ridge::ridge_estimate(
            &crate::moments::SamplePair::new(x1.clone(), DMatrix::zeros(1, 25), None).unwrap(),
            lambda,
        )
        .unwrap();
        let zr = linalg::symmetrize(
            &(parts_est.resolvent() * linalg::centered_gram(&x1) * parts_est.resolvent()),
        );
        let qx = &sigma_x2 + &mu_x2 * mu_x2.transpose();
        let expected = 2.0 + 0.25 * (qx * zr).trace();
        assert_abs_diff_eq!(report.value, expected, epsilon = 1e-10);
    }

    #[test]
    fn testing_error_total_shrinkage_limit() {
        // λ → ∞ predicts zero, leaving trace(Σ_y⁽²⁾ + μ_yμ_yᵀ).
        let model = ExpPolyModel::new(3, 0.3, (1.0, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x1 = random_matrix(&mut rng, 3, 20);
        let b = random_matrix(&mut rng, 3, 1);
        let testing = model.testing_moments().unwrap();
        let report = testing_error_linear_model(
            &x1,
            &b,
            &DMatrix::from_element(1, 1, 0.09),
            &testing,
            1e9,
        )
        .unwrap();
        let expected = testing.sigma_y().trace() + testing.mu_y().norm_squared();
        assert!(linalg::rel_diff(report.value, expected) < 1e-6);
    }

    #[test]
    fn testing_error_matches_linear_specialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..10 {
            let p = 2 + trial % 3;
            let q = 1 + trial % 2;
            let n1 = 12 + trial;
            let x1 = random_matrix(&mut rng, p, n1);
            let b = random_matrix(&mut rng, p, q);
            let sigma_eps = random_psd(&mut rng, q);
            // Arbitrary testing distribution.
            let mu_x2 = random_matrix(&mut rng, p, 1).column(0).into_owned();
            let sigma_x2 = random_psd(&mut rng, p);
            let mu_y2 = random_matrix(&mut rng, q, 1).column(0).into_owned();
            let sigma_y2 = random_psd(&mut rng, q);
            let sigma_xy2 = random_matrix(&mut rng, p, q);
            let testing =
                MomentSpec::new(mu_x2, mu_y2, sigma_x2, sigma_y2, sigma_xy2).unwrap();
            for lambda in [0.1, 1.0, 10.0] {
                let gram = linalg::centered_gram(&x1);
                let system = &gram + lambda * n1 as f64 * DMatrix::identity(p, p);
                let b_lambda = system.clone().cholesky().unwrap().solve(&(&gram * &b));
                let cond_mean = (&b - &b_lambda).transpose() * &x1;
                let general = testing_error(
                    &x1,
                    &b_lambda,
                    &cond_mean,
                    &sigma_eps,
                    &testing,
                    lambda,
                )
                .unwrap();
                let special =
                    testing_error_linear_model(&x1, &b, &sigma_eps, &testing, lambda).unwrap();
                assert!(
                    linalg::rel_diff(general.value, special.value) < 1e-10,
                    "trial {trial} λ={lambda}: {} vs {}",
                    general.value,
                    special.value
                );
            }
        }
    }

    #[test]
    fn training_error_approaches_characteristic_error_with_n() {
        // As N grows, the training error sheds its estimation terms and
        // approaches the in-sample conditional characteristic error
        // trace(Σ) + (1/N)·Σ_j ‖μ_{ε_λ|x_j}‖² of the same design; the gap
        // shrinks monotonically over N ∈ {50, 500, 5000}.
        let model = ExpPolyModel::new(3, 0.3, (-1.0, 1.0)).unwrap();
        let moments = model.population_moments().unwrap();
        let lambda = 0.9;
        let sol = ridge::ridge_matrix(&moments, lambda).unwrap();
        let wrapped = Model::ExpPoly(model.clone());
        let mut gaps = Vec::new();
        for (i, n) in [50usize, 500, 5000].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let design = wrapped
                .draw_design(*n, models::SampleKind::Training, &mut rng)
                .unwrap();
            let cond_mean = wrapped
                .conditional_mean_matrix(sol.b_lambda(), &design)
                .unwrap();
            let report = training_error(
                &design.x,
                sol.b_lambda(),
                &cond_mean,
                &DMatrix::from_element(1, 1, 0.09),
                lambda,
            )
            .unwrap();
            let cond_char = 0.09 + cond_mean.norm_squared() / *n as f64;
            gaps.push((report.value - cond_char).abs());
        }
        assert!(
            gaps[0] > gaps[1] && gaps[1] > gaps[2],
            "gap sequence not shrinking: {gaps:?}"
        );
    }

    #[test]
    fn breakdown_sums_to_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 4, 18);
        let b_lambda = random_matrix(&mut rng, 4, 2);
        let m = random_matrix(&mut rng, 2, 18);
        let sigma = random_psd(&mut rng, 2);
        let report = training_error(&x, &b_lambda, &m, &sigma, 0.7).unwrap();
        let total: f64 = report.breakdown.iter().map(|(_, v)| v).sum();
        assert!(linalg::rel_diff(total, report.value) < 1e-10);
    }

    #[test]
    fn csv_serialization_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = random_matrix(&mut rng, 2, 12);
        let sigma = DMatrix::from_element(1, 1, 0.09);
        let report =
            training_error(&x, &DMatrix::zeros(2, 1), &DMatrix::zeros(1, 12), &sigma, 0.9)
                .unwrap();
        let csv = reports_to_csv(&[(report, 2, 12, 0)]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "kind,lambda,p,n1,n2,value,irreducible,estimation_variance,estimation_bias,cross"
        );
        assert!(lines.next().unwrap().starts_with("training,"));
    }

    #[test]
    fn lambda_zero_rejected() {
        let x = DMatrix::<f64>::identity(2, 4);
        let res = training_error(
            &x,
            &DMatrix::zeros(2, 1),
            &DMatrix::zeros(1, 4),
            &DMatrix::identity(1, 1),
            0.0,
        );
        assert!(matches!(res, Err(Error::InvalidArgument(_))));
    }
}
