//! Seeded Monte Carlo verifiers for the closed-form results.
//!
//! Each verifier fixes a realized training design, replays the
//! data-generating model many times, and compares an empirical statistic
//! against the corresponding closed-form value:
//!
//! - [`verify_estimator_law`]: empirical mean of `B̂_λ` against
//!   `B_λ + M_{D_λ}` (entrywise standard-error bound) and the empirical
//!   covariance of `vec B̂_λ` against `V ⊗ U` (relative Frobenius bound);
//! - [`verify_training_error`]: empirical mean of
//!   `(1/N)‖Y − B̂_λᵀX‖²_Frob` over response redraws against the training
//!   formula;
//! - [`verify_testing_error`]: the same for fresh testing samples against
//!   the generalization formula.
//!
//! Replication `r` draws from a dedicated ChaCha stream derived from the
//! master seed, so results are bit-identical regardless of scheduling and
//! the comparison tolerances are stated in estimated standard errors, not
//! absolute numbers.
//!
//! The estimator law assumes conditionally normal residuals. For additive
//! models this holds exactly: given `ξ`, the residual is the Gaussian `ε`
//! shifted by the deterministic offset `f(ξ) − B_λᵀx(ξ)`, which the
//! conditional mean matrix absorbs. Heteroscedastic models (multiplicative
//! noise with nonconstant `f`) violate the hypothesis and are rejected up
//! front.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{homoscedasticity_check, Design, Model, SampleKind, HOMOSCEDASTICITY_TOL};
use crate::mse;
use crate::ridge;

/// Relative-Frobenius acceptance bound for covariance comparisons.
pub const REL_FROBENIUS_BOUND: f64 = 0.05;

/// Configuration of one verification run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McConfig {
    pub replications: usize,
    pub seed: u64,
    /// Acceptance multiplier for standard-error bounds.
    pub se_multiplier: f64,
}

impl McConfig {
    pub fn new(replications: usize, seed: u64) -> Result<Self> {
        if replications < 100 {
            return Err(Error::InvalidArgument(format!(
                "at least 100 replications required, got {replications}"
            )));
        }
        Ok(Self {
            replications,
            seed,
            se_multiplier: 3.0,
        })
    }

    pub fn with_se_multiplier(mut self, m: f64) -> Self {
        self.se_multiplier = m;
        self
    }
}

/// Scalar or matrix payload of a compared quantity.
#[derive(Debug, Clone)]
pub enum McValue {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Serialize for McValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            McValue::Scalar(v) => serializer.serialize_f64(*v),
            McValue::Matrix(m) => {
                let mut seq = serializer.serialize_seq(Some(m.nrows()))?;
                for i in 0..m.nrows() {
                    let row: Vec<f64> = m.row(i).iter().copied().collect();
                    seq.serialize_element(&row)?;
                }
                seq.end()
            }
        }
    }
}

/// Acceptance rule attached to a quantity.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum McCriterion {
    /// `|formula − empirical| ≤ multiplier · SE` entrywise.
    StandardErrorBound { multiplier: f64 },
    /// `‖formula − empirical‖ / ‖formula‖ ≤ bound`.
    RelativeFrobenius { bound: f64 },
}

/// One verified quantity: formula value, empirical value, uncertainty, and
/// verdict.
#[derive(Debug, Clone, Serialize)]
pub struct McQuantity {
    pub name: String,
    pub formula: McValue,
    pub empirical: McValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<McValue>,
    /// Largest `|formula − empirical| / SE` over entries, for SE-bound
    /// quantities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_standardized_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_frobenius: Option<f64>,
    /// `|formula − empirical| / |formula|` for scalar quantities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    pub criterion: McCriterion,
    pub pass: bool,
}

/// Full outcome of one verifier. Serializes to JSON for report files.
#[derive(Debug, Clone, Serialize)]
pub struct McComparison {
    pub label: String,
    pub replications: usize,
    pub seed: u64,
    pub quantities: Vec<McQuantity>,
    pub pass: bool,
}

impl McComparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Independent stream for replication `rep` under a master seed.
fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep + 1);
    rng
}

/// Entrywise standardized deviation; `SE = 0` entries contribute zero when
/// the deviation is at rounding level and infinity otherwise.
fn max_z(formula: &DMatrix<f64>, empirical: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..formula.nrows() {
        for j in 0..formula.ncols() {
            let dev = (formula[(i, j)] - empirical[(i, j)]).abs();
            let s = se[(i, j)];
            if s > 0.0 {
                worst = worst.max(dev / s);
            } else if dev > 1e-10 * (1.0 + formula[(i, j)].abs()) {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}

/// Ingredients shared by every verifier: the ridge solution of the model,
/// the homoscedastic conditional covariance (gated), and the fitted-design
/// pieces.
struct VerifierSetup {
    b_lambda: DMatrix<f64>,
    cond_mean: DMatrix<f64>,
    cond_cov: DMatrix<f64>,
    /// `R_λ X A_N`, so `B̂_λ = fit · Yᵀ`.
    fit: DMatrix<f64>,
    law: crate::estimator::EstimatorLaw,
}

fn setup(model: &Model, design: &Design, lambda: f64) -> Result<VerifierSetup> {
    let moments = model.population_moments()?;
    let solution = ridge::ridge_matrix(&moments, lambda)?;
    let b_lambda = solution.b_lambda().clone();

    let homo = homoscedasticity_check(model, &b_lambda, None, HOMOSCEDASTICITY_TOL)?;
    if !homo.homoscedastic {
        return Err(Error::HeteroscedasticResiduals(format!(
            "conditional residual covariance of the {} model varies across the support \
             (max relative spread {:.3e}); the estimator-law formulas require a constant \
             conditional covariance",
            model.kind_name(),
            homo.max_relative_spread
        )));
    }

    let cond_mean = model.conditional_mean_matrix(&b_lambda, design)?;
    let cond_cov = homo.representative_cov;
    let law =
        crate::estimator::estimator_conditional_law(&design.x, &b_lambda, &cond_mean, &cond_cov, lambda)?;

    // X A_N as X with column means removed; B̂_λ = R·(X A_N)·Yᵀ.
    let mut centered = design.x.clone();
    let mean = design.x.column_mean();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let fit = law.resolvent() * centered;

    Ok(VerifierSetup {
        b_lambda,
        cond_mean,
        cond_cov,
        fit,
        law,
    })
}

/// Verifies the conditional law of `B̂_λ` on a fixed design: empirical mean
/// against `B_λ + M_{D_λ}` and empirical `vec`-covariance against `V ⊗ U`.
pub fn verify_estimator_law(
    model: &Model,
    design: &Design,
    lambda: f64,
    cfg: &McConfig,
) -> Result<McComparison> {
    let s = setup(model, design, lambda)?;
    let p = design.x.nrows();
    let q = model.q();
    let dim = p * q;
    let reps = cfg.replications;

    let mut sum = DMatrix::zeros(p, q);
    let mut sumsq = DMatrix::zeros(p, q);
    let mut vec_sum = DVector::zeros(dim);
    let mut vec_outer = DMatrix::zeros(dim, dim);
    for r in 0..reps {
        let mut rng = replication_rng(cfg.seed, r as u64);
        let y = model.draw_response(design, &mut rng)?;
        let b_hat = &s.fit * y.transpose();
        sumsq += b_hat.map(|v| v * v);
        let v = DVector::from_column_slice(b_hat.as_slice());
        vec_sum += &v;
        vec_outer += &v * v.transpose();
        sum += b_hat;
    }
    let repsf = reps as f64;
    let mean_emp = &sum / repsf;
    let se = DMatrix::from_fn(p, q, |i, j| {
        let var = (sumsq[(i, j)] / repsf - mean_emp[(i, j)] * mean_emp[(i, j)]).max(0.0);
        (var * repsf / (repsf - 1.0) / repsf).sqrt()
    });
    let mean_formula = &s.b_lambda + s.law.bias();
    let z = max_z(&mean_formula, &mean_emp, &se);

    let vec_mean = &vec_sum / repsf;
    let cov_emp = (vec_outer - repsf * &vec_mean * vec_mean.transpose()) / (repsf - 1.0);
    let cov_formula = s.law.law().vec_covariance();
    // Deviation relative to the formula covariance; absolute when the law
    // is degenerate (noiseless residuals).
    let denom = cov_formula.norm();
    let diff = (&cov_emp - &cov_formula).norm();
    let rel = if denom > 0.0 { diff / denom } else { diff };

    let mean_pass = z <= cfg.se_multiplier;
    let cov_pass = rel <= REL_FROBENIUS_BOUND;
    let quantities = vec![
        McQuantity {
            name: "estimator mean".into(),
            formula: McValue::Matrix(mean_formula),
            empirical: McValue::Matrix(mean_emp),
            standard_error: Some(McValue::Matrix(se)),
            max_standardized_deviation: Some(z),
            relative_frobenius: None,
            relative_error: None,
            criterion: McCriterion::StandardErrorBound {
                multiplier: cfg.se_multiplier,
            },
            pass: mean_pass,
        },
        McQuantity {
            name: "estimator vec covariance".into(),
            formula: McValue::Matrix(cov_formula),
            empirical: McValue::Matrix(cov_emp),
            standard_error: None,
            max_standardized_deviation: None,
            relative_frobenius: Some(rel),
            relative_error: None,
            criterion: McCriterion::RelativeFrobenius {
                bound: REL_FROBENIUS_BOUND,
            },
            pass: cov_pass,
        },
    ];
    Ok(McComparison {
        label: "estimator-law".into(),
        replications: reps,
        seed: cfg.seed,
        pass: mean_pass && cov_pass,
        quantities,
    })
}

fn scalar_comparison(
    label: &str,
    name: &str,
    formula: f64,
    values_mean: f64,
    values_var: f64,
    cfg: &McConfig,
) -> McComparison {
    let se = (values_var / cfg.replications as f64).sqrt();
    let dev = (formula - values_mean).abs();
    let z = if se > 0.0 {
        dev / se
    } else if dev > 1e-10 * (1.0 + formula.abs()) {
        f64::INFINITY
    } else {
        0.0
    };
    let pass = z <= cfg.se_multiplier;
    McComparison {
        label: label.into(),
        replications: cfg.replications,
        seed: cfg.seed,
        pass,
        quantities: vec![McQuantity {
            name: name.into(),
            formula: McValue::Scalar(formula),
            empirical: McValue::Scalar(values_mean),
            standard_error: Some(McValue::Scalar(se)),
            max_standardized_deviation: Some(z),
            relative_frobenius: None,
            relative_error: Some(dev / formula.abs().max(1e-300)),
            criterion: McCriterion::StandardErrorBound {
                multiplier: cfg.se_multiplier,
            },
            pass,
        }],
    }
}

/// Verifies the training-error formula against its definition: the mean of
/// `(1/N)‖Y − B̂_λᵀX‖²_Frob` over response redraws on the fixed design.
pub fn verify_training_error(
    model: &Model,
    design: &Design,
    lambda: f64,
    cfg: &McConfig,
) -> Result<McComparison> {
    let s = setup(model, design, lambda)?;
    let n = design.x.ncols() as f64;
    let formula =
        mse::training_error(&design.x, &s.b_lambda, &s.cond_mean, &s.cond_cov, lambda)?.value;

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for r in 0..cfg.replications {
        let mut rng = replication_rng(cfg.seed, r as u64);
        let y = model.draw_response(design, &mut rng)?;
        let b_hat = &s.fit * y.transpose();
        let v = (y - b_hat.transpose() * &design.x).norm_squared() / n;
        sum += v;
        sumsq += v * v;
    }
    let repsf = cfg.replications as f64;
    let mean = sum / repsf;
    let var = ((sumsq / repsf - mean * mean) * repsf / (repsf - 1.0)).max(0.0);
    Ok(scalar_comparison(
        "training-error",
        "conditional total training error",
        formula,
        mean,
        var,
        cfg,
    ))
}

/// Verifies the testing-error formula against its definition: per
/// replication, refit on a fresh response, draw a fresh testing sample of
/// length `n2`, and average `(1/N₂)‖Y₂ − B̂_λᵀX₂‖²_Frob`.
pub fn verify_testing_error(
    model: &Model,
    design: &Design,
    lambda: f64,
    n2: usize,
    cfg: &McConfig,
) -> Result<McComparison> {
    let s = setup(model, design, lambda)?;
    let testing_moments = model.testing_moments()?;
    let formula = mse::testing_error(
        &design.x,
        &s.b_lambda,
        &s.cond_mean,
        &s.cond_cov,
        &testing_moments,
        lambda,
    )?
    .value;

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for r in 0..cfg.replications {
        let mut rng = replication_rng(cfg.seed, r as u64);
        let y1 = model.draw_response(design, &mut rng)?;
        let b_hat = &s.fit * y1.transpose();
        let design2 = model.draw_design(n2, SampleKind::Testing, &mut rng)?;
        let y2 = model.draw_response(&design2, &mut rng)?;
        let v = (y2 - b_hat.transpose() * &design2.x).norm_squared() / n2 as f64;
        sum += v;
        sumsq += v * v;
    }
    let repsf = cfg.replications as f64;
    let mean = sum / repsf;
    let var = ((sumsq / repsf - mean * mean) * repsf / (repsf - 1.0)).max(0.0);
    Ok(scalar_comparison(
        "testing-error",
        "conditional total testing error",
        formula,
        mean,
        var,
        cfg,
    ))
}
