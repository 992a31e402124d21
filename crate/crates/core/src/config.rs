//! TOML run configuration: a data-generating model plus experiment
//! parameters.
//!
//! ```toml
//! [model]
//! kind = "poly-exp"            # poly-exp | additive | multiplicative | linear
//! p = 3
//! sigma_eps = 0.3
//! test_interval = [-1.0, 1.0]  # optional
//! # additive / multiplicative:
//! # f = "exp-minus-k"          # or "identity" or { polynomial = [c0, c1, ...] }
//! # support = [-1.0, 1.0]
//! # mu_eps = 0.5               # multiplicative only
//! # linear (row-major matrices):
//! # b = [[1.0], [-0.5]]
//! # mu_x = [0.0, 0.0]
//! # sigma_x = [[1.0, 0.0], [0.0, 1.0]]
//! # sigma_eps_matrix = [[0.09]]
//!
//! [experiment]
//! lambda = 0.9
//! n1 = 20
//! n2 = 20
//! seed = 42
//! replications = 50000
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{
    AdditiveModel, ExpPolyModel, FeatureSet, LinearModel, Model, MultiplicativeModel, ScalarFn,
    UniformDensity,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FnConfig {
    Named(String),
    Polynomial { polynomial: Vec<f64> },
}

impl FnConfig {
    fn build(&self) -> Result<ScalarFn> {
        match self {
            FnConfig::Named(name) => match name.as_str() {
                "exp-minus-k" => Ok(ScalarFn::ExpMinusK),
                "identity" => Ok(ScalarFn::Identity),
                other => Err(Error::Config(format!(
                    "unknown function '{other}'; expected exp-minus-k, identity, or \
                     {{ polynomial = [...] }}"
                ))),
            },
            FnConfig::Polynomial { polynomial } => {
                if polynomial.is_empty() {
                    return Err(Error::Config("empty polynomial coefficient list".into()));
                }
                Ok(ScalarFn::Polynomial(polynomial.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    /// Covariate count (monomial degree for scalar-driver models).
    pub p: Option<usize>,
    pub sigma_eps: Option<f64>,
    pub f: Option<FnConfig>,
    /// Driver support for additive/multiplicative models.
    pub support: Option<[f64; 2]>,
    /// Testing driver support.
    pub test_interval: Option<[f64; 2]>,
    /// Multiplicative disturbance mean.
    pub mu_eps: Option<f64>,
    /// Linear model pieces, row-major.
    pub b: Option<Vec<Vec<f64>>>,
    pub mu_x: Option<Vec<f64>>,
    pub sigma_x: Option<Vec<Vec<f64>>>,
    pub sigma_eps_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_n1")]
    pub n1: usize,
    #[serde(default = "default_n2")]
    pub n2: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_lambda() -> f64 {
    0.9
}
fn default_n1() -> usize {
    20
}
fn default_n2() -> usize {
    20
}
fn default_seed() -> u64 {
    42
}
fn default_replications() -> usize {
    50_000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            n1: default_n1(),
            n2: default_n2(),
            seed: default_seed(),
            replications: default_replications(),
        }
    }
}

/// A sweep definition file: `[sweep]` section only.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFileConfig {
    pub sweep: SweepSectionConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSectionConfig {
    #[serde(default = "default_p_min")]
    pub p_min: usize,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_n1")]
    pub n1: usize,
    #[serde(default = "default_n2")]
    pub n2: usize,
    #[serde(default = "default_test_interval")]
    pub test_interval: [f64; 2],
    #[serde(default = "default_sweep_sigma")]
    pub sigma_eps: f64,
    #[serde(default = "default_sweep_seed")]
    pub seed: u64,
}

fn default_p_min() -> usize {
    1
}
fn default_p_max() -> usize {
    12
}
fn default_test_interval() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_sweep_sigma() -> f64 {
    crate::sweep::DEFAULT_SIGMA_EPS
}
fn default_sweep_seed() -> u64 {
    crate::sweep::DEFAULT_SEED
}

impl SweepFileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Ok(toml::from_str(&text)?)
    }

    pub fn to_spec(&self) -> crate::sweep::SweepSpec {
        crate::sweep::SweepSpec {
            p_min: self.sweep.p_min,
            p_max: self.sweep.p_max,
            lambda: self.sweep.lambda,
            n1: self.sweep.n1,
            n2: self.sweep.n2,
            test_interval: (self.sweep.test_interval[0], self.sweep.test_interval[1]),
            sigma_eps: self.sweep.sigma_eps,
            seed: self.sweep.seed,
        }
    }
}

fn to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{name} must be a nonempty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn build_model(&self) -> Result<Model> {
        let m = &self.model;
        let sigma_eps = |ctx: &str| {
            m.sigma_eps
                .ok_or_else(|| Error::Config(format!("{ctx} requires sigma_eps")))
        };
        let p = |ctx: &str| {
            m.p.ok_or_else(|| Error::Config(format!("{ctx} requires p")))
        };
        let support = || -> Result<UniformDensity> {
            let [a, b] = m.support.unwrap_or([-1.0, 1.0]);
            UniformDensity::new(a, b)
        };
        match m.kind.as_str() {
            "poly-exp" => {
                let test = m.test_interval.unwrap_or([-1.0, 1.0]);
                let model = ExpPolyModel::new(
                    p("poly-exp")?,
                    sigma_eps("poly-exp")?,
                    (test[0], test[1]),
                )?;
                Ok(Model::ExpPoly(model))
            }
            "additive" => {
                let f = m
                    .f
                    .as_ref()
                    .map(|f| f.build())
                    .transpose()?
                    .unwrap_or(ScalarFn::ExpMinusK);
                let model = AdditiveModel::new(
                    f,
                    support()?,
                    FeatureSet::Monomials(p("additive")?),
                    sigma_eps("additive")?,
                )?;
                Ok(Model::Additive(model))
            }
            "multiplicative" => {
                let f = m
                    .f
                    .as_ref()
                    .map(|f| f.build())
                    .transpose()?
                    .unwrap_or(ScalarFn::ExpMinusK);
                let mu_eps = m
                    .mu_eps
                    .ok_or_else(|| Error::Config("multiplicative requires mu_eps".into()))?;
                let model = MultiplicativeModel::new(
                    f,
                    support()?,
                    FeatureSet::Monomials(p("multiplicative")?),
                    mu_eps,
                    sigma_eps("multiplicative")?,
                )?;
                Ok(Model::Multiplicative(model))
            }
            "linear" => {
                let b = to_matrix(
                    "b",
                    m.b.as_ref()
                        .ok_or_else(|| Error::Config("linear requires b".into()))?,
                )?;
                let sigma_x = to_matrix(
                    "sigma_x",
                    m.sigma_x
                        .as_ref()
                        .ok_or_else(|| Error::Config("linear requires sigma_x".into()))?,
                )?;
                let sigma_eps = to_matrix(
                    "sigma_eps_matrix",
                    m.sigma_eps_matrix.as_ref().ok_or_else(|| {
                        Error::Config("linear requires sigma_eps_matrix".into())
                    })?,
                )?;
                let mu_x = DVector::from_vec(
                    m.mu_x
                        .clone()
                        .ok_or_else(|| Error::Config("linear requires mu_x".into()))?,
                );
                Ok(Model::Linear(LinearModel::new(b, sigma_eps, mu_x, sigma_x)?))
            }
            other => Err(Error::Config(format!(
                "unknown model kind '{other}'; expected poly-exp, additive, multiplicative, \
                 or linear"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_poly_exp_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            kind = "poly-exp"
            p = 3
            sigma_eps = 0.3
            test_interval = [-1.0, 1.0]

            [experiment]
            lambda = 0.9
            n1 = 20
            n2 = 20
            seed = 42
            replications = 50000
            "#,
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.p(), 3);
        assert_eq!(model.kind_name(), "poly-exp");
        assert_eq!(cfg.experiment.lambda, 0.9);
    }

    #[test]
    fn experiment_defaults_apply() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            kind = "poly-exp"
            p = 2
            sigma_eps = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.n1, 20);
        assert_eq!(cfg.experiment.seed, 42);
        assert_eq!(cfg.experiment.replications, 50_000);
    }

    #[test]
    fn multiplicative_requires_mu_eps() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            kind = "multiplicative"
            p = 3
            sigma_eps = 0.3
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.build_model(), Err(Error::Config(_))));
    }

    #[test]
    fn polynomial_function_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            kind = "additive"
            p = 2
            sigma_eps = 0.2
            f = { polynomial = [0.0, 1.0, -0.5] }
            support = [0.0, 1.0]
            "#,
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.kind_name(), "additive");
    }

    #[test]
    fn malformed_toml_is_a_config_error() {
        assert!(matches!(
            RunConfig::from_toml_str("not toml at all ["),
            Err(Error::Config(_))
        ));
        // Unknown fields are rejected rather than silently ignored.
        assert!(RunConfig::from_toml_str(
            r#"
            [model]
            kind = "poly-exp"
            p = 3
            sigma_eps = 0.3
            typo_field = 1
            "#
        )
        .is_err());
    }

    #[test]
    fn linear_model_round_trip() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            kind = "linear"
            b = [[1.0], [-0.5]]
            mu_x = [0.0, 1.0]
            sigma_x = [[1.0, 0.2], [0.2, 2.0]]
            sigma_eps_matrix = [[0.25]]
            "#,
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.p(), 2);
        assert_eq!(model.q(), 1);
    }
}
