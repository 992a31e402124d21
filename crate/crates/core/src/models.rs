//! Data-generating models and their population moments.
//!
//! Three model families cover the regimes the error formulas care about:
//!
//! - [`LinearModel`]: `y = Bᵀx + ε` with `ε ⊥ x`, the classical setting in
//!   which the ridge solution shrinks an existing coefficient matrix.
//! - [`AdditiveModel`]: `y = f(ξ) + ε` approximated by a ridge regression on
//!   standardized features `φ_i(ξ)`; its ridge residuals are conditionally
//!   homoscedastic for *any* `f`.
//! - [`MultiplicativeModel`]: `y = f(ξ)·ε`; its conditional residual
//!   variance `f(ξ)²σ_ε²` varies with `ξ`, the canonical heteroscedastic
//!   counterexample.
//!
//! [`ExpPolyModel`] is the fully explicit additive instance used throughout
//! the test suite and the CLI sweeps: `f(ξ) = e^ξ − k` with
//! `k = (e − e⁻¹)/2` so `E[f(ξ)] = 0`, `ξ ~ U(−1, 1)`, and monomial
//! features `ξ, ξ², …, ξ^p` standardized by their exact uniform moments.
//! The monomials are deliberately non-orthogonal: the condition number of
//! `Σ_x` grows rapidly with `p`, which is precisely the singular regime the
//! ridge solution is built for. Testing samples may live on a shifted
//! support `[a, b]`, standardized with the *training* constants.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{MomentSpec, SamplePair};
use crate::quad;
use crate::ridge::{CovariatePoint, ResidualLaw, RidgeSolution};

/// Centering constant `k = (e − e⁻¹)/2` making `E[e^ξ − k] = 0` under
/// `ξ ~ U(−1, 1)`.
pub fn exp_k() -> f64 {
    0.5 * (std::f64::consts::E - (-1.0_f64).exp())
}

/// Absolute tolerance for moment integrals.
const MOMENT_TOL: f64 = 1e-12;

/// Default relative-spread tolerance for the homoscedasticity diagnostic.
pub const HOMOSCEDASTICITY_TOL: f64 = 1e-9;

/// Number of grid points the homoscedasticity diagnostic evaluates by
/// default (odd, so the support midpoint is included).
pub const HOMOSCEDASTICITY_GRID: usize = 33;

/// Scalar functions available as generating targets and features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarFn {
    /// `z ↦ e^z − k`.
    ExpMinusK,
    /// `z ↦ z`.
    Identity,
    /// `z ↦ c_0 + c_1 z + … + c_d z^d`.
    Polynomial(Vec<f64>),
}

impl ScalarFn {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ScalarFn::ExpMinusK => z.exp() - exp_k(),
            ScalarFn::Identity => z,
            ScalarFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * z + ci),
        }
    }
}

/// Uniform density on a bounded support `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformDensity {
    pub a: f64,
    pub b: f64,
}

impl UniformDensity {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn density(&self) -> f64 {
        1.0 / (self.b - self.a)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.a + (self.b - self.a) * rng.random::<f64>()
    }
}

/// Ordered generating set evaluated at the scalar driver `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSet {
    /// `φ_i(z) = z^i`, `i = 1..p`.
    Monomials(usize),
    /// Arbitrary function list.
    Functions(Vec<ScalarFn>),
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        match self {
            FeatureSet::Monomials(p) => *p,
            FeatureSet::Functions(fs) => fs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, idx: usize, z: f64) -> f64 {
        match self {
            FeatureSet::Monomials(_) => z.powi(idx as i32 + 1),
            FeatureSet::Functions(fs) => fs[idx].eval(z),
        }
    }
}

/// Per-feature standardization constants `E[φ_i(ξ)]` and `σ(φ_i(ξ))` under
/// the training density.
#[derive(Debug, Clone)]
struct Standardization {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardization {
    fn from_quadrature(features: &FeatureSet, xi: &UniformDensity) -> Result<Self> {
        let (a, b) = xi.support();
        let g = xi.density();
        let mut means = Vec::with_capacity(features.len());
        let mut sds = Vec::with_capacity(features.len());
        for i in 0..features.len() {
            let mean = quad::integrate(|z| features.eval(i, z) * g, a, b, MOMENT_TOL)?.value;
            let raw2 =
                quad::integrate(|z| features.eval(i, z).powi(2) * g, a, b, MOMENT_TOL)?.value;
            let var = raw2 - mean * mean;
            if var <= 1e-14 {
                return Err(Error::InvalidModel(format!(
                    "feature {} is degenerate under the driver density (variance {var:.3e}); \
                     it cannot be standardized",
                    i + 1
                )));
            }
            means.push(mean);
            sds.push(var.sqrt());
        }
        Ok(Self { means, sds })
    }

    fn covariate(&self, features: &FeatureSet, z: f64) -> DVector<f64> {
        DVector::from_fn(self.means.len(), |i, _| {
            (features.eval(i, z) - self.means[i]) / self.sds[i]
        })
    }
}

/// `E[ξ^i]` for `ξ ~ U(−1, 1)`: `((−1)^i + 1) / (2(i+1))`.
pub fn uniform_sym_moment(i: usize) -> f64 {
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    (sign + 1.0) / (2.0 * (i as f64 + 1.0))
}

/// `σ(ξ^i)` for `ξ ~ U(−1, 1)`.
pub fn uniform_sym_std(i: usize) -> f64 {
    let i_f = i as f64;
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    (1.0 / (2.0 * i_f + 1.0) - (sign + 1.0) / (2.0 * (i_f + 1.0) * (i_f + 1.0))).sqrt()
}

/// `E[ζ^i]` for `ζ ~ U(a, b)`: `(b^{i+1} − a^{i+1}) / ((i+1)(b−a))`.
pub fn uniform_moment(i: usize, a: f64, b: f64) -> f64 {
    let k = i as i32 + 1;
    (b.powi(k) - a.powi(k)) / (k as f64 * (b - a))
}

/// `y = Bᵀx + ε` with Gaussian covariates `x ~ N(μ_x, Σ_x)` and independent
/// noise `ε ~ N(0, Σ_ε)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    b: DMatrix<f64>,
    sigma_eps: DMatrix<f64>,
    mu_x: DVector<f64>,
    sigma_x: DMatrix<f64>,
    sqrt_sigma_x: DMatrix<f64>,
    sqrt_sigma_eps: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(
        b: DMatrix<f64>,
        sigma_eps: DMatrix<f64>,
        mu_x: DVector<f64>,
        sigma_x: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, q) = b.shape();
        if mu_x.len() != p || sigma_x.shape() != (p, p) || sigma_eps.shape() != (q, q) {
            return Err(Error::InvalidDimension(
                "linear model dimensions are inconsistent with B".into(),
            ));
        }
        let sigma_x = linalg::symmetrize(&sigma_x);
        let sigma_eps = linalg::symmetrize(&sigma_eps);
        linalg::check_psd("sigma_x", &sigma_x)?;
        linalg::check_psd("sigma_eps", &sigma_eps)?;
        let sqrt_sigma_x = linalg::sym_sqrt(&sigma_x)?;
        let sqrt_sigma_eps = linalg::sym_sqrt(&sigma_eps)?;
        Ok(Self {
            b,
            sigma_eps,
            mu_x,
            sigma_x,
            sqrt_sigma_x,
            sqrt_sigma_eps,
        })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_eps(&self) -> &DMatrix<f64> {
        &self.sigma_eps
    }
}

/// `y = f(ξ) + ε`, regressed on standardized features of `ξ`.
#[derive(Debug, Clone)]
pub struct AdditiveModel {
    f: ScalarFn,
    xi: UniformDensity,
    features: FeatureSet,
    sigma_eps: f64,
    std: Standardization,
}

impl AdditiveModel {
    pub fn new(
        f: ScalarFn,
        xi: UniformDensity,
        features: FeatureSet,
        sigma_eps: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidModel("feature set is empty".into()));
        }
        if !(sigma_eps >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma_eps must be nonnegative, got {sigma_eps}"
            )));
        }
        let std = Standardization::from_quadrature(&features, &xi)?;
        Ok(Self {
            f,
            xi,
            features,
            sigma_eps,
            std,
        })
    }

    pub fn f(&self) -> &ScalarFn {
        &self.f
    }

    pub fn xi(&self) -> UniformDensity {
        self.xi
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn p(&self) -> usize {
        self.features.len()
    }

    /// Standardized covariate vector `x(ξ)`.
    pub fn covariate(&self, z: f64) -> DVector<f64> {
        self.std.covariate(&self.features, z)
    }
}

/// `y = f(ξ)·ε` with `ε ~ N(μ_ε, σ_ε²)`, same covariates as the additive
/// model.
#[derive(Debug, Clone)]
pub struct MultiplicativeModel {
    f: ScalarFn,
    xi: UniformDensity,
    features: FeatureSet,
    mu_eps: f64,
    sigma_eps: f64,
    std: Standardization,
}

impl MultiplicativeModel {
    pub fn new(
        f: ScalarFn,
        xi: UniformDensity,
        features: FeatureSet,
        mu_eps: f64,
        sigma_eps: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidModel("feature set is empty".into()));
        }
        if !(sigma_eps >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma_eps must be nonnegative, got {sigma_eps}"
            )));
        }
        let std = Standardization::from_quadrature(&features, &xi)?;
        Ok(Self {
            f,
            xi,
            features,
            mu_eps,
            sigma_eps,
            std,
        })
    }

    pub fn f(&self) -> &ScalarFn {
        &self.f
    }

    pub fn mu_eps(&self) -> f64 {
        self.mu_eps
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn xi_density(&self) -> UniformDensity {
        self.xi
    }

    pub fn covariate(&self, z: f64) -> DVector<f64> {
        self.std.covariate(&self.features, z)
    }
}

/// The polynomial approximation of `y = e^ξ − k + ε` with `ξ ~ U(−1, 1)`:
/// covariates are the standardized monomials `ξ, …, ξ^p` and every training
/// moment has a closed form. Testing samples draw `ζ ~ U(a, b)` on
/// `test_support` but keep the training standardization constants.
#[derive(Debug, Clone)]
pub struct ExpPolyModel {
    p: usize,
    sigma_eps: f64,
    test_support: (f64, f64),
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl ExpPolyModel {
    pub fn new(p: usize, sigma_eps: f64, test_support: (f64, f64)) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidModel("polynomial degree must be ≥ 1".into()));
        }
        if !(sigma_eps >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma_eps must be nonnegative, got {sigma_eps}"
            )));
        }
        let (a, b) = test_support;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        let means = (1..=p).map(uniform_sym_moment).collect();
        let sds = (1..=p).map(uniform_sym_std).collect();
        Ok(Self {
            p,
            sigma_eps,
            test_support,
            means,
            sds,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn test_support(&self) -> (f64, f64) {
        self.test_support
    }

    pub fn f(&self, z: f64) -> f64 {
        z.exp() - exp_k()
    }

    /// Standardized covariate vector built with the training constants,
    /// whether `z` was drawn from the training or the testing support.
    pub fn covariate(&self, z: f64) -> DVector<f64> {
        DVector::from_fn(self.p, |i, _| {
            (z.powi(i as i32 + 1) - self.means[i]) / self.sds[i]
        })
    }

    /// Closed-form training moments.
    ///
    /// `(Σ_x)_{ij} = (E[ξ^{i+j}] − E[ξ^i]E[ξ^j]) / (σ(ξ^i)σ(ξ^j))` and
    /// `(Σ_xy)_i` comes from the exact antiderivative of `z^i e^z`, with the
    /// factorial ratios `i!/s!` accumulated as exact integers.
    pub fn population_moments(&self) -> Result<MomentSpec> {
        let p = self.p;
        let sigma_x = DMatrix::from_fn(p, p, |i, j| {
            let (i1, j1) = (i + 1, j + 1);
            (uniform_sym_moment(i1 + j1) - self.means[i] * self.means[j])
                / (self.sds[i] * self.sds[j])
        });
        let sigma_xy = DMatrix::from_fn(p, 1, |i, _| exp_poly_cross_moment(i + 1) / self.sds[i]);
        let sigma_y = DMatrix::from_element(
            1,
            1,
            0.5 * (1.0 - (-2.0_f64).exp()) + self.sigma_eps * self.sigma_eps,
        );
        MomentSpec::new(
            DVector::zeros(p),
            DVector::zeros(1),
            sigma_x,
            sigma_y,
            sigma_xy,
        )
    }

    /// Moments of the testing pair `(x⁽²⁾, y⁽²⁾)` with `ζ ~ U(a, b)`.
    ///
    /// First moments and `(σ_y²)⁽²⁾` are closed-form; the second-moment
    /// integrals are evaluated by quadrature against the density
    /// `1/(b − a)`.
    pub fn testing_moments(&self) -> Result<MomentSpec> {
        let p = self.p;
        let (a, b) = self.test_support;
        let width = b - a;
        let k = exp_k();

        let mu_x = DVector::from_fn(p, |i, _| {
            (uniform_moment(i + 1, a, b) - self.means[i]) / self.sds[i]
        });
        let mu_y = (b.exp() - a.exp()) / width - k;

        // Deviations of the standardized covariates from their testing
        // means, integrated directly; subtracting μμᵀ from raw moments
        // would cancel catastrophically on shifted supports where the
        // covariates reach 1e4.
        let dev = |i: usize, z: f64| {
            (z.powi(i as i32 + 1) - self.means[i]) / self.sds[i] - mu_x[i]
        };
        let mut sigma_x = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = quad::integrate(|z| dev(i, z) * dev(j, z), a, b, MOMENT_TOL)?.value
                    / width;
                sigma_x[(i, j)] = v;
                sigma_x[(j, i)] = v;
            }
        }

        let mut sigma_xy = DMatrix::zeros(p, 1);
        for i in 0..p {
            sigma_xy[(i, 0)] =
                quad::integrate(|z| dev(i, z) * (z.exp() - k - mu_y), a, b, MOMENT_TOL)?.value
                    / width;
        }

        let e2 = ((2.0 * b).exp() - (2.0 * a).exp()) / (2.0 * width);
        let e1 = (b.exp() - a.exp()) / width;
        let sigma_y2 = e2 - e1 * e1 + self.sigma_eps * self.sigma_eps;

        MomentSpec::new(
            mu_x,
            DVector::from_element(1, mu_y),
            sigma_x,
            DMatrix::from_element(1, 1, sigma_y2),
            sigma_xy,
        )
    }

    /// The same model expressed through the quadrature-backed additive
    /// machinery; used to cross-check the closed forms.
    pub fn to_additive(&self) -> Result<AdditiveModel> {
        AdditiveModel::new(
            ScalarFn::ExpMinusK,
            UniformDensity::new(-1.0, 1.0)?,
            FeatureSet::Monomials(self.p),
            self.sigma_eps,
        )
    }
}

/// `E[(ξ^i − E[ξ^i])(e^ξ − k)]` for `ξ ~ U(−1, 1)`, from the exact
/// antiderivative of `z^i e^z`:
/// `(1/2)·(−1)^i Σ_{s=0}^{i} (i!/s!)((−1)^s e − e⁻¹) − k·E[ξ^i]`.
fn exp_poly_cross_moment(i: usize) -> f64 {
    let e = std::f64::consts::E;
    let e_inv = (-1.0_f64).exp();
    let mut sum = 0.0;
    let mut ratio: u128 = 1; // i!/s!, built from s = i downward
    let mut s = i;
    loop {
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        sum += ratio as f64 * (sign * e - e_inv);
        if s == 0 {
            break;
        }
        ratio *= s as u128;
        s -= 1;
    }
    if i % 2 == 1 {
        sum = -sum;
    }
    0.5 * sum - exp_k() * uniform_sym_moment(i)
}

/// Training or testing branch of a sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Training,
    Testing,
}

/// A realized covariate design: the `p × N` matrix plus, for scalar-driver
/// models, the underlying `ξ` draws needed to condition on it.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub xi: Option<Vec<f64>>,
}

/// Any of the supported data-generating processes.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearModel),
    Additive(AdditiveModel),
    Multiplicative(MultiplicativeModel),
    ExpPoly(ExpPolyModel),
}

impl Model {
    pub fn p(&self) -> usize {
        match self {
            Model::Linear(m) => m.b.nrows(),
            Model::Additive(m) => m.features.len(),
            Model::Multiplicative(m) => m.features.len(),
            Model::ExpPoly(m) => m.p,
        }
    }

    pub fn q(&self) -> usize {
        match self {
            Model::Linear(m) => m.b.ncols(),
            _ => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Additive(_) => "additive",
            Model::Multiplicative(_) => "multiplicative",
            Model::ExpPoly(_) => "poly-exp",
        }
    }

    /// Population moments of `(x, y)` under the training distribution.
    pub fn population_moments(&self) -> Result<MomentSpec> {
        match self {
            Model::Linear(m) => {
                let mu_y = m.b.transpose() * &m.mu_x;
                let sigma_y = &m.sigma_eps + m.b.transpose() * &m.sigma_x * &m.b;
                let sigma_xy = &m.sigma_x * &m.b;
                MomentSpec::new(m.mu_x.clone(), mu_y, m.sigma_x.clone(), sigma_y, sigma_xy)
            }
            Model::Additive(m) => population_moments_additive(m),
            Model::Multiplicative(m) => population_moments_multiplicative(m),
            Model::ExpPoly(m) => m.population_moments(),
        }
    }

    /// Moments of the testing pair. Only the polynomial-exponential model
    /// supports a shifted testing distribution; every other model tests on
    /// the training one.
    pub fn testing_moments(&self) -> Result<MomentSpec> {
        match self {
            Model::ExpPoly(m) => m.testing_moments(),
            _ => self.population_moments(),
        }
    }

    /// Draws the covariate design (and the scalar drivers when they exist).
    pub fn draw_design(&self, n: usize, kind: SampleKind, rng: &mut impl Rng) -> Result<Design> {
        if n < 2 {
            return Err(Error::DegenerateSample(format!(
                "sampling requires n ≥ 2, got {n}"
            )));
        }
        match self {
            Model::Linear(m) => {
                let p = m.b.nrows();
                let g = DMatrix::from_fn(p, n, |_, _| standard_normal(rng));
                let mut x = &m.sqrt_sigma_x * g;
                for mut col in x.column_iter_mut() {
                    col += &m.mu_x;
                }
                Ok(Design { x, xi: None })
            }
            Model::Additive(m) => {
                let xi: Vec<f64> = (0..n).map(|_| m.xi.sample(rng)).collect();
                let x = covariate_matrix(&xi, |z| m.covariate(z));
                Ok(Design { x, xi: Some(xi) })
            }
            Model::Multiplicative(m) => {
                let xi: Vec<f64> = (0..n).map(|_| m.xi.sample(rng)).collect();
                let x = covariate_matrix(&xi, |z| m.covariate(z));
                Ok(Design { x, xi: Some(xi) })
            }
            Model::ExpPoly(m) => {
                let density = match kind {
                    SampleKind::Training => UniformDensity::new(-1.0, 1.0)?,
                    SampleKind::Testing => UniformDensity::new(m.test_support.0, m.test_support.1)?,
                };
                let xi: Vec<f64> = (0..n).map(|_| density.sample(rng)).collect();
                let x = covariate_matrix(&xi, |z| m.covariate(z));
                Ok(Design { x, xi: Some(xi) })
            }
        }
    }

    /// Draws the response matrix conditional on a realized design.
    pub fn draw_response(&self, design: &Design, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
        let n = design.x.ncols();
        match self {
            Model::Linear(m) => {
                let q = m.b.ncols();
                let g = DMatrix::from_fn(q, n, |_, _| standard_normal(rng));
                Ok(m.b.transpose() * &design.x + &m.sqrt_sigma_eps * g)
            }
            Model::Additive(m) => {
                let xi = design_xi(design)?;
                Ok(DMatrix::from_fn(1, n, |_, j| {
                    m.f.eval(xi[j]) + m.sigma_eps * standard_normal(rng)
                }))
            }
            Model::Multiplicative(m) => {
                let xi = design_xi(design)?;
                Ok(DMatrix::from_fn(1, n, |_, j| {
                    m.f.eval(xi[j]) * (m.mu_eps + m.sigma_eps * standard_normal(rng))
                }))
            }
            Model::ExpPoly(m) => {
                let xi = design_xi(design)?;
                Ok(DMatrix::from_fn(1, n, |_, j| {
                    m.f(xi[j]) + m.sigma_eps * standard_normal(rng)
                }))
            }
        }
    }

    /// Draws a full `(X, Y)` sample.
    pub fn sample(&self, n: usize, kind: SampleKind, rng: &mut impl Rng) -> Result<SamplePair> {
        let design = self.draw_design(n, kind, rng)?;
        let y = self.draw_response(&design, rng)?;
        SamplePair::new(design.x, y, None)
    }

    /// Conditional mean and covariance of the ridge residual `ε_λ` given a
    /// covariate point.
    ///
    /// - linear: `((B − B_λ)ᵀ x, Σ_ε)`
    /// - additive: `(f(ξ) − B_λᵀ x(ξ), σ_ε²)`
    /// - multiplicative: `(f(ξ)μ_ε − B_λᵀ x(ξ), f(ξ)²σ_ε²)`
    pub fn conditional_residual_moments(
        &self,
        b_lambda: &DMatrix<f64>,
        point: &CovariatePoint,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match (self, point) {
            (Model::Linear(m), CovariatePoint::Vector(x)) => {
                let mean = (&m.b - b_lambda).transpose() * x;
                Ok((mean, m.sigma_eps.clone()))
            }
            (Model::Additive(m), CovariatePoint::Scalar(z)) => {
                let x = m.covariate(*z);
                let mean = m.f.eval(*z) - (b_lambda.transpose() * &x)[(0, 0)];
                Ok((
                    DVector::from_element(1, mean),
                    DMatrix::from_element(1, 1, m.sigma_eps * m.sigma_eps),
                ))
            }
            (Model::Multiplicative(m), CovariatePoint::Scalar(z)) => {
                let x = m.covariate(*z);
                let fz = m.f.eval(*z);
                let mean = fz * m.mu_eps - (b_lambda.transpose() * &x)[(0, 0)];
                Ok((
                    DVector::from_element(1, mean),
                    DMatrix::from_element(1, 1, fz * fz * m.sigma_eps * m.sigma_eps),
                ))
            }
            (Model::ExpPoly(m), CovariatePoint::Scalar(z)) => {
                let x = m.covariate(*z);
                let mean = m.f(*z) - (b_lambda.transpose() * &x)[(0, 0)];
                Ok((
                    DVector::from_element(1, mean),
                    DMatrix::from_element(1, 1, m.sigma_eps * m.sigma_eps),
                ))
            }
            (Model::Linear(_), CovariatePoint::Scalar(_)) => Err(Error::InvalidArgument(
                "linear models condition on a covariate vector, not a scalar".into(),
            )),
            (_, CovariatePoint::Vector(_)) => Err(Error::InvalidArgument(
                "scalar-driver models condition on the driver ξ".into(),
            )),
        }
    }

    /// Conditional residual mean matrix `M_{E_λ|X}` (q × N) for a realized
    /// design.
    pub fn conditional_mean_matrix(
        &self,
        b_lambda: &DMatrix<f64>,
        design: &Design,
    ) -> Result<DMatrix<f64>> {
        let n = design.x.ncols();
        let q = self.q();
        let mut m = DMatrix::zeros(q, n);
        for j in 0..n {
            let point = match self {
                Model::Linear(_) => CovariatePoint::Vector(design.x.column(j).into_owned()),
                _ => CovariatePoint::Scalar(design_xi(design)?[j]),
            };
            let (mean, _) = self.conditional_residual_moments(b_lambda, &point)?;
            m.set_column(j, &mean);
        }
        Ok(m)
    }

    /// Residual law of this model under a given ridge solution, with the
    /// conditional evaluators attached.
    pub fn residual_law(&self, solution: &RidgeSolution) -> Result<ResidualLaw> {
        let law = crate::ridge::residual_moments(solution.moments(), solution)?;
        let model = self.clone();
        let b = solution.b_lambda().clone();
        Ok(law.with_conditional(std::sync::Arc::new(move |point| {
            model.conditional_residual_moments(&b, point)
        })))
    }

    fn support_grid(&self, count: usize) -> Option<Vec<f64>> {
        let (a, b) = match self {
            Model::Additive(m) => m.xi.support(),
            Model::Multiplicative(m) => m.xi.support(),
            Model::ExpPoly(_) => (-1.0, 1.0),
            Model::Linear(_) => return None,
        };
        let step = (b - a) / (count - 1) as f64;
        Some((0..count).map(|i| a + step * i as f64).collect())
    }
}

fn design_xi(design: &Design) -> Result<&Vec<f64>> {
    design.xi.as_ref().ok_or_else(|| {
        Error::InvalidArgument("design carries no scalar drivers for this model".into())
    })
}

fn covariate_matrix(xi: &[f64], f: impl Fn(f64) -> DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = xi.iter().map(|&z| f(z)).collect();
    DMatrix::from_columns(&cols)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Population moments of an additive model via quadrature:
/// `(Σ_x)_{ij} = E[x_i x_j]`, `(Σ_xy)_i = E[x_i f(ξ)]`, `μ_y = E[f(ξ)]`,
/// `Σ_y = Var(f(ξ)) + σ_ε²`.
pub fn population_moments_additive(model: &AdditiveModel) -> Result<MomentSpec> {
    let p = model.features.len();
    let (a, b) = model.xi.support();
    let g = model.xi.density();
    let feat =
        |i: usize, z: f64| (model.features.eval(i, z) - model.std.means[i]) / model.std.sds[i];

    let mut sigma_x = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = quad::integrate(|z| feat(i, z) * feat(j, z) * g, a, b, MOMENT_TOL)?.value;
            sigma_x[(i, j)] = v;
            sigma_x[(j, i)] = v;
        }
    }
    let mut sigma_xy = DMatrix::zeros(p, 1);
    for i in 0..p {
        sigma_xy[(i, 0)] =
            quad::integrate(|z| feat(i, z) * model.f.eval(z) * g, a, b, MOMENT_TOL)?.value;
    }
    let mu_f = quad::integrate(|z| model.f.eval(z) * g, a, b, MOMENT_TOL)?.value;
    let f2 = quad::integrate(|z| model.f.eval(z).powi(2) * g, a, b, MOMENT_TOL)?.value;
    let sigma_y = f2 - mu_f * mu_f + model.sigma_eps * model.sigma_eps;

    MomentSpec::new(
        DVector::zeros(p),
        DVector::from_element(1, mu_f),
        sigma_x,
        DMatrix::from_element(1, 1, sigma_y),
        sigma_xy,
    )
}

/// Population moments of a multiplicative model. With `ε ⊥ ξ`,
/// `Σ_xy = μ_ε E[x f(ξ)]`, `μ_y = μ_ε E[f]`, and
/// `Var(y) = E[f²](σ_ε² + μ_ε²) − μ_y²`.
pub fn population_moments_multiplicative(model: &MultiplicativeModel) -> Result<MomentSpec> {
    let additive = AdditiveModel {
        f: model.f.clone(),
        xi: model.xi,
        features: model.features.clone(),
        sigma_eps: 0.0,
        std: model.std.clone(),
    };
    let base = population_moments_additive(&additive)?;
    let (a, b) = model.xi.support();
    let g = model.xi.density();
    let mu_f = base.mu_y()[0];
    let f2 = quad::integrate(|z| model.f.eval(z).powi(2) * g, a, b, MOMENT_TOL)?.value;
    let mu_y = model.mu_eps * mu_f;
    let var_y =
        f2 * (model.sigma_eps * model.sigma_eps + model.mu_eps * model.mu_eps) - mu_y * mu_y;
    MomentSpec::new(
        DVector::zeros(model.features.len()),
        DVector::from_element(1, mu_y),
        base.sigma_x().clone(),
        DMatrix::from_element(1, 1, var_y),
        base.sigma_xy() * model.mu_eps,
    )
}

/// Outcome of the homoscedasticity diagnostic.
#[derive(Debug, Clone)]
pub struct HomoscedasticityReport {
    pub homoscedastic: bool,
    /// `max_i ‖Σ_i − Σ̄‖ / ‖Σ̄‖` over the grid (absolute when `Σ̄ = 0`).
    pub max_relative_spread: f64,
    /// The common conditional covariance when homoscedastic; the grid
    /// average otherwise.
    pub representative_cov: DMatrix<f64>,
}

/// Evaluates the conditional residual covariance across a grid of driver
/// values and reports the relative spread. Linear models are structurally
/// homoscedastic (the conditional covariance is `Σ_ε` for every `x`), so no
/// grid is involved.
pub fn homoscedasticity_check(
    model: &Model,
    b_lambda: &DMatrix<f64>,
    grid: Option<&[f64]>,
    tol: f64,
) -> Result<HomoscedasticityReport> {
    if let Model::Linear(m) = model {
        return Ok(HomoscedasticityReport {
            homoscedastic: true,
            max_relative_spread: 0.0,
            representative_cov: m.sigma_eps.clone(),
        });
    }
    let default_grid;
    let points: &[f64] = match grid {
        Some(g) => g,
        None => {
            default_grid = model
                .support_grid(HOMOSCEDASTICITY_GRID)
                .expect("scalar-driver models always have a support grid");
            &default_grid
        }
    };
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "homoscedasticity grid is empty".into(),
        ));
    }
    let covs: Vec<DMatrix<f64>> = points
        .iter()
        .map(|&z| {
            model
                .conditional_residual_moments(b_lambda, &CovariatePoint::Scalar(z))
                .map(|(_, c)| c)
        })
        .collect::<Result<_>>()?;
    let q = covs[0].nrows();
    let mut mean = DMatrix::zeros(q, q);
    for c in &covs {
        mean += c;
    }
    mean /= covs.len() as f64;
    let scale = mean.norm();
    // Pairwise comparison so bit-identical covariances report exactly zero
    // spread instead of inheriting averaging rounding.
    let mut max_dev = 0.0_f64;
    for i in 0..covs.len() {
        for j in (i + 1)..covs.len() {
            max_dev = max_dev.max((&covs[i] - &covs[j]).norm());
        }
    }
    let spread = if scale == 0.0 { max_dev } else { max_dev / scale };
    let homoscedastic = spread <= tol;
    let representative_cov = if homoscedastic {
        covs[covs.len() / 2].clone()
    } else {
        mean
    };
    Ok(HomoscedasticityReport {
        homoscedastic,
        max_relative_spread: spread,
        representative_cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_moments_match_known_values() {
        assert_abs_diff_eq!(uniform_sym_moment(1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uniform_sym_moment(2), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uniform_sym_std(1), 0.5773502691896258, epsilon = 1e-15);
        assert_abs_diff_eq!(uniform_sym_std(2), 0.29814239699997197, epsilon = 1e-15);
    }

    #[test]
    fn exp_poly_centering_constant_kills_the_mean() {
        let v = quad::integrate(|z| 0.5 * (z.exp() - exp_k()), -1.0, 1.0, 1e-13)
            .unwrap()
            .value;
        assert!(v.abs() <= 1e-12);
    }

    #[test]
    fn exp_poly_p2_sigma_x_structure() {
        let m = ExpPolyModel::new(2, 0.1, (-1.0, 1.0)).unwrap();
        let moments = m.population_moments().unwrap();
        let sx = moments.sigma_x();
        assert_abs_diff_eq!(sx[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sx[(1, 1)], 1.0, epsilon = 1e-12);
        // Odd symmetry of ξ·ξ̃² under U(−1, 1).
        assert_abs_diff_eq!(sx[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_poly_cross_moment_dual_path() {
        // Closed form vs quadrature for each entry of Σ_xy.
        for p in [1usize, 3, 5, 8] {
            let m = ExpPolyModel::new(p, 0.0, (-1.0, 1.0)).unwrap();
            let closed = m.population_moments().unwrap();
            for i in 1..=p {
                let mean = uniform_sym_moment(i);
                let by_quad = quad::integrate(
                    |z| 0.5 * (z.powi(i as i32) - mean) * (z.exp() - exp_k()),
                    -1.0,
                    1.0,
                    1e-13,
                )
                .unwrap()
                .value
                    / uniform_sym_std(i);
                assert_abs_diff_eq!(closed.sigma_xy()[(i - 1, 0)], by_quad, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn exp_poly_first_cross_moment_value() {
        // (Σ_xy)_1 = e⁻¹ / σ(ξ) = √3·e⁻¹.
        let m = ExpPolyModel::new(1, 0.0, (-1.0, 1.0)).unwrap();
        let moments = m.population_moments().unwrap();
        let expected = 3.0_f64.sqrt() * (-1.0_f64).exp();
        assert_abs_diff_eq!(moments.sigma_xy()[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn exp_poly_sigma_y_closed_form() {
        let m = ExpPolyModel::new(3, 0.0, (-1.0, 1.0)).unwrap();
        let moments = m.population_moments().unwrap();
        assert_abs_diff_eq!(
            moments.sigma_y()[(0, 0)],
            0.43233235838169365,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_poly_closed_moments_match_quadrature_path() {
        for p in [2usize, 5, 8] {
            let m = ExpPolyModel::new(p, 0.3, (-1.0, 1.0)).unwrap();
            let closed = m.population_moments().unwrap();
            let quad_path = population_moments_additive(&m.to_additive().unwrap()).unwrap();
            assert!((closed.sigma_x() - quad_path.sigma_x()).amax() < 1e-9);
            assert!((closed.sigma_xy() - quad_path.sigma_xy()).amax() < 1e-9);
            assert!((closed.sigma_y() - quad_path.sigma_y()).amax() < 1e-9);
            assert!(quad_path.mu_y()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn additive_features_are_standardized() {
        let model = AdditiveModel::new(
            ScalarFn::ExpMinusK,
            UniformDensity::new(0.0, 2.0).unwrap(),
            FeatureSet::Functions(vec![
                ScalarFn::Identity,
                ScalarFn::Polynomial(vec![1.0, -2.0, 0.5]),
                ScalarFn::ExpMinusK,
            ]),
            0.1,
        )
        .unwrap();
        let (a, b) = model.xi.support();
        let g = model.xi.density();
        for i in 0..3 {
            let mean = quad::integrate(|z| model.covariate(z)[i] * g, a, b, 1e-12)
                .unwrap()
                .value;
            let var = quad::integrate(|z| model.covariate(z)[i].powi(2) * g, a, b, 1e-12)
                .unwrap()
                .value
                - mean * mean;
            assert!(mean.abs() <= 1e-8, "feature {i} mean {mean}");
            assert!((var - 1.0).abs() <= 1e-8, "feature {i} variance {var}");
        }
    }

    #[test]
    fn constant_feature_is_rejected() {
        let res = AdditiveModel::new(
            ScalarFn::Identity,
            UniformDensity::new(-1.0, 1.0).unwrap(),
            FeatureSet::Functions(vec![ScalarFn::Polynomial(vec![3.0])]),
            0.1,
        );
        assert!(matches!(res, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn testing_moments_on_training_support_reduce_to_training() {
        let m = ExpPolyModel::new(4, 0.3, (-1.0, 1.0)).unwrap();
        let train = m.population_moments().unwrap();
        let test = m.testing_moments().unwrap();
        assert!(test.mu_x().amax() < 1e-9);
        assert!((test.mu_y()[0]).abs() < 1e-9);
        assert!((test.sigma_x() - train.sigma_x()).amax() < 1e-9);
        assert!((test.sigma_xy() - train.sigma_xy()).amax() < 1e-9);
        assert!((test.sigma_y() - train.sigma_y()).amax() < 1e-9);
    }

    #[test]
    fn shifted_testing_first_moments() {
        let m = ExpPolyModel::new(2, 0.3, (1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(uniform_moment(1, 1.0, 2.0), 1.5, epsilon = 1e-15);
        let t = m.testing_moments().unwrap();
        // μ_y on [1, 2] = (e² − e) − k.
        assert_abs_diff_eq!(t.mu_y()[0], 3.4955730768278037, epsilon = 1e-12);
        let expected_mu_x1 = 1.5 / uniform_sym_std(1);
        assert_abs_diff_eq!(t.mu_x()[0], expected_mu_x1, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_additive_sample_is_deterministic() {
        let model = Model::Additive(
            AdditiveModel::new(
                ScalarFn::ExpMinusK,
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(2),
                0.0,
            )
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = model
            .draw_design(10, SampleKind::Training, &mut rng)
            .unwrap();
        let y = model.draw_response(&design, &mut rng).unwrap();
        let xi = design.xi.as_ref().unwrap();
        for j in 0..10 {
            assert_abs_diff_eq!(y[(0, j)], xi[j].exp() - exp_k(), epsilon = 1e-15);
        }
    }

    #[test]
    fn conditional_moments_exp_poly_at_origin() {
        let m = ExpPolyModel::new(3, 0.3, (-1.0, 1.0)).unwrap();
        let moments = m.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 0.9).unwrap();
        let model = Model::ExpPoly(m.clone());
        let (mean, cov) = model
            .conditional_residual_moments(sol.b_lambda(), &CovariatePoint::Scalar(0.0))
            .unwrap();
        let x0 = m.covariate(0.0);
        let expected = 1.0 - exp_k() - (sol.b_lambda().transpose() * x0)[(0, 0)];
        assert_abs_diff_eq!(mean[0], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(0, 0)], 0.09, epsilon = 1e-15);
    }

    #[test]
    fn multiplicative_conditional_variance_vanishes_with_f() {
        let model = Model::Multiplicative(
            MultiplicativeModel::new(
                ScalarFn::ExpMinusK,
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(2),
                0.5,
                0.4,
            )
            .unwrap(),
        );
        let b = DMatrix::zeros(2, 1);
        // f(z) = e^z − k vanishes at z = ln k.
        let root = exp_k().ln();
        let (_, cov) = model
            .conditional_residual_moments(&b, &CovariatePoint::Scalar(root))
            .unwrap();
        assert!(cov[(0, 0)].abs() < 1e-28);
    }

    #[test]
    fn homoscedasticity_dichotomy() {
        let additive = Model::Additive(
            AdditiveModel::new(
                ScalarFn::ExpMinusK,
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(3),
                0.3,
            )
            .unwrap(),
        );
        let b = DMatrix::zeros(3, 1);
        let rep = homoscedasticity_check(&additive, &b, None, HOMOSCEDASTICITY_TOL).unwrap();
        assert!(rep.homoscedastic);
        assert_eq!(rep.max_relative_spread, 0.0);

        let multiplicative = Model::Multiplicative(
            MultiplicativeModel::new(
                ScalarFn::ExpMinusK,
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(3),
                0.5,
                0.4,
            )
            .unwrap(),
        );
        let rep = homoscedasticity_check(&multiplicative, &b, None, HOMOSCEDASTICITY_TOL).unwrap();
        assert!(!rep.homoscedastic);
        assert!(rep.max_relative_spread > 0.1);

        // Constant f degenerates to additive-style homoscedasticity.
        let constant = Model::Multiplicative(
            MultiplicativeModel::new(
                ScalarFn::Polynomial(vec![2.0]),
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(2),
                0.5,
                0.4,
            )
            .unwrap(),
        );
        let b2 = DMatrix::zeros(2, 1);
        let rep = homoscedasticity_check(&constant, &b2, None, HOMOSCEDASTICITY_TOL).unwrap();
        assert!(rep.homoscedastic);
        assert_eq!(rep.max_relative_spread, 0.0);
    }

    #[test]
    fn linear_model_is_structurally_homoscedastic() {
        let model = Model::Linear(
            LinearModel::new(
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                DMatrix::from_element(1, 1, 0.25),
                DVector::zeros(2),
                DMatrix::identity(2, 2),
            )
            .unwrap(),
        );
        let rep =
            homoscedasticity_check(&model, &DMatrix::zeros(2, 1), None, HOMOSCEDASTICITY_TOL)
                .unwrap();
        assert!(rep.homoscedastic);
        assert_abs_diff_eq!(rep.representative_cov[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn residual_law_total_expectation_by_quadrature() {
        // Averaging the conditional mean over the driver density must
        // reproduce the unconditional mean; a shifted support makes the
        // check nontrivial.
        let additive = AdditiveModel::new(
            ScalarFn::ExpMinusK,
            UniformDensity::new(0.0, 1.0).unwrap(),
            FeatureSet::Monomials(2),
            0.2,
        )
        .unwrap();
        let model = Model::Additive(additive.clone());
        let moments = model.population_moments().unwrap();
        let sol = ridge::ridge_matrix(&moments, 0.5).unwrap();
        let law = model.residual_law(&sol).unwrap();
        let averaged = quad::integrate(
            |z| {
                law.conditional_mean(&CovariatePoint::Scalar(z)).unwrap()[0]
                    * additive.xi.density()
            },
            0.0,
            1.0,
            1e-11,
        )
        .unwrap()
        .value;
        assert_abs_diff_eq!(averaged, law.mu()[0], epsilon = 1e-9);
    }

    #[test]
    fn multiplicative_moments_scale_with_mu_eps() {
        let mult = MultiplicativeModel::new(
            ScalarFn::ExpMinusK,
            UniformDensity::new(-1.0, 1.0).unwrap(),
            FeatureSet::Monomials(2),
            0.7,
            0.4,
        )
        .unwrap();
        let m = population_moments_multiplicative(&mult).unwrap();
        let additive_xy = population_moments_additive(
            &AdditiveModel::new(
                ScalarFn::ExpMinusK,
                UniformDensity::new(-1.0, 1.0).unwrap(),
                FeatureSet::Monomials(2),
                0.0,
            )
            .unwrap(),
        )
        .unwrap();
        assert!((m.sigma_xy() - additive_xy.sigma_xy() * 0.7).amax() < 1e-12);
        // E[f] = 0 here, so μ_y = 0 and Var(y) = E[f²](σ² + μ²).
        assert!(m.mu_y()[0].abs() < 1e-12);
        let f2 = 0.43233235838169365;
        assert_abs_diff_eq!(m.sigma_y()[(0, 0)], f2 * (0.16 + 0.49), epsilon = 1e-10);
    }
}
