//! Moment containers and sample second-moment estimators.
//!
//! [`MomentSpec`] holds the population first and second central moments of a
//! covariate/response pair `(x, y)`; [`SamplePair`] holds the horizontally
//! concatenated sample matrices `X ∈ R^{p×N}` and `Y ∈ R^{q×N}`. The sample
//! covariance estimators here are the `1/N`-normalized centered products
//! `Σ̂_x = (1/N) X A_N Xᵀ` and `Σ̂_xy = (1/N) X A_N Yᵀ`, where
//! `A_N = I_N − (1/N) i i ᵀ` is the centering matrix.
//!
//! All containers are immutable after construction and safe to share across
//! threads.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Population moments of a pair of random vectors `x ∈ R^p`, `y ∈ R^q`.
///
/// `sigma_x` and `sigma_y` are central covariances (symmetrized and checked
/// positive semidefinite on construction); `sigma_xy = Cov(x, y)` is `p × q`.
#[derive(Debug, Clone)]
pub struct MomentSpec {
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    sigma_x: DMatrix<f64>,
    sigma_y: DMatrix<f64>,
    sigma_xy: DMatrix<f64>,
}

impl MomentSpec {
    pub fn new(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_x: DMatrix<f64>,
        sigma_y: DMatrix<f64>,
        sigma_xy: DMatrix<f64>,
    ) -> Result<Self> {
        let p = mu_x.len();
        let q = mu_y.len();
        if sigma_x.shape() != (p, p) {
            return Err(Error::InvalidDimension(format!(
                "sigma_x must be {p}×{p}, got {}×{}",
                sigma_x.nrows(),
                sigma_x.ncols()
            )));
        }
        if sigma_y.shape() != (q, q) {
            return Err(Error::InvalidDimension(format!(
                "sigma_y must be {q}×{q}, got {}×{}",
                sigma_y.nrows(),
                sigma_y.ncols()
            )));
        }
        if sigma_xy.shape() != (p, q) {
            return Err(Error::InvalidDimension(format!(
                "sigma_xy must be {p}×{q}, got {}×{}",
                sigma_xy.nrows(),
                sigma_xy.ncols()
            )));
        }
        for (name, m) in [("mu_x", &mu_x), ("mu_y", &mu_y)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} contains non-finite entries"
                )));
            }
        }
        if sigma_xy.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sigma_xy contains non-finite entries".into(),
            ));
        }
        let sigma_x = linalg::symmetrize(&sigma_x);
        let sigma_y = linalg::symmetrize(&sigma_y);
        linalg::check_psd("sigma_x", &sigma_x)?;
        linalg::check_psd("sigma_y", &sigma_y)?;
        Ok(Self {
            mu_x,
            mu_y,
            sigma_x,
            sigma_y,
            sigma_xy,
        })
    }

    pub fn p(&self) -> usize {
        self.mu_x.len()
    }

    pub fn q(&self) -> usize {
        self.mu_y.len()
    }

    pub fn mu_x(&self) -> &DVector<f64> {
        &self.mu_x
    }

    pub fn mu_y(&self) -> &DVector<f64> {
        &self.mu_y
    }

    pub fn sigma_x(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }

    pub fn sigma_y(&self) -> &DMatrix<f64> {
        &self.sigma_y
    }

    pub fn sigma_xy(&self) -> &DMatrix<f64> {
        &self.sigma_xy
    }

    /// Spectral condition number of `Σ_x`; infinite when singular.
    pub fn sigma_x_condition_number(&self) -> f64 {
        linalg::spd_condition(&self.sigma_x)
    }

    /// Raw (uncentered) second moment `E[xxᵀ] = Σ_x + μ_x μ_xᵀ`.
    pub fn raw_second_moment_x(&self) -> DMatrix<f64> {
        &self.sigma_x + &self.mu_x * self.mu_x.transpose()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: MomentSpecToml = toml::from_str(text)?;
        raw.build()
    }

    pub fn to_toml_string(&self) -> String {
        let raw = MomentSpecToml {
            mu_x: self.mu_x.iter().copied().collect(),
            mu_y: self.mu_y.iter().copied().collect(),
            sigma_x: matrix_rows(&self.sigma_x),
            sigma_y: matrix_rows(&self.sigma_y),
            sigma_xy: matrix_rows(&self.sigma_xy),
        };
        toml::to_string(&raw).expect("moment spec serialization cannot fail")
    }

    pub fn read_toml(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_toml(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml_string())?)
    }
}

/// On-disk form: vectors as arrays, matrices as row-major nested arrays.
#[derive(Serialize, Deserialize)]
struct MomentSpecToml {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    sigma_x: Vec<Vec<f64>>,
    sigma_y: Vec<Vec<f64>>,
    sigma_xy: Vec<Vec<f64>>,
}

impl MomentSpecToml {
    fn build(self) -> Result<MomentSpec> {
        MomentSpec::new(
            DVector::from_vec(self.mu_x),
            DVector::from_vec(self.mu_y),
            rows_to_matrix("sigma_x", &self.sigma_x)?,
            rows_to_matrix("sigma_y", &self.sigma_y)?,
            rows_to_matrix("sigma_xy", &self.sigma_xy)?,
        )
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// A pair of concatenated samples: `x` is `p × N`, `y` is `q × N`, one
/// observation per column.
#[derive(Debug, Clone)]
pub struct SamplePair {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    seed: Option<u64>,
}

impl SamplePair {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, seed: Option<u64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::InvalidDimension(format!(
                "x has {} columns but y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        Ok(Self { x, y, seed })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.nrows()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `N = 1` is representable (its centering matrix is the zero matrix)
    /// but every covariance estimator rejects it.
    pub fn is_degenerate(&self) -> bool {
        self.n() < 2
    }

    /// CSV with header `x_1,..,x_p,y_1,..,y_q`, one observation per row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.p())
            .map(|i| format!("x_{i}"))
            .chain((1..=self.q()).map(|j| format!("y_{j}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for col in 0..self.n() {
            let row: Vec<String> = self
                .x
                .column(col)
                .iter()
                .chain(self.y.column(col).iter())
                .map(|v| format!("{v:.16e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form written by [`SamplePair::to_csv_string`]. The
    /// header is required; `p` and `q` are recovered from it.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let p = headers.iter().filter(|h| h.starts_with("x_")).count();
        let q = headers.iter().filter(|h| h.starts_with("y_")).count();
        if p == 0 || p + q != headers.len() {
            return Err(Error::Config(
                "sample CSV header must be x_1..x_p,y_1..y_q".into(),
            ));
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        let mut n = 0;
        for record in reader.records() {
            let record = record?;
            if record.len() != p + q {
                return Err(Error::Config(format!(
                    "sample CSV row {} has {} fields, expected {}",
                    n + 1,
                    record.len(),
                    p + q
                )));
            }
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("sample CSV parse: {e}")))?;
                if i < p {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::DegenerateSample("sample CSV has no data rows".into()));
        }
        // Values were collected observation-major; columns are observations.
        let x = DMatrix::from_fn(p, n, |i, j| xs[j * p + i]);
        let y = DMatrix::from_fn(q, n, |i, j| ys[j * q + i]);
        SamplePair::new(x, y, None)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv_string())?)
    }
}

/// The centering matrix `A_n = I_n − (1/n) i iᵀ`.
///
/// Symmetric, idempotent, rank `n − 1`. Only used in tests and small
/// explicit computations; the estimators below never materialize it.
pub fn centering_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "centering matrix requires n ≥ 1".into(),
        ));
    }
    let nf = n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - 1.0 / nf
        } else {
            -1.0 / nf
        }
    }))
}

/// Sample covariance `Σ̂_x = (1/N) X A_N Xᵀ`.
pub fn sample_cov_x(sample: &SamplePair) -> Result<DMatrix<f64>> {
    if sample.is_degenerate() {
        return Err(Error::DegenerateSample(format!(
            "covariance estimation requires N ≥ 2, got N = {}",
            sample.n()
        )));
    }
    Ok(linalg::centered_gram(sample.x()) / sample.n() as f64)
}

/// Sample cross-covariance `Σ̂_xy = (1/N) X A_N Yᵀ`.
pub fn sample_cross_cov(sample: &SamplePair) -> Result<DMatrix<f64>> {
    if sample.is_degenerate() {
        return Err(Error::DegenerateSample(format!(
            "covariance estimation requires N ≥ 2, got N = {}",
            sample.n()
        )));
    }
    Ok(linalg::centered_cross(sample.x(), sample.y()) / sample.n() as f64)
}
