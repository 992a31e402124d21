//! Adaptive Gauss–Legendre quadrature on bounded intervals.
//!
//! Every population-moment integral in this crate is one-dimensional with a
//! piecewise-smooth integrand on a compact interval, so a fixed high-order
//! Gauss–Legendre pair with adaptive bisection is both simple and accurate.
//! Each panel is evaluated with a 15-node and a 25-node rule; the returned
//! value comes from the 25-node rule and the error estimate is the
//! difference between the two. Panels whose estimate exceeds their share of
//! the tolerance budget are bisected.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const LOW_NODES: usize = 15;
const HIGH_NODES: usize = 25;

/// Subdivision budget before giving up.
const MAX_PANELS: usize = 10_000;

/// Default absolute tolerance for moment integrals.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    /// Sum of per-panel error estimates; at most the requested tolerance on
    /// success.
    pub error_estimate: f64,
    /// Number of accepted panels (1 when no subdivision was needed).
    pub subdivisions: usize,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial. Accurate to machine precision for the orders used
/// here.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for k in 0..n {
        // Tricomi-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P'_n(x) via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    rule
}

fn rule_low() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(LOW_NODES))
}

fn rule_high() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(HIGH_NODES))
}

fn panel_value<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(mid + half * x);
    }
    half * acc
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Fails with [`Error::IntegrationNonConvergence`] when the subdivision
/// budget is exhausted, reporting the worst remaining subinterval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidInterval { a, b });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            subdivisions: 0,
        });
    }

    let total_width = b - a;
    let mut pending = vec![(a, b, tol)];
    let mut value = 0.0;
    let mut error_estimate = 0.0;
    let mut panels = 0usize;

    while let Some((lo, hi, budget)) = pending.pop() {
        panels += 1;
        if panels > MAX_PANELS {
            // Report the pending subinterval with the largest budget-relative
            // error still outstanding.
            let worst = pending
                .iter()
                .copied()
                .fold((lo, hi, budget), |w, c| if c.2 < w.2 { c } else { w });
            return Err(Error::IntegrationNonConvergence {
                a: worst.0,
                b: worst.1,
                error_estimate: budget,
            });
        }

        let low = panel_value(&f, lo, hi, rule_low());
        let high = panel_value(&f, lo, hi, rule_high());
        if !high.is_finite() {
            return Err(Error::IntegrationNonConvergence {
                a: lo,
                b: hi,
                error_estimate: f64::INFINITY,
            });
        }
        let err = (high - low).abs();
        let width_floor = (hi - lo) <= 1e-13 * total_width;
        let rounding_floor = err <= 8.0 * f64::EPSILON * high.abs();
        if err <= budget || width_floor || rounding_floor {
            value += high;
            error_estimate += err;
        } else {
            let mid = 0.5 * (lo + hi);
            pending.push((lo, mid, 0.5 * budget));
            pending.push((mid, hi, 0.5 * budget));
        }
    }

    Ok(QuadratureResult {
        value,
        error_estimate,
        subdivisions: panels,
    })
}
