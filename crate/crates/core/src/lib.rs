//! Singular ridge regression with closed-form error evaluation.
//!
//! This library implements multivariate ridge regression in the *singular*
//! regime: the population covariance `Σ_x` (or its sample counterpart
//! `X A_N Xᵀ`) may be rank-deficient, so no ordinary least-squares
//! coefficient exists, yet the regularized solution
//! `B_λ = (Σ_x + λI)⁻¹ Σ_xy` is always well defined for `λ > 0`.
//!
//! On top of that solution the crate provides:
//!
//! - the conditional matrix-normal law of the finite-sample estimator
//!   `B̂_λ` given the covariate sample ([`estimator`]),
//! - closed-form conditional training and testing (generalization) errors
//!   with term-by-term breakdowns ([`mse`]),
//! - data-generating models with linear, additive, and multiplicative
//!   noise structure, including a polynomial-of-an-exponential instance
//!   with fully explicit population moments ([`models`]),
//! - adaptive Gauss–Legendre quadrature for moment integrals ([`quad`]),
//! - seeded Monte Carlo verifiers that independently reproduce every
//!   closed-form quantity ([`montecarlo`]),
//! - model-complexity sweeps that trace training/testing error curves as
//!   the number of covariates grows ([`sweep`]).
//!
//! All random computations take explicit seeds and split their streams per
//! replication, so every result in this crate is bit-reproducible.

pub mod config;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod montecarlo;
pub mod mse;
pub mod quad;
pub mod ridge;
pub mod sweep;

pub use error::{Error, Result};
