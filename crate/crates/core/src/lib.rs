//! Linear dynamic panel data estimation.
//!
//! The crate covers the full pipeline for models of the form
//! `y[a,t] = b0 + sum_i rho_i y[a,t-i] + x[a,t]'beta + w[a] + e[a,t]`:
//!
//! * [`panel_data`]: unbalanced entity x period container, CSV ingestion,
//!   descriptive statistics and lag alignment.
//! * [`ratings`]: letter-grade trust ratings to a numeric scale and back.
//! * [`transforms`]: lags, within/quasi demeaning, first differences and
//!   forward orthogonal deviations, plus reconstruction of level fits.
//! * [`instruments`]: static and Arellano-Bond style dynamic instrument blocks.
//! * [`estimator`]: pooled OLS, fixed and random effects, and linear GMM with
//!   one-step, two-step and iterated weighting.
//! * [`diagnostics`]: Hansen J, Arellano-Bond AR(m), Swamy-Arora variance
//!   components, Hausman, information-criterion lag selection.
//! * [`simulate`]: synthetic dynamic panels and a Monte Carlo harness.
//! * [`pipeline`], [`report`] and [`manifest`]: end-to-end runs and their
//!   rendered / machine-readable outputs.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod instruments;
pub mod linalg;
pub mod manifest;
pub mod panel_data;
pub mod pipeline;
pub mod ratings;
pub mod report;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result};
pub use estimator::{EstimationResult, ModelSpec, SpecKind, Weighting};
pub use instruments::{InstrumentMatrix, InstrumentSpec};
pub use panel_data::{DescriptiveStats, EstimationSample, LaggedVar, PanelDataset};
pub use transforms::TransformKind;
