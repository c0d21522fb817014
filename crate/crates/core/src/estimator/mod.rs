//! Linear panel estimators.
//!
//! * [`fit_pooled`]: OLS on levels.
//! * [`fit_fixed_effects`]: within or LSDV slopes plus a derived grand-mean
//!   intercept.
//! * [`fit_random_effects`]: GLS by quasi-demeaning with Swamy-Arora
//!   variance components.
//! * [`fit_gmm`]: linear GMM with one-step, two-step or iterated weighting.
//!
//! OLS-family fits report White (HC0) covariances; GMM reports the sandwich
//! with the entity-clustered moment covariance.

mod fitted;
pub(crate) mod gmm;
pub(crate) mod ols;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{JTest, VarianceComponents};
use crate::error::{Error, Result};
use crate::panel_data::align::INTERCEPT;
use crate::panel_data::{EstimationSample, LaggedVar};
use crate::transforms::{DummyMode, TransformKind};

pub use fitted::{fitted_and_levels, FitRow, FitTable};
pub use gmm::{fit_gmm, GmmOptions, GmmState, Weighting};
pub use ols::{fit_fixed_effects, fit_pooled, fit_random_effects};

/// Cross-section specification, one per column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Pooled,
    FixedEffects,
    RandomEffects,
    FirstDifference,
    OrthogonalDeviation,
}

impl SpecKind {
    pub const ALL: [SpecKind; 5] = [
        SpecKind::Pooled,
        SpecKind::FixedEffects,
        SpecKind::RandomEffects,
        SpecKind::OrthogonalDeviation,
        SpecKind::FirstDifference,
    ];

    pub fn short(&self) -> &'static str {
        match self {
            SpecKind::Pooled => "pooled",
            SpecKind::FixedEffects => "fe",
            SpecKind::RandomEffects => "re",
            SpecKind::FirstDifference => "fd",
            SpecKind::OrthogonalDeviation => "od",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            SpecKind::Pooled => "Pooled",
            SpecKind::FixedEffects => "FE",
            SpecKind::RandomEffects => "RE",
            SpecKind::FirstDifference => "FD",
            SpecKind::OrthogonalDeviation => "OD",
        }
    }

    pub fn is_differenced(&self) -> bool {
        matches!(self, SpecKind::FirstDifference | SpecKind::OrthogonalDeviation)
    }
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for SpecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pooled" | "none" => Ok(SpecKind::Pooled),
            "fe" | "fixed" => Ok(SpecKind::FixedEffects),
            "re" | "random" => Ok(SpecKind::RandomEffects),
            "fd" | "first_difference" => Ok(SpecKind::FirstDifference),
            "od" | "orthogonal_deviation" => Ok(SpecKind::OrthogonalDeviation),
            other => Err(Error::Specification(format!(
                "unknown specification '{other}' (pooled, fe, re, fd, od)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effects {
    None,
    Fixed,
    Random,
}

/// How fixed effects are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeMethod {
    #[default]
    Within,
    Lsdv,
}

/// Dependent variable, regressors and cross-section specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dependent: String,
    /// Lags `1..=ar_lags` of the dependent variable enter as regressors.
    pub ar_lags: usize,
    pub exogenous: Vec<LaggedVar>,
    pub intercept: bool,
    pub kind: SpecKind,
    pub fe_method: FeMethod,
}

impl ModelSpec {
    /// Spec with the usual intercept convention for `kind` (levels
    /// specifications carry one; differenced ones cannot).
    pub fn new(dependent: &str, ar_lags: usize, exogenous: Vec<LaggedVar>, kind: SpecKind) -> Self {
        Self {
            dependent: dependent.to_string(),
            ar_lags,
            exogenous,
            intercept: !kind.is_differenced(),
            kind,
            fe_method: FeMethod::Within,
        }
    }

    pub fn effects(&self) -> Effects {
        match self.kind {
            SpecKind::FixedEffects => Effects::Fixed,
            SpecKind::RandomEffects => Effects::Random,
            _ => Effects::None,
        }
    }

    /// Transform applied before estimation. Random effects report `theta = 0`
    /// here; the fitted value comes from the variance components.
    pub fn transform(&self) -> TransformKind {
        match self.kind {
            SpecKind::Pooled => TransformKind::None,
            SpecKind::FixedEffects => match self.fe_method {
                FeMethod::Within => TransformKind::Within,
                FeMethod::Lsdv => TransformKind::Dummies,
            },
            SpecKind::RandomEffects => TransformKind::QuasiDemean(0.0),
            SpecKind::FirstDifference => TransformKind::FirstDifference,
            SpecKind::OrthogonalDeviation => TransformKind::OrthogonalDeviation,
        }
    }

    /// Regressors in estimation order (lagged dependent first).
    pub fn regressors(&self) -> Vec<LaggedVar> {
        let mut out: Vec<LaggedVar> = (1..=self.ar_lags)
            .map(|l| LaggedVar::new(&self.dependent, l))
            .collect();
        out.extend(self.exogenous.iter().cloned());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_differenced() && self.intercept {
            return Err(Error::Specification(format!(
                "{} specification cannot carry an intercept",
                self.kind.title()
            )));
        }
        if self.ar_lags == 0 && self.exogenous.is_empty() && !self.intercept {
            return Err(Error::Specification("model has no regressors".into()));
        }
        let regs = self.regressors();
        for (i, r) in regs.iter().enumerate() {
            if regs[..i].contains(r) {
                return Err(Error::Specification(format!("regressor {r} listed twice")));
            }
            if r.name == self.dependent && r.lag == 0 {
                return Err(Error::Specification(
                    "the dependent variable cannot be its own contemporaneous regressor".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Method {
    Ols,
    Gmm { weighting: Weighting, windmeijer: bool },
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub kind: SpecKind,
    pub method: Method,
    pub dependent: String,
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub standard_errors: DVector<f64>,
    pub t_statistics: DVector<f64>,
    pub entity_labels: Vec<String>,
    /// `(entity, period)` of each estimation row (after any transform).
    pub rows: Vec<(usize, i64)>,
    pub actual_transformed: DVector<f64>,
    pub fitted_transformed: DVector<f64>,
    pub residuals: DVector<f64>,
    pub weighting_matrix: Option<DMatrix<f64>>,
    pub r_squared_weighted: f64,
    pub r_squared_unweighted: f64,
    pub steps_taken: usize,
    pub sample_size: usize,
    pub cross_sections: usize,
    pub periods: usize,
    pub j: Option<JTest>,
    pub instrument_count: Option<usize>,
    pub components: Option<VarianceComponents>,
    /// Per-entity quasi-demeaning weights (random effects only).
    pub thetas: Option<Vec<f64>>,
    pub entity_effects: Option<Vec<f64>>,
    pub dummy_mode: Option<DummyMode>,
    pub gmm: Option<GmmState>,
    /// Aligned level sample the fit was built from.
    pub levels: Option<EstimationSample>,
    pub notes: Vec<String>,
}

impl EstimationResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.standard_errors[i])
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Slope names (everything except the intercept).
    pub fn slope_names(&self) -> Vec<&str> {
        self.names
            .iter()
            .map(String::as_str)
            .filter(|n| *n != INTERCEPT)
            .collect()
    }

    pub(crate) fn finish_inference(&mut self) {
        self.covariance = crate::linalg::symmetrize(&self.covariance);
        self.standard_errors = self.covariance.diagonal().map(|v| v.max(0.0).sqrt());
        self.t_statistics = DVector::from_fn(self.coefficients.len(), |i, _| {
            let se = self.standard_errors[i];
            if se > 0.0 {
                self.coefficients[i] / se
            } else {
                f64::NAN
            }
        });
    }

    pub fn with_levels(mut self, levels: EstimationSample) -> Self {
        self.levels = Some(levels);
        self
    }
}

/// Common skeleton for a result on `sample`'s rows.
pub(crate) fn blank_result(
    kind: SpecKind,
    method: Method,
    sample: &EstimationSample,
    names: Vec<String>,
    coefficients: DVector<f64>,
    covariance: DMatrix<f64>,
    fitted: DVector<f64>,
) -> EstimationResult {
    let residuals = &sample.y - &fitted;
    let mut r = EstimationResult {
        kind,
        method,
        dependent: sample.dependent.clone(),
        names,
        coefficients,
        covariance,
        standard_errors: DVector::zeros(0),
        t_statistics: DVector::zeros(0),
        entity_labels: sample.entity_labels.clone(),
        rows: sample.entity.iter().copied().zip(sample.period.iter().copied()).collect(),
        actual_transformed: sample.y.clone(),
        fitted_transformed: fitted,
        residuals,
        weighting_matrix: None,
        r_squared_weighted: f64::NAN,
        r_squared_unweighted: f64::NAN,
        steps_taken: 1,
        sample_size: sample.n_obs(),
        cross_sections: sample.cross_sections(),
        periods: sample.periods_spanned(),
        j: None,
        instrument_count: None,
        components: None,
        thetas: None,
        entity_effects: None,
        dummy_mode: None,
        gmm: None,
        levels: None,
        notes: Vec::new(),
    };
    r.finish_inference();
    r
}
