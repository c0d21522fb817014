//! Specification tests and selection criteria.

mod ar;
mod components;
mod hausman;
mod lags;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::linalg::spd_solve;

pub use ar::{ab_serial_correlation, ArTest};
pub use components::{swamy_arora, VarianceComponents};
pub use hausman::{hausman, HausmanOutcome};
pub use lags::{lag_selection, Criterion, LagCandidate, LagSearch, LagSelection};

/// Upper tail `P(X > x)` of a chi-square variable with `df` degrees of
/// freedom, i.e. `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if df == 0 || x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Two-sided standard normal p-value.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `J = g' S^-1 g` for summed moments `g`.
pub fn j_from_moments(g: &DVector<f64>, s: &DMatrix<f64>, df: i64) -> Result<JTest> {
    if df < 0 {
        return Err(Error::ImpossibleState(format!(
            "negative overidentification degrees of freedom ({df})"
        )));
    }
    let sg = spd_solve(s, &DMatrix::from_column_slice(g.len(), 1, g.as_slice()), "moment covariance")?;
    let statistic = g.dot(&sg.column(0)).max(0.0);
    let df = df as usize;
    Ok(JTest {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// Overidentification test for a GMM fit, recomputed from its final moments.
pub fn j_test(result: &EstimationResult) -> Result<JTest> {
    let state = result
        .gmm
        .as_ref()
        .ok_or_else(|| Error::Specification("J test needs a GMM fit".into()))?;
    let g = state.z.transpose() * (&state.y - &state.x * &result.coefficients);
    j_from_moments(&g, &state.s_for_j, state.z.ncols() as i64 - result.coefficients.len() as i64)
}

/// Everything reported under a results column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DiagnosticsReport {
    pub j_statistic: Option<f64>,
    pub j_pvalue: Option<f64>,
    pub j_df: Option<usize>,
    pub ar_tests: Vec<ArTest>,
    pub variance_components: Option<VarianceComponents>,
    pub hausman: Option<HausmanOutcome>,
    pub criteria: Option<LagSelection>,
}

impl DiagnosticsReport {
    pub fn with_j(mut self, j: Option<JTest>) -> Self {
        if let Some(j) = j {
            self.j_statistic = Some(j.statistic);
            self.j_pvalue = Some(j.p_value);
            self.j_df = Some(j.df);
        }
        self
    }

    /// Footer line in the `J-stat (p-value)` style.
    pub fn j_footer(&self) -> String {
        match (self.j_statistic, self.j_pvalue) {
            (Some(j), Some(p)) => format!("{j:.4} ({p:.4})"),
            _ => "-".to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}
