use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chi_square_sf;
use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::linalg::{min_eigenvalue, spd_solve};
use crate::panel_data::align::INTERCEPT;

/// Smallest admissible eigenvalue of `V_FE - V_RE`.
pub const HAUSMAN_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum HausmanOutcome {
    Valid {
        statistic: f64,
        df: usize,
        p_value: f64,
    },
    /// The statistic is not defined: degenerate random effects or a
    /// covariance difference that is not positive definite.
    Invalid { reason: String, min_eigenvalue: f64 },
}

impl HausmanOutcome {
    pub fn is_invalid(&self) -> bool {
        matches!(self, HausmanOutcome::Invalid { .. })
    }
}

/// Hausman comparison on the slopes both fits share.
pub fn hausman(fe: &EstimationResult, re: &EstimationResult) -> Result<HausmanOutcome> {
    let common: Vec<(usize, usize)> = fe
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.as_str() != INTERCEPT)
        .filter_map(|(i, n)| re.index(n).map(|j| (i, j)))
        .collect();
    if common.is_empty() {
        return Err(Error::Specification(
            "Hausman test needs slope coefficients common to both fits".into(),
        ));
    }
    let k = common.len();
    let d = DVector::from_fn(k, |a, _| fe.coefficients[common[a].0] - re.coefficients[common[a].1]);
    let v = DMatrix::from_fn(k, k, |a, b| {
        fe.covariance[(common[a].0, common[b].0)] - re.covariance[(common[a].1, common[b].1)]
    });
    let min_eig = min_eigenvalue(&v);
    if let Some(c) = &re.components {
        if c.sigma_u2 == 0.0 {
            return Ok(HausmanOutcome::Invalid {
                reason: "random effects are degenerate (sigma_u^2 = 0, RE equals pooled)".into(),
                min_eigenvalue: min_eig,
            });
        }
    }
    if min_eig < HAUSMAN_EIGEN_TOL {
        return Ok(HausmanOutcome::Invalid {
            reason: format!("V_FE - V_RE is not positive definite (smallest eigenvalue {min_eig:.3e})"),
            min_eigenvalue: min_eig,
        });
    }
    let vd = spd_solve(&v, &DMatrix::from_column_slice(k, 1, d.as_slice()), "V_FE - V_RE")?;
    let statistic = d.dot(&vd.column(0)).max(0.0);
    Ok(HausmanOutcome::Valid {
        statistic,
        df: k,
        p_value: chi_square_sf(statistic, k),
    })
}
