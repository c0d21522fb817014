use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::normal_two_sided;
use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, SpecKind};
use crate::panel_data::EstimationSample;
use crate::transforms::{transform_sample, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArTest {
    pub order: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// First-differenced regressors (in coefficient order) and dependent on the
/// fit's level sample.
fn differenced(result: &EstimationResult, levels: &EstimationSample) -> Result<EstimationSample> {
    let idx = result
        .names
        .iter()
        .map(|n| {
            levels.column(n).ok_or_else(|| {
                Error::Specification(format!("regressor '{n}' missing from the level sample"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = levels.clone();
    s.x = levels.x.select_columns(&idx);
    s.names = result.names.clone();
    s.extra = DMatrix::zeros(s.n_obs(), 0);
    s.extra_names.clear();
    transform_sample(&s, TransformKind::FirstDifference)
}

/// Arellano-Bond test for order-`m` autocorrelation in first-differenced
/// residuals.
///
/// For orthogonal-deviation fits the differenced residuals implied by the
/// same coefficients are tested. The variance accounts for estimation of the
/// coefficients through the fit's GMM influence map: each entity contributes
/// `w_i + q' B Z_i'e_i`, with `w_i` its lag-`m` residual cross-product and `q`
/// the gradient of the summed cross-products in the coefficients.
pub fn ab_serial_correlation(result: &EstimationResult, m: usize) -> Result<ArTest> {
    if m == 0 {
        return Err(Error::Parameter("AR test order must be at least 1".into()));
    }
    if !matches!(result.kind, SpecKind::FirstDifference | SpecKind::OrthogonalDeviation) {
        return Err(Error::Specification(
            "the serial correlation test applies to FD and OD fits".into(),
        ));
    }
    let state = result
        .gmm
        .as_ref()
        .ok_or_else(|| Error::Specification("the serial correlation test needs a GMM fit".into()))?;
    let levels = result
        .levels
        .as_ref()
        .ok_or_else(|| Error::Parameter("result carries no level sample".into()))?;
    let fd = differenced(result, levels)?;
    let beta = &result.coefficients;
    let e = &fd.y - &fd.x * beta;
    let k = beta.len();

    let moments: HashMap<usize, DVector<f64>> = state
        .blocks
        .iter()
        .map(|(ent, _)| *ent)
        .zip(state.moments(beta))
        .collect();

    let mut w: Vec<(usize, f64)> = Vec::new();
    let mut q = DVector::<f64>::zeros(k);
    let mut pairs = 0usize;
    for (ent, rows) in fd.entity_blocks() {
        let at: HashMap<i64, usize> = rows.clone().map(|r| (fd.period[r], r)).collect();
        let mut wi = 0.0;
        for r in rows {
            if let Some(&s) = at.get(&(fd.period[r] - m as i64)) {
                wi += e[r] * e[s];
                for j in 0..k {
                    q[j] -= fd.x[(r, j)] * e[s] + fd.x[(s, j)] * e[r];
                }
                pairs += 1;
            }
        }
        w.push((ent, wi));
    }
    if pairs == 0 {
        return Err(Error::TooFewPeriods(m));
    }

    let qb = state.bread.transpose() * &q;
    let mut num = 0.0;
    let mut var = 0.0;
    let mut seen = std::collections::HashSet::new();
    for (ent, wi) in &w {
        let corr = moments.get(ent).map_or(0.0, |g| qb.dot(g));
        num += wi;
        var += (wi + corr).powi(2);
        seen.insert(*ent);
    }
    // entities with moments but no differenced rows still move the estimate
    for (ent, g) in &moments {
        if !seen.contains(ent) {
            var += qb.dot(g).powi(2);
        }
    }
    if !(var > 0.0) {
        return Err(Error::Singular("AR test variance is zero".into()));
    }
    let statistic = num / var.sqrt();
    Ok(ArTest {
        order: m,
        statistic,
        p_value: normal_two_sided(statistic),
    })
}
