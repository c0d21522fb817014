use std::io::Write;

use serde::Serialize;

use super::{EstimationResult, SpecKind};
use crate::error::{Error, Result};
use crate::panel_data::align::INTERCEPT;
use crate::transforms::{reconstruct_levels, TransformKind};

/// One plotted observation: transformed actual/fit and the level-space pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub entity: String,
    pub period: i64,
    pub actual: f64,
    pub fitted: f64,
    pub actual_level: Option<f64>,
    pub fitted_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTable {
    pub kind: SpecKind,
    pub rows: Vec<FitRow>,
}

impl FitTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Squared correlation of transformed actual and fitted values.
    pub fn squared_correlation(&self) -> f64 {
        let a = nalgebra::DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.actual));
        let f = nalgebra::DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.fitted));
        crate::linalg::squared_correlation(&a, &f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["entity", "period", "actual", "fitted", "actual_level", "fitted_level"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.entity.clone(),
                r.period.to_string(),
                r.actual.to_string(),
                r.fitted.to_string(),
                opt(r.actual_level),
                opt(r.fitted_level),
            ])?;
        }
        w.flush().map_err(|e| Error::io("fit table", e))?;
        Ok(())
    }
}

/// Transformed fit `X b` and its counterpart in the units of the dependent
/// variable.
///
/// Differenced fits are mapped back with [`reconstruct_levels`] over the
/// level sample the fit was built from. Fixed-effects level fits include the
/// entity intercepts.
pub fn fitted_and_levels(result: &EstimationResult) -> Result<FitTable> {
    let levels = result.levels.as_ref().ok_or_else(|| {
        Error::Parameter("result carries no level sample; fit through the pipeline".into())
    })?;
    let lookup = |e: usize, p: i64| -> Option<usize> {
        levels
            .entity
            .iter()
            .zip(&levels.period)
            .position(|(&le, &lp)| le == e && lp == p)
    };

    // level-space fitted value per level row
    let mut level_fit: Vec<Option<f64>> = vec![None; levels.n_obs()];
    match result.kind {
        SpecKind::FirstDifference | SpecKind::OrthogonalDeviation => {
            let kind = if result.kind == SpecKind::FirstDifference {
                TransformKind::FirstDifference
            } else {
                TransformKind::OrthogonalDeviation
            };
            for (e, rows) in levels.entity_blocks() {
                let start = levels.period[rows.start];
                let len = (levels.period[rows.end - 1] - start + 1) as usize;
                let mut original = vec![None; len];
                for r in rows.clone() {
                    original[(levels.period[r] - start) as usize] = Some(levels.y[r]);
                }
                let mut fitted = vec![None; len];
                for (i, &(re, rp)) in result.rows.iter().enumerate() {
                    if re == e && rp >= start && ((rp - start) as usize) < len {
                        fitted[(rp - start) as usize] = Some(result.fitted_transformed[i]);
                    }
                }
                let rec = reconstruct_levels(&fitted, &original, kind)?;
                for r in rows {
                    level_fit[r] = rec[(levels.period[r] - start) as usize];
                }
            }
        }
        _ => {
            let effects = if result.kind == SpecKind::FixedEffects {
                result.entity_effects.clone()
            } else {
                None
            };
            for r in 0..levels.n_obs() {
                let mut v = 0.0;
                for (j, name) in result.names.iter().enumerate() {
                    if name == INTERCEPT && effects.is_some() {
                        continue;
                    }
                    match levels.column(name) {
                        Some(c) => v += levels.x[(r, c)] * result.coefficients[j],
                        None if name == INTERCEPT => v += result.coefficients[j],
                        None => {}
                    }
                }
                if let Some(fx) = &effects {
                    v += fx[levels.entity[r]];
                }
                level_fit[r] = Some(v);
            }
        }
    }

    let rows = result
        .rows
        .iter()
        .enumerate()
        .map(|(i, &(e, p))| {
            let lr = lookup(e, p);
            FitRow {
                entity: result.entity_labels[e].clone(),
                period: p,
                actual: result.actual_transformed[i],
                fitted: result.fitted_transformed[i],
                actual_level: lr.map(|r| levels.y[r]),
                fitted_level: lr.and_then(|r| level_fit[r]),
            }
        })
        .collect();
    Ok(FitTable {
        kind: result.kind,
        rows,
    })
}
