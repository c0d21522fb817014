use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{LaggedVar, PanelDataset};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "intercept";

/// Rows of a regression on panel data, entity-contiguous with periods
/// ascending inside each entity.
///
/// `extra` carries columns that must be present for a row to be kept but are
/// not regressors (static instruments, typically). Transforms keep all three
/// blocks (`y`, `x`, `extra`) on the same row set.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSample {
    pub entity_labels: Vec<String>,
    pub entity: Vec<usize>,
    pub period: Vec<i64>,
    pub dependent: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub extra: DMatrix<f64>,
    pub extra_names: Vec<String>,
}

impl EstimationSample {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    /// `(entity, row range)` for every entity with at least one row.
    pub fn entity_blocks(&self) -> Vec<(usize, Range<usize>)> {
        let mut out: Vec<(usize, Range<usize>)> = Vec::new();
        for (r, &e) in self.entity.iter().enumerate() {
            match out.last_mut() {
                Some((last, range)) if *last == e => range.end = r + 1,
                _ => out.push((e, r..r + 1)),
            }
        }
        out
    }

    pub fn cross_sections(&self) -> usize {
        self.entity_blocks().len()
    }

    /// Number of distinct periods appearing in the rows.
    pub fn periods_spanned(&self) -> usize {
        let mut p = self.period.clone();
        p.sort_unstable();
        p.dedup();
        p.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn extra_column(&self, name: &str) -> Option<usize> {
        self.extra_names.iter().position(|n| n == name)
    }

    pub fn has_intercept(&self) -> bool {
        self.column(INTERCEPT).is_some()
    }

    /// Appends an all-ones intercept regressor if not already there.
    pub fn with_intercept(mut self) -> Self {
        if !self.has_intercept() {
            let n = self.n_obs();
            let k = self.x.ncols();
            self.x = self.x.insert_column(k, 1.0);
            debug_assert_eq!(self.x.nrows(), n);
            self.names.push(INTERCEPT.to_string());
        }
        self
    }

    /// Appends an all-ones column to `extra`.
    pub fn with_extra_intercept(mut self) -> Self {
        if self.extra_column(INTERCEPT).is_none() {
            let k = self.extra.ncols();
            self.extra = self.extra.insert_column(k, 1.0);
            self.extra_names.push(INTERCEPT.to_string());
        }
        self
    }

    pub fn without_column(mut self, name: &str) -> Self {
        if let Some(j) = self.column(name) {
            self.x = self.x.remove_column(j);
            self.names.remove(j);
        }
        self
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            entity_labels: self.entity_labels.clone(),
            entity: rows.iter().map(|&r| self.entity[r]).collect(),
            period: rows.iter().map(|&r| self.period[r]).collect(),
            dependent: self.dependent.clone(),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r])),
            x: self.x.select_rows(rows),
            names: self.names.clone(),
            extra: self.extra.select_rows(rows),
            extra_names: self.extra_names.clone(),
        }
    }
}

/// Builds the estimation sample for `dependent` on `regressors`, keeping one
/// row per (entity, period) where the dependent, every lagged regressor and
/// every `extra` column are present. Lags are taken on calendar periods.
pub fn align(
    data: &PanelDataset,
    dependent: &str,
    regressors: &[LaggedVar],
    extra: &[LaggedVar],
) -> Result<EstimationSample> {
    data.series(dependent)?;
    for v in regressors.iter().chain(extra) {
        data.series(&v.name)?;
        if v.lag >= data.n_periods() {
            return Err(Error::Specification(format!(
                "{v}: lag exceeds the {} available periods",
                data.n_periods()
            )));
        }
    }

    let mut entity = Vec::new();
    let mut period = Vec::new();
    let mut y = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut z: Vec<f64> = Vec::new();

    for e in 0..data.n_entities() {
        for p in data.first_period()..=data.last_period() {
            let Some(yv) = data.value(dependent, e, p) else {
                continue;
            };
            let row: Option<Vec<f64>> = regressors
                .iter()
                .map(|v| data.value(&v.name, e, p - v.lag as i64))
                .collect();
            let Some(row) = row else { continue };
            let ex: Option<Vec<f64>> = extra
                .iter()
                .map(|v| data.value(&v.name, e, p - v.lag as i64))
                .collect();
            let Some(ex) = ex else { continue };
            entity.push(e);
            period.push(p);
            y.push(yv);
            x.extend(row);
            z.extend(ex);
        }
    }
    if y.is_empty() {
        return Err(Error::NoEstimableObservations);
    }
    let n = y.len();
    Ok(EstimationSample {
        entity_labels: data.entities().to_vec(),
        entity,
        period,
        dependent: dependent.to_string(),
        y: DVector::from_vec(y),
        x: DMatrix::from_row_slice(n, regressors.len(), &x),
        names: regressors.iter().map(ToString::to_string).collect(),
        extra: DMatrix::from_row_slice(n, extra.len(), &z),
        extra_names: extra.iter().map(ToString::to_string).collect(),
    })
}

/// Lag-count form: `variables[0]` is the regressand and enters with lags
/// `1..=required_lags[0]`; every other variable enters with lags
/// `0..=required_lags[j]`.
pub fn align_lags(
    data: &PanelDataset,
    variables: &[&str],
    required_lags: &[usize],
) -> Result<EstimationSample> {
    if variables.is_empty() || variables.len() != required_lags.len() {
        return Err(Error::Parameter(
            "variables and required_lags must be non-empty and of equal length".into(),
        ));
    }
    let mut regs = Vec::new();
    for l in 1..=required_lags[0] {
        regs.push(LaggedVar::new(variables[0], l));
    }
    for (v, &k) in variables.iter().zip(required_lags).skip(1) {
        for l in 0..=k {
            regs.push(LaggedVar::new(*v, l));
        }
    }
    align(data, variables[0], &regs, &[])
}
