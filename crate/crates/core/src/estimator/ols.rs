use nalgebra::{DMatrix, DVector};

use super::{blank_result, EstimationResult, FeMethod, Method, ModelSpec, SpecKind};
use crate::diagnostics::VarianceComponents;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, r_squared, sandwich, spd_inverse};
use crate::panel_data::align::INTERCEPT;
use crate::panel_data::EstimationSample;
use crate::transforms::{quasi_demean_sample, transform_sample, DummyMode, TransformKind};

pub(crate) fn prepare_levels(spec: &ModelSpec, sample: &EstimationSample) -> EstimationSample {
    if spec.intercept {
        sample.clone().with_intercept()
    } else {
        sample.clone().without_column(INTERCEPT)
    }
}

/// `(X'X)^-1 X'` for a full-rank design.
pub(crate) fn ols_influence(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(spd_inverse(&(x.transpose() * x), "X'X")? * x.transpose())
}

/// `G diag(e^2) G'` for a `k x n` influence matrix `G`.
pub(crate) fn white_from_influence(g: &DMatrix<f64>, resid: &DVector<f64>) -> DMatrix<f64> {
    let mut ge = g.clone();
    for (mut col, e) in ge.column_iter_mut().zip(resid.iter()) {
        col *= *e;
    }
    sandwich(&ge, &DMatrix::identity(resid.len(), resid.len()))
}

fn check_kind(spec: &ModelSpec, kind: SpecKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Specification(format!(
            "expected a {} specification, got {}",
            kind.title(),
            spec.kind.title()
        )));
    }
    Ok(())
}

/// Pooled OLS with White standard errors.
pub fn fit_pooled(spec: &ModelSpec, sample: &EstimationSample) -> Result<EstimationResult> {
    check_kind(spec, SpecKind::Pooled)?;
    let levels = prepare_levels(spec, sample);
    let beta = least_squares(&levels.x, &levels.y, &levels.names)?;
    let fitted = &levels.x * &beta;
    let resid = &levels.y - &fitted;
    let cov = white_from_influence(&ols_influence(&levels.x)?, &resid);
    let mut r = blank_result(
        SpecKind::Pooled,
        Method::Ols,
        &levels,
        levels.names.clone(),
        beta,
        cov,
        fitted,
    );
    r.r_squared_unweighted = r_squared(&r.actual_transformed, &r.fitted_transformed);
    r.r_squared_weighted = r.r_squared_unweighted;
    r.levels = Some(levels);
    Ok(r)
}

/// Names of slope columns with no within-entity variation.
pub(crate) fn constant_within(within: &EstimationSample, levels: &EstimationSample) -> Vec<String> {
    (0..within.x.ncols())
        .filter(|&j| {
            let scale = levels.x.column(j).amax().max(1.0);
            within.x.column(j).amax() <= 1e-12 * scale
        })
        .map(|j| within.names[j].clone())
        .collect()
}

/// Entity intercepts `mean(y_i) - mean(x_i)'b` and the derived grand-mean
/// intercept with its influence row.
pub(crate) struct DerivedIntercept {
    pub value: f64,
    pub influence: DVector<f64>,
    pub entity_effects: Vec<f64>,
}

pub(crate) fn derive_intercept(
    levels: &EstimationSample,
    beta: &DVector<f64>,
    slope_influence: &DMatrix<f64>,
) -> DerivedIntercept {
    let n = levels.n_obs();
    let nf = n as f64;
    let xbar = DVector::from_fn(levels.x.ncols(), |j, _| levels.x.column(j).sum() / nf);
    let ybar = levels.y.sum() / nf;
    let value = ybar - xbar.dot(beta);
    // c - c0 = mean(e) - xbar'(b - b0)
    let infl = DVector::from_fn(n, |r, _| 1.0 / nf - xbar.dot(&slope_influence.column(r)));

    let mut entity_effects = vec![f64::NAN; levels.entity_labels.len()];
    for (e, rows) in levels.entity_blocks() {
        let m = rows.len() as f64;
        let yb: f64 = rows.clone().map(|r| levels.y[r]).sum::<f64>() / m;
        let xb: f64 = rows
            .clone()
            .map(|r| levels.x.row(r).transpose().dot(beta))
            .sum::<f64>()
            / m;
        entity_effects[e] = yb - xb;
    }
    DerivedIntercept {
        value,
        influence: infl,
        entity_effects,
    }
}

/// Appends the derived intercept to coefficients and influence.
pub(crate) fn append_intercept(
    names: &mut Vec<String>,
    beta: &DVector<f64>,
    influence: &DMatrix<f64>,
    d: &DerivedIntercept,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = beta.len();
    let n = influence.ncols();
    names.push(INTERCEPT.to_string());
    let b = beta.clone().insert_row(k, d.value);
    let mut g = DMatrix::zeros(k + 1, n);
    g.rows_mut(0, k).copy_from(influence);
    g.row_mut(k).copy_from(&d.influence.transpose());
    (b, g)
}

/// Fixed effects by within-demeaning or entity dummies.
///
/// Both paths give identical slopes. When the spec has an intercept it is
/// reported as the grand mean `mean(y) - mean(x)'b`, i.e. the observation
/// weighted average of the entity intercepts.
pub fn fit_fixed_effects(spec: &ModelSpec, sample: &EstimationSample) -> Result<EstimationResult> {
    check_kind(spec, SpecKind::FixedEffects)?;
    let levels_full = prepare_levels(spec, sample);
    if levels_full.cross_sections() < 2 {
        return Err(Error::InsufficientData(
            "fixed effects need at least 2 cross-sections".into(),
        ));
    }
    let slopes = levels_full.clone().without_column(INTERCEPT);
    let within = transform_sample(&slopes, TransformKind::Within)?;
    let flat = constant_within(&within, &slopes);
    if !flat.is_empty() {
        return Err(Error::Unidentified { columns: flat });
    }

    let (beta, actual, fitted) = match spec.fe_method {
        FeMethod::Within => {
            let b = least_squares(&within.x, &within.y, &within.names)?;
            let f = &within.x * &b;
            (b, within.y.clone(), f)
        }
        FeMethod::Lsdv => {
            let d = transform_sample(&slopes, TransformKind::Dummies)?;
            let all = least_squares(&d.x, &d.y, &d.names)?;
            let f = &d.x * &all;
            (all.rows(0, slopes.n_regressors()).into_owned(), d.y.clone(), f)
        }
    };
    let resid_within = &within.y - &within.x * &beta;
    let infl = ols_influence(&within.x)?;
    let derived = derive_intercept(&slopes, &beta, &infl);

    let mut names = slopes.names.clone();
    let (coefs, g) = if spec.intercept {
        append_intercept(&mut names, &beta, &infl, &derived)
    } else {
        (beta.clone(), infl)
    };
    let cov = white_from_influence(&g, &resid_within);

    let mut r = blank_result(
        SpecKind::FixedEffects,
        Method::Ols,
        &within,
        names,
        coefs,
        cov,
        &within.x * &beta,
    );
    if spec.fe_method == FeMethod::Lsdv {
        r.actual_transformed = actual;
        r.fitted_transformed = fitted;
        r.dummy_mode = Some(DummyMode::FullSet);
    }
    let level_fit = &slopes.y - &resid_within;
    r.r_squared_unweighted = r_squared(&slopes.y, &level_fit);
    r.r_squared_weighted = r.r_squared_unweighted;
    r.entity_effects = Some(derived.entity_effects);
    r.levels = Some(levels_full);
    Ok(r)
}

/// `theta_i = 1 - sqrt(s_e^2 / (s_e^2 + T_i s_u^2))` for every entity label;
/// entities without rows get 0.
pub fn random_effects_thetas(sample: &EstimationSample, c: &VarianceComponents) -> Result<Vec<f64>> {
    if c.sigma_e2 < 0.0 || c.sigma_u2 < 0.0 {
        return Err(Error::Parameter(format!(
            "negative variance component (sigma_e^2 = {}, sigma_u^2 = {})",
            c.sigma_e2, c.sigma_u2
        )));
    }
    let mut thetas = vec![0.0; sample.entity_labels.len()];
    for (e, rows) in sample.entity_blocks() {
        let t = rows.len() as f64;
        let denom = c.sigma_e2 + t * c.sigma_u2;
        thetas[e] = if denom > 0.0 {
            1.0 - (c.sigma_e2 / denom).sqrt()
        } else {
            0.0
        };
    }
    Ok(thetas)
}

/// Random-effects GLS by quasi-demeaning.
pub fn fit_random_effects(
    spec: &ModelSpec,
    sample: &EstimationSample,
    components: &VarianceComponents,
) -> Result<EstimationResult> {
    check_kind(spec, SpecKind::RandomEffects)?;
    let levels = prepare_levels(spec, sample);
    let thetas = random_effects_thetas(&levels, components)?;
    let qd = quasi_demean_sample(&levels, &thetas)?;
    let beta = least_squares(&qd.x, &qd.y, &qd.names)?;
    let fitted = &qd.x * &beta;
    let resid = &qd.y - &fitted;
    let cov = white_from_influence(&ols_influence(&qd.x)?, &resid);
    let mut r = blank_result(
        SpecKind::RandomEffects,
        Method::Ols,
        &qd,
        qd.names.clone(),
        beta,
        cov,
        fitted,
    );
    r.r_squared_weighted = r_squared(&qd.y, &r.fitted_transformed);
    r.r_squared_unweighted = r_squared(&levels.y, &(&levels.x * &r.coefficients));
    if components.sigma_u2 == 0.0 {
        r.notes
            .push("rho_u = 0; coefficients identical to pooled".to_string());
    }
    r.components = Some(*components);
    r.thetas = Some(thetas);
    r.levels = Some(levels);
    Ok(r)
}
