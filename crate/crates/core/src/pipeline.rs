//! Align, transform, instrument, fit and diagnose in one call.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    ab_serial_correlation, hausman, swamy_arora, DiagnosticsReport, VarianceComponents,
};
use crate::error::{Error, Result};
use crate::estimator::gmm::append_fe_intercept;
use crate::estimator::ols::random_effects_thetas;
use crate::estimator::{
    fit_fixed_effects, fit_gmm, fit_pooled, fit_random_effects, EstimationResult, GmmOptions,
    ModelSpec, SpecKind, Weighting,
};
use crate::instruments::{assemble_dated, instrument_offset, InstrumentMatrix, InstrumentSpec};
use crate::panel_data::align::INTERCEPT;
use crate::panel_data::{align, EstimationSample, LaggedVar, PanelDataset};
use crate::transforms::{quasi_demean_sample, transform_sample, TransformKind};

/// One estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub spec: ModelSpec,
    /// `None` fits Pooled/FE/RE by OLS/GLS; FD and OD require instruments.
    pub instruments: Option<InstrumentSpec>,
    pub gmm: GmmOptions,
    /// Orders of the serial-correlation test run after FD/OD fits.
    pub ar_orders: Vec<usize>,
    /// Compare with fixed effects after a random-effects fit.
    pub hausman: bool,
}

impl EstimationConfig {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            spec,
            instruments: None,
            gmm: GmmOptions::default(),
            ar_orders: vec![1, 2],
            hausman: true,
        }
    }

    pub fn with_instruments(mut self, instruments: InstrumentSpec) -> Self {
        self.instruments = Some(instruments);
        self
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.gmm.weighting = weighting;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Estimation {
    pub result: EstimationResult,
    pub diagnostics: DiagnosticsReport,
    pub instruments: Option<InstrumentMatrix>,
}

/// Level sample for the spec: aligned rows plus the intercept when the spec
/// carries one; static instruments ride along as extra columns.
pub fn level_sample(
    data: &PanelDataset,
    spec: &ModelSpec,
    instruments: Option<&InstrumentSpec>,
) -> Result<EstimationSample> {
    spec.validate()?;
    let extra: Vec<LaggedVar> = instruments.map(|i| i.static_columns()).unwrap_or_default();
    let mut s = align(data, &spec.dependent, &spec.regressors(), &extra)?;
    if spec.intercept {
        s = s.with_intercept();
    }
    if instruments.is_some_and(|i| i.include_intercept) {
        s = s.with_extra_intercept();
    }
    Ok(s)
}

/// Runs the configured estimator with its diagnostics.
pub fn estimate(data: &PanelDataset, config: &EstimationConfig) -> Result<Estimation> {
    let spec = &config.spec;
    let levels = level_sample(data, spec, config.instruments.as_ref())?;
    let mut diagnostics = DiagnosticsReport::default();
    let mut matrix = None;

    let result = match &config.instruments {
        None => match spec.kind {
            SpecKind::Pooled => fit_pooled(spec, &levels)?,
            SpecKind::FixedEffects => fit_fixed_effects(spec, &levels)?,
            SpecKind::RandomEffects => {
                let c = swamy_arora(spec, &levels)?;
                diagnostics.variance_components = Some(c);
                fit_random_effects(spec, &levels, &c)?
            }
            SpecKind::FirstDifference | SpecKind::OrthogonalDeviation => {
                return Err(Error::Specification(format!(
                    "{} estimation is GMM; supply an instrument specification",
                    spec.kind.title()
                )))
            }
        },
        Some(ispec) => {
            let (r, z) = fit_instrumented(data, spec, &levels, ispec, &config.gmm)?;
            if let Some(c) = r.components {
                diagnostics.variance_components = Some(c);
            }
            matrix = Some(z);
            r
        }
    };
    let result = result.with_levels(levels);

    diagnostics = diagnostics.with_j(result.j);
    if spec.kind.is_differenced() {
        for &m in &config.ar_orders {
            match ab_serial_correlation(&result, m) {
                Ok(t) => diagnostics.ar_tests.push(t),
                Err(e) => log::warn!("AR({m}) test skipped: {e}"),
            }
        }
    }
    if spec.kind == SpecKind::RandomEffects && config.hausman {
        let mut fe_cfg = config.clone();
        fe_cfg.spec.kind = SpecKind::FixedEffects;
        fe_cfg.hausman = false;
        match estimate(data, &fe_cfg) {
            Ok(fe) => diagnostics.hausman = Some(hausman(&fe.result, &result)?),
            Err(e) => log::warn!("Hausman test skipped: fixed effects failed: {e}"),
        }
    }
    Ok(Estimation {
        result,
        diagnostics,
        instruments: matrix,
    })
}

fn fit_instrumented(
    data: &PanelDataset,
    spec: &ModelSpec,
    levels: &EstimationSample,
    ispec: &InstrumentSpec,
    options: &GmmOptions,
) -> Result<(EstimationResult, InstrumentMatrix)> {
    let mut notes = Vec::new();
    let mut components: Option<VarianceComponents> = None;
    let mut thetas = None;
    let sample = match spec.kind {
        SpecKind::Pooled => levels.clone(),
        SpecKind::FixedEffects => {
            transform_sample(&levels.clone().without_column(INTERCEPT), TransformKind::Within)?
        }
        SpecKind::RandomEffects => {
            let c = swamy_arora(spec, levels)?;
            let th = random_effects_thetas(levels, &c)?;
            let s = quasi_demean_sample(levels, &th)?;
            if c.sigma_u2 == 0.0 {
                notes.push("rho_u = 0; coefficients identical to pooled".to_string());
            }
            components = Some(c);
            thetas = Some(th);
            s
        }
        SpecKind::FirstDifference => transform_sample(levels, TransformKind::FirstDifference)?,
        SpecKind::OrthogonalDeviation => transform_sample(levels, TransformKind::OrthogonalDeviation)?,
    };
    let offset = instrument_offset(spec.transform());
    let z = assemble_dated(ispec, data, &sample, sample.n_regressors(), offset)?;
    let mut r = fit_gmm(spec, &sample, &z, options)?;
    if spec.kind == SpecKind::FixedEffects && spec.intercept {
        append_fe_intercept(&mut r, &levels.clone().without_column(INTERCEPT))?;
    }
    r.components = components;
    r.thetas = thetas;
    r.notes.extend(notes);
    Ok((r, z))
}

/// Data variables the comparison table needs.
pub const REPLICATE_VARIABLES: [&str; 3] = ["pp", "bv", "bt"];

/// The five specifications of the comparison table: AR lag 1 on the
/// dependent, contemporaneous brand value and trust. Pooled, FE and RE use
/// two lags of `bv`/`bt` plus an intercept as static instruments; OD and FD
/// use Arellano-Bond blocks from lag 2 on all three series. All use the
/// iterated weighting.
pub fn replicate_configs(dependent: &str, bv: &str, bt: &str) -> Vec<EstimationConfig> {
    let exog = vec![LaggedVar::new(bv, 0), LaggedVar::new(bt, 0)];
    SpecKind::ALL
        .iter()
        .map(|&kind| {
            let spec = ModelSpec::new(dependent, 1, exog.clone(), kind);
            let instruments = if kind.is_differenced() {
                InstrumentSpec::arellano_bond(&[dependent, bv, bt])
            } else {
                let mut s: InstrumentSpec = format!("static({bv},0..2),static({bt},0..2)")
                    .parse()
                    .expect("static grammar");
                s.include_intercept = true;
                s
            };
            EstimationConfig::new(spec)
                .with_instruments(instruments)
                .with_weighting(Weighting::n_step())
        })
        .collect()
}

/// Runs the five-column comparison.
pub fn replicate(data: &PanelDataset, dependent: &str, bv: &str, bt: &str) -> Result<Vec<Estimation>> {
    let missing: Vec<&str> = [dependent, bv, bt]
        .into_iter()
        .filter(|v| !data.has_variable(v))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownVariable(format!(
            "{} (the comparison needs premium production together with brand value and brand \
             trust series; the brand series are not published with the premium table and must \
             be supplied by the user)",
            missing.join(", ")
        )));
    }
    replicate_configs(dependent, bv, bt)
        .iter()
        .map(|c| estimate(data, c))
        .collect()
}
