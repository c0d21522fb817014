use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_replication, replication_seed, DgpSpec};
use crate::error::{Error, Result};
use crate::estimator::{GmmOptions, SpecKind, Weighting};
use crate::instruments::InstrumentSpec;
use crate::pipeline::{estimate, EstimationConfig};

/// Two-sided 5% normal critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// An estimator run on every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub label: String,
    pub kind: SpecKind,
    pub instruments: Option<InstrumentSpec>,
    pub gmm: GmmOptions,
}

impl EstimatorConfig {
    pub fn ols(label: &str, kind: SpecKind) -> Self {
        Self {
            label: label.to_string(),
            kind,
            instruments: None,
            gmm: GmmOptions::default(),
        }
    }

    pub fn gmm(label: &str, kind: SpecKind, instruments: InstrumentSpec, weighting: Weighting) -> Self {
        Self {
            label: label.to_string(),
            kind,
            instruments: Some(instruments),
            gmm: GmmOptions {
                weighting,
                windmeijer: false,
            },
        }
    }

    /// Arellano-Bond GMM on the dependent from lag 2 on.
    pub fn arellano_bond(label: &str, kind: SpecKind, weighting: Weighting) -> Self {
        Self::gmm(label, kind, InstrumentSpec::arellano_bond(&[super::DEPENDENT]), weighting)
    }

    fn estimation(&self, dgp: &DgpSpec) -> EstimationConfig {
        let mut c = EstimationConfig::new(dgp.model_spec(self.kind));
        c.instruments = self.instruments.clone();
        c.gmm = self.gmm;
        c.ar_orders = if self.kind.is_differenced() { vec![2] } else { vec![] };
        c.hausman = false;
        c
    }
}

/// What one estimator produced on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub j_p: Option<f64>,
    pub ar2_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    /// Per estimator, in configuration order; `Err` holds the failure text.
    pub draws: Vec<std::result::Result<Draw, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Across-replication standard deviation (population denominator).
    pub sd: f64,
    pub mean_se: f64,
    pub se_sd_ratio: f64,
    /// Share of replications rejecting the true value at 5%.
    pub rejection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub successes: usize,
    pub failures: usize,
    pub coefficients: Vec<CoefSummary>,
    pub j_rejection: Option<f64>,
    pub ar2_rejection: Option<f64>,
}

impl EstimatorSummary {
    pub fn coefficient(&self, name: &str) -> Option<&CoefSummary> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub rep: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub dgp: DgpSpec,
    pub reps: usize,
    pub estimators: Vec<EstimatorSummary>,
    pub seed_ledger: Vec<SeedEntry>,
    #[serde(skip)]
    pub replications: Vec<Replication>,
}

fn run_one(dgp: &DgpSpec, estimators: &[EstimatorConfig], rep: usize) -> Replication {
    let seed = replication_seed(dgp.seed, rep);
    let truths = dgp.truths();
    let draws = match generate_replication(dgp, rep) {
        Err(e) => estimators.iter().map(|_| Err(e.to_string())).collect(),
        Ok(data) => estimators
            .iter()
            .map(|est| {
                let fit = estimate(&data, &est.estimation(dgp)).map_err(|e| e.to_string())?;
                let r = &fit.result;
                let mut estimates = Vec::new();
                let mut ses = Vec::new();
                for (name, _) in &truths {
                    let i = r.index(name).ok_or_else(|| format!("no coefficient {name}"))?;
                    estimates.push(r.coefficients[i]);
                    ses.push(r.standard_errors[i]);
                }
                Ok(Draw {
                    estimates,
                    standard_errors: ses,
                    j_p: r.j.filter(|j| j.df > 0).map(|j| j.p_value),
                    ar2_p: fit.diagnostics.ar_tests.iter().find(|t| t.order == 2).map(|t| t.p_value),
                })
            })
            .collect(),
    };
    Replication { rep, seed, draws }
}

fn rate(v: &[bool]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64)
}

/// Fits every estimator on every replication (in parallel) and aggregates in
/// replication order, so the summary depends only on the inputs.
pub fn run_experiment(dgp: &DgpSpec, estimators: &[EstimatorConfig], reps: usize) -> Result<McSummary> {
    if reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Parameter("no estimators configured".into()));
    }
    dgp.validate()?;
    let replications: Vec<Replication> = (0..reps)
        .into_par_iter()
        .map(|rep| run_one(dgp, estimators, rep))
        .collect();

    let truths = dgp.truths();
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let ok: Vec<&Draw> = replications
                .iter()
                .filter_map(|r| r.draws[e].as_ref().ok())
                .collect();
            for r in &replications {
                if let Err(msg) = &r.draws[e] {
                    log::debug!("{} failed on replication {}: {msg}", est.label, r.rep);
                }
            }
            let m = ok.len() as f64;
            let coefficients = truths
                .iter()
                .enumerate()
                .map(|(c, (name, truth))| {
                    let (mean, bias, rmse, sd, mean_se, rejection) = if ok.is_empty() {
                        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
                    } else {
                        let mean = ok.iter().map(|d| d.estimates[c]).sum::<f64>() / m;
                        let mse = ok.iter().map(|d| (d.estimates[c] - truth).powi(2)).sum::<f64>() / m;
                        let var = ok.iter().map(|d| (d.estimates[c] - mean).powi(2)).sum::<f64>() / m;
                        let mean_se = ok.iter().map(|d| d.standard_errors[c]).sum::<f64>() / m;
                        let rej = ok
                            .iter()
                            .filter(|d| ((d.estimates[c] - truth) / d.standard_errors[c]).abs() > Z_975)
                            .count() as f64
                            / m;
                        (mean, mean - truth, mse.sqrt(), var.sqrt(), mean_se, rej)
                    };
                    CoefSummary {
                        name: name.clone(),
                        truth: *truth,
                        mean,
                        bias,
                        rmse,
                        sd,
                        mean_se,
                        se_sd_ratio: mean_se / sd,
                        rejection,
                    }
                })
                .collect();
            let j: Vec<bool> = ok.iter().filter_map(|d| d.j_p).map(|p| p < 0.05).collect();
            let ar2: Vec<bool> = ok.iter().filter_map(|d| d.ar2_p).map(|p| p < 0.05).collect();
            EstimatorSummary {
                label: est.label.clone(),
                successes: ok.len(),
                failures: reps - ok.len(),
                coefficients,
                j_rejection: rate(&j),
                ar2_rejection: rate(&ar2),
            }
        })
        .collect();

    Ok(McSummary {
        dgp: dgp.clone(),
        reps,
        estimators: summaries,
        seed_ledger: replications
            .iter()
            .map(|r| SeedEntry {
                rep: r.rep,
                seed: r.seed,
            })
            .collect(),
        replications,
    })
}

impl McSummary {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.label == label)
    }

    /// One row per (estimator, coefficient).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "estimator",
            "coefficient",
            "truth",
            "reps",
            "failures",
            "mean",
            "bias",
            "rmse",
            "sd",
            "mean_se",
            "se_sd_ratio",
            "rejection_5pct",
            "j_rejection_5pct",
            "ar2_rejection_5pct",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.estimators {
            for c in &e.coefficients {
                w.write_record([
                    e.label.clone(),
                    c.name.clone(),
                    c.truth.to_string(),
                    self.reps.to_string(),
                    e.failures.to_string(),
                    c.mean.to_string(),
                    c.bias.to_string(),
                    c.rmse.to_string(),
                    c.sd.to_string(),
                    c.mean_se.to_string(),
                    c.se_sd_ratio.to_string(),
                    c.rejection.to_string(),
                    opt(e.j_rejection),
                    opt(e.ar2_rejection),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("simulation csv", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// `rep seed` lines for audit.
    pub fn seed_ledger_text(&self) -> String {
        self.seed_ledger
            .iter()
            .map(|s| format!("{} {}\n", s.rep, s.seed))
            .collect()
    }
}
