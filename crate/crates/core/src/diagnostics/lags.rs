use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::panel_data::{align, LaggedVar, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    Schwarz,
    HannanQuinn,
}

/// Candidate grid: dependent lags `min_ar..=max_ar`; each exogenous
/// variable enters with lags `0..=q` for `q` in `0..=max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSearch {
    pub dependent: String,
    pub min_ar: usize,
    pub max_ar: usize,
    pub exogenous: Vec<(String, usize)>,
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCandidate {
    pub ar: usize,
    pub exogenous: Vec<usize>,
    pub parameters: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub schwarz: f64,
    pub hannan_quinn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub sample_size: usize,
    pub candidates: Vec<LagCandidate>,
    pub aic: usize,
    pub schwarz: usize,
    pub hannan_quinn: usize,
}

impl LagSelection {
    pub fn chosen(&self, c: Criterion) -> &LagCandidate {
        let i = match c {
            Criterion::Aic => self.aic,
            Criterion::Schwarz => self.schwarz,
            Criterion::HannanQuinn => self.hannan_quinn,
        };
        &self.candidates[i]
    }
}

fn argmin(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in v.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Information criteria of pooled OLS fits over the candidate grid, all on
/// the sample the largest lags allow.
pub fn lag_selection(data: &PanelDataset, search: &LagSearch) -> Result<LagSelection> {
    if search.min_ar > search.max_ar {
        return Err(Error::Parameter("min_ar exceeds max_ar".into()));
    }
    let mut all: Vec<LaggedVar> = (1..=search.max_ar)
        .map(|l| LaggedVar::new(&search.dependent, l))
        .collect();
    for (v, q) in &search.exogenous {
        all.extend((0..=*q).map(|l| LaggedVar::new(v, l)));
    }
    let mut sample = align(data, &search.dependent, &all, &[])?;
    if search.intercept {
        sample = sample.with_intercept();
    }
    let n = sample.n_obs();
    let nf = n as f64;

    // enumerate the grid, last variable fastest
    let mut grid: Vec<(usize, Vec<usize>)> = Vec::new();
    for ar in search.min_ar..=search.max_ar {
        let mut combos: Vec<Vec<usize>> = vec![vec![]];
        for (_, q) in &search.exogenous {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    (0..=*q).map(move |l| {
                        let mut c = c.clone();
                        c.push(l);
                        c
                    })
                })
                .collect();
        }
        grid.extend(combos.into_iter().map(|c| (ar, c)));
    }

    let mut candidates = Vec::new();
    for (ar, exo) in grid {
        let mut cols: Vec<String> = (1..=ar)
            .map(|l| LaggedVar::new(&search.dependent, l).to_string())
            .collect();
        for ((v, _), &q) in search.exogenous.iter().zip(&exo) {
            cols.extend((0..=q).map(|l| LaggedVar::new(v, l).to_string()));
        }
        if search.intercept {
            cols.push(crate::panel_data::align::INTERCEPT.to_string());
        }
        let idx: Vec<usize> = cols
            .iter()
            .map(|c| sample.column(c).expect("column aligned above"))
            .collect();
        let x = sample.x.select_columns(&idx);
        let k = idx.len();
        if k >= n {
            continue;
        }
        let ssr = if k == 0 {
            sample.y.norm_squared()
        } else {
            let b = match least_squares(&x, &sample.y, &cols) {
                Ok(b) => b,
                Err(_) => continue,
            };
            (&sample.y - &x * b).norm_squared()
        };
        let ll = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (ssr / nf).ln() + 1.0);
        let kf = k as f64;
        candidates.push(LagCandidate {
            ar,
            exogenous: exo,
            parameters: k,
            log_likelihood: ll,
            aic: -2.0 * ll + 2.0 * kf,
            schwarz: -2.0 * ll + kf * nf.ln(),
            hannan_quinn: -2.0 * ll + 2.0 * kf * nf.ln().ln(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::InsufficientData("no estimable lag candidate".into()));
    }
    Ok(LagSelection {
        sample_size: n,
        aic: argmin(candidates.iter().map(|c| c.aic)),
        schwarz: argmin(candidates.iter().map(|c| c.schwarz)),
        hannan_quinn: argmin(candidates.iter().map(|c| c.hannan_quinn)),
        candidates,
    })
}
