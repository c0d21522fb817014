use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::{append_intercept, derive_intercept};
use super::{blank_result, EstimationResult, Method, ModelSpec};
use crate::diagnostics::j_from_moments;
use crate::error::{Error, Result};
use crate::instruments::InstrumentMatrix;
use crate::linalg::{sandwich, spd_inverse, spd_solve, squared_correlation, symmetrize};
use crate::panel_data::EstimationSample;

/// Weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weighting {
    OneStep,
    TwoStep,
    /// Iterate until the sup-norm coefficient change drops below `tol`.
    NStep { max_iter: usize, tol: f64 },
}

impl Weighting {
    pub const DEFAULT_MAX_ITER: usize = 100;
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn n_step() -> Self {
        Weighting::NStep {
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        }
    }
}

impl Default for Weighting {
    fn default() -> Self {
        Self::n_step()
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weighting::OneStep => f.write_str("one_step"),
            Weighting::TwoStep => f.write_str("two_step"),
            Weighting::NStep { .. } => f.write_str("n_step"),
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "one_step" | "onestep" | "1" => Ok(Weighting::OneStep),
            "two_step" | "twostep" | "2" => Ok(Weighting::TwoStep),
            "n_step" | "nstep" | "iterated" | "n" => Ok(Weighting::n_step()),
            other => Err(Error::Parameter(format!(
                "unknown weighting '{other}' (one_step, two_step, n_step)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GmmOptions {
    pub weighting: Weighting,
    /// Finite-sample correction of the two-step covariance.
    pub windmeijer: bool,
}

/// Matrices a GMM fit leaves behind for diagnostics.
#[derive(Debug, Clone)]
pub struct GmmState {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub blocks: Vec<(usize, Range<usize>)>,
    /// Final weighting matrix.
    pub w: DMatrix<f64>,
    /// `S` whose inverse is `w` (or, after one step, `S` at the one-step
    /// residuals); used for the J statistic.
    pub s_for_j: DMatrix<f64>,
    /// `(X'ZWZ'X)^-1 X'ZW`: maps `Z'e` to a coefficient perturbation.
    pub bread: DMatrix<f64>,
    pub instrument_labels: Vec<String>,
    pub first_step: DVector<f64>,
}

impl GmmState {
    /// Per-entity moment contributions `Z_i'e_i`.
    pub fn moments(&self, beta: &DVector<f64>) -> Vec<DVector<f64>> {
        let e = &self.y - &self.x * beta;
        entity_moments(&self.z, &e, &self.blocks)
    }

    /// `g(b)'W g(b)` with `g = Z'(y - Xb)`.
    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let g = self.z.transpose() * (&self.y - &self.x * beta);
        (g.transpose() * &self.w * &g)[(0, 0)]
    }
}

pub(crate) fn entity_moments(
    z: &DMatrix<f64>,
    e: &DVector<f64>,
    blocks: &[(usize, Range<usize>)],
) -> Vec<DVector<f64>> {
    blocks
        .iter()
        .map(|(_, rows)| {
            let zi = z.rows(rows.start, rows.len());
            let ei = e.rows(rows.start, rows.len());
            zi.transpose() * ei
        })
        .collect()
}

/// `sum_i g_i g_i'`.
pub(crate) fn outer_sum(g: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dim, dim);
    for gi in g {
        s.ger(1.0, gi, gi, 1.0);
    }
    symmetrize(&s)
}

/// `sum_i Z_i' H_i Z_i`; `H` is the identity except for first differences,
/// where adjacent periods share an error and get `-1` off the diagonal.
fn initial_moment_matrix(
    z: &DMatrix<f64>,
    period: &[i64],
    blocks: &[(usize, Range<usize>)],
    differenced: bool,
) -> DMatrix<f64> {
    let l = z.ncols();
    let mut a = DMatrix::zeros(l, l);
    for (_, rows) in blocks {
        let zi = z.rows(rows.start, rows.len());
        let m = rows.len();
        let h = DMatrix::from_fn(m, m, |r, s| {
            if r == s {
                if differenced { 2.0 } else { 1.0 }
            } else if differenced && (period[rows.start + r] - period[rows.start + s]).abs() == 1 {
                -1.0
            } else {
                0.0
            }
        });
        a += zi.transpose() * h * zi;
    }
    symmetrize(&a)
}

struct Step {
    beta: DVector<f64>,
    m: DMatrix<f64>,
    bread: DMatrix<f64>,
}

fn step(x: &DMatrix<f64>, y: &DVector<f64>, z: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Step> {
    let zx = z.transpose() * x;
    let xzw = zx.transpose() * w;
    let m = symmetrize(&(&xzw * &zx));
    let bread = spd_solve(&m, &xzw, "X'ZWZ'X").map_err(|_| {
        Error::Singular("X'ZWZ'X; the instruments do not identify every regressor (Z'X rank deficient)".into())
    })?;
    let beta = &bread * (z.transpose() * y);
    Ok(Step { beta, m, bread })
}

fn weight_from(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_inverse(s, "moment covariance").map_err(|e| {
        Error::Singular(format!(
            "{e}; the weighting matrix cannot be formed, prune or collapse instruments"
        ))
    })
}

/// Derivative of the estimate computed with `W = S(b)^-1` with respect to
/// `b`, evaluated at `b = prev` (column `j` is `d beta / d prev_j`).
pub(crate) fn windmeijer_jacobian(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    blocks: &[(usize, Range<usize>)],
    prev_resid: &DVector<f64>,
    resid: &DVector<f64>,
    bread: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = x.ncols();
    let l = z.ncols();
    let wze = w * (z.transpose() * resid);
    let mut d = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut ds = DMatrix::zeros(l, l);
        for (_, rows) in blocks {
            let zi = z.rows(rows.start, rows.len());
            let gi = zi.transpose() * prev_resid.rows(rows.start, rows.len());
            let hi = zi.transpose() * x.column(j).rows(rows.start, rows.len());
            ds -= &hi * gi.transpose() + &gi * hi.transpose();
        }
        // d beta = -B dS W Z'e
        d.set_column(j, &(-(bread * ds * &wze)));
    }
    d
}

/// Linear GMM on an already transformed sample.
pub fn fit_gmm(
    spec: &ModelSpec,
    sample: &EstimationSample,
    instruments: &InstrumentMatrix,
    options: &GmmOptions,
) -> Result<EstimationResult> {
    spec.validate()?;
    let x = &sample.x;
    let y = &sample.y;
    let z = &instruments.z;
    let (n, k) = x.shape();
    let l = z.ncols();
    if z.nrows() != n {
        return Err(Error::Parameter(format!(
            "instrument matrix has {} rows, sample has {n}",
            z.nrows()
        )));
    }
    if l < k {
        return Err(Error::UnderIdentified {
            instruments: l,
            regressors: k,
        });
    }
    let blocks = sample.entity_blocks();
    let a1 = initial_moment_matrix(z, &sample.period, &blocks, spec.kind == super::SpecKind::FirstDifference);
    let w1 = weight_from(&a1)?;
    let first = step(x, y, z, &w1)?;
    let e1 = y - x * &first.beta;
    let s1 = outer_sum(&entity_moments(z, &e1, &blocks), l);

    let mut cur = first;
    let mut w = w1;
    let mut s_j = s1.clone();
    let mut steps = 1;
    // (previous coefficients, their robust covariance) for the correction
    let mut prev: Option<(DVector<f64>, DMatrix<f64>)> = None;

    let iterate = |b_prev: &DVector<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>, Step)> {
        let e = y - x * b_prev;
        let s = outer_sum(&entity_moments(z, &e, &blocks), l);
        let w = weight_from(&s)?;
        let st = step(x, y, z, &w)?;
        Ok((s, w, st))
    };

    match options.weighting {
        Weighting::OneStep => {}
        Weighting::TwoStep => {
            let v1 = sandwich(&cur.bread, &s1);
            let (s, wn, st) = iterate(&cur.beta)?;
            prev = Some((cur.beta.clone(), v1));
            cur = st;
            w = wn;
            s_j = s;
            steps = 2;
        }
        Weighting::NStep { max_iter, tol } => {
            if max_iter < 2 || !(tol > 0.0) {
                return Err(Error::Parameter(
                    "n-step weighting needs max_iter >= 2 and tol > 0".into(),
                ));
            }
            let mut trace = Vec::new();
            loop {
                let e = y - x * &cur.beta;
                let v_prev = sandwich(&cur.bread, &outer_sum(&entity_moments(z, &e, &blocks), l));
                let (s, wn, st) = iterate(&cur.beta)?;
                let change = (&st.beta - &cur.beta).amax();
                trace.push(change);
                prev = Some((cur.beta.clone(), v_prev));
                cur = st;
                w = wn;
                s_j = s;
                steps += 1;
                if change < tol {
                    break;
                }
                if steps >= max_iter {
                    return Err(Error::NotConverged {
                        iterations: steps,
                        trace,
                    });
                }
            }
        }
    }

    let resid = y - x * &cur.beta;
    let g = entity_moments(z, &resid, &blocks);
    let s_final = outer_sum(&g, l);
    let mut cov = sandwich(&cur.bread, &s_final);
    let mut notes = Vec::new();
    if options.windmeijer {
        match &prev {
            Some((b_prev, v_prev)) => {
                let e_prev = y - x * b_prev;
                let d = windmeijer_jacobian(x, z, &blocks, &e_prev, &resid, &cur.bread, &w);
                let v = spd_inverse(&cur.m, "X'ZWZ'X")?;
                cov = symmetrize(&(&v + &d * &v + &v * d.transpose() + &d * v_prev * d.transpose()));
            }
            None => notes.push("Windmeijer correction applies to two-step and n-step fits only".to_string()),
        }
    }

    let gsum = z.transpose() * &resid;
    let j = match j_from_moments(&gsum, &s_j, l as i64 - k as i64) {
        Ok(j) => Some(j),
        Err(e) => {
            notes.push(format!("J statistic unavailable: {e}"));
            None
        }
    };

    let fitted = x * &cur.beta;
    let method = Method::Gmm {
        weighting: options.weighting,
        windmeijer: options.windmeijer,
    };
    let mut r = blank_result(spec.kind, method, sample, sample.names.clone(), cur.beta.clone(), cov, fitted);
    let r2 = squared_correlation(&r.actual_transformed, &r.fitted_transformed);
    r.r_squared_weighted = r2;
    r.r_squared_unweighted = r2;
    r.steps_taken = steps;
    r.weighting_matrix = Some(w.clone());
    r.instrument_count = Some(l);
    r.j = j;
    r.notes = notes;
    r.gmm = Some(GmmState {
        x: x.clone(),
        y: y.clone(),
        z: z.clone(),
        blocks,
        w,
        s_for_j: s_j,
        bread: cur.bread,
        instrument_labels: instruments.labels.clone(),
        first_step: prev.map(|p| p.0).unwrap_or_else(|| cur.beta.clone()),
    });
    Ok(r)
}

/// Entity-clustered covariance `sum_i (G_i e_i)(G_i e_i)'` for a linear
/// influence map `G` (coefficients by rows).
pub(crate) fn clustered_from_influence(
    g: &DMatrix<f64>,
    resid: &DVector<f64>,
    blocks: &[(usize, Range<usize>)],
) -> DMatrix<f64> {
    let psi: Vec<DVector<f64>> = blocks
        .iter()
        .map(|(_, rows)| g.columns(rows.start, rows.len()) * resid.rows(rows.start, rows.len()))
        .collect();
    outer_sum(&psi, g.nrows())
}

/// Adds the grand-mean intercept to a GMM fit on within-demeaned rows.
/// `slopes` is the level sample (same rows) without an intercept column.
pub(crate) fn append_fe_intercept(r: &mut EstimationResult, slopes: &EstimationSample) -> Result<()> {
    let st = r
        .gmm
        .as_ref()
        .ok_or_else(|| Error::ImpossibleState("GMM state missing".into()))?;
    if slopes.n_obs() != st.y.len() {
        return Err(Error::ImpossibleState("level and within rows differ".into()));
    }
    let g = &st.bread * st.z.transpose();
    let d = derive_intercept(slopes, &r.coefficients, &g);
    let mut names = r.names.clone();
    let (b, gg) = append_intercept(&mut names, &r.coefficients, &g, &d);
    r.covariance = clustered_from_influence(&gg, &r.residuals, &st.blocks);
    r.names = names;
    r.coefficients = b;
    r.entity_effects = Some(d.entity_effects);
    r.finish_inference();
    Ok(())
}
