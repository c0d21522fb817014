use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::ModelSpec;
use crate::linalg::{least_squares, spd_solve};
use crate::panel_data::align::INTERCEPT;
use crate::panel_data::EstimationSample;
use crate::transforms::{transform_sample, TransformKind};

/// Error-component variances and their shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma_u2: f64,
    pub sigma_e2: f64,
    pub rho_u: f64,
    pub rho_e: f64,
    /// The between-based estimate of `sigma_u^2` was negative and set to 0.
    pub floored: bool,
}

impl VarianceComponents {
    pub fn new(sigma_u2: f64, sigma_e2: f64, floored: bool) -> Self {
        let total = sigma_u2 + sigma_e2;
        let rho_u = if total > 0.0 { sigma_u2 / total } else { 0.0 };
        Self {
            sigma_u2,
            sigma_e2,
            rho_u,
            rho_e: 1.0 - rho_u,
            floored,
        }
    }
}

/// Swamy-Arora components on a possibly unbalanced sample.
///
/// `sigma_e^2` is the within residual variance on `n - N - k` degrees of
/// freedom. `sigma_u^2` comes from the `T_i`-weighted between regression,
/// with the unbalanced-panel trace correction in the denominator:
///
/// `(SSR_b - (N - K) s_e^2) / (n - tr[(X'PX)^-1 sum_i T_i^2 xbar_i xbar_i'])`
pub fn swamy_arora(spec: &ModelSpec, sample: &EstimationSample) -> Result<VarianceComponents> {
    let levels = if spec.intercept {
        sample.clone().with_intercept()
    } else {
        sample.clone().without_column(INTERCEPT)
    };
    let slopes = levels.clone().without_column(INTERCEPT);
    let n = levels.n_obs();
    let blocks = levels.entity_blocks();
    let n_ent = blocks.len();
    let k = slopes.n_regressors();
    let k_all = levels.n_regressors();

    let df_within = n as i64 - n_ent as i64 - k as i64;
    if df_within <= 0 {
        return Err(Error::InsufficientData(format!(
            "within regression has {df_within} degrees of freedom"
        )));
    }
    if n_ent <= k_all {
        return Err(Error::InsufficientData(format!(
            "between regression needs more than {k_all} cross-sections, got {n_ent}"
        )));
    }

    let within = transform_sample(&slopes, TransformKind::Within)?;
    let bw = least_squares(&within.x, &within.y, &within.names)?;
    let ew = &within.y - &within.x * &bw;
    let sigma_e2 = ew.norm_squared() / df_within as f64;

    // entity means
    let mut xbar = DMatrix::zeros(n_ent, k_all);
    let mut ybar = DVector::zeros(n_ent);
    let mut t = DVector::zeros(n_ent);
    for (i, (_, rows)) in blocks.iter().enumerate() {
        let m = rows.len() as f64;
        t[i] = m;
        ybar[i] = levels.y.rows(rows.start, rows.len()).sum() / m;
        for j in 0..k_all {
            xbar[(i, j)] = levels.x.column(j).rows(rows.start, rows.len()).sum() / m;
        }
    }
    // weighted between regression: rows scaled by sqrt(T_i)
    let sq = t.map(f64::sqrt);
    let xw = DMatrix::from_fn(n_ent, k_all, |i, j| xbar[(i, j)] * sq[i]);
    let yw = ybar.component_mul(&sq);
    let bb = least_squares(&xw, &yw, &levels.names)?;
    let ssr_b = (&yw - &xw * &bb).norm_squared();

    let xpx = xw.transpose() * &xw;
    let mut c = DMatrix::zeros(k_all, k_all);
    for i in 0..n_ent {
        let xi = xbar.row(i).transpose();
        c += &xi * xi.transpose() * (t[i] * t[i]);
    }
    let trace = spd_solve(&xpx, &c, "X'PX")?.trace();
    let denom = n as f64 - trace;
    if denom <= 0.0 {
        return Err(Error::InsufficientData(
            "between variance denominator is not positive".into(),
        ));
    }
    let raw = (ssr_b - (n_ent - k_all) as f64 * sigma_e2) / denom;
    let floored = raw < 0.0;
    Ok(VarianceComponents::new(raw.max(0.0), sigma_e2, floored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SpecKind;
    use crate::panel_data::LaggedVar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sim(n_ent: usize, t: usize, su: f64, seed: u64, ragged: bool) -> EstimationSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ent, mut per, mut y, mut x) = (vec![], vec![], vec![], vec![]);
        for i in 0..n_ent {
            let u: f64 = su * rng.sample::<f64, _>(StandardNormal);
            let ti = if ragged { 2 + i % (t - 1) } else { t };
            for p in 0..ti {
                let xv: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                ent.push(i);
                per.push(p as i64);
                x.push(xv);
                y.push(1.0 + 0.5 * xv + u + e);
            }
        }
        let n = y.len();
        EstimationSample {
            entity_labels: (0..n_ent).map(|i| i.to_string()).collect(),
            entity: ent,
            period: per,
            dependent: "y".into(),
            y: DVector::from_vec(y),
            x: DMatrix::from_vec(n, 1, x),
            names: vec!["x".into()],
            extra: DMatrix::zeros(n, 0),
            extra_names: vec![],
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec::new("y", 0, vec![LaggedVar::new("x", 0)], SpecKind::RandomEffects)
    }

    #[test]
    fn recovers_shares() {
        let c = swamy_arora(&spec(), &sim(500, 8, 2.0, 1, false)).unwrap();
        assert!((c.rho_u - 0.8).abs() < 0.05, "{c:?}");
        assert!((c.sigma_e2 - 1.0).abs() < 0.1);
        assert_eq!(c.rho_u + c.rho_e, 1.0);
        let c = swamy_arora(&spec(), &sim(800, 8, 2.0, 2, true)).unwrap();
        assert!((c.rho_u - 0.8).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn floor_rule() {
        let mut hits = 0;
        for seed in 0..20 {
            let c = swamy_arora(&spec(), &sim(40, 5, 0.0, seed, false)).unwrap();
            assert!(c.rho_u < 0.15);
            if c.floored {
                hits += 1;
                assert_eq!(c.sigma_u2, 0.0);
                assert_eq!(c.rho_e, 1.0);
            }
        }
        assert!(hits > 0);
    }

    /// Balanced closed form: s_u^2 = SSR_b / (T (N - K)) - s_e^2 / T.
    #[test]
    fn balanced_closed_form() {
        let s = sim(30, 4, 1.0, 3, false);
        let c = swamy_arora(&spec(), &s).unwrap();
        let levels = s.clone().with_intercept();
        let n_ent = 30;
        let xb = DMatrix::from_fn(n_ent, 2, |i, j| {
            (0..4).map(|p| levels.x[(i * 4 + p, j)]).sum::<f64>() / 4.0
        });
        let yb = DVector::from_fn(n_ent, |i, _| (0..4).map(|p| levels.y[i * 4 + p]).sum::<f64>() / 4.0);
        let b = least_squares(&xb, &yb, &levels.names).unwrap();
        let ssr = (&yb - &xb * b).norm_squared() * 4.0;
        let expect = (ssr / (4.0 * 28.0) - c.sigma_e2 / 4.0).max(0.0);
        assert!((c.sigma_u2 - expect).abs() < 1e-12);
    }
}
