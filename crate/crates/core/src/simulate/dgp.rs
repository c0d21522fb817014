use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{ModelSpec, SpecKind};
use crate::panel_data::{LaggedVar, PanelDataset};

/// Data-generating process
/// `y_t = rho y_{t-1} + x_t'beta + w_a + e_t` with `w_a ~ N(0, sigma_effect^2)`
/// and `e_t ~ N(0, sigma_noise^2)`.
///
/// Each exogenous series follows `x_t = phi x_{t-1} + lambda w_a + v_t`,
/// `v_t ~ N(0, 1)`; a non-zero `effect_loading` (lambda) correlates the
/// regressors with the entity effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n_entities: usize,
    pub n_periods: usize,
    pub first_period: i64,
    pub rho: f64,
    pub exogenous_betas: Vec<f64>,
    pub sigma_effect: f64,
    pub sigma_noise: f64,
    pub exog_persistence: f64,
    pub effect_loading: f64,
    pub burn_in: usize,
    /// Starting value; when set the recursion starts from it one period
    /// before the first recorded period and no burn-in is run.
    pub initial: Option<f64>,
    /// Probability that an (entity, period) cell is deleted.
    pub missingness: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n_entities: 100,
            n_periods: 10,
            first_period: 1,
            rho: 0.5,
            exogenous_betas: vec![1.0],
            sigma_effect: 1.0,
            sigma_noise: 1.0,
            exog_persistence: 0.5,
            effect_loading: 0.0,
            burn_in: 50,
            initial: None,
            missingness: 0.0,
            seed: 0,
        }
    }
}

pub const DEPENDENT: &str = "y";

pub fn exog_name(j: usize) -> String {
    format!("x{}", j + 1)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under the experiment seed.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(seed ^ splitmix64(rep as u64))
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Parameter(format!("|rho| must be below 1, got {}", self.rho)));
        }
        if !(self.exog_persistence.abs() < 1.0) {
            return Err(Error::Parameter("|exog_persistence| must be below 1".into()));
        }
        if !(self.sigma_effect >= 0.0 && self.sigma_noise >= 0.0) {
            return Err(Error::Parameter("standard deviations must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return Err(Error::Parameter("missingness must lie in [0, 1)".into()));
        }
        if self.n_entities == 0 || self.n_periods == 0 {
            return Err(Error::Parameter("panel dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(name, truth)` for every slope the model identifies.
    pub fn truths(&self) -> Vec<(String, f64)> {
        let mut v = vec![(LaggedVar::new(DEPENDENT, 1).to_string(), self.rho)];
        v.extend(self.exogenous_betas.iter().enumerate().map(|(j, &b)| (exog_name(j), b)));
        v
    }

    /// The correctly specified model for `kind`.
    pub fn model_spec(&self, kind: SpecKind) -> ModelSpec {
        let exog = (0..self.exogenous_betas.len())
            .map(|j| LaggedVar::new(exog_name(j), 0))
            .collect();
        ModelSpec::new(DEPENDENT, 1, exog, kind)
    }
}

/// Dataset for the spec's own seed.
pub fn generate(dgp: &DgpSpec) -> Result<PanelDataset> {
    generate_with_seed(dgp, dgp.seed)
}

/// Dataset for replication `rep` of an experiment.
pub fn generate_replication(dgp: &DgpSpec, rep: usize) -> Result<PanelDataset> {
    generate_with_seed(dgp, replication_seed(dgp.seed, rep))
}

/// Entity `a` draws from stream `a` of a ChaCha8 generator keyed by `seed`;
/// deletions come from a second generator keyed by a derived seed.
pub fn generate_with_seed(dgp: &DgpSpec, seed: u64) -> Result<PanelDataset> {
    dgp.validate()?;
    let n = dgp.n_entities;
    let t = dgp.n_periods;
    let k = dgp.exogenous_betas.len();
    let width = n.to_string().len();
    let entities: Vec<String> = (0..n).map(|a| format!("e{:0width$}", a + 1)).collect();
    let mut data = PanelDataset::new(entities, dgp.first_period, dgp.first_period + t as i64 - 1)?;
    let mut y = vec![None; n * t];
    let mut xs = vec![vec![None; n * t]; k];

    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let phi = dgp.exog_persistence;
    for a in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(a as u64);
        let w = dgp.sigma_effect * normal(&mut rng);
        let mut x: Vec<f64> = (0..k)
            .map(|_| dgp.effect_loading * w / (1.0 - phi) + normal(&mut rng) / (1.0 - phi * phi).sqrt())
            .collect();
        let burn = if dgp.initial.is_some() { 0 } else { dgp.burn_in };
        let mean_x: f64 = dgp
            .exogenous_betas
            .iter()
            .map(|b| b * dgp.effect_loading * w / (1.0 - phi))
            .sum();
        let mut level = match dgp.initial {
            Some(v) => v,
            None => {
                (w + mean_x) / (1.0 - dgp.rho)
                    + dgp.sigma_noise * normal(&mut rng) / (1.0 - dgp.rho * dgp.rho).sqrt()
            }
        };
        for s in 0..burn + t {
            for xj in x.iter_mut() {
                *xj = phi * *xj + dgp.effect_loading * w + normal(&mut rng);
            }
            let e = dgp.sigma_noise * normal(&mut rng);
            let xb: f64 = x.iter().zip(&dgp.exogenous_betas).map(|(xv, b)| xv * b).sum();
            level = dgp.rho * level + xb + w + e;
            if s >= burn {
                let p = s - burn;
                y[a * t + p] = Some(level);
                for j in 0..k {
                    xs[j][a * t + p] = Some(x[j]);
                }
            }
        }
    }

    if dgp.missingness > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x6D69_7373_696E_6721));
        for cell in 0..n * t {
            if rng.random::<f64>() < dgp.missingness {
                y[cell] = None;
                for xj in xs.iter_mut() {
                    xj[cell] = None;
                }
            }
        }
    }

    data.insert_series(DEPENDENT, y)?;
    for (j, x) in xs.into_iter().enumerate() {
        data.insert_series(&exog_name(j), x)?;
    }
    data.drop_empty_entities()
}
