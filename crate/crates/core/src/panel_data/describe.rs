use serde::{Deserialize, Serialize};

use super::PanelDataset;
use crate::error::{Error, Result};

/// Pooled summary of all present cells of one variable.
///
/// Skewness and kurtosis use population moments (`m3 / m2^1.5`, `m4 / m2^2`);
/// kurtosis is the raw fourth standardized moment, about 3 for normal data.
/// The standard deviation uses the `n - 1` denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub min: f64,
    #[serde(rename = "sd")]
    pub standard_deviation: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    #[serde(rename = "n")]
    pub observations: usize,
}

impl DescriptiveStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "{n} observation(s), need at least 2"
            )));
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        if m2 == 0.0 {
            return Err(Error::ZeroVariance("all observations are equal".into()));
        }
        let sd = (m2 / (nf - 1.0)).sqrt();
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;

        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(Self {
            mean,
            median,
            max: sorted[n - 1],
            min: sorted[0],
            standard_deviation: sd,
            skewness: m3 / m2.powf(1.5),
            kurtosis: m4 / (m2 * m2),
            observations: n,
        })
    }
}

/// Statistics over the present cells of `variable`, pooled across entities
/// and periods.
pub fn describe(data: &PanelDataset, variable: &str) -> Result<DescriptiveStats> {
    DescriptiveStats::from_values(&data.present_values(variable)?)
}
