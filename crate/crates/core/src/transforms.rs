//! Per-entity panel transformations.
//!
//! Series-level functions take one entity's calendar path (`None` for
//! absent periods) and return a path of the same length. Forward orthogonal
//! deviations use every later present value, skipping interior gaps; first
//! differences need both neighbours present.
//!
//! Sample-level functions apply the same transforms to every column of an
//! [`EstimationSample`], producing a new sample whose rows are the periods
//! where the transform is defined.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel_data::EstimationSample;
use crate::panel_data::align::INTERCEPT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// Levels, as used by pooled OLS.
    None,
    /// Subtract the entity mean.
    Within,
    /// Entity indicator columns (LSDV).
    Dummies,
    FirstDifference,
    OrthogonalDeviation,
    /// Subtract `theta` times the entity mean.
    QuasiDemean(f64),
}

impl TransformKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformKind::QuasiDemean(t) if !(0.0..=1.0).contains(&t) => {
                Err(Error::Parameter(format!("theta {t} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the transform removes time-invariant entity effects.
    pub fn removes_effects(&self) -> bool {
        matches!(
            self,
            TransformKind::Within
                | TransformKind::Dummies
                | TransformKind::FirstDifference
                | TransformKind::OrthogonalDeviation
        )
    }

    pub fn is_differencing(&self) -> bool {
        matches!(
            self,
            TransformKind::FirstDifference | TransformKind::OrthogonalDeviation
        )
    }
}

/// `out[t] = series[t - k]`.
pub fn lag(series: &[Option<f64>], k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::Parameter("lag order must be at least 1".into()));
    }
    let n = series.len();
    Ok((0..n).map(|t| if t >= k { series[t - k] } else { None }).collect())
}

/// `out[t] = x[t] - x[t-1]` where both are present.
pub fn first_difference(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; series.len()];
    for t in 1..series.len() {
        if let (Some(a), Some(b)) = (series[t], series[t - 1]) {
            out[t] = Some(a - b);
        }
    }
    out
}

/// Scale factors `sqrt(m / (m + 1))`, `m` = number of later present values,
/// at every present period with `m > 0`.
pub fn orthogonal_deviation_scale(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; series.len()];
    let mut later = 0usize;
    for t in (0..series.len()).rev() {
        if series[t].is_some() {
            if later > 0 {
                let m = later as f64;
                out[t] = Some((m / (m + 1.0)).sqrt());
            }
            later += 1;
        }
    }
    out
}

/// Forward orthogonal deviations: `c_t (x_t - mean of later present x)`.
/// The last present period has no output.
pub fn orthogonal_deviation(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; series.len()];
    let (mut sum, mut count) = (0.0, 0usize);
    for t in (0..series.len()).rev() {
        if let Some(v) = series[t] {
            if count > 0 {
                let m = count as f64;
                out[t] = Some((m / (m + 1.0)).sqrt() * (v - sum / m));
            }
            sum += v;
            count += 1;
        }
    }
    out
}

fn entity_mean(series: &[Option<f64>]) -> Option<f64> {
    let (s, n) = series
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Subtract the entity's own mean over present periods.
pub fn within_demean(series: &[Option<f64>]) -> Vec<Option<f64>> {
    match entity_mean(series) {
        Some(m) => series.iter().map(|v| v.map(|x| x - m)).collect(),
        None => series.to_vec(),
    }
}

/// `x_t - theta * mean`; `theta = 1` is [`within_demean`].
pub fn quasi_demean(series: &[Option<f64>], theta: f64) -> Result<Vec<Option<f64>>> {
    TransformKind::QuasiDemean(theta).validate()?;
    Ok(match entity_mean(series) {
        Some(m) => series.iter().map(|v| v.map(|x| x - theta * m)).collect(),
        None => series.to_vec(),
    })
}

/// Maps transformed fitted values back to the level of the original series.
///
/// First differences: `level_t = actual_{t-1} + fitted_t`. Orthogonal
/// deviations: `level_t = fitted_t / c_t + mean(actual after t)`. Applied to
/// the transformed actuals this returns the actuals.
pub fn reconstruct_levels(
    fitted: &[Option<f64>],
    original: &[Option<f64>],
    kind: TransformKind,
) -> Result<Vec<Option<f64>>> {
    if fitted.len() != original.len() {
        return Err(Error::Parameter("fitted and original paths differ in length".into()));
    }
    let n = fitted.len();
    let mut out = vec![None; n];
    match kind {
        TransformKind::FirstDifference => {
            for t in 1..n {
                if let (Some(f), Some(prev)) = (fitted[t], original[t - 1]) {
                    out[t] = Some(prev + f);
                }
            }
        }
        TransformKind::OrthogonalDeviation => {
            let (mut sum, mut count) = (0.0, 0usize);
            for t in (0..n).rev() {
                if let (Some(f), true) = (fitted[t], count > 0) {
                    let m = count as f64;
                    let c = (m / (m + 1.0)).sqrt();
                    out[t] = Some(f / c + sum / m);
                }
                if let Some(v) = original[t] {
                    sum += v;
                    count += 1;
                }
            }
        }
        other => {
            return Err(Error::Parameter(format!(
                "level reconstruction needs first_difference or orthogonal_deviation, got {other:?}"
            )))
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DummyMode {
    /// One indicator per entity, no global intercept.
    #[default]
    FullSet,
    /// Intercept plus indicators for all but the first entity.
    DropFirst,
}

/// Entity indicator block for the sample's rows, with column labels.
pub fn expand_dummies(sample: &EstimationSample, mode: DummyMode) -> Result<(DMatrix<f64>, Vec<String>)> {
    let ents: Vec<usize> = sample.entity_blocks().into_iter().map(|(e, _)| e).collect();
    if ents.len() < 2 {
        return Err(Error::InsufficientData("dummy expansion needs at least 2 entities".into()));
    }
    let used = match mode {
        DummyMode::FullSet => &ents[..],
        DummyMode::DropFirst => &ents[1..],
    };
    let n = sample.n_obs();
    let mut d = DMatrix::zeros(n, used.len());
    for r in 0..n {
        if let Some(j) = used.iter().position(|&e| e == sample.entity[r]) {
            d[(r, j)] = 1.0;
        }
    }
    let names = used
        .iter()
        .map(|&e| format!("D[{}]", sample.entity_labels[e]))
        .collect();
    Ok((d, names))
}

/// Calendar path of one entity's rows: offset of the first period and values.
fn calendar(periods: &[i64], values: impl Iterator<Item = f64>) -> (i64, Vec<Option<f64>>) {
    let start = periods[0];
    let len = (periods[periods.len() - 1] - start + 1) as usize;
    let mut path = vec![None; len];
    for (p, v) in periods.iter().zip(values) {
        path[(p - start) as usize] = Some(v);
    }
    (start, path)
}

/// Applies a series transform column by column, entity by entity, and
/// reassembles the rows where the output is defined.
fn map_columns<F>(sample: &EstimationSample, f: F) -> EstimationSample
where
    F: Fn(usize, &[Option<f64>]) -> Vec<Option<f64>>,
{
    let blocks = sample.entity_blocks();
    let kx = sample.x.ncols();
    let kz = sample.extra.ncols();
    let mut entity = Vec::new();
    let mut period = Vec::new();
    let mut y = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut z: Vec<f64> = Vec::new();

    for (e, rows) in blocks {
        let periods = &sample.period[rows.clone()];
        let apply = |col: Box<dyn Iterator<Item = f64> + '_>| {
            let (start, path) = calendar(periods, col);
            f(e, &path)
                .into_iter()
                .enumerate()
                .filter_map(move |(i, v)| v.map(|v| (start + i as i64, v)))
                .collect::<Vec<_>>()
        };
        let ty = apply(Box::new(rows.clone().map(|r| sample.y[r])));
        let tx: Vec<Vec<(i64, f64)>> = (0..kx)
            .map(|j| apply(Box::new(rows.clone().map(move |r| sample.x[(r, j)]))))
            .collect();
        let tz: Vec<Vec<(i64, f64)>> = (0..kz)
            .map(|j| apply(Box::new(rows.clone().map(move |r| sample.extra[(r, j)]))))
            .collect();
        for (i, &(p, v)) in ty.iter().enumerate() {
            entity.push(e);
            period.push(p);
            y.push(v);
            x.extend(tx.iter().map(|c| c[i].1));
            z.extend(tz.iter().map(|c| c[i].1));
        }
    }
    let n = y.len();
    EstimationSample {
        entity_labels: sample.entity_labels.clone(),
        entity,
        period,
        dependent: sample.dependent.clone(),
        y: DVector::from_vec(y),
        x: DMatrix::from_row_slice(n, kx, &x),
        names: sample.names.clone(),
        extra: DMatrix::from_row_slice(n, kz, &z),
        extra_names: sample.extra_names.clone(),
    }
}

/// Transforms every column of the sample.
///
/// `Dummies` keeps rows and replaces any intercept column by the full set of
/// entity indicators.
pub fn transform_sample(sample: &EstimationSample, kind: TransformKind) -> Result<EstimationSample> {
    kind.validate()?;
    let out = match kind {
        TransformKind::None => sample.clone(),
        TransformKind::Within => map_columns(sample, |_, s| within_demean(s)),
        TransformKind::FirstDifference => map_columns(sample, |_, s| first_difference(s)),
        TransformKind::OrthogonalDeviation => map_columns(sample, |_, s| orthogonal_deviation(s)),
        TransformKind::QuasiDemean(theta) => {
            map_columns(sample, |_, s| quasi_demean(s, theta).expect("validated theta"))
        }
        TransformKind::Dummies => {
            let mut s = sample.clone().without_column(INTERCEPT);
            let (d, names) = expand_dummies(&s, DummyMode::FullSet)?;
            let k = s.x.ncols();
            let mut x = DMatrix::zeros(s.n_obs(), k + d.ncols());
            x.columns_mut(0, k).copy_from(&s.x);
            x.columns_mut(k, d.ncols()).copy_from(&d);
            s.x = x;
            s.names.extend(names);
            s
        }
    };
    if out.n_obs() == 0 {
        return Err(Error::NoEstimableObservations);
    }
    Ok(out)
}

/// Quasi-demeaning with one `theta` per entity (indexed like
/// `sample.entity_labels`).
pub fn quasi_demean_sample(sample: &EstimationSample, thetas: &[f64]) -> Result<EstimationSample> {
    for &t in thetas {
        TransformKind::QuasiDemean(t).validate()?;
    }
    Ok(map_columns(sample, |e, s| {
        quasi_demean(s, thetas[e]).expect("validated theta")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|&x| Some(x)).collect()
    }

    fn present(v: &[Option<f64>]) -> Vec<f64> {
        v.iter().flatten().copied().collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lag_examples() {
        assert_eq!(lag(&p(&[1.0, 2.0, 4.0]), 1).unwrap(), vec![None, Some(1.0), Some(2.0)]);
        let gap = vec![Some(1.0), None, Some(3.0)];
        assert_eq!(lag(&gap, 1).unwrap()[2], None);
        let eleven = p(&[0.0; 11]);
        assert_eq!(present(&lag(&eleven, 2).unwrap()).len(), 9);
        assert!(lag(&eleven, 0).is_err());
    }

    #[test]
    fn first_difference_examples() {
        assert_eq!(present(&first_difference(&p(&[1.0, 2.0, 4.0]))), vec![1.0, 2.0]);
        assert_eq!(present(&first_difference(&p(&[7.0; 4]))), vec![0.0; 3]);
        assert!(present(&first_difference(&[Some(5.0), None, Some(9.0)])).is_empty());
    }

    #[test]
    fn orthogonal_deviation_examples() {
        assert_eq!(present(&orthogonal_deviation(&p(&[3.0; 4]))), vec![0.0; 3]);
        assert!(close(&present(&orthogonal_deviation(&p(&[1.0, 2.0]))), &[-0.7071067811865476], 1e-12));
        assert!(close(
            &present(&orthogonal_deviation(&p(&[3.0, 1.0, 2.0]))),
            &[1.224744871391589, -0.7071067811865476],
            1e-12
        ));
        // gaps are skipped: [1, -, 3] behaves like [1, 3]
        let g = orthogonal_deviation(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(g[1], None);
        assert!((g[0].unwrap() + 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn demeaning_examples() {
        assert_eq!(present(&within_demean(&p(&[1.0, 2.0, 3.0]))), vec![-1.0, 0.0, 1.0]);
        assert_eq!(present(&within_demean(&p(&[5.0]))), vec![0.0]);
        let s = p(&[2.0, 4.0]);
        assert_eq!(quasi_demean(&s, 0.0).unwrap(), s);
        assert_eq!(quasi_demean(&s, 1.0).unwrap(), within_demean(&s));
        assert_eq!(present(&quasi_demean(&s, 0.5).unwrap()), vec![0.5, 2.5]);
        assert!(quasi_demean(&s, 1.5).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let x = p(&[2.0, 5.0, 4.0, 8.0]);
        let fd = first_difference(&x);
        let back = reconstruct_levels(&fd, &x, TransformKind::FirstDifference).unwrap();
        assert!(close(&present(&back), &[5.0, 4.0, 8.0], 1e-12));

        let zeros: Vec<Option<f64>> = fd.iter().map(|v| v.map(|_| 0.0)).collect();
        let lagged = reconstruct_levels(&zeros, &x, TransformKind::FirstDifference).unwrap();
        assert_eq!(present(&lagged), vec![2.0, 5.0, 4.0]);

        let od = orthogonal_deviation(&x);
        let back = reconstruct_levels(&od, &x, TransformKind::OrthogonalDeviation).unwrap();
        assert!(close(&present(&back), &[2.0, 5.0, 4.0], 1e-12));
        assert!(reconstruct_levels(&od, &x, TransformKind::Within).is_err());
    }

    fn sample3() -> EstimationSample {
        let entity = vec![0, 0, 1, 1, 2, 2, 2];
        let period = vec![1, 2, 1, 2, 1, 2, 3];
        let n = entity.len();
        EstimationSample {
            entity_labels: vec!["a".into(), "b".into(), "c".into()],
            entity,
            period,
            dependent: "y".into(),
            y: DVector::from_fn(n, |i, _| i as f64),
            x: DMatrix::from_fn(n, 1, |i, _| (i * i) as f64),
            names: vec!["x".into()],
            extra: DMatrix::zeros(n, 0),
            extra_names: vec![],
        }
    }

    #[test]
    fn dummies() {
        let s = sample3();
        let (d, names) = expand_dummies(&s, DummyMode::FullSet).unwrap();
        assert_eq!(d.ncols(), 3);
        assert_eq!(d.column(0).sum(), 2.0);
        assert_eq!(d.column(2).sum(), 3.0);
        assert_eq!(d.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(names[1], "D[b]");
        let (d, _) = expand_dummies(&s, DummyMode::DropFirst).unwrap();
        assert_eq!(d.ncols(), 2);
        let one = s.select_rows(&[0, 1]);
        assert!(expand_dummies(&one, DummyMode::FullSet).is_err());
    }

    #[test]
    fn within_is_per_entity() {
        let mut s = sample3();
        s.y = DVector::from_vec(vec![9.0, 11.0, 19.0, 21.0, 0.0, 1.0, 2.0]);
        let w = transform_sample(&s, TransformKind::Within).unwrap();
        assert_eq!(w.y.as_slice(), &[-1.0, 1.0, -1.0, 1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn sample_transforms_keep_rows_aligned() {
        let s = sample3();
        let fd = transform_sample(&s, TransformKind::FirstDifference).unwrap();
        assert_eq!(fd.n_obs(), 4);
        assert_eq!(fd.period, vec![2, 2, 2, 3]);
        // row for entity c at period 3: y 6-5, x 36-25
        assert_eq!((fd.y[3], fd.x[(3, 0)]), (1.0, 11.0));
        let od = transform_sample(&s, TransformKind::OrthogonalDeviation).unwrap();
        assert_eq!(od.n_obs(), 4);
        assert_eq!(od.period, vec![1, 1, 1, 2]);
    }

    fn path() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(prop::option::weighted(0.8, -100.0f64..100.0), 2..15)
    }

    proptest! {
        #[test]
        fn linear(a in -3.0f64..3.0, b in -3.0f64..3.0, xs in path(), seed in 0u64..1000) {
            let ys: Vec<Option<f64>> = xs.iter().enumerate()
                .map(|(i, v)| v.map(|_| ((i as u64 * 7919 + seed) % 97) as f64 - 48.0))
                .collect();
            let combo: Vec<Option<f64>> = xs.iter().zip(&ys)
                .map(|(x, y)| x.zip(*y).map(|(x, y)| a * x + b * y)).collect();
            for f in [first_difference as fn(&[Option<f64>]) -> Vec<Option<f64>>, orthogonal_deviation, within_demean] {
                let lhs = f(&combo);
                let (tx, ty) = (f(&xs), f(&ys));
                for i in 0..lhs.len() {
                    match (lhs[i], tx[i], ty[i]) {
                        (Some(l), Some(x), Some(y)) => prop_assert!((l - (a * x + b * y)).abs() < 1e-9),
                        (None, None, None) => {}
                        other => prop_assert!(false, "presence mismatch {:?}", other),
                    }
                }
            }
        }

        #[test]
        fn od_length_and_unit_scale(xs in path()) {
            let n = xs.iter().flatten().count();
            let od = orthogonal_deviation(&xs);
            prop_assert_eq!(od.iter().flatten().count(), n.saturating_sub(1));
            if xs.iter().all(Option::is_some) {
                prop_assert_eq!(first_difference(&xs).iter().flatten().count(), n - 1);
            }
        }
    }
}
