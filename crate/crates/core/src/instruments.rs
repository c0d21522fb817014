//! GMM instrument matrices.
//!
//! Dynamic (Arellano-Bond) blocks instrument the transformed equation at
//! period `t` with level values dated `t - start` and earlier, one column per
//! (period, lag) pair, or one column per lag when collapsed. Missing levels
//! are zero-filled. Static blocks take already-aligned columns of the sample
//! transformed the same way as the regressors.
//!
//! Text grammar, comma separated:
//! `dyn(VAR,START[,BOUND])[:collapse]`, `static(VAR,FROM..TO)`,
//! `static(VAR,LAG)`, `intercept`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel_data::align::INTERCEPT;
use crate::panel_data::{EstimationSample, LaggedVar, PanelDataset};
use crate::transforms::TransformKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticInstrument {
    pub variable: String,
    pub lag_from: usize,
    pub lag_to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicInstrument {
    pub variable: String,
    pub start: usize,
    pub bound: Option<usize>,
    pub collapsed: bool,
}

impl DynamicInstrument {
    pub fn new(variable: impl Into<String>, start: usize) -> Self {
        Self {
            variable: variable.into(),
            start,
            bound: None,
            collapsed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstrumentSpec {
    #[serde(rename = "static")]
    pub static_vars: Vec<StaticInstrument>,
    pub dynamic: Vec<DynamicInstrument>,
    pub include_intercept: bool,
}

impl InstrumentSpec {
    pub fn is_empty(&self) -> bool {
        self.static_vars.is_empty() && self.dynamic.is_empty() && !self.include_intercept
    }

    /// Dynamic blocks starting at lag 2 for each variable.
    pub fn arellano_bond(vars: &[&str]) -> Self {
        Self {
            dynamic: vars.iter().map(|v| DynamicInstrument::new(*v, 2)).collect(),
            ..Self::default()
        }
    }

    /// Lagged level columns the sample must carry for the static block.
    pub fn static_columns(&self) -> Vec<LaggedVar> {
        self.static_vars
            .iter()
            .flat_map(|s| (s.lag_from..=s.lag_to).map(move |l| LaggedVar::new(&s.variable, l)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.dynamic {
            if d.start < 1 {
                return Err(Error::Specification(format!(
                    "dyn({}): starting lag must be at least 1",
                    d.variable
                )));
            }
            if let Some(b) = d.bound {
                if b < d.start {
                    return Err(Error::Specification(format!(
                        "dyn({}): deepest lag {b} is shallower than start {}",
                        d.variable, d.start
                    )));
                }
            }
        }
        for s in &self.static_vars {
            if s.lag_to < s.lag_from {
                return Err(Error::Specification(format!(
                    "static({}): empty lag range {}..{}",
                    s.variable, s.lag_from, s.lag_to
                )));
            }
        }
        Ok(())
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out.into_iter().map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn parse_lag(s: &str, item: &str) -> Result<usize> {
    let v: i64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Specification(format!("bad lag '{s}' in '{item}'")))?;
    Ok(v.unsigned_abs() as usize)
}

impl FromStr for InstrumentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = InstrumentSpec::default();
        for item in split_top_level(s) {
            let bad = || Error::Specification(format!("cannot parse instrument '{item}'"));
            let lower = item.to_ascii_lowercase();
            if matches!(lower.as_str(), "intercept" | "const" | "c") {
                spec.include_intercept = true;
                continue;
            }
            let (body, collapsed) = match item.rsplit_once(':') {
                Some((b, flag)) if flag.trim().eq_ignore_ascii_case("collapse") => (b.trim(), true),
                Some(_) => return Err(bad()),
                None => (item, false),
            };
            let body = body.trim_start_matches('@');
            let open = body.find('(').ok_or_else(bad)?;
            let head = body[..open].trim().to_ascii_lowercase();
            let args: Vec<&str> = body[open + 1..]
                .strip_suffix(')')
                .ok_or_else(bad)?
                .split(',')
                .map(str::trim)
                .collect();
            match head.as_str() {
                "dyn" => {
                    if !(2..=3).contains(&args.len()) || args[0].is_empty() {
                        return Err(bad());
                    }
                    spec.dynamic.push(DynamicInstrument {
                        variable: args[0].to_string(),
                        start: parse_lag(args[1], item)?,
                        bound: args.get(2).map(|b| parse_lag(b, item)).transpose()?,
                        collapsed,
                    });
                }
                "static" if !collapsed => {
                    if args.len() != 2 || args[0].is_empty() {
                        return Err(bad());
                    }
                    let (from, to) = match args[1].split_once("..") {
                        Some((a, b)) => (parse_lag(a, item)?, parse_lag(b, item)?),
                        None => {
                            let l = parse_lag(args[1], item)?;
                            (l, l)
                        }
                    };
                    spec.static_vars.push(StaticInstrument {
                        variable: args[0].to_string(),
                        lag_from: from.min(to),
                        lag_to: from.max(to),
                    });
                }
                _ => return Err(bad()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for InstrumentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for d in &self.dynamic {
            let mut s = match d.bound {
                Some(b) => format!("dyn({},{},{})", d.variable, d.start, b),
                None => format!("dyn({},{})", d.variable, d.start),
            };
            if d.collapsed {
                s.push_str(":collapse");
            }
            parts.push(s);
        }
        for s in &self.static_vars {
            parts.push(format!("static({},{}..{})", s.variable, s.lag_from, s.lag_to));
        }
        if self.include_intercept {
            parts.push(INTERCEPT.to_string());
        }
        write!(f, "{}", parts.join(","))
    }
}

/// Instrument columns for the rows of a (transformed) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentMatrix {
    pub z: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Columns dropped because they were identically zero.
    pub pruned: Vec<String>,
}

impl InstrumentMatrix {
    pub fn count(&self) -> usize {
        self.z.ncols()
    }
}

/// Arellano-Bond block for `variable` on the rows of `sample`.
pub fn build_dynamic_block(
    data: &PanelDataset,
    sample: &EstimationSample,
    spec: &DynamicInstrument,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    build_dynamic_block_dated(data, sample, spec, 0)
}

/// Period offset between a transformed row and the date its instrument lags
/// count from. Forward orthogonal deviations at `t` only involve `e_t` and
/// later, so they are dated one period late: lag 2 then reaches `t - 1`, the
/// same information a first difference at `t + 1` gets.
pub fn instrument_offset(kind: TransformKind) -> i64 {
    match kind {
        TransformKind::OrthogonalDeviation => 1,
        _ => 0,
    }
}

/// [`build_dynamic_block`] with lags counted from `period + offset`.
pub fn build_dynamic_block_dated(
    data: &PanelDataset,
    sample: &EstimationSample,
    spec: &DynamicInstrument,
    offset: i64,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    data.series(&spec.variable)?;
    if spec.start < 1 {
        return Err(Error::Specification("dynamic instruments need start >= 1".into()));
    }
    let first = data.first_period();
    let deepest = |t: i64| -> Option<usize> {
        let avail = t - first;
        if avail < spec.start as i64 {
            return None;
        }
        Some(spec.bound.map_or(avail as usize, |b| b.min(avail as usize)))
    };
    let n = sample.n_obs();

    let (z, labels) = if spec.collapsed {
        let max_lag = sample.period.iter().filter_map(|&t| deepest(t + offset)).max();
        let lags: Vec<usize> = max_lag.map_or(Vec::new(), |m| (spec.start..=m).collect());
        let mut z = DMatrix::zeros(n, lags.len());
        for r in 0..n {
            let t = sample.period[r] + offset;
            for (j, &l) in lags.iter().enumerate() {
                if let Some(v) = data.value(&spec.variable, sample.entity[r], t - l as i64) {
                    z[(r, j)] = v;
                }
            }
        }
        let labels = lags
            .iter()
            .map(|&l| format!("{}(-{})", spec.variable, l as i64 - offset))
            .collect();
        (z, labels)
    } else {
        // column index for each (period, lag)
        let mut cols: BTreeMap<(i64, usize), usize> = BTreeMap::new();
        let mut periods: Vec<i64> = sample.period.clone();
        periods.sort_unstable();
        periods.dedup();
        for &t in &periods {
            if let Some(m) = deepest(t + offset) {
                for l in spec.start..=m {
                    let j = cols.len();
                    cols.insert((t, l), j);
                }
            }
        }
        let mut z = DMatrix::zeros(n, cols.len());
        for r in 0..n {
            let t = sample.period[r];
            let Some(m) = deepest(t + offset) else { continue };
            for l in spec.start..=m {
                if let Some(v) = data.value(&spec.variable, sample.entity[r], t + offset - l as i64) {
                    z[(r, cols[&(t, l)])] = v;
                }
            }
        }
        let mut labels = vec![String::new(); cols.len()];
        for (&(t, l), &j) in &cols {
            labels[j] = format!("{}(-{})@{t}", spec.variable, l as i64 - offset);
        }
        (z, labels)
    };
    if z.ncols() == 0 || z.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyInstrumentBlock(format!(
            "dyn({},{})",
            spec.variable, spec.start
        )));
    }
    Ok((z, labels))
}

/// Static columns (and the intercept) taken from the sample's `extra` block.
pub fn build_static_block(
    sample: &EstimationSample,
    columns: &[LaggedVar],
    include_intercept: bool,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut names: Vec<String> = columns.iter().map(ToString::to_string).collect();
    if include_intercept {
        names.push(INTERCEPT.to_string());
    }
    let idx = names
        .iter()
        .map(|n| {
            sample.extra_column(n).ok_or_else(|| {
                Error::Specification(format!("static instrument '{n}' is not in the aligned sample"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if sample.n_obs() == 0 {
        return Err(Error::InsufficientData(format!(
            "static instrument '{}' has no observations",
            names.first().map(String::as_str).unwrap_or("")
        )));
    }
    let z = DMatrix::from_fn(sample.n_obs(), idx.len(), |r, j| sample.extra[(r, idx[j])]);
    Ok((z, names))
}

/// Full instrument matrix for `sample`, with identically-zero columns pruned
/// and the order condition checked against `n_regressors`.
pub fn assemble(
    spec: &InstrumentSpec,
    data: &PanelDataset,
    sample: &EstimationSample,
    n_regressors: usize,
) -> Result<InstrumentMatrix> {
    assemble_dated(spec, data, sample, n_regressors, 0)
}

/// [`assemble`] with dynamic blocks dated by `offset`, see [`instrument_offset`].
pub fn assemble_dated(
    spec: &InstrumentSpec,
    data: &PanelDataset,
    sample: &EstimationSample,
    n_regressors: usize,
    offset: i64,
) -> Result<InstrumentMatrix> {
    spec.validate()?;
    if spec.is_empty() {
        return Err(Error::Specification("instrument specification is empty".into()));
    }
    let mut blocks: Vec<(DMatrix<f64>, Vec<String>)> = Vec::new();
    if !spec.static_vars.is_empty() || spec.include_intercept {
        blocks.push(build_static_block(sample, &spec.static_columns(), spec.include_intercept)?);
    }
    for d in &spec.dynamic {
        blocks.push(build_dynamic_block_dated(data, sample, d, offset)?);
    }

    let n = sample.n_obs();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut pruned = Vec::new();
    for (z, names) in blocks {
        for (j, name) in names.into_iter().enumerate() {
            let col = z.column(j);
            if col.iter().all(|&v| v == 0.0) {
                log::warn!("pruning identically zero instrument column {name}");
                pruned.push(name);
            } else {
                kept_cols.push(col.iter().copied().collect());
                labels.push(name);
            }
        }
    }
    let z = DMatrix::from_fn(n, kept_cols.len(), |r, j| kept_cols[j][r]);
    if z.ncols() < n_regressors {
        return Err(Error::UnderIdentified {
            instruments: z.ncols(),
            regressors: n_regressors,
        });
    }
    Ok(InstrumentMatrix { z, labels, pruned })
}
