//! Unbalanced entity x period panels.
//!
//! A [`PanelDataset`] holds any number of named series over a common grid of
//! entities and contiguous integer periods. Absent cells are `None`; gaps
//! inside an entity's run stay in place so that lags are always taken on
//! calendar periods.

pub mod align;
mod describe;
mod ingest;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub use align::{align, align_lags, EstimationSample, INTERCEPT};
pub use describe::{describe, DescriptiveStats};
pub use ingest::{ingest_long_csv, ingest_wide_csv, read_long, read_wide, ParseOptions};

/// Tokens treated as missing cells unless overridden.
pub const DEFAULT_MISSING: [&str; 4] = ["", "-", "NA", "na"];

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    entities: Vec<String>,
    first_period: i64,
    n_periods: usize,
    series: IndexMap<String, Vec<Option<f64>>>,
    units: IndexMap<String, String>,
    totals: IndexMap<String, Vec<Option<f64>>>,
}

impl PanelDataset {
    /// Empty dataset over `entities` x `first_period..=last_period`.
    pub fn new(entities: Vec<String>, first_period: i64, last_period: i64) -> Result<Self> {
        if last_period < first_period {
            return Err(Error::Format(format!(
                "period range {first_period}..={last_period} is empty"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entities {
            if !seen.insert(e.as_str()) {
                return Err(Error::Format(format!("duplicate entity '{e}'")));
            }
        }
        Ok(Self {
            entities,
            first_period,
            n_periods: (last_period - first_period + 1) as usize,
            series: IndexMap::new(),
            units: IndexMap::new(),
            totals: IndexMap::new(),
        })
    }

    /// Adds (or replaces) a series laid out entity-major.
    pub fn insert_series(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.entities.len() * self.n_periods {
            return Err(Error::Format(format!(
                "series '{name}' has {} cells, expected {}",
                values.len(),
                self.entities.len() * self.n_periods
            )));
        }
        self.series.insert(name.to_string(), values);
        Ok(())
    }

    pub fn set_unit(&mut self, name: &str, unit: &str) {
        self.units.insert(name.to_string(), unit.to_string());
    }

    pub fn unit(&self, name: &str) -> Option<&str> {
        self.units.get(name).map(String::as_str)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn first_period(&self) -> i64 {
        self.first_period
    }

    pub fn last_period(&self) -> i64 {
        self.first_period + self.n_periods as i64 - 1
    }

    pub fn periods(&self) -> Vec<i64> {
        (self.first_period..=self.last_period()).collect()
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.series.contains_key(name)
    }

    pub fn entity_index(&self, label: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == label)
    }

    pub fn period_index(&self, period: i64) -> Option<usize> {
        let off = period - self.first_period;
        (off >= 0 && (off as usize) < self.n_periods).then_some(off as usize)
    }

    /// All cells of a series, entity-major.
    pub fn series(&self, name: &str) -> Result<&[Option<f64>]> {
        self.series
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// One entity's time path of a series.
    pub fn entity_series(&self, name: &str, entity: usize) -> Result<&[Option<f64>]> {
        let s = self.series(name)?;
        let start = entity * self.n_periods;
        Ok(&s[start..start + self.n_periods])
    }

    /// Cell lookup; `None` when absent or outside the period range.
    pub fn value(&self, name: &str, entity: usize, period: i64) -> Option<f64> {
        let t = self.period_index(period)?;
        self.series.get(name)?[entity * self.n_periods + t]
    }

    /// Present (non-missing) values of a series in entity-major order.
    pub fn present_values(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.series(name)?.iter().flatten().copied().collect())
    }

    pub fn present_count(&self, name: &str) -> Result<usize> {
        Ok(self.series(name)?.iter().filter(|v| v.is_some()).count())
    }

    /// Column totals carried over from a wide file's total row.
    pub fn totals(&self, name: &str) -> Option<&[Option<f64>]> {
        self.totals.get(name).map(Vec::as_slice)
    }

    pub(crate) fn set_totals(&mut self, name: &str, totals: Vec<Option<f64>>) {
        self.totals.insert(name.to_string(), totals);
    }

    /// Sum over entities of present values, one entry per period.
    pub fn column_sums(&self, name: &str) -> Result<Vec<f64>> {
        let s = self.series(name)?;
        let mut sums = vec![0.0; self.n_periods];
        for e in 0..self.n_entities() {
            for (t, sum) in sums.iter_mut().enumerate() {
                if let Some(v) = s[e * self.n_periods + t] {
                    *sum += v;
                }
            }
        }
        Ok(sums)
    }

    /// Keeps only the listed entities, in the order given.
    pub fn select_entities(&self, labels: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| {
                self.entity_index(l)
                    .ok_or_else(|| Error::Format(format!("unknown entity '{l}'")))
            })
            .collect::<Result<_>>()?;
        let mut out = Self::new(
            labels.iter().map(|s| s.to_string()).collect(),
            self.first_period,
            self.last_period(),
        )?;
        for (name, values) in &self.series {
            let mut v = Vec::with_capacity(idx.len() * self.n_periods);
            for &e in &idx {
                v.extend_from_slice(&values[e * self.n_periods..(e + 1) * self.n_periods]);
            }
            out.series.insert(name.clone(), v);
        }
        out.units = self.units.clone();
        Ok(out)
    }

    /// Outer join on entities and periods; series names must not collide.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let mut entities = self.entities.clone();
        for e in &other.entities {
            if !entities.contains(e) {
                entities.push(e.clone());
            }
        }
        let first = self.first_period.min(other.first_period);
        let last = self.last_period().max(other.last_period());
        let mut out = Self::new(entities, first, last)?;
        for src in [self, other] {
            for (name, _) in &src.series {
                if out.series.contains_key(name) {
                    return Err(Error::Format(format!(
                        "variable '{name}' present in both datasets"
                    )));
                }
                let mut v = vec![None; out.entities.len() * out.n_periods];
                for (e, label) in out.entities.iter().enumerate() {
                    let Some(se) = src.entity_index(label) else {
                        continue;
                    };
                    for p in src.first_period..=src.last_period() {
                        let t = out.period_index(p).expect("period in merged range");
                        v[e * out.n_periods + t] = src.value(name, se, p);
                    }
                }
                out.series.insert(name.clone(), v);
            }
            for (k, u) in &src.units {
                out.units.insert(k.clone(), u.clone());
            }
            for (k, t) in &src.totals {
                out.totals.insert(k.clone(), t.clone());
            }
        }
        Ok(out)
    }

    /// Drops entities with no present cell in any series.
    pub(crate) fn drop_empty_entities(self) -> Result<Self> {
        let keep: Vec<&str> = (0..self.n_entities())
            .filter(|&e| {
                self.series.values().any(|s| {
                    s[e * self.n_periods..(e + 1) * self.n_periods]
                        .iter()
                        .any(Option::is_some)
                })
            })
            .map(|e| self.entities[e].as_str())
            .collect();
        if keep.len() == self.n_entities() {
            return Ok(self);
        }
        let mut out = self.select_entities(&keep)?;
        out.totals = self.totals.clone();
        Ok(out)
    }

    /// Writes the canonical long layout `entity,period,<vars...>`; missing
    /// cells are empty, numbers use the shortest round-tripping form.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["entity".to_string(), "period".to_string()];
        header.extend(self.series.keys().cloned());
        w.write_record(&header)?;
        for (e, label) in self.entities.iter().enumerate() {
            for t in 0..self.n_periods {
                let cells: Vec<Option<f64>> =
                    self.series.values().map(|s| s[e * self.n_periods + t]).collect();
                if cells.iter().all(Option::is_none) {
                    continue;
                }
                let mut rec = vec![label.clone(), (self.first_period + t as i64).to_string()];
                rec.extend(cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

/// A variable at a given lag, written `name` or `name(-k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaggedVar {
    pub name: String,
    pub lag: usize,
}

impl serde::Serialize for LaggedVar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for LaggedVar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl LaggedVar {
    pub fn new(name: impl Into<String>, lag: usize) -> Self {
        Self {
            name: name.into(),
            lag,
        }
    }
}

impl fmt::Display for LaggedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lag == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}(-{})", self.name, self.lag)
        }
    }
}

impl FromStr for LaggedVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Specification(format!("cannot parse '{s}' as var or var(-k)"));
        match s.find('(') {
            None => {
                if s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    return Err(bad());
                }
                Ok(Self::new(s, 0))
            }
            Some(open) => {
                let name = s[..open].trim();
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?.trim();
                let k: i64 = inner.parse().map_err(|_| bad())?;
                if name.is_empty() || k > 0 {
                    return Err(bad());
                }
                Ok(Self::new(name, k.unsigned_abs() as usize))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PanelDataset {
        let mut d = PanelDataset::new(vec!["a".into(), "b".into()], 2010, 2012).unwrap();
        d.insert_series("x", vec![Some(1.0), None, Some(3.0), Some(4.0), Some(5.0), Some(6.0)])
            .unwrap();
        d
    }

    #[test]
    fn lookup_and_sums() {
        let d = tiny();
        assert_eq!(d.value("x", 0, 2011), None);
        assert_eq!(d.value("x", 1, 2012), Some(6.0));
        assert_eq!(d.value("x", 1, 2013), None);
        assert_eq!(d.column_sums("x").unwrap(), vec![5.0, 5.0, 9.0]);
        assert_eq!(d.present_count("x").unwrap(), 5);
    }

    #[test]
    fn lagged_var_grammar() {
        assert_eq!("pp(-1)".parse::<LaggedVar>().unwrap(), LaggedVar::new("pp", 1));
        assert_eq!(" bv ".parse::<LaggedVar>().unwrap(), LaggedVar::new("bv", 0));
        assert_eq!("bt(0)".parse::<LaggedVar>().unwrap(), LaggedVar::new("bt", 0));
        assert!("pp(1)".parse::<LaggedVar>().is_err());
        assert!("pp(-x)".parse::<LaggedVar>().is_err());
        assert_eq!(LaggedVar::new("pp", 2).to_string(), "pp(-2)");
    }

    #[test]
    fn merge_outer_joins() {
        let a = tiny();
        let mut b = PanelDataset::new(vec!["b".into(), "c".into()], 2011, 2013).unwrap();
        b.insert_series("z", vec![Some(1.0); 6]).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.entities(), ["a", "b", "c"]);
        assert_eq!(m.periods(), vec![2010, 2011, 2012, 2013]);
        assert_eq!(m.value("x", 1, 2010), Some(4.0));
        assert_eq!(m.value("z", 0, 2011), None);
        assert_eq!(m.value("z", 2, 2013), Some(1.0));
        assert!(a.merge(&a).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut d = PanelDataset::new(vec!["a".into()], 1, 3).unwrap();
        assert!(d.insert_series("x", vec![None; 2]).is_err());
        assert!(PanelDataset::new(vec!["a".into(), "a".into()], 1, 2).is_err());
        assert!(PanelDataset::new(vec![], 3, 2).is_err());
    }
}
