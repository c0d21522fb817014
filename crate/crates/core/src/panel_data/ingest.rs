use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{PanelDataset, DEFAULT_MISSING};
use crate::error::{Error, Result};

/// Parsing knobs shared by the long and wide readers.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub missing_tokens: Vec<String>,
    /// Label (case-insensitive prefix) of the wide-format total row.
    pub total_label: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            missing_tokens: DEFAULT_MISSING.iter().map(|s| s.to_string()).collect(),
            total_label: "TOTAL".to_string(),
        }
    }
}

impl ParseOptions {
    fn parse_cell(&self, raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
        let t = raw.trim();
        if self.missing_tokens.iter().any(|m| m == t) {
            return Ok(None);
        }
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| Error::ParseValue {
                row,
                column: column.to_string(),
                value: raw.to_string(),
            })
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads `entity,period,<var1>,...` from a file.
pub fn ingest_long_csv(path: impl AsRef<Path>, options: &ParseOptions) -> Result<PanelDataset> {
    read_long(open(path.as_ref())?, options)
}

/// Reads a single-variable `name,<year>,<year>,...` table from a file.
pub fn ingest_wide_csv(
    path: impl AsRef<Path>,
    variable: &str,
    options: &ParseOptions,
) -> Result<PanelDataset> {
    read_wide(open(path.as_ref())?, variable, options)
}

/// Long-format reader. Row numbers in errors count the header as row 1.
pub fn read_long<R: Read>(reader: R, options: &ParseOptions) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3
        || !header[0].eq_ignore_ascii_case("entity")
        || !header[1].eq_ignore_ascii_case("period")
    {
        return Err(Error::Format(
            "long CSV header must be entity,period,<var>,...".into(),
        ));
    }
    let vars: Vec<String> = header.iter().skip(2).map(str::to_string).collect();

    let mut entities: Vec<String> = Vec::new();
    let mut entity_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, i64), Vec<Option<f64>>> = HashMap::new();
    let mut min_p = i64::MAX;
    let mut max_p = i64::MIN;

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let entity = rec[0].to_string();
        let period: i64 = rec[1].parse().map_err(|_| Error::ParseValue {
            row,
            column: "period".into(),
            value: rec[1].to_string(),
        })?;
        let e = *entity_pos.entry(entity.clone()).or_insert_with(|| {
            entities.push(entity.clone());
            entities.len() - 1
        });
        let values = vars
            .iter()
            .enumerate()
            .map(|(j, v)| options.parse_cell(&rec[j + 2], row, v))
            .collect::<Result<Vec<_>>>()?;
        if cells.insert((e, period), values).is_some() {
            return Err(Error::DuplicateRow {
                row,
                entity,
                period,
            });
        }
        min_p = min_p.min(period);
        max_p = max_p.max(period);
    }
    if entities.is_empty() {
        return Err(Error::InsufficientData("no data rows".into()));
    }

    let mut data = PanelDataset::new(entities, min_p, max_p)?;
    let n_t = data.n_periods();
    for (j, v) in vars.iter().enumerate() {
        let mut col = vec![None; data.n_entities() * n_t];
        for (&(e, p), vals) in &cells {
            col[e * n_t + (p - min_p) as usize] = vals[j];
        }
        data.insert_series(v, col)?;
    }
    data.drop_empty_entities()
}

/// Wide-format reader. The total row, when present, is kept aside as the
/// variable's checksum vector.
pub fn read_wide<R: Read>(reader: R, variable: &str, options: &ParseOptions) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Format("wide CSV needs a name column and at least one period".into()));
    }
    let periods = header
        .iter()
        .skip(1)
        .map(|h| {
            h.parse::<i64>()
                .map_err(|_| Error::Format(format!("period header '{h}' is not an integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if periods.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format("period headers must be strictly increasing".into()));
    }
    let first = periods[0];
    let last = *periods.last().unwrap();
    let total_label = options.total_label.to_ascii_uppercase();

    let mut names = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut totals = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Format(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let name = rec[0].to_string();
        let values = periods
            .iter()
            .enumerate()
            .map(|(j, p)| options.parse_cell(&rec[j + 1], row, &p.to_string()))
            .collect::<Result<Vec<_>>>()?;
        if !total_label.is_empty() && name.to_ascii_uppercase().starts_with(&total_label) {
            totals = Some(values);
        } else {
            names.push(name);
            rows.push(values);
        }
    }
    if names.is_empty() {
        return Err(Error::InsufficientData("no entity rows".into()));
    }

    let mut data = PanelDataset::new(names, first, last)?;
    let n_t = data.n_periods();
    let spread = |values: &[Option<f64>]| {
        let mut out = vec![None; n_t];
        for (v, p) in values.iter().zip(&periods) {
            out[(p - first) as usize] = *v;
        }
        out
    };
    let col: Vec<Option<f64>> = rows.iter().flat_map(|r| spread(r)).collect();
    data.insert_series(variable, col)?;
    if let Some(t) = totals {
        data.set_totals(variable, spread(&t));
    }
    data.drop_empty_entities()
}
