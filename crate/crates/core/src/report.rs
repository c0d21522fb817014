//! Rendering of fits as text tables, CSV grids and JSON.

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, Method};
use crate::panel_data::align::INTERCEPT;
use crate::pipeline::Estimation;

#[derive(Debug, Clone, Serialize)]
pub struct RSquared {
    pub weighted: f64,
    pub unweighted: f64,
}

/// JSON view of one fit.
#[derive(Debug, Clone, Serialize)]
pub struct ResultJson<'a> {
    pub spec: String,
    pub method: Method,
    pub dependent: &'a str,
    pub coefficients: IndexMap<&'a str, f64>,
    pub se: IndexMap<&'a str, f64>,
    pub t: IndexMap<&'a str, f64>,
    pub r2: RSquared,
    pub j: Option<f64>,
    pub j_p: Option<f64>,
    pub j_df: Option<usize>,
    pub observations: usize,
    pub cross_sections: usize,
    pub periods: usize,
    pub steps: usize,
    pub instrument_count: Option<usize>,
    pub diagnostics: &'a crate::diagnostics::DiagnosticsReport,
    pub notes: &'a [String],
}

fn ordered<'a>(r: &'a EstimationResult, v: impl Fn(usize) -> f64) -> IndexMap<&'a str, f64> {
    r.names.iter().enumerate().map(|(i, n)| (n.as_str(), v(i))).collect()
}

pub fn result_json(e: &Estimation) -> ResultJson<'_> {
    let r = &e.result;
    ResultJson {
        spec: r.kind.short().to_string(),
        method: r.method,
        dependent: &r.dependent,
        coefficients: ordered(r, |i| r.coefficients[i]),
        se: ordered(r, |i| r.standard_errors[i]),
        t: ordered(r, |i| r.t_statistics[i]),
        r2: RSquared {
            weighted: r.r_squared_weighted,
            unweighted: r.r_squared_unweighted,
        },
        j: r.j.map(|j| j.statistic),
        j_p: r.j.map(|j| j.p_value),
        j_df: r.j.map(|j| j.df),
        observations: r.sample_size,
        cross_sections: r.cross_sections,
        periods: r.periods,
        steps: r.steps_taken,
        instrument_count: r.instrument_count,
        diagnostics: &e.diagnostics,
        notes: &r.notes,
    }
}

pub fn to_json(estimations: &[Estimation]) -> Result<String> {
    let v: Vec<ResultJson<'_>> = estimations.iter().map(result_json).collect();
    let s = if v.len() == 1 {
        serde_json::to_string_pretty(&v[0])
    } else {
        serde_json::to_string_pretty(&v)
    };
    s.map_err(|e| Error::Format(e.to_string()))
}

/// Row labels across columns: first appearance order, intercept last.
fn row_names(estimations: &[Estimation]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for e in estimations {
        for n in &e.result.names {
            if n != INTERCEPT && !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    if estimations.iter().any(|e| e.result.index(INTERCEPT).is_some()) {
        names.push(INTERCEPT.to_string());
    }
    names
}

fn fmt4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".to_string()
    }
}

/// Comparison table: coefficient, standard error in parentheses, t statistic
/// in brackets; R-squared, J with p-value and sample counts underneath.
pub fn render_table(estimations: &[Estimation]) -> String {
    let names = row_names(estimations);
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec![format!("Dependent: {}", estimations.first().map_or("", |e| e.result.dependent.as_str()))];
    header.extend(estimations.iter().map(|e| e.result.kind.title().to_string()));
    rows.push(header);
    for n in &names {
        let cell = |f: &dyn Fn(&EstimationResult, usize) -> String| -> Vec<String> {
            estimations
                .iter()
                .map(|e| e.result.index(n).map_or(String::new(), |i| f(&e.result, i)))
                .collect()
        };
        let mut a = vec![n.clone()];
        a.extend(cell(&|r, i| fmt4(r.coefficients[i])));
        let mut b = vec![String::new()];
        b.extend(cell(&|r, i| format!("({})", fmt4(r.standard_errors[i]))));
        let mut c = vec![String::new()];
        c.extend(cell(&|r, i| format!("[{}]", fmt4(r.t_statistics[i]))));
        rows.extend([a, b, c]);
    }
    let mut line = |label: &str, f: &dyn Fn(&Estimation) -> String| {
        let mut v = vec![label.to_string()];
        v.extend(estimations.iter().map(f));
        rows.push(v);
    };
    line("R-squared (weighted)", &|e| fmt4(e.result.r_squared_weighted));
    line("R-squared (unweighted)", &|e| fmt4(e.result.r_squared_unweighted));
    line("J-statistic (p-value)", &|e| e.diagnostics.j_footer());
    line("Instruments", &|e| e.result.instrument_count.map_or("-".into(), |c| c.to_string()));
    line("Observations", &|e| e.result.sample_size.to_string());
    line("Cross-sections", &|e| e.result.cross_sections.to_string());
    line("Periods", &|e| e.result.periods.to_string());

    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let mut s = format!("{:<w$}", r[0], w = widths[0]);
        for j in 1..ncol {
            s.push_str(&format!("  {:>w$}", r[j], w = widths[j]));
        }
        out.push_str(s.trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1)));
            out.push('\n');
        }
    }
    let mut notes: Vec<String> = Vec::new();
    for e in estimations {
        for n in &e.result.notes {
            notes.push(format!("{}: {n}", e.result.kind.title()));
        }
        for t in &e.diagnostics.ar_tests {
            notes.push(format!(
                "{}: AR({}) z = {:.4} (p = {:.4})",
                e.result.kind.title(),
                t.order,
                t.statistic,
                t.p_value
            ));
        }
        if let Some(c) = &e.diagnostics.variance_components {
            notes.push(format!(
                "{}: sigma_u^2 = {:.6} (rho_u = {:.4}), sigma_e^2 = {:.6} (rho_e = {:.4})",
                e.result.kind.title(),
                c.sigma_u2,
                c.rho_u,
                c.sigma_e2,
                c.rho_e
            ));
        }
        if let Some(h) = &e.diagnostics.hausman {
            let s = match h {
                crate::diagnostics::HausmanOutcome::Valid {
                    statistic,
                    df,
                    p_value,
                } => format!("Hausman H = {statistic:.4}, df {df} (p = {p_value:.4})"),
                crate::diagnostics::HausmanOutcome::Invalid { reason, .. } => {
                    format!("Hausman test invalid: {reason}")
                }
            };
            notes.push(format!("{}: {s}", e.result.kind.title()));
        }
    }
    if !notes.is_empty() {
        out.push('\n');
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
    }
    out
}

/// Grid with one column per fit: `name`, `name_se`, `name_t` rows per
/// coefficient, then the diagnostics rows.
pub fn render_csv(estimations: &[Estimation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    header.extend(estimations.iter().map(|e| e.result.kind.short().to_string()));
    w.write_record(&header)?;
    let num = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
    for n in row_names(estimations) {
        for (suffix, pick) in [("", 0usize), ("_se", 1), ("_t", 2)] {
            let mut rec = vec![format!("{n}{suffix}")];
            rec.extend(estimations.iter().map(|e| {
                e.result.index(&n).map_or(String::new(), |i| {
                    num(match pick {
                        0 => e.result.coefficients[i],
                        1 => e.result.standard_errors[i],
                        _ => e.result.t_statistics[i],
                    })
                })
            }));
            w.write_record(&rec)?;
        }
    }
    let diag: [(&str, &dyn Fn(&Estimation) -> String); 6] = [
        ("r2_weighted", &|e| num(e.result.r_squared_weighted)),
        ("r2_unweighted", &|e| num(e.result.r_squared_unweighted)),
        ("j", &|e| e.result.j.map_or(String::new(), |j| num(j.statistic))),
        ("j_p", &|e| e.result.j.map_or(String::new(), |j| num(j.p_value))),
        ("observations", &|e| e.result.sample_size.to_string()),
        ("cross_sections", &|e| e.result.cross_sections.to_string()),
    ];
    for (label, f) in diag {
        let mut rec = vec![label.to_string()];
        rec.extend(estimations.iter().map(f));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
