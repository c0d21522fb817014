//! Brand trust letter grades and their numeric scale.
//!
//! The scale runs from 100 (AAA+) down to 25 (D) in steps of 2.5, with
//! wider 5-point steps at the A-/BBB+, B-/CCC+ and C-/D boundaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One row of the grade scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grade {
    pub label: &'static str,
    pub description: &'static str,
    pub value: f64,
}

const fn grade(label: &'static str, description: &'static str, value: f64) -> Grade {
    Grade {
        label,
        description,
        value,
    }
}

/// The 28-entry scale, best grade first.
pub const GRADE_SCALE: [Grade; 28] = [
    grade("AAA+", "Prime", 100.00),
    grade("AAA", "Prime", 97.50),
    grade("AAA-", "Prime", 95.00),
    grade("AA+", "High grade", 92.50),
    grade("AA", "High grade", 90.00),
    grade("AA-", "High grade", 87.50),
    grade("A+", "Upper Medium grade", 85.00),
    grade("A", "Upper Medium grade", 82.50),
    grade("A-", "Upper Medium grade", 80.00),
    grade("BBB+", "Lower Medium grade", 75.00),
    grade("BBB", "Lower Medium grade", 72.50),
    grade("BBB-", "Lower Medium grade", 70.00),
    grade("BB+", "Speculative", 67.50),
    grade("BB", "Speculative", 65.00),
    grade("BB-", "Speculative", 62.50),
    grade("B+", "Highly Speculative", 60.00),
    grade("B", "Highly Speculative", 57.50),
    grade("B-", "Highly Speculative", 55.00),
    grade("CCC+", "Substantial Risks", 50.00),
    grade("CCC", "Substantial Risks", 47.50),
    grade("CCC-", "Substantial Risks", 45.00),
    grade("CC+", "Extremely Speculative", 42.50),
    grade("CC", "Extremely Speculative", 40.00),
    grade("CC-", "Extremely Speculative", 37.50),
    grade("C+", "Default Imminent", 35.00),
    grade("C", "Default Imminent", 32.50),
    grade("C-", "Default Imminent", 30.00),
    grade("D", "In Default", 25.00),
];

pub const SCALE_MIN: f64 = 25.0;
pub const SCALE_MAX: f64 = 100.0;

/// Maps a grade label to its numeric value. Case-insensitive, surrounding
/// whitespace ignored.
pub fn grade_to_numeric(grade: &str) -> Result<f64> {
    let wanted = grade.trim().to_ascii_uppercase();
    GRADE_SCALE
        .iter()
        .find(|g| g.label == wanted)
        .map(|g| g.value)
        .ok_or_else(|| Error::UnknownGrade {
            grade: grade.to_string(),
            valid: GRADE_SCALE
                .iter()
                .map(|g| g.label)
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// Nearest grade to `value`. Midpoints resolve to the higher grade.
pub fn numeric_to_grade(value: f64) -> Result<&'static str> {
    if !(SCALE_MIN..=SCALE_MAX).contains(&value) {
        return Err(Error::OutOfRange {
            value,
            lo: SCALE_MIN,
            hi: SCALE_MAX,
        });
    }
    // The scale is sorted descending, so the first minimum wins ties upward.
    let mut best = &GRADE_SCALE[0];
    let mut best_dist = (best.value - value).abs();
    for g in &GRADE_SCALE[1..] {
        let d = (g.value - value).abs();
        if d < best_dist {
            best = g;
            best_dist = d;
        }
    }
    Ok(best.label)
}

/// The scale as CSV (`grade,description,value`).
pub fn scale_csv() -> String {
    let mut out = String::from("grade,description,value\n");
    for g in &GRADE_SCALE {
        let _ = writeln!(out, "{},{},{:.2}", g.label, g.description, g.value);
    }
    out
}
