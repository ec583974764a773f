//! Temporal growth-factor ingestion and the observation sequence fed to the
//! hidden-state model.
//!
//! Factors arrive as a yearly CSV (`year,<name1>,...,<nameD>`), are min-max
//! normalized per column into [0, 1], and are then replicated a fixed number
//! of times per year to form the training sequence.

use std::path::Path;

use crate::error::{Error, Result};

/// Yearly multi-factor records: a T x D matrix plus year and factor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub years: Vec<i32>,
    pub factor_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl FactorTable {
    /// Validates: strictly increasing years with gaps no larger than
    /// `year_step`, rectangular rows, finite values.
    pub fn new(
        years: Vec<i32>,
        factor_names: Vec<String>,
        values: Vec<Vec<f64>>,
        year_step: i32,
    ) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::FactorTable("no records".to_string()));
        }
        if factor_names.is_empty() {
            return Err(Error::FactorTable("no factor columns".to_string()));
        }
        if values.len() != years.len() {
            return Err(Error::FactorTable(format!(
                "{} rows for {} years",
                values.len(),
                years.len()
            )));
        }
        for w in years.windows(2) {
            if w[1] == w[0] {
                return Err(Error::FactorTable(format!("duplicate year {}", w[0])));
            }
            if w[1] < w[0] {
                return Err(Error::FactorTable(format!(
                    "unsorted years: {} after {}",
                    w[1], w[0]
                )));
            }
            if w[1] - w[0] > year_step {
                return Err(Error::FactorTable(format!(
                    "year gap {} to {} exceeds step {year_step}",
                    w[0], w[1]
                )));
            }
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != factor_names.len() {
                return Err(Error::FactorTable(format!(
                    "row {} has {} values for {} factors",
                    i,
                    row.len(),
                    factor_names.len()
                )));
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::FactorTable(format!(
                        "non-finite value in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            years,
            factor_names,
            values,
        })
    }

    pub fn record_count(&self) -> usize {
        self.years.len()
    }

    pub fn factor_count(&self) -> usize {
        self.factor_names.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("year");
        for name in &self.factor_names {
            text.push(',');
            text.push_str(name);
        }
        text.push('\n');
        for (year, row) in self.years.iter().zip(&self.values) {
            text.push_str(&year.to_string());
            for v in row {
                text.push(',');
                text.push_str(&v.to_string());
            }
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parses the factor CSV: header `year,<name1>,...`, one row per year,
/// decimal-point reals. Yearly data (step 1) is assumed.
pub fn load_factor_table(path: &Path) -> Result<FactorTable> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::FactorTable("empty file".to_string()))?;
    let mut cols = header.split(',').map(str::trim);
    match cols.next() {
        Some(c) if c.eq_ignore_ascii_case("year") => {}
        other => {
            return Err(Error::FactorTable(format!(
                "first header column must be 'year', got {other:?}"
            )))
        }
    }
    let factor_names: Vec<String> = cols.map(str::to_string).collect();
    if factor_names.is_empty() {
        return Err(Error::FactorTable("no factor columns".to_string()));
    }
    let mut years = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != factor_names.len() + 1 {
            return Err(Error::FactorTable(format!(
                "row {} has {} fields, expected {}",
                lineno + 1,
                fields.len(),
                factor_names.len() + 1
            )));
        }
        let year: i32 = fields[0].parse().map_err(|_| {
            Error::FactorTable(format!("non-numeric year {:?}", fields[0]))
        })?;
        let mut row = Vec::with_capacity(factor_names.len());
        for f in &fields[1..] {
            if f.is_empty() {
                return Err(Error::FactorTable(format!(
                    "missing value in row for year {year}"
                )));
            }
            let v: f64 = f.parse().map_err(|_| {
                Error::FactorTable(format!("non-numeric cell {f:?} in year {year}"))
            })?;
            row.push(v);
        }
        years.push(year);
        values.push(row);
    }
    if years.is_empty() {
        return Err(Error::FactorTable("no records".to_string()));
    }
    FactorTable::new(years, factor_names, values, 1)
}

/// Min-max normalizes each column independently to [0, 1]; constant columns
/// map to all zeros.
pub fn normalize_min_max(table: &FactorTable) -> FactorTable {
    let d = table.factor_count();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in &table.values {
        for (j, &v) in row.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let values = table
        .values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let span = maxs[j] - mins[j];
                    if span == 0.0 {
                        0.0
                    } else {
                        (v - mins[j]) / span
                    }
                })
                .collect()
        })
        .collect();
    FactorTable {
        years: table.years.clone(),
        factor_names: table.factor_names.clone(),
        values,
    }
}

/// A sequence of D-dimensional observation vectors; each yearly vector
/// appears `repeat_factor` consecutive times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub observations: Vec<Vec<f64>>,
    pub repeat_factor: usize,
}

impl ObservationSequence {
    /// Wraps an already-built sequence (repeat factor 1).
    pub fn raw(observations: Vec<Vec<f64>>) -> Self {
        Self {
            observations,
            repeat_factor: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }
}

const NORMALIZED_SLACK: f64 = 1e-12;

/// Replicates each normalized yearly record `repeat_factor` consecutive
/// times, preserving year order. Rejects values outside [0, 1].
pub fn build_observation_sequence(
    table: &FactorTable,
    repeat_factor: usize,
) -> Result<ObservationSequence> {
    let repeat_factor = repeat_factor.max(1);
    for (i, row) in table.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(-NORMALIZED_SLACK..=1.0 + NORMALIZED_SLACK).contains(&v) {
                return Err(Error::Unnormalized {
                    value: v,
                    row: i,
                    factor: j,
                });
            }
        }
    }
    let mut observations = Vec::with_capacity(table.record_count() * repeat_factor);
    for row in &table.values {
        for _ in 0..repeat_factor {
            observations.push(row.clone());
        }
    }
    Ok(ObservationSequence {
        observations,
        repeat_factor,
    })
}
