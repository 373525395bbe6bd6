//! Temporal preprocessing: calendar-year means, column pruning, removal of
//! composite variables that are sums of other retained variables, and
//! differencing between consecutive years.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{TimeSeriesTable, Variable};
use crate::linalg::Matrix;
use crate::numfmt::sig12;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no variables remain")]
    EmptyResult,
    #[error("years are not consecutive: {0} follows {1}")]
    NonConsecutiveYears(i32, i32),
    #[error("table with {rows} rows is too short for lag {lag}")]
    TooShort { rows: usize, lag: usize },
    #[error("table has missing cells (variable {0})")]
    NotDense(String),
    #[error("lag must be at least 1")]
    ZeroLag,
    #[error("malformed annual table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Year × variable grid of annual means; a cell is present iff the year had
/// at least one observation of that variable.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualTable {
    years: Vec<i32>,
    variables: Vec<Variable>,
    values: Vec<Vec<Option<f64>>>,
}

impl AnnualTable {
    pub fn new(
        years: Vec<i32>,
        variables: Vec<Variable>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, PreprocessError> {
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PreprocessError::Malformed("years must be strictly increasing".into()));
        }
        if values.len() != years.len() || values.iter().any(|r| r.len() != variables.len()) {
            return Err(PreprocessError::Malformed("grid does not match years × variables".into()));
        }
        Ok(Self {
            years,
            variables,
            values,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn values(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.years.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.code.as_str()).collect()
    }

    pub fn value(&self, row: usize, var: usize) -> Option<f64> {
        self.values[row][var]
    }

    pub fn column_index(&self, code: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.code == code)
    }

    fn keep_vars(&self, keep: &[usize]) -> AnnualTable {
        AnnualTable {
            years: self.years.clone(),
            variables: keep.iter().map(|&j| self.variables[j].clone()).collect(),
            values: self
                .values
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        }
    }

    /// Dense matrix (rows = years), or an error naming the first gappy variable.
    pub fn to_matrix(&self) -> Result<Matrix, PreprocessError> {
        let mut data = Vec::with_capacity(self.n_rows() * self.n_vars());
        for row in &self.values {
            for (j, v) in row.iter().enumerate() {
                data.push(v.ok_or_else(|| PreprocessError::NotDense(self.variables[j].code.clone()))?);
            }
        }
        Matrix::new(self.n_rows(), self.n_vars(), data)
            .map_err(|e| PreprocessError::Malformed(e.to_string()))
    }

    /// CSV with a `year` column, 12-significant-digit values and `NA` gaps.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PreprocessError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["year".to_string()];
        header.extend(self.variables.iter().map(|v| v.code.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for (y, row) in self.years.iter().zip(&self.values) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), sig12)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<AnnualTable, PreprocessError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let variables: Vec<Variable> = header.iter().skip(1).map(Variable::new).collect();
        let mut years = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(PreprocessError::Malformed("ragged row".into()));
            }
            years.push(
                rec[0]
                    .trim()
                    .parse::<i32>()
                    .map_err(|_| PreprocessError::Malformed(format!("bad year {:?}", &rec[0])))?,
            );
            values.push(rec.iter().skip(1).map(crate::ingest::parse_value).collect());
        }
        AnnualTable::new(years, variables, values)
    }
}

fn csv_err(e: csv::Error) -> PreprocessError {
    PreprocessError::Malformed(e.to_string())
}

/// A composite variable that equals the sum of `parts`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedundancyRule {
    pub composite: String,
    pub parts: Vec<String>,
}

impl RedundancyRule {
    pub fn new(composite: &str, parts: &[&str]) -> Self {
        Self {
            composite: composite.into(),
            parts: parts.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.parts.is_empty() {
            return Err(format!("rule for {} has no parts", self.composite));
        }
        if self.parts.contains(&self.composite) {
            return Err(format!("rule for {} lists itself as a part", self.composite));
        }
        Ok(())
    }
}

/// Nitrogen composition identities using USGS parameter codes.
///
/// Ordered composite-first so chains resolve: total N (00600) is checked
/// while TKN (00625) is still present.
pub fn default_nitrogen_rules() -> Vec<RedundancyRule> {
    vec![
        // total N = TKN + nitrate + nitrite
        RedundancyRule::new("00600", &["00625", "00618", "00613"]),
        // TKN = organic N + ammonia N
        RedundancyRule::new("00625", &["00605", "00608"]),
        // nitrate + nitrite
        RedundancyRule::new("00631", &["00618", "00613"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Removal {
    pub composite: String,
    pub parts: Vec<String>,
}

/// Calendar-year arithmetic means of all non-missing observations.
pub fn annual_mean(t: &TimeSeriesTable) -> AnnualTable {
    let nv = t.n_vars();
    let mut acc: BTreeMap<i32, Vec<(f64, usize)>> = BTreeMap::new();
    for (d, row) in t.timestamps().iter().zip(t.values()) {
        let sums = acc.entry(d.year()).or_insert_with(|| vec![(0.0, 0); nv]);
        for (s, v) in sums.iter_mut().zip(row) {
            if let Some(v) = v {
                s.0 += v;
                s.1 += 1;
            }
        }
    }
    let mut years = Vec::with_capacity(acc.len());
    let mut values = Vec::with_capacity(acc.len());
    for (y, sums) in acc {
        years.push(y);
        values.push(
            sums.into_iter()
                .map(|(s, n)| if n > 0 { Some(s / n as f64) } else { None })
                .collect(),
        );
    }
    AnnualTable {
        years,
        variables: t.variables().to_vec(),
        values,
    }
}

/// Drops every variable with at least one missing annual cell.
pub fn drop_na_columns(a: &AnnualTable) -> Result<AnnualTable, PreprocessError> {
    let keep: Vec<usize> = (0..a.n_vars())
        .filter(|&j| a.values.iter().all(|r| r[j].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(PreprocessError::EmptyResult);
    }
    Ok(a.keep_vars(&keep))
}

/// Applies `rules` in order against the progressively pruned table: a
/// composite is removed when all of its parts are (still) present.
pub fn drop_redundant(a: &AnnualTable, rules: &[RedundancyRule]) -> (AnnualTable, Vec<Removal>) {
    let mut present: Vec<bool> = vec![true; a.n_vars()];
    let mut removals = Vec::new();
    let is_present = |present: &[bool], code: &str| {
        a.column_index(code).map(|j| present[j]).unwrap_or(false)
    };
    for rule in rules {
        let Some(c) = a.column_index(&rule.composite) else { continue };
        if !present[c] {
            continue;
        }
        if rule.parts.iter().all(|p| is_present(&present, p)) {
            present[c] = false;
            removals.push(Removal {
                composite: rule.composite.clone(),
                parts: rule.parts.clone(),
            });
        }
    }
    let keep: Vec<usize> = (0..a.n_vars()).filter(|&j| present[j]).collect();
    (a.keep_vars(&keep), removals)
}

/// `out[i] = a[i + lag] − a[i]`, labelled with the later year.
pub fn difference(a: &AnnualTable, lag: usize) -> Result<AnnualTable, PreprocessError> {
    if lag == 0 {
        return Err(PreprocessError::ZeroLag);
    }
    if a.n_rows() <= lag {
        return Err(PreprocessError::TooShort { rows: a.n_rows(), lag });
    }
    for w in a.years.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(PreprocessError::NonConsecutiveYears(w[1], w[0]));
        }
    }
    for j in 0..a.n_vars() {
        if a.values.iter().any(|r| r[j].is_none()) {
            return Err(PreprocessError::NotDense(a.variables[j].code.clone()));
        }
    }
    let values = (0..a.n_rows() - lag)
        .map(|i| {
            (0..a.n_vars())
                .map(|j| Some(a.values[i + lag][j].unwrap() - a.values[i][j].unwrap()))
                .collect()
        })
        .collect();
    Ok(AnnualTable {
        years: a.years[lag..].to_vec(),
        variables: a.variables.clone(),
        values,
    })
}
