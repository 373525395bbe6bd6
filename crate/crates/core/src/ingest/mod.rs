//! Water-quality record ingestion: the irregular time-series table, its
//! parsers and the sample/variable filters applied before aggregation.

mod csv_io;
mod fetch;
mod rdb;

use std::collections::BTreeMap;
use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{emit_csv, parse_csv};
pub use fetch::{cache_key, fetch_remote, FetchRequest, HttpResponse, Transport};
#[cfg(feature = "http")]
pub use fetch::UreqTransport;
pub use rdb::parse_rdb;

use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("ragged row at line {0}")]
    RaggedRow(usize),
    #[error("unparseable date {value:?} at line {line}")]
    BadDate { line: usize, value: String },
    #[error("duplicate observation of {1} on {0}")]
    DuplicateTimestampVariable(NaiveDate, String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("no rows remain after filtering")]
    EmptyResult,
    #[error("network unavailable: {0}")]
    NetworkUnavailable(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("failed to write cache file: {0}")]
    CacheWriteFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokens treated as a missing cell.
pub(crate) fn is_missing_token(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na")
}

pub(crate) fn parse_value(s: &str) -> Option<f64> {
    if is_missing_token(s) {
        return None;
    }
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub code: String,
    pub label: String,
    pub unit: String,
}

impl Variable {
    pub fn new(code: impl Into<String>) -> Self {
        let code = code.into();
        Self {
            label: code.clone(),
            code,
            unit: String::new(),
        }
    }
}

/// Dated samples × variables with explicit missingness.
///
/// Rows are strictly ascending by date; each row may carry the sample medium
/// code when the source format records it.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<NaiveDate>,
    variables: Vec<Variable>,
    values: Vec<Vec<Option<f64>>>,
    media: Vec<Option<String>>,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        variables: Vec<Variable>,
        values: Vec<Vec<Option<f64>>>,
        media: Option<Vec<Option<String>>>,
    ) -> Result<Self, IngestError> {
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IngestError::MalformedHeader(
                "timestamps must be strictly ascending".into(),
            ));
        }
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.code.as_str()) {
                return Err(IngestError::MalformedHeader(format!(
                    "duplicate variable code {}",
                    v.code
                )));
            }
        }
        if values.len() != timestamps.len() || values.iter().any(|r| r.len() != variables.len()) {
            return Err(IngestError::MalformedHeader(
                "value grid does not match timestamps × variables".into(),
            ));
        }
        let media = media.unwrap_or_else(|| vec![None; timestamps.len()]);
        if media.len() != timestamps.len() {
            return Err(IngestError::MalformedHeader("medium column length mismatch".into()));
        }
        Ok(Self {
            timestamps,
            variables,
            values,
            media,
        })
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn values(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    pub fn media(&self) -> &[Option<String>] {
        &self.media
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn value(&self, row: usize, var: usize) -> Option<f64> {
        self.values[row][var]
    }

    pub fn column_index(&self, code: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.code == code)
    }

    pub fn codes(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.code.as_str()).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    fn select(&self, rows: &[usize], vars: &[usize]) -> TimeSeriesTable {
        TimeSeriesTable {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            variables: vars.iter().map(|&v| self.variables[v].clone()).collect(),
            values: rows
                .iter()
                .map(|&r| vars.iter().map(|&v| self.values[r][v]).collect())
                .collect(),
            media: rows.iter().map(|&r| self.media[r].clone()).collect(),
        }
    }

    /// Dense matrix view; `None` if any cell is missing or the table is empty.
    pub fn to_matrix(&self) -> Option<Matrix> {
        let data: Option<Vec<f64>> = self.values.iter().flatten().copied().collect();
        Matrix::new(self.n_rows(), self.n_vars(), data?).ok()
    }
}

/// Merges parsed records into a table, keyed by date.
pub(crate) struct TableBuilder {
    variables: Vec<Variable>,
    rows: BTreeMap<NaiveDate, (Vec<Option<f64>>, Option<String>)>,
}

impl TableBuilder {
    pub(crate) fn new(variables: Vec<Variable>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.code.clone()) {
                return Err(IngestError::MalformedHeader(format!(
                    "duplicate variable code {}",
                    v.code
                )));
            }
        }
        Ok(Self {
            variables,
            rows: BTreeMap::new(),
        })
    }

    pub(crate) fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub(crate) fn set(&mut self, date: NaiveDate, var: usize, value: Option<f64>) -> Result<(), IngestError> {
        let n = self.variables.len();
        let (row, _) = self.rows.entry(date).or_insert_with(|| (vec![None; n], None));
        match (row[var], value) {
            (Some(_), Some(_)) => Err(IngestError::DuplicateTimestampVariable(
                date,
                self.variables[var].code.clone(),
            )),
            (None, v) => {
                row[var] = v;
                Ok(())
            }
            (Some(_), None) => Ok(()),
        }
    }

    pub(crate) fn touch(&mut self, date: NaiveDate, medium: Option<String>) -> Result<(), IngestError> {
        let n = self.variables.len();
        let (_, m) = self.rows.entry(date).or_insert_with(|| (vec![None; n], None));
        match (m.as_ref(), medium) {
            (Some(old), Some(new)) if *old != new => Err(IngestError::DuplicateTimestampVariable(
                date,
                "medium_cd".into(),
            )),
            (None, new @ Some(_)) => {
                *m = new;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn finish(self) -> TimeSeriesTable {
        let mut timestamps = Vec::with_capacity(self.rows.len());
        let mut values = Vec::with_capacity(self.rows.len());
        let mut media = Vec::with_capacity(self.rows.len());
        for (d, (row, m)) in self.rows {
            timestamps.push(d);
            values.push(row);
            media.push(m);
        }
        TimeSeriesTable {
            timestamps,
            variables: self.variables,
            values,
            media,
        }
    }
}

pub(crate) fn parse_date(s: &str, line: usize) -> Result<NaiveDate, IngestError> {
    let token = s.trim().split(|c: char| c.is_whitespace() || c == 'T').next().unwrap_or("");
    NaiveDate::parse_from_str(token, "%Y-%m-%d").map_err(|_| IngestError::BadDate {
        line,
        value: s.to_string(),
    })
}

/// Sample and variable filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    /// Variables need at least this many observations inside the date range.
    pub min_count: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default)]
    pub required_variable: Option<String>,
    #[serde(default)]
    pub medium_code: Option<String>,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_count < 1 {
            return Err(IngestError::InvalidFilter("min_count must be at least 1".into()));
        }
        if self.start > self.end {
            return Err(IngestError::InvalidFilter(format!(
                "start {} is after end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Applies the row and variable filters of `spec`.
///
/// Rows are dropped first (outside the date range, a different known medium,
/// or missing the required variable); variable counts are then taken over
/// the surviving rows, which makes the filter idempotent. The required
/// variable itself is never dropped by the count rule. Rows with no recorded
/// medium are kept by the medium filter.
pub fn filter_table(t: &TimeSeriesTable, spec: &FilterSpec) -> Result<TimeSeriesTable, IngestError> {
    spec.validate()?;
    let required = match &spec.required_variable {
        Some(code) => Some(
            t.column_index(code)
                .ok_or_else(|| IngestError::UnknownVariable(code.clone()))?,
        ),
        None => None,
    };
    let rows: Vec<usize> = (0..t.n_rows())
        .filter(|&r| {
            let d = t.timestamps[r];
            d >= spec.start && d <= spec.end
        })
        .filter(|&r| match (&spec.medium_code, &t.media[r]) {
            (Some(want), Some(have)) => want == have,
            _ => true,
        })
        .filter(|&r| required.map_or(true, |j| t.values[r][j].is_some()))
        .collect();
    let vars: Vec<usize> = (0..t.n_vars())
        .filter(|&j| {
            Some(j) == required
                || rows.iter().filter(|&&r| t.values[r][j].is_some()).count() >= spec.min_count
        })
        .collect();
    Ok(t.select(&rows, &vars))
}

/// Keeps only rows with no missing cell.
pub fn drop_incomplete_rows(t: &TimeSeriesTable) -> Result<TimeSeriesTable, IngestError> {
    let rows: Vec<usize> = (0..t.n_rows())
        .filter(|&r| t.values[r].iter().all(Option::is_some))
        .collect();
    if rows.is_empty() {
        return Err(IngestError::EmptyResult);
    }
    let vars: Vec<usize> = (0..t.n_vars()).collect();
    Ok(t.select(&rows, &vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn table(cols: &[&str], rows: Vec<(NaiveDate, Vec<Option<f64>>)>) -> TimeSeriesTable {
        let (ts, vals): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        TimeSeriesTable::new(ts, cols.iter().map(|c| Variable::new(*c)).collect(), vals, None).unwrap()
    }

    fn spec(min_count: usize) -> FilterSpec {
        FilterSpec {
            min_count,
            start: d(1900, 1, 1),
            end: d(2100, 1, 1),
            required_variable: None,
            medium_code: None,
        }
    }

    #[test]
    fn sparse_variable_removed() {
        let t = table(
            &["a", "b"],
            (1..=5)
                .map(|i| (d(2000, i, 1), vec![Some(i as f64), if i <= 3 { Some(1.0) } else { None }]))
                .collect(),
        );
        let f = filter_table(&t, &spec(4)).unwrap();
        assert_eq!(f.codes(), vec!["a"]);
        assert_eq!(f.n_rows(), 5);
    }

    #[test]
    fn required_variable_drops_rows() {
        let t = table(
            &["00618", "x"],
            vec![
                (d(2000, 1, 1), vec![Some(1.0), Some(2.0)]),
                (d(2000, 2, 1), vec![None, Some(3.0)]),
                (d(2000, 3, 1), vec![Some(1.5), Some(4.0)]),
            ],
        );
        let mut s = spec(1);
        s.required_variable = Some("00618".into());
        let f = filter_table(&t, &s).unwrap();
        assert_eq!(f.timestamps(), &[d(2000, 1, 1), d(2000, 3, 1)]);

        s.required_variable = Some("99999".into());
        assert!(matches!(filter_table(&t, &s), Err(IngestError::UnknownVariable(c)) if c == "99999"));
    }

    #[test]
    fn date_range_limits_rows_and_counts() {
        // b has 3 observations in total but only 1 inside the range
        let t = table(
            &["a", "b"],
            vec![
                (d(1999, 1, 1), vec![Some(1.0), Some(1.0)]),
                (d(2000, 1, 1), vec![Some(1.0), Some(1.0)]),
                (d(2000, 6, 1), vec![Some(1.0), None]),
                (d(2001, 1, 1), vec![Some(1.0), Some(1.0)]),
            ],
        );
        let mut s = spec(2);
        s.start = d(2000, 1, 1);
        s.end = d(2000, 12, 31);
        let f = filter_table(&t, &s).unwrap();
        assert_eq!(f.n_rows(), 2);
        assert_eq!(f.codes(), vec!["a"]);
    }

    #[test]
    fn invalid_spec_rejected() {
        let t = table(&["a"], vec![(d(2000, 1, 1), vec![Some(1.0)])]);
        let mut s = spec(0);
        assert!(matches!(filter_table(&t, &s), Err(IngestError::InvalidFilter(_))));
        s.min_count = 1;
        s.start = d(2001, 1, 1);
        s.end = d(2000, 1, 1);
        assert!(matches!(filter_table(&t, &s), Err(IngestError::InvalidFilter(_))));
    }

    #[test]
    fn counts_match_hand_tally() {
        // variable j is observed on every row r with (r + 1) % (j + 1) == 0,
        // so across 24 rows it has 24 / (j + 1) observations: 24, 12, 8, 6, 4
        let rows = (0..24)
            .map(|r| {
                let vals = (0..5)
                    .map(|j| if (r + 1) % (j + 1) == 0 { Some(r as f64) } else { None })
                    .collect();
                (d(2000, 1, 1) + chrono::Days::new(r as u64), vals)
            })
            .collect();
        let t = table(&["v0", "v1", "v2", "v3", "v4"], rows);
        assert_eq!(filter_table(&t, &spec(8)).unwrap().codes(), vec!["v0", "v1", "v2"]);
        assert_eq!(filter_table(&t, &spec(5)).unwrap().codes(), vec!["v0", "v1", "v2", "v3"]);
        assert_eq!(filter_table(&t, &spec(25)).unwrap().n_vars(), 0);
    }

    #[test]
    fn drop_incomplete_examples() {
        let rows = (1..=5)
            .map(|i| (d(2000, i, 1), vec![Some(1.0), if i == 3 { Some(2.0) } else { None }]))
            .collect();
        let t = table(&["a", "b"], rows);
        let c = drop_incomplete_rows(&t).unwrap();
        assert_eq!(c.n_rows(), 1);
        assert_eq!(c.timestamps(), &[d(2000, 3, 1)]);
        assert_eq!(drop_incomplete_rows(&c).unwrap(), c);

        let t = table(&["a"], vec![(d(2000, 1, 1), vec![None])]);
        assert!(matches!(drop_incomplete_rows(&t), Err(IngestError::EmptyResult)));
    }

    #[test]
    fn drop_incomplete_counts_complete_rows() {
        // row r is missing column r % 4 when r % 3 == 0: rows 0,3,...,27 → 10 incomplete
        let rows = (0..30)
            .map(|r| {
                let vals = (0..4)
                    .map(|j| if r % 3 == 0 && r % 4 == j { None } else { Some(1.0) })
                    .collect();
                (d(2000, 1, 1) + chrono::Days::new(r as u64), vals)
            })
            .collect();
        let t = table(&["a", "b", "c", "e"], rows);
        let c = drop_incomplete_rows(&t).unwrap();
        assert_eq!(c.n_rows(), 20);
        assert_eq!(c.missing_count(), 0);
    }

    #[test]
    fn table_invariants_enforced() {
        let r = TimeSeriesTable::new(
            vec![d(2000, 1, 2), d(2000, 1, 1)],
            vec![Variable::new("a")],
            vec![vec![None], vec![None]],
            None,
        );
        assert!(r.is_err());
        let r = TimeSeriesTable::new(
            vec![d(2000, 1, 1)],
            vec![Variable::new("a"), Variable::new("a")],
            vec![vec![None, None]],
            None,
        );
        assert!(r.is_err());
    }

    fn arb_table() -> impl Strategy<Value = TimeSeriesTable> {
        (1usize..5, 1usize..30).prop_flat_map(|(nv, nr)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.7, -10.0f64..10.0), nv),
                nr,
            )
            .prop_map(move |vals| {
                let ts = (0..vals.len())
                    .map(|i| d(1995, 1, 1) + chrono::Days::new(40 * i as u64))
                    .collect();
                let vars = (0..nv).map(|j| Variable::new(format!("v{j}"))).collect();
                TimeSeriesTable::new(ts, vars, vals, None).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(t in arb_table(), min_count in 1usize..10, req in proptest::bool::ANY) {
            let s = FilterSpec {
                min_count,
                start: d(1996, 1, 1),
                end: d(1997, 12, 31),
                required_variable: if req { Some("v0".into()) } else { None },
                medium_code: None,
            };
            let once = filter_table(&t, &s).unwrap();
            let twice = filter_table(&once, &s).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn complete_rows_have_no_missing_cells(t in arb_table()) {
            if let Ok(c) = drop_incomplete_rows(&t) {
                prop_assert_eq!(c.missing_count(), 0);
                prop_assert_eq!(c.n_vars(), t.n_vars());
            }
        }
    }
}
