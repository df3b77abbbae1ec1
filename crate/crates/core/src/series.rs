//! The audited object: a timestamped `T x N` panel with a missingness mask.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// On-disk formats accepted by [`load_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesFormat {
    /// First column is time, header row holds names, empty field means missing.
    CsvWithTimeColumn,
    /// `{"timestamps": [...], "values": [[...], ...], "names": [...]}` with `null` for missing.
    JsonMatrix,
}

impl SeriesFormat {
    /// Guess the format from a file extension (`.json` is JSON, everything else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => SeriesFormat::JsonMatrix,
            _ => SeriesFormat::CsvWithTimeColumn,
        }
    }
}

/// Multivariate time series with `T` rows (time points) and `N` columns (variables).
///
/// Values are stored row-major. Masked cells hold `0.0` internally and must never
/// be read as data; use [`TimeSeriesMatrix::get`] or the observed-column helpers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "JsonMatrix", try_from = "JsonMatrix")]
pub struct TimeSeriesMatrix {
    timestamps: Vec<f64>,
    values: Vec<f64>,
    mask: Vec<bool>,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct JsonMatrix {
    timestamps: Vec<f64>,
    values: Vec<Vec<Option<f64>>>,
    names: Vec<String>,
}

impl From<TimeSeriesMatrix> for JsonMatrix {
    fn from(m: TimeSeriesMatrix) -> Self {
        let values = (0..m.n_rows())
            .map(|i| (0..m.n_cols()).map(|j| m.get(i, j)).collect())
            .collect();
        JsonMatrix {
            timestamps: m.timestamps,
            values,
            names: m.names,
        }
    }
}

impl TryFrom<JsonMatrix> for TimeSeriesMatrix {
    type Error = AuditError;

    fn try_from(doc: JsonMatrix) -> Result<Self> {
        Self::from_rows(doc.timestamps, doc.values, doc.names)
    }
}

impl TimeSeriesMatrix {
    /// Build from rows of optional values (`None` = missing).
    pub fn from_rows(
        timestamps: Vec<f64>,
        rows: Vec<Vec<Option<f64>>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = names.len();
        if rows.len() != timestamps.len() {
            return Err(AuditError::Parse(format!(
                "{} timestamps but {} rows",
                timestamps.len(),
                rows.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut mask = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(AuditError::Parse(format!(
                    "row {i} has {} fields, expected {n}",
                    row.len()
                )));
            }
            for cell in row {
                match cell {
                    Some(v) if v.is_finite() => {
                        values.push(*v);
                        mask.push(false);
                    }
                    Some(v) => {
                        return Err(AuditError::Parse(format!("non-finite value {v} in row {i}")))
                    }
                    None => {
                        values.push(0.0);
                        mask.push(true);
                    }
                }
            }
        }
        Self::from_parts(timestamps, values, mask, names)
    }

    /// Build from a dense row-major matrix and a mask (`true` = missing).
    pub fn from_parts(
        timestamps: Vec<f64>,
        mut values: Vec<f64>,
        mask: Vec<bool>,
        names: Vec<String>,
    ) -> Result<Self> {
        let t = timestamps.len();
        let n = names.len();
        if n == 0 {
            return Err(AuditError::DegenerateSeries("no variables".into()));
        }
        if values.len() != t * n || mask.len() != t * n {
            return Err(AuditError::Parse(format!(
                "value/mask length mismatch: expected {}",
                t * n
            )));
        }
        if t < 2 {
            return Err(AuditError::DegenerateSeries(format!("T = {t} < 2")));
        }
        if let Some(bad) = timestamps.iter().position(|x| !x.is_finite()) {
            return Err(AuditError::Parse(format!("non-finite timestamp at row {bad}")));
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(AuditError::NonMonotoneTime { row: row + 1 });
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(AuditError::Parse("non-finite observed value".into()));
            }
        }
        let out = Self {
            timestamps,
            values,
            mask,
            names,
        };
        for j in 0..n {
            let obs = out.observed_count(j);
            if obs < 2 {
                return Err(AuditError::DegenerateSeries(format!(
                    "column '{}' has {obs} observed entries",
                    out.names[j]
                )));
            }
        }
        Ok(out)
    }

    /// Fully observed panel from column vectors on unit-spaced integer times.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        if n == 0 {
            return Err(AuditError::DegenerateSeries("no variables".into()));
        }
        let t = columns[0].len();
        if columns.iter().any(|c| c.len() != t) {
            return Err(AuditError::Parse("columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(t * n);
        for i in 0..t {
            for c in columns {
                values.push(c[i]);
            }
        }
        let names = (0..n).map(|j| format!("x{j}")).collect();
        Self::from_parts(
            (0..t).map(|i| i as f64).collect(),
            values,
            vec![false; t * n],
            names,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.n_cols() + col]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.n_cols() + col;
        if self.mask[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    pub fn observed_count(&self, col: usize) -> usize {
        (0..self.n_rows()).filter(|&i| !self.is_missing(i, col)).count()
    }

    /// Observed values of one column in time order, masked rows dropped.
    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).filter_map(|i| self.get(i, col)).collect()
    }

    /// Timestamps at which a column is observed.
    pub fn observed_times(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .filter(|&i| !self.is_missing(i, col))
            .map(|i| self.timestamps[i])
            .collect()
    }

    /// Indices of rows with every variable observed.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| (0..self.n_cols()).all(|j| !self.is_missing(i, j)))
            .collect()
    }

    /// Lagged design over rows where step `t` and its `p` predecessors are all complete.
    ///
    /// Returns `(current, lagged)`: `current[r]` is the row at step `t`,
    /// `lagged[r]` concatenates the rows at `t-1, ..., t-p`.
    pub fn complete_case_lags(&self, p: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let complete: Vec<bool> = (0..self.n_rows())
            .map(|i| (0..self.n_cols()).all(|j| !self.is_missing(i, j)))
            .collect();
        let mut current = Vec::new();
        let mut lagged = Vec::new();
        for t in p..self.n_rows() {
            if (t - p..=t).all(|i| complete[i]) {
                current.push(self.raw_row(t).to_vec());
                lagged.push((1..=p).flat_map(|l| self.raw_row(t - l).iter().copied()).collect());
            }
        }
        (current, lagged)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.mask.len() as f64
    }

    /// Row `i` as a slice; masked cells read as `0.0`.
    pub fn raw_row(&self, row: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| AuditError::Parse(e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(AuditError::Parse(
                "expected a time column and at least one variable".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut timestamps = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| AuditError::Parse(e.to_string()))?;
            let time = rec
                .get(0)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|_| AuditError::Parse(format!("bad time value in data row {}", i + 1)))?;
            timestamps.push(time);
            let row = rec
                .iter()
                .skip(1)
                .map(|field| {
                    if field.is_empty() {
                        Ok(None)
                    } else {
                        field.parse::<f64>().map(Some).map_err(|_| {
                            AuditError::Parse(format!("bad value '{field}' in data row {}", i + 1))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(timestamps, rows, names)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n_rows() {
            out.push_str(&format!("{}", self.timestamps[i]));
            for j in 0..self.n_cols() {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Read and validate a series from disk.
pub fn load_series(path: &Path, format: SeriesFormat) -> Result<TimeSeriesMatrix> {
    let text = std::fs::read_to_string(path)?;
    match format {
        SeriesFormat::JsonMatrix => TimeSeriesMatrix::from_json_str(&text),
        SeriesFormat::CsvWithTimeColumn => TimeSeriesMatrix::from_csv_reader(text.as_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<TimeSeriesMatrix> {
        TimeSeriesMatrix::from_csv_reader(text.as_bytes())
    }

    #[test]
    fn three_by_two_csv() {
        let s = csv("time,a,b\n0,1.0,2.0\n1,1.5,2.5\n2,0.5,3.0\n").unwrap();
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.n_cols(), 2);
        assert_eq!(s.missing_count(), 0);
        assert_eq!(s.get(2, 1), Some(3.0));
    }

    #[test]
    fn non_monotone_time_rejected() {
        let err = csv("time,a\n0,1\n2,2\n1,3\n").unwrap_err();
        assert!(matches!(err, AuditError::NonMonotoneTime { row: 2 }));
    }

    #[test]
    fn empty_cell_is_masked() {
        let s = csv("time,a,b\n0,1,2\n1,,4\n2,5,6\n").unwrap();
        assert!(s.is_missing(1, 0));
        assert_eq!(s.get(1, 0), None);
        assert_eq!(s.get(1, 1), Some(4.0));
        assert_eq!(s.get(0, 0), Some(1.0));
        assert_eq!(s.get(2, 0), Some(5.0));
        assert_eq!(s.missing_count(), 1);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            csv("time,a\n0,1\n").unwrap_err(),
            AuditError::DegenerateSeries(_)
        ));
        assert!(matches!(
            csv("time,a,b\n0,1,\n1,2,\n2,3,4\n").unwrap_err(),
            AuditError::DegenerateSeries(_)
        ));
        assert!(matches!(csv("time,a\n0,x\n1,2\n").unwrap_err(), AuditError::Parse(_)));
    }

    #[test]
    fn json_round_trip_keeps_mask() {
        let s = csv("time,a,b\n0,0.1,2\n1.5,,4\n2,5,0.30000000000000004\n").unwrap();
        let back = TimeSeriesMatrix::from_json_str(&s.to_json_string().unwrap()).unwrap();
        assert_eq!(s, back);
    }
}
