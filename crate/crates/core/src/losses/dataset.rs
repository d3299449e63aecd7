use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Feature matrix (row-major) plus integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    bias_appended: bool,
}

impl Dataset {
    /// Builds a dataset from rows. When `append_bias` is set, a trailing
    /// `1.0` is appended to every row.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>, append_bias: bool) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(rows, labels, num_classes.max(1), append_bias)
    }

    pub fn with_classes(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        append_bias: bool,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("dataset needs at least one sample"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let raw_dim = rows[0].len();
        let dim = raw_dim + usize::from(append_bias);
        if dim == 0 {
            return Err(Error::Empty("samples need at least one feature"));
        }
        let mut features = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != raw_dim {
                return Err(Error::DimensionMismatch {
                    expected: raw_dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse("non-finite feature value".into()));
            }
            features.extend_from_slice(row);
            if append_bias {
                features.push(1.0);
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            bias_appended: append_bias,
        })
    }

    /// Reads `d` feature columns followed by an integer label per row. A
    /// first row that does not parse as numbers is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R, append_bias: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::Parse(format!(
                    "row {}: expected at least one feature and a label",
                    line + 1
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> = record
                .iter()
                .take(record.len() - 1)
                .map(str::parse::<f64>)
                .collect();
            let label = record[record.len() - 1].parse::<usize>();
            match (parsed, label) {
                (Ok(row), Ok(y)) => {
                    rows.push(row);
                    labels.push(y);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "row {}: could not parse features/label",
                        line + 1
                    )))
                }
            }
        }
        Self::from_rows(rows, labels, append_bias)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, append_bias: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, append_bias)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row width, including the bias coordinate when present.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn bias_appended(&self) -> bool {
        self.bias_appended
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Row without the appended bias coordinate.
    pub fn raw_row(&self, i: usize) -> &[f64] {
        let r = self.row(i);
        if self.bias_appended {
            &r[..r.len() - 1]
        } else {
            r
        }
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Overrides the class count (e.g. to align train and test splits).
    pub fn set_num_classes(&mut self, m: usize) -> Result<()> {
        if self.labels.iter().any(|&y| y >= m) {
            return Err(Error::InvalidConfig(format!("class count {m} too small")));
        }
        self.num_classes = m;
        Ok(())
    }
}
