use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` observations of a `d`-dimensional random vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("observations must have dimension ≥ 1"));
        }
        let mut values = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { values, n, d })
    }

    /// Scalar observations (`d = 1`).
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::from_flat(xs.to_vec(), 1)
    }

    pub fn from_flat(values: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("observations must have dimension ≥ 1"));
        }
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if !values.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: values.len() % d,
            });
        }
        let n = values.len() / d;
        Ok(Self { values, n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    /// Borrowed view of the selected observations, in the given order.
    pub fn select<'a>(&'a self, indices: &[usize]) -> Vec<&'a [f64]> {
        indices.iter().map(|&i| self.row(i)).collect()
    }

    pub fn all(&self) -> Vec<&[f64]> {
        self.rows().collect()
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Dataset::from_flat(values, self.d)
    }

    /// Observations `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if start >= end || end > self.n {
            return Err(Error::invalid(format!(
                "row range {start}..{end} invalid for n = {}",
                self.n
            )));
        }
        Dataset::from_flat(self.values[start * self.d..end * self.d].to_vec(), self.d)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Dataset {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Dataset::from_rows(rows)
    }
}

impl From<Dataset> for Vec<Vec<f64>> {
    fn from(d: Dataset) -> Self {
        d.rows().map(|r| r.to_vec()).collect()
    }
}
