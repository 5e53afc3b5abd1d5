//! Uniformly sampled vector time series.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered `dim`-dimensional samples taken every `step` time units.
///
/// Sample `k` sits at time index `origin_index + k`. Samples are stored
/// row-major in a single buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dim: usize,
    step: f64,
    origin_index: i64,
    data: Vec<f64>,
}

impl TimeSeries {
    /// Creates an empty series.
    pub fn new(dim: usize, step: f64) -> Result<Self> {
        Self::with_origin(dim, step, 0)
    }

    pub fn with_origin(dim: usize, step: f64, origin_index: i64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("time series dimension must be positive".into()));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {step}")));
        }
        Ok(Self { dim, step, origin_index, data: Vec::new() })
    }

    /// Builds a series from a list of samples.
    pub fn from_samples<S: AsRef<[f64]>>(dim: usize, step: f64, samples: &[S]) -> Result<Self> {
        let mut ts = Self::new(dim, step)?;
        for s in samples {
            ts.push(s.as_ref())?;
        }
        Ok(ts)
    }

    /// Scalar series.
    pub fn from_scalars(step: f64, values: &[f64]) -> Result<Self> {
        let mut ts = Self::new(1, step)?;
        ts.data.reserve(values.len());
        for &v in values {
            ts.push(&[v])?;
        }
        Ok(ts)
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::Dimension { context: "time series sample", expected: self.dim, found: sample.len() });
        }
        if let Some(bad) = sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at coordinate {bad} of sample {}",
                self.len()
            )));
        }
        self.data.extend_from_slice(sample);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn last(&self) -> Option<&[f64]> {
        if self.is_empty() {
            None
        } else {
            Some(self.sample(self.len() - 1))
        }
    }

    /// Coordinate `i` of every sample.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.samples().map(|s| s[i]).collect()
    }

    /// Time of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        (self.origin_index as f64) * self.step + (k as f64) * self.step
    }

    /// Sub-series `[start, end)` keeping the absolute time index.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::OutOfRange(format!("slice {start}..{end} of a series of length {}", self.len())));
        }
        Ok(Self {
            dim: self.dim,
            step: self.step,
            origin_index: self.origin_index + start as i64,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        })
    }

    /// `len × dim` matrix with one sample per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn sample_vector(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.sample(k))
    }

    pub(crate) fn from_raw(dim: usize, step: f64, origin_index: i64, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        Self { dim, step, origin_index, data }
    }

    /// Writes `t,x0,...,x{d-1}` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.dim).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (k, s) in self.samples().enumerate() {
            write!(out, "{}", fmt_f64(self.time(k)))?;
            for v in s {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`TimeSeries::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let dim = header.split(',').count().saturating_sub(1);
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Dimension { context: "CSV row", expected: dim + 1, found: fields.len() });
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("row {row}: {e}")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                data.push(parse(f)?);
            }
        }
        let step = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
        let origin_index = times.first().map(|t| (t / step).round() as i64).unwrap_or(0);
        let mut ts = Self::with_origin(dim, step, origin_index)?;
        ts.data = data;
        Ok(ts)
    }
}

/// Full-precision formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_samples() {
        let mut ts = TimeSeries::new(2, 0.1).unwrap();
        assert!(ts.push(&[1.0]).is_err());
        assert!(ts.push(&[1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(2, 0.0).is_err());
        assert!(TimeSeries::new(0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ts = TimeSeries::from_samples(2, 0.01, &[[1.0, -2.5], [0.1, 3.0], [1e-300, 7.0]]).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x0,x1\n"));
        let back = TimeSeries::read_csv(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.sample(2), ts.sample(2));
    }

    #[test]
    fn slice_keeps_absolute_time() {
        let ts = TimeSeries::from_scalars(0.5, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let s = ts.slice(2, 4).unwrap();
        assert_eq!(s.origin_index(), 2);
        assert_eq!(s.time(0), 1.0);
        assert!(ts.slice(3, 5).is_err());
    }
}
