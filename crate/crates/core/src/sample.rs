//! Point samples, borrowed views, coresets and CSV I/O.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An owned sequence of `n` points in `d` dimensions, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form a non-empty sample of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        let n = data.len() / d;
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            data: &self.data,
            n: self.n,
            d: self.d,
        }
    }

    /// Concatenation of `self` followed by `other`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        self.view().concat(&other.view())
    }
}

/// A borrowed, contiguous run of rows.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    data: &'a [f64],
    n: usize,
    d: usize,
}

impl<'a> SampleView<'a> {
    pub fn new(data: &'a [f64], d: usize) -> Self {
        assert!(d > 0 && data.len().is_multiple_of(d), "ragged sample view");
        Self {
            data,
            n: data.len() / d,
            d,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }

    pub fn rows(&self, start: usize, end: usize) -> SampleView<'a> {
        SampleView {
            data: &self.data[start * self.d..end * self.d],
            n: end - start,
            d: self.d,
        }
    }

    pub fn to_owned(&self) -> Sample {
        Sample {
            data: self.data.to_vec(),
            n: self.n,
            d: self.d,
        }
    }

    /// Copies the rows named by `indices`, in order.
    pub fn gather(&self, indices: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Sample {
            data,
            n: indices.len(),
            d: self.d,
        }
    }

    pub fn concat(&self, other: &SampleView<'_>) -> Result<Sample> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(self.data);
        data.extend_from_slice(other.data);
        Ok(Sample {
            data,
            n: self.n + other.n,
            d: self.d,
        })
    }
}

/// Splits a sample into `bins` contiguous, equal-sized, order-preserving views.
pub fn bin_partition(sample: SampleView<'_>, bins: usize) -> Result<Vec<SampleView<'_>>> {
    if bins == 0 || !sample.n().is_multiple_of(bins) {
        return Err(Error::IndivisibleBinning {
            n: sample.n(),
            bins,
        });
    }
    let size = sample.n() / bins;
    Ok((0..bins)
        .map(|b| sample.rows(b * size, (b + 1) * size))
        .collect())
}

/// An ordered subset of a parent sample, as row indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coreset {
    indices: Vec<usize>,
    parent_len: usize,
}

impl Coreset {
    pub fn new(indices: Vec<usize>, parent_len: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= parent_len {
                return Err(Error::InvalidParameter(format!(
                    "coreset index {i} out of range for parent of {parent_len} points"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidParameter(format!("duplicate coreset index {i}")));
            }
        }
        Ok(Self {
            indices,
            parent_len,
        })
    }

    pub(crate) fn from_trusted(indices: Vec<usize>, parent_len: usize) -> Self {
        debug_assert!(Coreset::new(indices.clone(), parent_len).is_ok());
        Self {
            indices,
            parent_len,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }

    /// Indices of the parent that are not in this coreset, in parent order.
    pub fn complement(&self) -> Coreset {
        let mut inside = vec![false; self.parent_len];
        for &i in &self.indices {
            inside[i] = true;
        }
        let rest = (0..self.parent_len).filter(|&i| !inside[i]).collect();
        Coreset {
            indices: rest,
            parent_len: self.parent_len,
        }
    }

    pub fn points(&self, parent: SampleView<'_>) -> Sample {
        assert_eq!(parent.n(), self.parent_len, "coreset applied to wrong parent");
        parent.gather(&self.indices)
    }
}

/// Reads one point per CSV row. All rows must have the same width; values
/// must be finite.
pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut d = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        match d {
            None => d = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::DimensionMismatch {
                    expected: w,
                    got: record.len(),
                })
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}, column {col}: {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            data.push(v);
        }
    }
    let d = d.ok_or_else(|| Error::Parse("empty sample file".into()))?;
    Sample::new(data, d)
}

pub fn read_csv_path(path: impl AsRef<Path>, has_header: bool) -> Result<Sample> {
    read_csv(std::fs::File::open(path)?, has_header)
}

/// Writes rows with round-trip float formatting.
pub fn write_csv<W: Write>(writer: W, sample: SampleView<'_>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    for i in 0..sample.n() {
        wtr.write_record(sample.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}
