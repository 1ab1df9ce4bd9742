//! Prefix-sum pool index: cumulative vector sums that let any contiguous
//! pool's aggregate dot product be recovered from two lookups.
//!
//! Row `i` holds the running sum of store rows `1..=i`, accumulated and kept
//! in `f64` (the store itself is `f32`). The dot product of a query with the
//! pooled sum over `[si, ei]` is then `q . (prefix[ei] - prefix[si-1])`, with
//! `prefix[0]` an implicit zero vector — one subtraction and one dot product
//! regardless of pool width.
//!
//! The pooled-sum pruning rule is only sound when every query/store value is
//! non-negative, so this index rejects negative data outright; stores flagged
//! `allow_negative` are accepted as long as their contents are in fact
//! non-negative.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::container::{self, Header, MAGIC_SUM, VERSION};
use crate::error::{Error, Result};
use crate::store::{FeatureVector, VectorStore};

/// Prefix-sum index over a vector store (pooling by vector addition).
#[derive(Debug, Clone, PartialEq)]
pub struct SumIndex {
    dim: usize,
    prefix: Vec<f64>, // row-major, len = count * dim; row i = sum of rows 1..=i
    element_adds: u64,
}

impl SumIndex {
    /// Builds the index by appending every store row in id order.
    pub fn build(store: &VectorStore) -> Result<Self> {
        let mut index = SumIndex { dim: store.dim(), prefix: Vec::new(), element_adds: 0 };
        index.prefix.reserve(store.len() * store.dim());
        for row in store.rows() {
            index.push_row(row)?;
        }
        Ok(index)
    }

    /// Appends one vector: the new prefix row is the previous row plus `values`,
    /// costing exactly `dim` element additions (none for the very first row,
    /// which is a copy). Returns the new count.
    pub fn append(&mut self, values: &[f32]) -> Result<usize> {
        self.push_row(values)?;
        Ok(self.len())
    }

    fn push_row(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: values.len() });
        }
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { position: j + 1 });
            }
            if v < 0.0 {
                return Err(Error::NegativeValue { position: j + 1, value: v as f64 });
            }
        }
        let count = self.len();
        if count == 0 {
            self.prefix.extend(values.iter().map(|&v| v as f64));
        } else {
            let start = (count - 1) * self.dim;
            for j in 0..self.dim {
                let sum = self.prefix[start + j] + values[j] as f64;
                self.prefix.push(sum);
            }
            self.element_adds += self.dim as u64;
        }
        Ok(())
    }

    /// Number of indexed vectors.
    pub fn len(&self) -> usize {
        self.prefix.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total element additions performed by appends so far (instrumentation).
    pub fn element_adds(&self) -> u64 {
        self.element_adds
    }

    /// Dot product of `q` with the pooled (summed) vector over `[si, ei]`,
    /// 1-based inclusive.
    pub fn pool_dot(&self, q: &FeatureVector, si: usize, ei: usize) -> Result<f64> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: q.dim() });
        }
        let count = self.len();
        if si == 0 || si > ei || ei > count {
            return Err(Error::InvalidRange { si, ei, count });
        }
        Ok(self.range_dot(q.values(), si, ei))
    }

    /// Unchecked pool dot product used on the search hot path.
    pub(crate) fn range_dot(&self, q: &[f32], si: usize, ei: usize) -> f64 {
        let hi = &self.prefix[(ei - 1) * self.dim..ei * self.dim];
        let mut acc = 0.0f64;
        if si == 1 {
            for (x, y) in q.iter().zip(hi) {
                acc += *x as f64 * y;
            }
        } else {
            let lo = &self.prefix[(si - 2) * self.dim..(si - 1) * self.dim];
            for ((x, h), l) in q.iter().zip(hi).zip(lo) {
                acc += *x as f64 * (h - l);
            }
        }
        acc
    }

    /// Writes the index to `path` (magic `GTNS`; payload is `f64` prefix rows).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            version: VERSION,
            flags: 0,
            dim: self.dim as u32,
            count: self.len() as u64,
        };
        container::write_header(&mut w, MAGIC_SUM, &header)?;
        container::write_f64s(&mut w, &self.prefix)?;
        Ok(())
    }

    /// Reads an index from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = container::read_header(&mut r, MAGIC_SUM)?;
        let dim = header.dim as usize;
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", value: 0.0 });
        }
        let count = header.count as usize;
        let prefix = container::read_f64s(&mut r, count * dim)?;
        for (i, &v) in prefix.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { position: i + 1 });
            }
        }
        Ok(SumIndex { dim, prefix, element_adds: 0 })
    }
}
