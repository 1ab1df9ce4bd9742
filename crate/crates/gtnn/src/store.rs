//! Vector store: fixed-dimension unit-norm feature vectors, held in memory
//! and persisted in a flat binary container (magic `GTNN`).
//!
//! Vectors are non-negative unless the store was created with
//! `allow_negative`. Ids are 1-based and assigned in insertion order; the
//! on-disk payload is row-major little-endian `f32`, so files append cleanly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use crate::container::{self, Header, FLAG_ALLOW_NEGATIVE, MAGIC_STORE, VERSION};
use crate::error::{Error, Result};

/// Maximum tolerated drift of a stored vector's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A single unit-norm feature vector.
///
/// Values are kept in `f32` (matching the on-disk layout); all arithmetic on
/// them is carried out in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
}

impl FeatureVector {
    /// Validates and L2-normalizes `values` into a unit vector.
    ///
    /// Rejects non-finite values, negative values (unless `allow_negative`),
    /// and zero-norm input.
    pub fn normalize(values: &[f64], allow_negative: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ZeroVector);
        }
        let mut norm_sq = 0.0f64;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { position: i + 1 });
            }
            if !allow_negative && v < 0.0 {
                return Err(Error::NegativeValue { position: i + 1, value: v });
            }
            norm_sq += v * v;
        }
        let norm = norm_sq.sqrt();
        if norm < f64::MIN_POSITIVE {
            return Err(Error::ZeroVector);
        }
        let values = values.iter().map(|&v| (v / norm) as f32).collect();
        Ok(FeatureVector { values })
    }

    /// Wraps values that are already unit-norm and validated.
    pub(crate) fn from_unit(values: Vec<f32>) -> Self {
        FeatureVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn has_negative(&self) -> bool {
        self.values.iter().any(|&v| v < 0.0)
    }

    /// Inner product with another vector, accumulated in `f64`.
    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(dot64(&self.values, &other.values))
    }
}

/// Inner product of two equal-length `f32` slices accumulated in `f64`.
pub(crate) fn dot64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

/// An append-only collection of unit-norm vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    allow_negative: bool,
    data: Vec<f32>, // row-major, len = count * dim
}

impl VectorStore {
    /// Creates an empty store of dimension `dim` (>= 1).
    pub fn new(dim: usize, allow_negative: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", value: 0.0 });
        }
        Ok(VectorStore { dim, allow_negative, data: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn allow_negative(&self) -> bool {
        self.allow_negative
    }

    /// Normalizes and appends a raw vector; returns its 1-based id.
    pub fn append(&mut self, values: &[f64]) -> Result<usize> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: values.len() });
        }
        let v = FeatureVector::normalize(values, self.allow_negative)?;
        self.data.extend_from_slice(v.values());
        Ok(self.len())
    }

    /// Appends an already-normalized vector; returns its 1-based id.
    pub fn append_vector(&mut self, v: &FeatureVector) -> Result<usize> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: v.dim() });
        }
        if !self.allow_negative && v.has_negative() {
            let pos = v.values().iter().position(|&x| x < 0.0).unwrap();
            return Err(Error::NegativeValue { position: pos + 1, value: v.values()[pos] as f64 });
        }
        self.data.extend_from_slice(v.values());
        Ok(self.len())
    }

    /// Returns a copy of vector `id` (1-based).
    pub fn get(&self, id: usize) -> Result<FeatureVector> {
        Ok(FeatureVector::from_unit(self.row(id)?.to_vec()))
    }

    /// Borrows the raw values of vector `id` (1-based).
    pub fn row(&self, id: usize) -> Result<&[f32]> {
        let count = self.len();
        if id == 0 || id > count {
            return Err(Error::IdOutOfRange { id, count });
        }
        Ok(&self.data[(id - 1) * self.dim..id * self.dim])
    }

    /// Iterates over rows in id order.
    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Replaces row `id` in place (used when planting synthetic neighbors).
    pub(crate) fn replace_row(&mut self, id: usize, v: &FeatureVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: v.dim() });
        }
        let count = self.len();
        if id == 0 || id > count {
            return Err(Error::IdOutOfRange { id, count });
        }
        self.data[(id - 1) * self.dim..id * self.dim].copy_from_slice(v.values());
        Ok(())
    }

    /// Writes the store to `path` (magic `GTNN`, version 1).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            version: VERSION,
            flags: if self.allow_negative { FLAG_ALLOW_NEGATIVE } else { 0 },
            dim: self.dim as u32,
            count: self.len() as u64,
        };
        container::write_header(&mut w, MAGIC_STORE, &header)?;
        container::write_f32s(&mut w, &self.data)?;
        Ok(())
    }

    /// Reads a store from `path`.
    ///
    /// Rows whose norm drifted further than [`NORM_TOLERANCE`] from 1 are
    /// re-normalized; rows violating the sign contract or containing
    /// non-finite values are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = container::read_header(&mut r, MAGIC_STORE)?;
        let dim = header.dim as usize;
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", value: 0.0 });
        }
        let count = header.count as usize;
        let mut data = container::read_f32s(&mut r, count * dim)?;
        let allow_negative = header.allow_negative();
        for (row_idx, row) in data.chunks_exact_mut(dim).enumerate() {
            let mut norm_sq = 0.0f64;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { position: row_idx * dim + j + 1 });
                }
                if !allow_negative && v < 0.0 {
                    return Err(Error::NegativeValue {
                        position: row_idx * dim + j + 1,
                        value: v as f64,
                    });
                }
                norm_sq += v as f64 * v as f64;
            }
            let norm = norm_sq.sqrt();
            if norm < f64::MIN_POSITIVE {
                return Err(Error::ZeroVector);
            }
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                for v in row.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
        Ok(VectorStore { dim, allow_negative, data })
    }

    /// Imports vectors from text: one vector per line, whitespace-separated
    /// decimals. Every vector is normalized; empty lines are skipped. The
    /// dimension is taken from the first vector line.
    pub fn import_text<R: BufRead>(reader: R, allow_negative: bool) -> Result<Self> {
        let mut store: Option<VectorStore> = None;
        for (line_no, line) in reader.lines().enumerate() {
            let line_no = line_no + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for tok in trimmed.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("not a number: {tok:?}"),
                })?;
                values.push(v);
            }
            let store = match &mut store {
                Some(s) => {
                    if values.len() != s.dim() {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "expected {} values, got {}",
                                s.dim(),
                                values.len()
                            ),
                        });
                    }
                    s
                }
                None => store.insert(VectorStore::new(values.len(), allow_negative)?),
            };
            store.append(&values).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        store.ok_or(Error::Parse { line: 0, message: "no vectors found".into() })
    }
}
