//! Row-major feature matrices and their binary file format.
//!
//! Layout: magic `TGRK`, `u32` version (1), `u64` rows, `u64` dim, then
//! `rows * dim` little-endian `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const MATRIX_MAGIC: &[u8; 4] = b"TGRK";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    VisualRetrieval,
    SceneVisual,
    /// Flattened 8-bit grayscale images (values 0..=255), one per row.
    SaliencyGray,
    /// Per-tag textual features used for retrieval.
    Textual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
    role: MatrixRole,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>, role: MatrixRole) -> Result<Self> {
        if rows.checked_mul(dim) != Some(values.len()) {
            return Err(Error::argument(format!(
                "{} values cannot form a {rows}x{dim} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::argument(format!("non-finite value at element {i}")));
        }
        Ok(Self {
            rows,
            dim,
            values,
            role,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], role: MatrixRole) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::argument("ragged rows"));
        }
        Self::new(rows.len(), dim, rows.concat(), role)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> MatrixRole {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn try_row(&self, i: usize) -> Result<&[f64]> {
        if i >= self.rows {
            return Err(Error::Index(format!("row {i} of a {}-row matrix", self.rows)));
        }
        Ok(self.row(i))
    }

    pub fn read_from<R: Read>(reader: R, role: MatrixRole) -> Result<Self> {
        let mut r = BinReader::new(reader);
        r.magic(MATRIX_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != MATRIX_VERSION {
            return Err(Error::format(at, format!("unsupported version {version}")));
        }
        let rows = r.usize("row count")?;
        let dim = r.usize("dimension")?;
        let total = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::format(HEADER_BYTES, "matrix size overflows"))?;
        let mut values = Vec::with_capacity(total.min(1 << 24));
        for i in 0..total {
            let at = r.offset();
            let v = f64::from_le_bytes(r.bytes(&format!("element {i} of {total}"))?);
            if !v.is_finite() {
                return Err(Error::format(at, format!("non-finite value at element {i}")));
            }
            values.push(v);
        }
        r.finish()?;
        Ok(Self {
            rows,
            dim,
            values,
            role,
        })
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BinWriter::new(writer);
        w.raw(MATRIX_MAGIC)?;
        w.u32(MATRIX_VERSION)?;
        w.usize(self.rows)?;
        w.usize(self.dim)?;
        w.f64_slice(&self.values)?;
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

pub fn load_feature_matrix(path: impl AsRef<Path>, role: MatrixRole) -> Result<FeatureMatrix> {
    FeatureMatrix::read_from(BufReader::new(File::open(path)?), role)
}
