//! Pseudo-label file:
//!
//! ```text
//! b"HPPL"  u32 LE header length  JSON header  count x 3 x num_bins f32 LE
//! ```
//!
//! Header: `{"version", "count", "num_bins", "teacher_names", "ids"}`. Rows are
//! yaw, pitch, roll per sample, samples in record order.

use std::path::Path;

use serde_json::json;

use crate::codec::BinGrid;
use crate::error::{Error, Result};
use crate::losses::PseudoLabel;
use crate::model::container;

pub const PSEUDO_MAGIC: &[u8; 4] = b"HPPL";
pub const PSEUDO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelStore {
    pub teacher_names: Vec<String>,
    /// Sample id per label.
    pub ids: Vec<String>,
    pub labels: Vec<PseudoLabel>,
}

impl PseudoLabelStore {
    pub fn num_bins(&self) -> usize {
        self.labels.first().map(|l| l.rows[0].len()).unwrap_or(0)
    }

    pub fn to_bytes(&self, grid: &BinGrid) -> Result<Vec<u8>> {
        if self.ids.len() != self.labels.len() {
            return Err(Error::invalid("data", format!("{} ids for {} pseudo-labels", self.ids.len(), self.labels.len())));
        }
        let bins = grid.num_bins();
        let mut flat = Vec::with_capacity(self.labels.len() * 3 * bins);
        for (id, label) in self.ids.iter().zip(&self.labels) {
            for row in &label.rows {
                if row.len() != bins {
                    return Err(Error::invalid("data", format!("pseudo-label for {id} has {} bins, grid has {bins}", row.len())));
                }
                flat.extend(row.iter().map(|&v| v as f32));
            }
        }
        let header = json!({
            "version": PSEUDO_VERSION,
            "count": self.labels.len(),
            "num_bins": bins,
            "teacher_names": self.teacher_names,
            "ids": self.ids,
        });
        Ok(container::encode(PSEUDO_MAGIC, &header, &[&flat]))
    }

    /// Parses a store and checks it against `grid`. `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], grid: &BinGrid, origin: &Path) -> Result<Self> {
        let err = |field: &str, message: String| Error::PseudoLabels {
            path: origin.to_path_buf(),
            message: format!("{field}: {message}"),
        };
        let c = container::decode(bytes, PSEUDO_MAGIC, &err)?;
        let version: u32 = container::field(&c.header, "version", &err)?;
        if version != PSEUDO_VERSION {
            return Err(err("version", format!("unsupported version {version}")));
        }
        let count: usize = container::field(&c.header, "count", &err)?;
        let num_bins: usize = container::field(&c.header, "num_bins", &err)?;
        if num_bins != grid.num_bins() {
            return Err(err("num_bins", format!("store has {num_bins} bins, codec expects {}", grid.num_bins())));
        }
        let teacher_names: Vec<String> = container::field(&c.header, "teacher_names", &err)?;
        let ids: Vec<String> = match c.header.get("ids") {
            Some(_) => container::field(&c.header, "ids", &err)?,
            None => (0..count).map(|i| i.to_string()).collect(),
        };
        if ids.len() != count {
            return Err(err("ids", format!("{} ids for count {count}", ids.len())));
        }
        let expected = count * 3 * num_bins;
        if c.payload.len() != expected {
            return Err(err("payload", format!("header count {count} needs {expected} values, found {}", c.payload.len())));
        }
        let labels = c
            .payload
            .chunks_exact(3 * num_bins)
            .map(|s| PseudoLabel::new(std::array::from_fn(|a| s[a * num_bins..(a + 1) * num_bins].iter().map(|&v| v as f64).collect())))
            .collect();
        Ok(Self { teacher_names, ids, labels })
    }

    pub fn write(&self, path: &Path, grid: &BinGrid) -> Result<()> {
        container::write_file(path, &self.to_bytes(grid)?)
    }

    pub fn read(path: &Path, grid: &BinGrid) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?, grid, path)
    }
}
