//! Synthetic datasets, the source→target transfer protocol, and dataset IO.

mod io;
mod synth;
mod transfer;

pub use io::{read_csv, read_dataset, write_csv, write_dataset, decode_dataset, encode_dataset};
pub use synth::{grid_centers, make_glyphs, make_grid, make_ring, ring_centers, GLYPH_SIDE};
pub use transfer::{make_transfer, RingSpec, TransferProtocol, TransferSplits};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Source,
    TargetTrain,
    TargetVal,
    TargetTest,
    /// Loaded from a file that does not record its role.
    Unspecified,
}

/// `n × p` real samples with optional integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Option<Vec<u32>>,
    /// Nominal value range of the features.
    pub range: (f64, f64),
    pub split: Split,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Option<Vec<u32>>, split: Split) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(invalid(format!("dataset must be a matrix, got shape {:?}", x.shape())));
        }
        if !x.all_finite() {
            return Err(invalid("dataset contains non-finite values"));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(invalid(format!("{} labels for {} rows", l.len(), x.rows())));
            }
        }
        Ok(Self { x, labels, range: (-1.0, 1.0), split })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| {
            let mut seen: Vec<u32> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }

    pub fn subset(&self, idx: &[usize], split: Split) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            range: self.range,
            split,
        }
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &Dataset, split: Split) -> Result<Dataset> {
        if self.dim() != other.dim() {
            return Err(invalid(format!("cannot join p={} with p={}", self.dim(), other.dim())));
        }
        let mut data = self.x.data().to_vec();
        data.extend_from_slice(other.x.data());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Dataset::new(Tensor::matrix(self.len() + other.len(), self.dim(), data)?, labels, split)
    }
}
