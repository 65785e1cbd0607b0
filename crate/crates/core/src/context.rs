//! Context vectors and the uniform hypercube partition of `[0,1]^D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized description of one connected user: a point in `[0,1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput(
                "context vector must have at least one dimension".into(),
            ));
        }
        if let Some(bad) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidInput(format!(
                "context coordinate {bad} outside [0, 1]"
            )));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &ContextVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One hypercube of side `1/h` in the uniform partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionCell(Vec<u32>);

impl PartitionCell {
    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    /// Lower corner of the hypercube.
    pub fn lower_corner(&self, h: u32) -> Vec<f64> {
        self.0.iter().map(|&k| k as f64 / h as f64).collect()
    }
}

/// Uniform partition of `[0,1]^dim` into `h^dim` hypercubes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    dim: usize,
    h: u32,
}

impl Partition {
    pub fn new(dim: usize, h: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("context dimension must be >= 1".into()));
        }
        if h == 0 {
            return Err(Error::Config("partition resolution h must be >= 1".into()));
        }
        Ok(Self { dim, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    pub fn cell_count(&self) -> u128 {
        (self.h as u128).pow(self.dim as u32)
    }

    pub fn quantize(&self, x: &ContextVector) -> Result<PartitionCell> {
        if x.dim() != self.dim {
            return Err(Error::InvalidInput(format!(
                "context has {} dimensions, partition expects {}",
                x.dim(),
                self.dim
            )));
        }
        Ok(quantize(x, self.h))
    }
}

/// Maps `x` to its hypercube: `floor(x_k * h)`, with the closed upper
/// boundary `x_k = 1` folded into index `h - 1`.
pub fn quantize(x: &ContextVector, h: u32) -> PartitionCell {
    assert!(h >= 1, "partition resolution must be positive");
    let top = h - 1;
    PartitionCell(
        x.coords()
            .iter()
            .map(|&c| ((c * h as f64).floor() as u32).min(top))
            .collect(),
    )
}
