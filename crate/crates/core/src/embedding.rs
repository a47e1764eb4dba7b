//! Delay-coordinate embedding of a scalar series.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Delay `tau` between successive coordinates.
    pub delay: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 4, delay: 1 }
    }
}

impl EmbeddingConfig {
    pub fn new(dim: usize, delay: usize) -> Result<Self> {
        let cfg = Self { dim, delay };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.delay == 0 {
            return Err(Error::usage("embedding dimension and delay must both be at least 1"));
        }
        Ok(())
    }

    /// Base time of the first complete delay vector, `(d-1)*tau`.
    pub fn first_base_time(&self) -> usize {
        (self.dim - 1) * self.delay
    }

    /// Number of nearest neighbors used by cross mapping, `d+1`.
    pub fn neighbors(&self) -> usize {
        self.dim + 1
    }
}

/// Delay vectors `[s_t, s_{t-tau}, ..., s_{t-(d-1)tau}]` for every base time
/// `t` in `(d-1)tau..T`, stored row-major, most recent component first.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayEmbedding {
    config: EmbeddingConfig,
    first: usize,
    data: Vec<f64>,
}

pub fn delay_embed(values: &[f64], config: EmbeddingConfig) -> Result<DelayEmbedding> {
    config.validate()?;
    let first = config.first_base_time();
    if values.len() <= first {
        return Err(Error::data(format!(
            "series of length {} is too short to embed with d={}, tau={} (minimum length {})",
            values.len(),
            config.dim,
            config.delay,
            first + 1
        )));
    }
    let mut data = Vec::with_capacity((values.len() - first) * config.dim);
    for t in first..values.len() {
        data.extend((0..config.dim).map(|j| values[t - j * config.delay]));
    }
    Ok(DelayEmbedding { config, first, data })
}

impl DelayEmbedding {
    pub fn config(&self) -> EmbeddingConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.config.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn first_base_time(&self) -> usize {
        self.first
    }

    pub fn last_base_time(&self) -> usize {
        self.first + self.len() - 1
    }

    pub fn base_times(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.len()
    }

    /// Vector by row position (0 is the first base time).
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.config.dim;
        &self.data[i * d..(i + 1) * d]
    }

    /// Vector at base time `t`, if present.
    pub fn vector(&self, t: usize) -> Option<&[f64]> {
        (t >= self.first && t < self.first + self.len()).then(|| self.row(t - self.first))
    }

    pub fn distance(&self, t: usize, u: usize) -> Result<f64> {
        let a = self.vector(t).ok_or_else(|| Error::usage(format!("base time {t} not in embedding")))?;
        let b = self.vector(u).ok_or_else(|| Error::usage(format!("base time {u} not in embedding")))?;
        Ok(euclidean(a, b))
    }

    /// Debug dump: `base_time,c0,...,c{d-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::Io { context: "writing embedding".into(), source: e };
        let cols: Vec<String> = (0..self.config.dim).map(|j| format!("c{j}")).collect();
        writeln!(out, "base_time,{}", cols.join(",")).map_err(io)?;
        for (i, t) in self.base_times().enumerate() {
            let row: Vec<String> = self.row(i).iter().map(|v| fmt_num(*v)).collect();
            writeln!(out, "{t},{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
