//! Storage for MCMC output.
//!
//! On disk a trace is an 8-byte magic, a little-endian `u64` header length,
//! a UTF-8 JSON header and then `chains * draws * dim` little-endian `f64`
//! values in `[chain][draw][param]` order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CPTRACE1";

/// Draws from `chains` independent chains, warmup excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    pub header: TraceHeader,
    /// `[chain][draw][param]`, row-major.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub param_names: Vec<String>,
    pub chains: usize,
    pub draws: usize,
    pub dim: usize,
    pub seed: u64,
    /// Free-form echo of the configuration that produced the trace.
    pub config: serde_json::Value,
    /// Adapted step size of each chain.
    pub step_sizes: Vec<f64>,
    /// Adapted inverse-mass diagonal of each chain.
    pub inv_mass: Vec<Vec<f64>>,
    /// `(chain, draw)` of every divergent transition.
    pub divergent: Vec<(usize, usize)>,
    /// Mean acceptance statistic of each chain's sampling phase.
    pub accept_stats: Vec<f64>,
    pub sampler: String,
}

impl PosteriorTrace {
    pub fn chains(&self) -> usize {
        self.header.chains
    }

    pub fn draws(&self) -> usize {
        self.header.draws
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn n_total(&self) -> usize {
        self.header.chains * self.header.draws
    }

    pub fn draw(&self, chain: usize, s: usize) -> &[f64] {
        let d = self.header.dim;
        let start = (chain * self.header.draws + s) * d;
        &self.values[start..start + d]
    }

    /// All draws of all chains in storage order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.header.dim.max(1))
    }

    /// Draws of one parameter, one vector per chain.
    pub fn param_chains(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.chains())
            .map(|c| (0..self.draws()).map(|s| self.draw(c, s)[k]).collect())
            .collect()
    }

    pub fn is_divergent(&self, chain: usize, s: usize) -> bool {
        self.header.divergent.contains(&(chain, s))
    }

    pub fn n_divergent(&self) -> usize {
        self.header.divergent.len()
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.param_names.len() != h.dim {
            return Err(Error::Format(format!(
                "{} parameter names for dimension {}",
                h.param_names.len(),
                h.dim
            )));
        }
        if self.values.len() != h.chains * h.draws * h.dim {
            return Err(Error::Format(format!(
                "payload holds {} values, header implies {}",
                self.values.len(),
                h.chains * h.draws * h.dim
            )));
        }
        if self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("trace contains NaN draws".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a trace file (bad magic)".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < len {
            return Err(Error::Format("truncated trace header".into()));
        }
        let header: TraceHeader = serde_json::from_slice(&body[..len])?;
        let payload = &body[len..];
        if payload.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64 values".into()));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let trace = PosteriorTrace { header, values };
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// One CSV row per draw: `chain,draw,divergent,<params...>`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(w, "chain,draw,divergent").map_err(io)?;
        for name in &self.header.param_names {
            write!(w, ",{name}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for c in 0..self.chains() {
            for s in 0..self.draws() {
                write!(w, "{c},{s},{}", u8::from(self.is_divergent(c, s))).map_err(io)?;
                for v in self.draw(c, s) {
                    write!(w, ",{v}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}
