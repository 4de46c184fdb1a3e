use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Protocol;
use crate::error::{Error, Result};

/// Scalars sent by one node in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficEntry {
    pub round: usize,
    pub node: usize,
    pub scalars: u64,
    pub tag_bits: u64,
}

/// One record forwarded by a flooding node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forwarded {
    pub round: usize,
    pub node: usize,
    pub origin: usize,
}

/// Per-round, per-node transmission accounting. Only real-valued scalars are
/// charged; tag bits are tracked separately for information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLog {
    pub protocol: Protocol,
    pub n: usize,
    pub d_mf: u64,
    pub d_tas: u64,
    pub entries: Vec<TrafficEntry>,
    #[serde(default)]
    pub provenance: Vec<Forwarded>,
}

impl TrafficLog {
    pub fn new(protocol: Protocol, n: usize, d_mf: usize, d_tas: usize) -> Self {
        Self {
            protocol,
            n,
            d_mf: d_mf as u64,
            d_tas: d_tas as u64,
            entries: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Appends one row per node for `round`; `scalars[i]` may be zero.
    pub fn record_round(&mut self, round: usize, scalars: &[u64], tag_bits: &[u64]) {
        debug_assert_eq!(scalars.len(), self.n);
        for node in 0..self.n {
            self.entries.push(TrafficEntry {
                round,
                node,
                scalars: scalars[node],
                tag_bits: tag_bits[node],
            });
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.scalars).sum()
    }

    pub fn rounds(&self) -> usize {
        self.entries.iter().map(|e| e.round).max().unwrap_or(0)
    }

    /// Scalars sent in each round `1..=rounds()`, index 0 unused.
    pub fn round_totals(&self) -> Vec<u64> {
        let mut out = vec![0; self.rounds() + 1];
        for e in &self.entries {
            out[e.round] += e.scalars;
        }
        out
    }

    /// Network total after each round, index 0 being zero traffic.
    pub fn cumulative_totals(&self) -> Vec<u64> {
        let mut acc = 0;
        self.round_totals()
            .into_iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect()
    }

    pub fn per_node_totals(&self) -> Vec<u64> {
        let mut out = vec![0; self.n];
        for e in &self.entries {
            out[e.node] += e.scalars;
        }
        out
    }

    pub fn mean_per_node(&self) -> f64 {
        self.total() as f64 / self.n as f64
    }

    /// Checks that every transmission is a whole number of payload units:
    /// any multiple of `d_MF` for flooding, exactly zero or `d_TAS` for
    /// aggregate protocols.
    pub fn check_units(&self) -> Result<()> {
        for e in &self.entries {
            let ok = match self.protocol {
                Protocol::Pf | Protocol::Mf => e.scalars % self.d_mf == 0,
                _ => e.scalars == 0 || e.scalars == self.d_tas,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "round {} node {} sent {} scalars, not a valid payload multiple",
                    e.round, e.node, e.scalars
                )));
            }
        }
        Ok(())
    }

    /// Columns `protocol, round, node_id, scalars_sent, cumulative_scalars,
    /// tag_bits`; the cumulative column is per node.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "protocol",
            "round",
            "node_id",
            "scalars_sent",
            "cumulative_scalars",
            "tag_bits",
        ])
        .map_err(io)?;
        let mut cumulative = vec![0u64; self.n];
        let name = self.protocol.name();
        for e in &self.entries {
            cumulative[e.node] += e.scalars;
            wr.write_record([
                name.to_string(),
                e.round.to_string(),
                e.node.to_string(),
                e.scalars.to_string(),
                cumulative[e.node].to_string(),
                e.tag_bits.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
        Ok(())
    }
}
