//! Average consensus on the aggregate sums.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::traffic::TrafficLog;
use super::{payload_sizes_of, NodeEstimate, Protocol};
use crate::error::{Error, Result};
use crate::sps::{AggregateSums, WrapUpWeights};
use crate::topology::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusScheme {
    /// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges.
    Metropolis,
    /// `W = I − L / (Δ_max + 1)`.
    Perron,
}

impl ConsensusScheme {
    pub fn protocol(self) -> Protocol {
        match self {
            Self::Metropolis => Protocol::Metropolis,
            Self::Perron => Protocol::Perron,
        }
    }
}

/// Sparse symmetric, doubly stochastic weights: `rows[i]` lists `(j, w_ij)`
/// including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl ConsensusWeights {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut w = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    /// Spectral radius of `W − 11ᵀ/N`; below one iff iterations converge
    /// to the average.
    pub fn disagreement_radius(&self) -> f64 {
        let n = self.n();
        let mut w = self.to_dense();
        w.add_scalar_mut(-1.0 / n as f64);
        SymmetricEigen::new(w)
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

pub fn consensus_weights(graph: &Graph, scheme: ConsensusScheme) -> Result<ConsensusWeights> {
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = graph.n();
    let eps = 1.0 / (graph.max_degree() as f64 + 1.0);
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = graph
                .neighbors(i)
                .iter()
                .map(|&j| {
                    let w = match scheme {
                        ConsensusScheme::Metropolis => {
                            1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64)
                        }
                        ConsensusScheme::Perron => eps,
                    };
                    (j, w)
                })
                .collect();
            let off: f64 = row.iter().map(|(_, w)| w).sum();
            row.push((i, 1.0 - off));
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    Ok(ConsensusWeights { rows })
}

/// Consensus states and the effective contribution `N (Wᵗ)_{k,i}` of every
/// node's data to every state.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    weights: ConsensusWeights,
    states: Vec<AggregateSums>,
    coeffs: Vec<Vec<f64>>,
    iteration: usize,
    d_tas: u64,
    log: TrafficLog,
}

impl ConsensusState {
    /// States start at `N` times the local aggregate so that the fixed
    /// point is the complete sum.
    pub fn new(graph: &Graph, locals: &[AggregateSums], scheme: ConsensusScheme) -> Result<Self> {
        let (n_p, m) = payload_sizes_of(locals)?;
        let n = locals.len();
        if graph.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: graph.n(),
                context: "graph size vs local aggregates",
            });
        }
        let (d_mf, d_tas) = super::payload_sizes(n_p, m)?;
        let nf = n as f64;
        Ok(Self {
            weights: consensus_weights(graph, scheme)?,
            states: locals.iter().map(|l| l.scaled(nf)).collect(),
            coeffs: (0..n)
                .map(|k| (0..n).map(|i| if i == k { nf } else { 0.0 }).collect())
                .collect(),
            iteration: 0,
            d_tas: d_tas as u64,
            log: TrafficLog::new(scheme.protocol(), n, d_mf, d_tas),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn log(&self) -> &TrafficLog {
        &self.log
    }

    pub fn into_log(self) -> TrafficLog {
        self.log
    }

    pub fn weights(&self) -> &ConsensusWeights {
        &self.weights
    }

    pub fn state(&self, k: usize) -> &AggregateSums {
        &self.states[k]
    }

    /// `c_{k,i} = N (Wᵗ)_{k,i}`, unclipped.
    pub fn effective_weights(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    /// One synchronous iteration; every node broadcasts its state.
    pub fn step(&mut self) -> Result<u64> {
        let n = self.states.len();
        let (n_p, m) = (self.states[0].n_p(), self.states[0].m());
        let mut next = Vec::with_capacity(n);
        let mut next_coeffs = Vec::with_capacity(n);
        for k in 0..n {
            let mut s = AggregateSums::zero(n_p, m);
            let mut c = vec![0.0; n];
            for &(j, w) in self.weights.row(k) {
                s.add_scaled(&self.states[j], w)?;
                for (ci, cj) in c.iter_mut().zip(&self.coeffs[j]) {
                    *ci += w * cj;
                }
            }
            next.push(s);
            next_coeffs.push(c);
        }
        self.states = next;
        self.coeffs = next_coeffs;
        self.iteration += 1;
        self.log
            .record_round(self.iteration, &vec![self.d_tas; n], &vec![0; n]);
        Ok(self.d_tas * n as u64)
    }

    /// The node's current state, with the implied weights reported both raw
    /// and clipped into `[0, 1]`.
    pub fn estimate(&self, k: usize) -> NodeEstimate {
        let raw = self.coeffs[k].clone();
        NodeEstimate {
            weights: WrapUpWeights::clamped(raw.clone()),
            raw_weights: raw,
            aggregate: self.states[k].clone(),
        }
    }
}

pub fn run_consensus(
    graph: &Graph,
    locals: &[AggregateSums],
    iterations: usize,
    scheme: ConsensusScheme,
) -> Result<ConsensusState> {
    let mut state = ConsensusState::new(graph, locals, scheme)?;
    for _ in 0..iterations {
        state.step()?;
    }
    Ok(state)
}
