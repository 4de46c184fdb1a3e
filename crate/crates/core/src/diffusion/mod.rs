//! Synchronous-round diffusion protocols with exact scalar accounting.
//!
//! Every engine keeps per-node state, advances one round at a time and logs
//! the real-valued scalars each node broadcasts. Links are lossless and a
//! broadcast reaches every neighbor in the same round.

mod consensus;
mod flooding;
pub mod lp;
pub mod tags;
mod tas;
mod traffic;

pub use consensus::{consensus_weights, run_consensus, ConsensusScheme, ConsensusState, ConsensusWeights};
pub use flooding::{run_flooding, run_mf, run_mf_clustered, run_mf_tree, run_pf, FloodState};
pub use lp::{solve_lp, tas_wrapup, LpProblem, LpSolution, WrapUp};
pub use tags::{MergePolicy, Message, Tag, TagRow, TagTable};
pub use tas::{run_tas, run_tas_clustered, run_tas_tree, TasState};
pub use traffic::{Forwarded, TrafficEntry, TrafficLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sps::{payload_scalar_count, AggregateSums, WrapUpWeights};
use crate::topology::{Graph, TreeTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Pf,
    Mf,
    Tas,
    Metropolis,
    Perron,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Pf,
        Protocol::Mf,
        Protocol::Tas,
        Protocol::Metropolis,
        Protocol::Perron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pf => "pf",
            Self::Mf => "mf",
            Self::Tas => "tas",
            Self::Metropolis => "metropolis",
            Self::Perron => "perron",
        }
    }

    pub fn consensus_scheme(self) -> Option<ConsensusScheme> {
        match self {
            Self::Metropolis => Some(ConsensusScheme::Metropolis),
            Self::Perron => Some(ConsensusScheme::Perron),
            _ => None,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol '{s}'")))
    }
}

/// `(d_MF, d_TAS)`: scalars per raw record and per aggregate message.
pub fn payload_sizes(n_p: usize, m: usize) -> Result<(usize, usize)> {
    if n_p == 0 || m < 2 {
        return Err(Error::InvalidParameter(format!(
            "payload sizes need n_p >= 1 and m >= 2, got n_p={n_p}, m={m}"
        )));
    }
    Ok((n_p + 1, payload_scalar_count(n_p, m)))
}

pub(crate) fn payload_sizes_of(locals: &[AggregateSums]) -> Result<(usize, usize)> {
    let first = locals
        .first()
        .ok_or_else(|| Error::InvalidParameter("no local aggregates".into()))?;
    let (n_p, m) = (first.n_p(), first.m());
    if locals.iter().any(|l| l.n_p() != n_p || l.m() != m) {
        return Err(Error::InvalidParameter("local aggregates differ in shape".into()));
    }
    Ok((n_p, m))
}

/// What a node can feed into the rank test after (possibly truncated)
/// diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    /// Contribution weights clipped into `[0, 1]`.
    pub weights: WrapUpWeights,
    /// Contribution weights as computed.
    pub raw_weights: Vec<f64>,
    pub aggregate: AggregateSums,
}

/// Active node set of one round of the level schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeStep {
    pub nodes: Vec<usize>,
    pub backward: bool,
}

/// Levels `L, L−1, ..., 0` forward, then the nodes with sons at levels
/// `1..L` on the way back.
pub fn tree_schedule(tree: &TreeTopology) -> Vec<TreeStep> {
    let depth = tree.depth();
    let mut steps: Vec<TreeStep> = (0..=depth)
        .rev()
        .map(|l| TreeStep {
            nodes: tree.nodes_at_level(l),
            backward: false,
        })
        .collect();
    for l in 1..depth {
        steps.push(TreeStep {
            nodes: tree
                .nodes_at_level(l)
                .into_iter()
                .filter(|&i| !tree.children(i).is_empty())
                .collect(),
            backward: true,
        });
    }
    steps
}

/// A free-running diffusion of any protocol, advanced round by round.
#[derive(Debug, Clone)]
pub enum Engine {
    Flood(FloodState),
    Tas(TasState),
    Consensus(ConsensusState),
}

impl Engine {
    pub fn new(protocol: Protocol, graph: &Graph, locals: &[AggregateSums]) -> Result<Self> {
        Ok(match protocol {
            Protocol::Pf | Protocol::Mf => Engine::Flood(FloodState::for_locals(protocol, locals)?),
            Protocol::Tas => Engine::Tas(TasState::new(locals)?),
            Protocol::Metropolis | Protocol::Perron => Engine::Consensus(ConsensusState::new(
                graph,
                locals,
                protocol.consensus_scheme().expect("consensus protocol"),
            )?),
        })
    }

    pub fn step(&mut self, graph: &Graph) -> Result<u64> {
        match self {
            Engine::Flood(s) => s.step(graph, None),
            Engine::Tas(s) => s.step(graph),
            Engine::Consensus(s) => s.step(),
        }
    }

    pub fn rounds(&self) -> usize {
        match self {
            Engine::Flood(s) => s.round(),
            Engine::Tas(s) => s.round(),
            Engine::Consensus(s) => s.iteration(),
        }
    }

    pub fn log(&self) -> &TrafficLog {
        match self {
            Engine::Flood(s) => s.log(),
            Engine::Tas(s) => s.log(),
            Engine::Consensus(s) => s.log(),
        }
    }

    pub fn estimate(&self, k: usize, locals: &[AggregateSums]) -> Result<NodeEstimate> {
        match self {
            Engine::Flood(s) => s.estimate(k, locals),
            Engine::Tas(s) => s.estimate(k),
            Engine::Consensus(s) => Ok(s.estimate(k)),
        }
    }
}

/// Runs `protocol` for `rounds` rounds (iterations for consensus). Flooding
/// stops early once it has nothing left to send.
pub fn run_protocol(protocol: Protocol, graph: &Graph, locals: &[AggregateSums], rounds: usize) -> Result<Engine> {
    Ok(match protocol {
        Protocol::Pf | Protocol::Mf => Engine::Flood(run_flooding(protocol, graph, locals, rounds)?),
        _ => {
            let mut e = Engine::new(protocol, graph, locals)?;
            for _ in 0..rounds {
                e.step(graph)?;
            }
            e
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::complete_binary_tree;

    #[test]
    fn sizes() {
        assert_eq!(payload_sizes(2, 10).unwrap(), (3, 50));
        assert_eq!(payload_sizes(1, 2).unwrap(), (2, 4));
        for m in 2..20 {
            assert_eq!(payload_sizes(3, m).unwrap().1 % m, 0);
            assert_eq!(payload_sizes(3, m).unwrap().1 / m, 9);
        }
        assert!(payload_sizes(0, 10).is_err());
    }

    #[test]
    fn schedule_shape() {
        let s = tree_schedule(&complete_binary_tree(2).unwrap());
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].nodes, vec![3, 4, 5, 6]);
        assert_eq!(s[2].nodes, vec![0]);
        assert_eq!(s[3], TreeStep { nodes: vec![1, 2], backward: true });
        assert_eq!(tree_schedule(&complete_binary_tree(0).unwrap()).len(), 1);
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!("gossip".parse::<Protocol>().is_err());
    }
}
