//! Tagged and aggregated sums (TAS).

use super::lp::{tas_wrapup, WrapUp};
use super::tags::{MergePolicy, Message, TagTable};
use super::traffic::TrafficLog;
use super::{payload_sizes_of, NodeEstimate, Protocol};
use crate::error::{Error, Result};
use crate::sps::AggregateSums;
use crate::topology::{ClusteredTopology, Graph, TreeTopology};

/// Tag tables of every node plus the traffic so far.
#[derive(Debug, Clone)]
pub struct TasState {
    n: usize,
    d_tas: u64,
    tables: Vec<TagTable>,
    round: usize,
    log: TrafficLog,
}

impl TasState {
    pub fn new(locals: &[AggregateSums]) -> Result<Self> {
        let (n_p, m) = payload_sizes_of(locals)?;
        let n = locals.len();
        let (d_mf, d_tas) = super::payload_sizes(n_p, m)?;
        Ok(Self {
            n,
            d_tas: d_tas as u64,
            tables: locals
                .iter()
                .enumerate()
                .map(|(k, l)| TagTable::new(k, n, l.clone()))
                .collect(),
            round: 0,
            log: TrafficLog::new(Protocol::Tas, n, d_mf, d_tas),
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn log(&self) -> &TrafficLog {
        &self.log
    }

    pub fn into_log(self) -> TrafficLog {
        self.log
    }

    pub fn table(&self, k: usize) -> &TagTable {
        &self.tables[k]
    }

    pub fn tables(&self) -> &[TagTable] {
        &self.tables
    }

    /// Free-running round: the first round broadcasts every local row
    /// without marking it; later rounds use [`MergePolicy::Aggregate`].
    pub fn step(&mut self, graph: &Graph) -> Result<u64> {
        let all: Vec<usize> = (0..self.n).collect();
        if self.round == 0 {
            let msgs = all
                .iter()
                .map(|&k| (k, self.tables[k].local_message()))
                .collect();
            self.deliver(graph, msgs)
        } else {
            self.step_scheduled(graph, &all, MergePolicy::Aggregate)
        }
    }

    /// Round in which only `active` nodes transmit under `policy`.
    pub fn step_scheduled(&mut self, graph: &Graph, active: &[usize], policy: MergePolicy) -> Result<u64> {
        let msgs = active
            .iter()
            .filter_map(|&k| self.tables[k].merge(policy).map(|m| (k, m)))
            .collect();
        self.deliver(graph, msgs)
    }

    fn deliver(&mut self, graph: &Graph, msgs: Vec<(usize, Message)>) -> Result<u64> {
        if graph.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: graph.n(),
                context: "graph size vs TAS state",
            });
        }
        self.round += 1;
        let mut scalars = vec![0u64; self.n];
        let mut tag_bits = vec![0u64; self.n];
        for (k, msg) in &msgs {
            scalars[*k] = self.d_tas;
            tag_bits[*k] = self.n as u64;
            for &j in graph.neighbors(*k) {
                self.tables[j].distill(msg);
            }
        }
        self.log.record_round(self.round, &scalars, &tag_bits);
        Ok(scalars.iter().sum())
    }

    pub fn wrapup(&self, k: usize) -> Result<WrapUp> {
        tas_wrapup(&self.tables[k])
    }

    pub fn estimate(&self, k: usize) -> Result<NodeEstimate> {
        let w = self.wrapup(k)?;
        let raw_weights = super::lp::LpProblem::from_table(&self.tables[k]).node_weights(&w.b);
        Ok(NodeEstimate {
            weights: w.weights,
            raw_weights,
            aggregate: w.aggregate,
        })
    }
}

/// Initialization plus `rounds - 1` aggregation rounds on an arbitrary
/// graph; `rounds = 0` leaves every node with its local data only.
pub fn run_tas(graph: &Graph, locals: &[AggregateSums], rounds: usize) -> Result<TasState> {
    let mut state = TasState::new(locals)?;
    for _ in 0..rounds {
        state.step(graph)?;
    }
    Ok(state)
}

/// Forward sweep from the deepest level to the root, each node sending one
/// aggregate of its subtree, then a backward sweep in which nodes with
/// sons pass the complete sum down.
pub fn run_tas_tree(tree: &TreeTopology, locals: &[AggregateSums]) -> Result<TasState> {
    let graph = tree.to_graph();
    let mut state = TasState::new(locals)?;
    for step in super::tree_schedule(tree) {
        let policy = if step.backward {
            MergePolicy::Complete
        } else {
            MergePolicy::Aggregate
        };
        state.step_scheduled(&graph, &step.nodes, policy)?;
    }
    Ok(state)
}

/// Members report to heads, heads exchange cluster sums, heads broadcast
/// the complete sum back.
pub fn run_tas_clustered(topo: &ClusteredTopology, locals: &[AggregateSums]) -> Result<TasState> {
    let graph = topo.to_graph();
    let mut state = TasState::new(locals)?;
    let members: Vec<usize> = (0..topo.n()).filter(|&i| !topo.is_head(i)).collect();
    state.step_scheduled(&graph, &members, MergePolicy::Aggregate)?;
    state.step_scheduled(&graph, &topo.heads, MergePolicy::Aggregate)?;
    state.step_scheduled(&graph, &topo.heads, MergePolicy::Complete)?;
    Ok(state)
}
