//! Raw-record diffusion: plain flooding (PF) and modified flooding (MF).

use fixedbitset::FixedBitSet;

use super::traffic::{Forwarded, TrafficLog};
use super::{payload_sizes_of, NodeEstimate, Protocol};
use crate::error::{Error, Result};
use crate::sps::{weighted_sum, AggregateSums, WrapUpWeights};
use crate::topology::{ClusteredTopology, Graph, TreeTopology};

/// Per-node record stores for a flooding run.
///
/// Records are identified by their origin node; a record's payload is the
/// raw `(phi_i, y_i)` pair, so the aggregate at a node is the sum of the
/// local aggregates of the origins it knows.
#[derive(Debug, Clone)]
pub struct FloodState {
    protocol: Protocol,
    n: usize,
    d_mf: u64,
    known: Vec<FixedBitSet>,
    order: Vec<Vec<usize>>,
    transmitted: Vec<FixedBitSet>,
    round: usize,
    log: TrafficLog,
}

impl FloodState {
    pub fn new(protocol: Protocol, n: usize, n_p: usize, m: usize) -> Result<Self> {
        if !matches!(protocol, Protocol::Pf | Protocol::Mf) {
            return Err(Error::InvalidParameter(format!(
                "{} is not a flooding protocol",
                protocol.name()
            )));
        }
        let (d_mf, d_tas) = super::payload_sizes(n_p, m)?;
        let known = (0..n)
            .map(|k| {
                let mut s = FixedBitSet::with_capacity(n);
                s.insert(k);
                s
            })
            .collect();
        Ok(Self {
            protocol,
            n,
            d_mf: d_mf as u64,
            known,
            order: (0..n).map(|k| vec![k]).collect(),
            transmitted: vec![FixedBitSet::with_capacity(n); n],
            round: 0,
            log: TrafficLog::new(protocol, n, d_mf, d_tas),
        })
    }

    pub fn for_locals(protocol: Protocol, locals: &[AggregateSums]) -> Result<Self> {
        let (n_p, m) = payload_sizes_of(locals)?;
        Self::new(protocol, locals.len(), n_p, m)
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

    pub fn known(&self, k: usize) -> &FixedBitSet {
        &self.known[k]
    }

    /// Origins known at `k` in arrival order.
    pub fn arrival_order(&self, k: usize) -> &[usize] {
        &self.order[k]
    }

    pub fn is_complete(&self) -> bool {
        self.known.iter().all(|s| s.count_ones(..) == self.n)
    }

    /// Whether any node still holds a record it has not forwarded (MF).
    pub fn has_pending(&self) -> bool {
        self.known
            .iter()
            .zip(&self.transmitted)
            .any(|(k, t)| !k.is_subset(t))
    }

    fn outgoing(&mut self, k: usize) -> Vec<usize> {
        match self.protocol {
            Protocol::Pf => self.order[k].clone(),
            _ => {
                let fresh: Vec<usize> = self.order[k]
                    .iter()
                    .copied()
                    .filter(|&o| !self.transmitted[k].contains(o))
                    .collect();
                for &o in &fresh {
                    self.transmitted[k].insert(o);
                }
                fresh
            }
        }
    }

    /// One synchronous round. `active = None` lets every node transmit.
    /// Returns the scalars sent.
    pub fn step(&mut self, graph: &Graph, active: Option<&[usize]>) -> Result<u64> {
        if graph.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: graph.n(),
                context: "graph size vs flooding state",
            });
        }
        self.round += 1;
        let senders: Vec<usize> = match active {
            Some(a) => a.to_vec(),
            None => (0..self.n).collect(),
        };
        let mut scalars = vec![0u64; self.n];
        // records carry their origin id implicitly; no tag is charged
        let tag_bits = vec![0u64; self.n];
        let mut messages = Vec::with_capacity(senders.len());
        for &k in &senders {
            let msg = self.outgoing(k);
            if msg.is_empty() {
                continue;
            }
            scalars[k] = msg.len() as u64 * self.d_mf;
            if self.protocol == Protocol::Mf {
                self.log.provenance.extend(msg.iter().map(|&origin| Forwarded {
                    round: self.round,
                    node: k,
                    origin,
                }));
            }
            messages.push((k, msg));
        }
        for (k, msg) in &messages {
            for &j in graph.neighbors(*k) {
                for &o in msg {
                    if !self.known[j].contains(o) {
                        self.known[j].insert(o);
                        self.order[j].push(o);
                    }
                }
            }
        }
        self.log.record_round(self.round, &scalars, &tag_bits);
        Ok(scalars.iter().sum())
    }

    /// Indicator weights of the records known at `k`.
    pub fn weights(&self, k: usize) -> WrapUpWeights {
        WrapUpWeights::clamped(
            (0..self.n)
                .map(|i| if self.known[k].contains(i) { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    pub fn estimate(&self, k: usize, locals: &[AggregateSums]) -> Result<NodeEstimate> {
        let weights = self.weights(k);
        let (n_p, m) = payload_sizes_of(locals)?;
        let aggregate = weighted_sum(locals, weights.as_slice(), n_p, m)?;
        Ok(NodeEstimate {
            raw_weights: weights.as_slice().to_vec(),
            weights,
            aggregate,
        })
    }
}

/// Free-running flooding until `max_rounds` or until nothing is left to
/// send (MF) / everybody knows everything (PF).
pub fn run_flooding(protocol: Protocol, graph: &Graph, locals: &[AggregateSums], max_rounds: usize) -> Result<FloodState> {
    let mut state = FloodState::for_locals(protocol, locals)?;
    while state.round() < max_rounds {
        let done = match protocol {
            Protocol::Pf => state.is_complete(),
            _ => !state.has_pending(),
        };
        if done {
            break;
        }
        state.step(graph, None)?;
    }
    Ok(state)
}

pub fn run_mf(graph: &Graph, locals: &[AggregateSums], max_rounds: usize) -> Result<FloodState> {
    run_flooding(Protocol::Mf, graph, locals, max_rounds)
}

pub fn run_pf(graph: &Graph, locals: &[AggregateSums], max_rounds: usize) -> Result<FloodState> {
    run_flooding(Protocol::Pf, graph, locals, max_rounds)
}

/// Level-synchronous MF on a tree: levels `L..=0` transmit in turn, then
/// nodes with sons at levels `1..L` transmit on the way back.
pub fn run_mf_tree(tree: &TreeTopology, locals: &[AggregateSums]) -> Result<FloodState> {
    let graph = tree.to_graph();
    let mut state = FloodState::for_locals(Protocol::Mf, locals)?;
    for step in super::tree_schedule(tree) {
        state.step(&graph, Some(&step.nodes))?;
    }
    Ok(state)
}

/// MF on a clustered network: members report to heads, heads exchange
/// their clusters' records over the head mesh, heads forward the rest back.
pub fn run_mf_clustered(topo: &ClusteredTopology, locals: &[AggregateSums]) -> Result<FloodState> {
    let graph = topo.to_graph();
    let mut state = FloodState::for_locals(Protocol::Mf, locals)?;
    let members: Vec<usize> = (0..topo.n()).filter(|&i| !topo.is_head(i)).collect();
    state.step(&graph, Some(&members))?;
    state.step(&graph, Some(&topo.heads))?;
    state.step(&graph, Some(&topo.heads))?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::payload_sizes;

    fn locals(n: usize) -> Vec<AggregateSums> {
        (0..n)
            .map(|i| {
                let mut data = vec![0.0; 2 * (1 + 1)];
                data[0] = i as f64 + 1.0;
                AggregateSums::from_raw(1, 2, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn complete_graph_trace() {
        let s = run_mf(&Graph::complete(5), &locals(5), 100).unwrap();
        let d = payload_sizes(1, 2).unwrap().0 as u64;
        assert_eq!(s.log().round_totals(), vec![0, 5 * d, 20 * d]);
        assert_eq!(s.log().total(), 25 * d);
        assert!(s.is_complete());
    }

    #[test]
    fn single_node() {
        let s = run_mf(&Graph::empty(1), &locals(1), 10).unwrap();
        assert_eq!(s.log().total(), 2);
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn completes_within_diameter_plus_one() {
        for n in 2..9 {
            let g = Graph::path(n);
            let s = run_mf(&g, &locals(n), 100).unwrap();
            assert!(s.is_complete());
            assert!(s.round() <= g.diameter().unwrap() + 1);
        }
    }

    #[test]
    fn no_record_forwarded_twice() {
        let g = Graph::from_edges(6, &[[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0], [0, 3]]).unwrap();
        let s = run_mf(&g, &locals(6), 100).unwrap();
        let mut seen = std::collections::HashSet::new();
        for f in &s.log().provenance {
            assert!(seen.insert((f.node, f.origin)), "{f:?} repeated");
        }
        assert_eq!(seen.len(), 36);
        s.log().check_units().unwrap();
    }

    #[test]
    fn pf_rounds_and_cost() {
        let pf = run_pf(&Graph::complete(4), &locals(4), 10).unwrap();
        assert_eq!(pf.round(), 1);
        assert!(pf.is_complete());
        let path = run_pf(&Graph::path(3), &locals(3), 10).unwrap();
        assert_eq!(path.round(), 2);
        let g = Graph::path(6);
        let pf = run_pf(&g, &locals(6), 50).unwrap();
        let mf = run_mf(&g, &locals(6), 50).unwrap();
        assert!(pf.log().total() >= mf.log().total());
    }

    #[test]
    fn estimates_sum_known_records() {
        let l = locals(3);
        let mut s = FloodState::for_locals(Protocol::Mf, &l).unwrap();
        s.step(&Graph::path(3), None).unwrap();
        let e = s.estimate(0, &l).unwrap();
        assert_eq!(e.weights.as_slice(), &[1.0, 1.0, 0.0]);
        assert_eq!(e.aggregate.vec_slice(0), &[3.0]);
    }
}
