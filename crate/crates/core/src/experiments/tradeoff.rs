use rayon::prelude::*;
use serde::Serialize;

use super::config::DEFAULT_ROUND_CAP;
use super::{trial_locals, trial_network, weight_summary, ExperimentConfig, RecordHeader};
use crate::diffusion::{Engine, Protocol};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sps::{evaluate_region, RegionRequest};

/// Nodes assessed per network when none are configured.
const DEFAULT_EVAL_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub trial: usize,
    pub protocol: Protocol,
    pub rounds_done: usize,
    pub node: usize,
    pub node_scalars: u64,
    pub mean_scalars: f64,
    pub volume: f64,
    pub covers_truth: bool,
    pub c_sum: f64,
}

/// Mean over realizations and assessed nodes at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub protocol: Protocol,
    pub rounds_done: usize,
    pub mean_scalars: f64,
    pub mean_volume: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRecord {
    pub header: RecordHeader,
    pub curves: Vec<CurvePoint>,
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffRecord {
    /// `(mean scalars, mean volume)` pairs of one protocol, in round order.
    pub fn curve(&self, protocol: Protocol) -> Vec<(f64, f64)> {
        self.curves
            .iter()
            .filter(|p| p.protocol == protocol)
            .map(|p| (p.mean_scalars, p.mean_volume))
            .collect()
    }

    pub fn point(&self, protocol: Protocol, rounds: usize) -> Option<&CurvePoint> {
        self.curves
            .iter()
            .find(|p| p.protocol == protocol && p.rounds_done == rounds)
    }
}

/// Traffic at which a `(traffic, volume)` curve first reaches `volume`,
/// interpolating linearly inside the crossing segment.
pub fn matched_traffic(curve: &[(f64, f64)], volume: f64) -> Option<f64> {
    let i = curve.iter().position(|&(_, v)| v <= volume)?;
    if i == 0 {
        return Some(curve[0].0);
    }
    let (t0, v0) = curve[i - 1];
    let (t1, v1) = curve[i];
    if v0 == v1 {
        return Some(t1);
    }
    Some(t0 + (t1 - t0) * (v0 - volume) / (v0 - v1))
}

fn eval_nodes(config: &ExperimentConfig, n: usize) -> Vec<usize> {
    if config.evaluation.all_nodes {
        return (0..n).collect();
    }
    if let Some(nodes) = &config.evaluation.nodes {
        return nodes.clone();
    }
    let count = DEFAULT_EVAL_NODES.min(n);
    let mut v: Vec<usize> = (0..count).map(|i| i * n / count).collect();
    v.dedup();
    v
}

fn checkpoints(config: &ExperimentConfig, protocol: Protocol) -> Vec<usize> {
    if protocol.consensus_scheme().is_some() {
        config.diffusion.consensus_checkpoints()
    } else {
        (0..=config.diffusion.rounds.unwrap_or(DEFAULT_ROUND_CAP)).collect()
    }
}

/// Region volume against per-node traffic for each compared protocol.
///
/// Every trial is a fresh network realization. At each checkpoint the
/// assessed nodes evaluate the region of their current aggregate: the
/// wrap-up for TAS, the known records for flooding, the state for
/// consensus.
pub fn run_tradeoff(config: &ExperimentConfig) -> Result<TradeoffRecord> {
    config.validate()?;
    let region = config.require_region()?;
    let protocols = config.diffusion.compared();
    if protocols.is_empty() {
        return Err(Error::Config("diffusion.compare is empty".into()));
    }
    let n = config.n();
    let nodes = eval_nodes(config, n);
    let search_box = config.region_box()?;

    let per_trial: Result<Vec<Vec<TradeoffRow>>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut resampled = config.clone();
            resampled.topology.resample = true;
            let network = trial_network(&resampled, trial)?;
            let (_, locals) = trial_locals(config, &network, trial)?;
            let request = RegionRequest::uniform(
                search_box.clone(),
                region.grid_per_dim,
                config.sps.q,
                derive_seed(config.seed, "region", trial as u64),
            );
            let mut rows = Vec::new();
            for &protocol in &protocols {
                let mut engine = Engine::new(protocol, &network.graph, &locals)?;
                let mut last: Option<(u64, Vec<TradeoffRow>)> = None;
                for cp in checkpoints(config, protocol) {
                    while engine.rounds() < cp {
                        engine.step(&network.graph)?;
                    }
                    let total = engine.log().total();
                    let mean_scalars = total as f64 / n as f64;
                    let batch = match &last {
                        // nothing was sent since the last checkpoint, so no
                        // estimate has changed
                        Some((t, prev)) if *t == total => prev
                            .iter()
                            .map(|r| TradeoffRow {
                                rounds_done: cp,
                                ..r.clone()
                            })
                            .collect(),
                        _ => {
                            let sent = engine.log().per_node_totals();
                            nodes
                                .iter()
                                .map(|&k| {
                                    let est = engine.estimate(k, &locals)?;
                                    let r = evaluate_region(&est.aggregate, &request)?;
                                    Ok(TradeoffRow {
                                        trial,
                                        protocol,
                                        rounds_done: cp,
                                        node: k,
                                        node_scalars: sent.get(k).copied().unwrap_or(0),
                                        mean_scalars,
                                        volume: r.volume,
                                        covers_truth: r.contains(&config.model.p_true),
                                        c_sum: weight_summary(&est.raw_weights).0,
                                    })
                                })
                                .collect::<Result<Vec<_>>>()?
                        }
                    };
                    rows.extend(batch.iter().cloned());
                    last = Some((total, batch));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows: Vec<TradeoffRow> = per_trial?.into_iter().flatten().collect();
    let order = |p: Protocol| protocols.iter().position(|&q| q == p).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (r.trial, order(r.protocol), r.rounds_done, r.node));

    let mut curves = Vec::new();
    for &protocol in &protocols {
        for cp in checkpoints(config, protocol) {
            let sel: Vec<&TradeoffRow> = rows
                .iter()
                .filter(|r| r.protocol == protocol && r.rounds_done == cp)
                .collect();
            let count = sel.len() as f64;
            curves.push(CurvePoint {
                protocol,
                rounds_done: cp,
                mean_scalars: sel.iter().map(|r| r.mean_scalars).sum::<f64>() / count,
                mean_volume: sel.iter().map(|r| r.volume).sum::<f64>() / count,
                samples: sel.len(),
            });
        }
    }
    Ok(TradeoffRecord {
        header: RecordHeader::new("tradeoff", config),
        curves,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_traffic_interpolates() {
        let curve = [(0.0, 1.0), (10.0, 0.5), (30.0, 0.1)];
        assert_eq!(matched_traffic(&curve, 1.0), Some(0.0));
        assert_eq!(matched_traffic(&curve, 0.75), Some(5.0));
        assert!((matched_traffic(&curve, 0.3).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(matched_traffic(&curve, 0.05), None);
    }

    #[test]
    fn default_nodes_are_spread() {
        let text = r#"{"seed": 1, "topology": {"kind": "geometric", "N": 100},
            "model": {"n_p": 1, "n_x": 2, "regressor": {"family": "polynomial"}, "p_true": [0.0],
                      "noise": {"kind": "gaussian", "scale": 0.1}},
            "sps": {"m": 4, "q": 1}, "trials": 1}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(eval_nodes(&c, 100), vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]);
        assert_eq!(eval_nodes(&c, 3), vec![0, 1, 2]);
    }
}
