//! Batch studies over simulated networks: coverage of the true parameter,
//! region volume against traffic, and TAS-versus-MF success rates.
//!
//! Every random draw comes from a substream keyed by the experiment seed and
//! the trial index, and rows are sorted before output, so results do not
//! depend on the thread pool.

pub mod config;
mod coverage;
mod success;
mod tradeoff;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    DiffusionConfig, EvaluationConfig, ExperimentConfig, NetworkKind, Preset, RegionSection, Schedule,
    SpsSection, SweepConfig, TopologyConfig,
};
pub use coverage::{run_coverage, wilson_interval, CoverageRecord, CoverageRow, CoverageSummary};
pub use success::{run_success_rate, SuccessRecord, SuccessRow, SuccessSummary};
pub use tradeoff::{matched_traffic, run_tradeoff, CurvePoint, TradeoffRecord, TradeoffRow};

use crate::diffusion::{
    run_mf_clustered, run_mf_tree, run_tas_clustered, run_tas_tree, Engine, NodeEstimate, Protocol, TrafficLog,
};
use crate::error::{Error, Result};
use crate::model::{generate_measurements, RegressorSample};
use crate::rng::{derive_seed, substream};
use crate::sps::{
    draw_sign_matrix, evaluate_region, local_aggregates, truncated_aggregate, AggregateSums, RegionRequest,
    RegionResult, SignMatrix, WrapUpWeights,
};
use crate::topology::{clustered, complete_binary_tree, random_geometric, random_tree, ClusteredTopology, Graph, TreeTopology};

pub const TOOL: &str = "spsnet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the producing tool, configuration and seed of an output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordHeader {
    pub experiment: String,
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl RecordHeader {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# tool={} version={} experiment={} config={} seed={}",
            self.tool, self.version, self.experiment, self.config_hash, self.seed
        )
    }
}

/// Writes the header comment followed by `rows` as CSV.
pub fn write_csv_rows<W: Write, T: Serialize>(header: &RecordHeader, rows: &[T], mut w: W) -> Result<()> {
    writeln!(w, "{}", header.comment_line()).map_err(io_err)?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    out.flush().map_err(io_err)
}

pub(crate) fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("io: {e}"))
}

/// Writes `name` under `dir`, creating the directory if needed.
pub fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut buf = Vec::new();
    write(&mut buf)?;
    std::fs::write(dir.join(name), buf).map_err(io_err)
}

/// One realized network.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub positions: Vec<Vec<f64>>,
    pub tree: Option<TreeTopology>,
    pub clusters: Option<ClusteredTopology>,
}

impl Network {
    pub fn build<R: Rng + ?Sized>(topology: &TopologyConfig, n_x: usize, rng: &mut R) -> Result<Self> {
        topology.validate()?;
        let n = topology.node_count()?;
        let geometric = matches!(topology.kind, NetworkKind::Geometric | NetworkKind::RandomTree);
        if geometric && n_x != 2 {
            return Err(Error::Config(format!(
                "{} networks place nodes in the plane; model.n_x must be 2, got {n_x}",
                topology.kind.name()
            )));
        }
        let uniform = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..n_x).map(|_| rng.random::<f64>()).collect()).collect()
        };
        Ok(match topology.kind {
            NetworkKind::Geometric => {
                let graph = random_geometric(n, rng)?;
                let positions = graph.positions().expect("geometric graph has positions").to_vec();
                Self {
                    graph,
                    positions,
                    tree: None,
                    clusters: None,
                }
            }
            NetworkKind::RandomTree => {
                let (g, tree) = random_tree(n, rng)?;
                Self {
                    graph: tree.to_graph(),
                    positions: g.positions().expect("geometric graph has positions").to_vec(),
                    tree: Some(tree),
                    clusters: None,
                }
            }
            NetworkKind::Binary => {
                let tree = complete_binary_tree(topology.depth.expect("validated"))?;
                Self {
                    graph: tree.to_graph(),
                    positions: uniform(rng),
                    tree: Some(tree),
                    clusters: None,
                }
            }
            NetworkKind::Clustered => {
                let topo = clustered(n, topology.n_c.expect("validated"), rng)?;
                Self {
                    graph: topo.to_graph(),
                    positions: uniform(rng),
                    tree: None,
                    clusters: Some(topo),
                }
            }
            NetworkKind::Complete => Self {
                graph: Graph::complete(n),
                positions: uniform(rng),
                tree: None,
                clusters: None,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// Network for `trial`: shared across trials unless the topology section
/// asks for resampling.
pub fn trial_network(config: &ExperimentConfig, trial: usize) -> Result<Network> {
    let index = if config.topology.resample { trial as u64 } else { 0 };
    Network::build(
        &config.topology,
        config.model.n_x,
        &mut substream(config.seed, "topology", index),
    )
}

/// Fresh measurements, signs and local aggregates for one trial.
pub fn trial_locals(
    config: &ExperimentConfig,
    network: &Network,
    trial: usize,
) -> Result<(Vec<RegressorSample>, Vec<AggregateSums>)> {
    let samples = generate_measurements(
        &network.positions,
        &config.model,
        &mut substream(config.seed, "noise", trial as u64),
    )?;
    let signs = draw_sign_matrix(
        config.sps.m,
        network.n(),
        derive_seed(config.seed, "signs", trial as u64),
    )?;
    let locals = local_aggregates(&samples, &signs)?;
    Ok((samples, locals))
}

/// State of a finished (or truncated) diffusion run.
pub struct DiffusionRun {
    pub engine: Engine,
    pub rounds: usize,
}

impl DiffusionRun {
    pub fn log(&self) -> &TrafficLog {
        self.engine.log()
    }

    pub fn estimate(&self, k: usize, locals: &[AggregateSums]) -> Result<NodeEstimate> {
        self.engine.estimate(k, locals)
    }
}

/// Runs the configured protocol. Free-running flooding and TAS stop after
/// `rounds` or, when unbounded, once a round carries no traffic.
pub fn run_diffusion(config: &DiffusionConfig, network: &Network, locals: &[AggregateSums]) -> Result<DiffusionRun> {
    let protocol = config.protocol;
    if config.schedule == Schedule::Structured {
        let state = match (protocol, &network.tree, &network.clusters) {
            (Protocol::Mf, Some(t), _) => Engine::Flood(run_mf_tree(t, locals)?),
            (Protocol::Tas, Some(t), _) => Engine::Tas(run_tas_tree(t, locals)?),
            (Protocol::Mf, _, Some(c)) => Engine::Flood(run_mf_clustered(c, locals)?),
            (Protocol::Tas, _, Some(c)) => Engine::Tas(run_tas_clustered(c, locals)?),
            _ => {
                return Err(Error::Config(
                    "structured schedules need mf or tas on a tree or clustered topology".into(),
                ))
            }
        };
        let rounds = state.rounds();
        return Ok(DiffusionRun { engine: state, rounds });
    }
    let mut engine = Engine::new(protocol, &network.graph, locals)?;
    match config.rounds {
        Some(r) => {
            for _ in 0..r {
                engine.step(&network.graph)?;
            }
        }
        None => {
            if protocol.consensus_scheme().is_some() {
                return Err(Error::Config("consensus runs need an explicit rounds value".into()));
            }
            let cap = 4 * network.n() + 10;
            while engine.rounds() < cap {
                if engine.step(&network.graph)? == 0 {
                    break;
                }
            }
        }
    }
    Ok(DiffusionRun {
        rounds: engine.rounds(),
        engine,
    })
}

/// Input of a single region evaluation: either a ready aggregate or raw
/// samples with their sign matrix and optional weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateSums>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<RegressorSample>>,
    /// `m` rows of `±1`, one column per sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<Vec<i8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub request: RegionRequest,
}

impl RegionInput {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn aggregate(&self) -> Result<AggregateSums> {
        match (&self.aggregate, &self.samples, &self.signs) {
            (Some(a), None, None) => AggregateSums::from_raw(a.n_p(), a.m(), a.raw().to_vec()),
            (None, Some(samples), Some(signs)) => {
                let signs = SignMatrix::from_rows(signs.clone())?;
                let weights = match &self.weights {
                    Some(w) => WrapUpWeights::new(w.clone())?,
                    None => WrapUpWeights::ones(samples.len()),
                };
                truncated_aggregate(samples, &signs, &weights)
            }
            _ => Err(Error::Config(
                "region input needs either `aggregate` or both `samples` and `signs`".into(),
            )),
        }
    }

    pub fn evaluate(&self) -> Result<RegionResult> {
        evaluate_region(&self.aggregate()?, &self.request)
    }
}

/// Sum, minimum and maximum of a weight vector.
pub fn weight_summary(c: &[f64]) -> (f64, f64, f64) {
    let sum = c.iter().sum();
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (sum, min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldConfig;

    fn config(kind: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(&format!(
            r#"{{"seed": 3, "topology": {kind}, "model": {model},
                "sps": {{"m": 5, "q": 1}}, "trials": 2}}"#,
            model = serde_json::to_string(&FieldConfig::polynomial(vec![0.1, 0.2]).unwrap()).unwrap()
        ))
        .unwrap();
        c.diffusion.rounds = None;
        c
    }

    #[test]
    fn builds_every_kind() {
        for (kind, n) in [
            (r#"{"kind": "geometric", "N": 12}"#, 12),
            (r#"{"kind": "random-tree", "N": 12}"#, 12),
            (r#"{"kind": "binary", "L": 3}"#, 15),
            (r#"{"kind": "clustered", "N": 12, "n_c": 3}"#, 12),
            (r#"{"kind": "complete", "N": 4}"#, 4),
        ] {
            let mut c = config(kind);
            let net = trial_network(&c, 0).unwrap();
            assert_eq!(net.n(), n);
            assert_eq!(net.positions.len(), n);
            assert!(net.graph.is_connected());
            let (_, locals) = trial_locals(&c, &net, 0).unwrap();
            c.diffusion.protocol = Protocol::Mf;
            let run = run_diffusion(&c.diffusion, &net, &locals).unwrap();
            assert!(run.estimate(0, &locals).unwrap().weights.is_complete(), "{kind}");
            // free-running TAS may go quiet before every weight reaches one
            c.diffusion.protocol = Protocol::Tas;
            let run = run_diffusion(&c.diffusion, &net, &locals).unwrap();
            let w = run.estimate(0, &locals).unwrap().weights;
            assert!(w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(w.total() > 1.0, "{kind}");
        }
    }

    #[test]
    fn shared_network_unless_resampled() {
        let mut c = config(r#"{"kind": "geometric", "N": 10}"#);
        let a = trial_network(&c, 0).unwrap();
        assert_eq!(a.positions, trial_network(&c, 5).unwrap().positions);
        c.topology.resample = true;
        assert_ne!(a.positions, trial_network(&c, 5).unwrap().positions);
    }

    #[test]
    fn structured_runs_match_schedules() {
        let mut c = config(r#"{"kind": "binary", "L": 3}"#);
        c.diffusion.schedule = Schedule::Structured;
        let net = trial_network(&c, 0).unwrap();
        let (_, locals) = trial_locals(&c, &net, 0).unwrap();
        let run = run_diffusion(&c.diffusion, &net, &locals).unwrap();
        assert_eq!(run.rounds, 2 * 3);
        let d_tas = crate::diffusion::payload_sizes(2, 5).unwrap().1 as u64;
        assert_eq!(run.log().total(), (3 * 15 - 3) / 2 * d_tas);
    }

    #[test]
    fn region_input_two_node_example() {
        let text = r#"{
            "samples": [
                {"node_id": 0, "position": [0.0, 0.0], "phi": [1.0], "y": 1.0},
                {"node_id": 1, "position": [0.0, 0.0], "phi": [1.0], "y": -1.0}
            ],
            "signs": [[1, 1], [1, -1]],
            "request": {"search_box": [[-2.0, 2.0]], "grid_per_dim": [8], "q": 1, "tie_seed": 0}
        }"#;
        let input = RegionInput::from_json(text).unwrap();
        let r = input.evaluate().unwrap();
        assert!((r.volume - 2.0).abs() < 1e-12);
        let agg = input.aggregate().unwrap();
        let direct = RegionInput {
            aggregate: Some(agg),
            samples: None,
            signs: None,
            weights: None,
            request: input.request.clone(),
        };
        assert_eq!(direct.evaluate().unwrap(), r);
        let neither = RegionInput { samples: None, ..input };
        assert!(neither.evaluate().is_err());
    }

    #[test]
    fn header_line_names_hash_and_seed() {
        let c = config(r#"{"kind": "complete", "N": 3}"#);
        let h = RecordHeader::new("coverage", &c);
        let line = h.comment_line();
        assert!(line.starts_with("# tool=spsnet version="));
        assert!(line.contains(&format!("config={}", c.hash())));
        assert!(line.ends_with("seed=3"));
    }
}
