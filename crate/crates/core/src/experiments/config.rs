use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::Protocol;
use crate::error::{Error, Result};
use crate::model::FieldConfig;
use crate::sps::region::{SearchBox, MAX_GRID_DIM};
use crate::sps::validate_mq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    /// Random geometric graph on the unit square.
    Geometric,
    /// BFS spanning tree of a random geometric graph.
    RandomTree,
    /// Complete binary tree of depth `L`.
    Binary,
    /// Clusterheads in a full mesh, members attached to one head each.
    Clustered,
    Complete,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Geometric => "geometric",
            NetworkKind::RandomTree => "random-tree",
            NetworkKind::Binary => "binary",
            NetworkKind::Clustered => "clustered",
            NetworkKind::Complete => "complete",
        }
    }
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown topology kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: NetworkKind,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_c: Option<usize>,
    /// Draw a fresh network for every trial instead of one per experiment.
    #[serde(default)]
    pub resample: bool,
}

impl TopologyConfig {
    /// Number of nodes implied by the section.
    pub fn node_count(&self) -> Result<usize> {
        match self.kind {
            NetworkKind::Binary => {
                let l = self
                    .depth
                    .ok_or_else(|| Error::Config("binary topology needs L".into()))?;
                if l > 20 {
                    return Err(Error::Config(format!("binary depth L={l} too large")));
                }
                let n = (1usize << (l + 1)) - 1;
                match self.n {
                    Some(given) if given != n => Err(Error::Config(format!(
                        "N={given} does not match a binary tree of depth {l} ({n} nodes)"
                    ))),
                    _ => Ok(n),
                }
            }
            _ => self
                .n
                .ok_or_else(|| Error::Config(format!("{} topology needs N", self.kind.name()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count()?;
        if n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        match self.kind {
            NetworkKind::Geometric | NetworkKind::RandomTree if n < 2 => {
                Err(Error::Config("random geometric networks need N >= 2".into()))
            }
            NetworkKind::Clustered => {
                let n_c = self
                    .n_c
                    .ok_or_else(|| Error::Config("clustered topology needs n_c".into()))?;
                if n_c == 0 || n_c > n {
                    return Err(Error::Config(format!("need 1 <= n_c <= N, got n_c={n_c}, N={n}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpsSection {
    pub m: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Every node transmits in every round.
    #[default]
    Free,
    /// Level schedule on trees, member/head phases on clustered networks.
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub protocol: Protocol,
    /// Rounds (iterations for consensus). Absent means run to completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub schedule: Schedule,
    /// Protocols compared by the trade-off study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<Vec<Protocol>>,
    /// Consensus iterations at which the trade-off study evaluates regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Tas,
            rounds: None,
            schedule: Schedule::Free,
            compare: None,
            checkpoints: None,
        }
    }
}

pub const DEFAULT_COMPARE: [Protocol; 4] = [Protocol::Mf, Protocol::Tas, Protocol::Metropolis, Protocol::Perron];
pub const DEFAULT_CHECKPOINTS: [usize; 13] = [0, 1, 2, 3, 4, 6, 8, 11, 16, 22, 32, 45, 64];
/// Round cap for free-running flooding and TAS that never go quiet.
pub const DEFAULT_ROUND_CAP: usize = 30;
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 0.4;

impl DiffusionConfig {
    pub fn compared(&self) -> Vec<Protocol> {
        self.compare.clone().unwrap_or_else(|| DEFAULT_COMPARE.to_vec())
    }

    pub fn consensus_checkpoints(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone().unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec());
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    /// Defaults to `p_true ± 0.4` in every dimension.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub search_box: Option<SearchBox>,
    pub grid_per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Nodes whose estimates are assessed; defaults depend on the study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
    #[serde(default)]
    pub all_nodes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "N")]
    pub n_values: Vec<usize>,
    pub n_p: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![10, 20, 30, 50, 75, 100, 150, 200, 300, 400, 500],
            n_p: vec![2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub topology: TopologyConfig,
    pub model: FieldConfig,
    pub sps: SpsSection,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSection>,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Built-in starting points for the command line studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 20-node geometric network, n_p = 2, m = 10, q = 1, MF to completion.
    Coverage,
    /// 100-node geometric networks, n_p = 3, m = 10, q = 1, 24 cells per axis.
    Tradeoff,
    /// Random trees over the default sweep, m = 10.
    SuccessRate,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let field = |p: Vec<f64>| FieldConfig::polynomial(p).expect("valid preset model");
        let base = |kind, n, model, trials| Self {
            seed: 0,
            topology: TopologyConfig {
                kind,
                n: Some(n),
                depth: None,
                n_c: None,
                resample: false,
            },
            model,
            sps: SpsSection { m: 10, q: 1 },
            diffusion: DiffusionConfig::default(),
            region: None,
            trials,
            output_dir: None,
            evaluation: EvaluationConfig::default(),
            sweep: None,
        };
        match preset {
            Preset::Coverage => {
                let mut c = base(NetworkKind::Geometric, 20, field(vec![0.5, -0.3]), 2000);
                c.diffusion.protocol = Protocol::Mf;
                c
            }
            Preset::Tradeoff => {
                let mut c = base(NetworkKind::Geometric, 100, field(vec![0.3, -0.2, 0.5]), 50);
                c.region = Some(RegionSection {
                    search_box: None,
                    grid_per_dim: 24,
                });
                c
            }
            Preset::SuccessRate => {
                let mut c = base(NetworkKind::RandomTree, 100, field(vec![0.5, -0.3]), 100);
                c.sweep = Some(SweepConfig::default());
                c
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form, without `output_dir`.
    pub fn hash(&self) -> String {
        let hashed = Self {
            output_dir: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&hashed).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.topology.node_count().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.model.validate()?;
        validate_mq(self.sps.m, self.sps.q)?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let n = self.n();
        if let Some(nodes) = &self.evaluation.nodes {
            if nodes.is_empty() {
                return Err(Error::Config("evaluation.nodes is empty".into()));
            }
            if let Some(&k) = nodes.iter().find(|&&k| k >= n) {
                return Err(Error::Config(format!("evaluation node {k} outside 0..{n}")));
            }
        }
        if let Some(region) = &self.region {
            if region.grid_per_dim == 0 {
                return Err(Error::Config("region.grid_per_dim must be at least 1".into()));
            }
            if let Some(b) = &region.search_box {
                if b.dim() != self.model.n_p {
                    return Err(Error::Config(format!(
                        "region box has {} dimensions, model has n_p={}",
                        b.dim(),
                        self.model.n_p
                    )));
                }
            }
        }
        if self.diffusion.schedule == Schedule::Structured {
            let ok_protocol = matches!(self.diffusion.protocol, Protocol::Mf | Protocol::Tas);
            let ok_topology = matches!(
                self.topology.kind,
                NetworkKind::RandomTree | NetworkKind::Binary | NetworkKind::Clustered
            );
            if !ok_protocol || !ok_topology {
                return Err(Error::Config(
                    "structured schedules need mf or tas on a tree or clustered topology".into(),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.n_values.is_empty() || sweep.n_p.is_empty() {
                return Err(Error::Config("sweep lists must be non-empty".into()));
            }
            if sweep.n_values.iter().any(|&v| v < 2) || sweep.n_p.contains(&0) {
                return Err(Error::Config("sweep needs N >= 2 and n_p >= 1".into()));
            }
        }
        Ok(())
    }

    /// Region request for a trial, defaulting the box around `p_true`.
    pub fn region_box(&self) -> Result<SearchBox> {
        match self.region.as_ref().and_then(|r| r.search_box.clone()) {
            Some(b) => Ok(b),
            None => SearchBox::centered(&self.model.p_true, DEFAULT_BOX_HALF_WIDTH),
        }
    }

    pub fn require_region(&self) -> Result<&RegionSection> {
        let region = self
            .region
            .as_ref()
            .ok_or_else(|| Error::Config("this study needs a region section".into()))?;
        if self.model.n_p > MAX_GRID_DIM {
            return Err(Error::Config(format!(
                "region grids support n_p <= {MAX_GRID_DIM}, got {}",
                self.model.n_p
            )));
        }
        Ok(region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "seed": 7,
        "topology": {"kind": "geometric", "N": 20},
        "model": {"n_p": 2, "n_x": 2, "regressor": {"family": "polynomial"},
                  "p_true": [0.5, -0.3], "noise": {"kind": "gaussian", "scale": 0.1}},
        "sps": {"m": 10, "q": 1},
        "diffusion": {"protocol": "tas", "rounds": 1},
        "trials": 5
    }"#;

    #[test]
    fn parses_and_hashes_stably() {
        let a = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(a.n(), 20);
        assert_eq!(a.diffusion.rounds, Some(1));
        let b = ExperimentConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), d.hash());
    }

    #[test]
    fn rejects_bad_sections() {
        let bad = [
            SAMPLE.replace("\"trials\": 5", "\"trials\": 0"),
            SAMPLE.replace("\"q\": 1", "\"q\": 10"),
            SAMPLE.replace("\"N\": 20", "\"N\": 1"),
            SAMPLE.replace("\"seed\": 7", "\"seed\": 7, \"extra\": 1"),
            SAMPLE.replace("\"tas\"", "\"gossip\""),
            SAMPLE.replace("[0.5, -0.3]", "[0.5]"),
        ];
        for text in bad {
            assert!(ExperimentConfig::from_json(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn binary_depth_fixes_n() {
        let text = SAMPLE.replace(r#""kind": "geometric", "N": 20"#, r#""kind": "binary", "L": 4"#);
        assert_eq!(ExperimentConfig::from_json(&text).unwrap().n(), 31);
        let clash = SAMPLE.replace(r#""kind": "geometric", "N": 20"#, r#""kind": "binary", "L": 4, "N": 30"#);
        assert!(ExperimentConfig::from_json(&clash).is_err());
    }

    #[test]
    fn presets_validate() {
        for p in [Preset::Coverage, Preset::Tradeoff, Preset::SuccessRate] {
            ExperimentConfig::preset(p).validate().unwrap();
        }
        assert_eq!("random-tree".parse::<NetworkKind>().unwrap(), NetworkKind::RandomTree);
        assert!("ring".parse::<NetworkKind>().is_err());
    }

    #[test]
    fn structured_schedule_needs_tree() {
        let text = SAMPLE.replace(r#""rounds": 1"#, r#""schedule": "structured""#);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    fn assert_keys_match(value: &serde_json::Value, schema: &serde_json::Value, path: &str) {
        let Some(obj) = value.as_object() else { return };
        let Some(props) = schema.get("properties").and_then(|p| p.as_object()) else {
            return;
        };
        let mut a: Vec<&String> = obj.keys().collect();
        let mut b: Vec<&String> = props.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "keys at {path}");
        for (k, v) in obj {
            assert_keys_match(v, &props[k], &format!("{path}.{k}"));
        }
    }

    #[test]
    fn schema_matches_serialized_fields() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../../schema/experiment_config.schema.json")).unwrap();
        let mut c = ExperimentConfig::preset(Preset::Tradeoff);
        c.topology.n_c = Some(4);
        c.topology.depth = Some(3);
        c.diffusion.rounds = Some(3);
        c.diffusion.compare = Some(vec![Protocol::Mf]);
        c.diffusion.checkpoints = Some(vec![0, 1]);
        c.region.as_mut().unwrap().search_box = Some(SearchBox::centered(&[0.0; 3], 0.5).unwrap());
        c.output_dir = Some("out".into());
        c.evaluation.nodes = Some(vec![0]);
        c.sweep = Some(SweepConfig::default());
        let value = serde_json::to_value(&c).unwrap();
        assert_keys_match(&value, &schema, "$");
        let required: Vec<&str> = schema["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let mut minimal = value.as_object().unwrap().clone();
        minimal.retain(|k, _| required.contains(&k.as_str()));
        minimal["topology"] = serde_json::json!({"kind": "geometric", "N": 5});
        let parsed: ExperimentConfig = serde_json::from_value(serde_json::Value::Object(minimal)).unwrap();
        assert_eq!(parsed.diffusion, DiffusionConfig::default());
    }
}
