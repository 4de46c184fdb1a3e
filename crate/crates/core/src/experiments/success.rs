use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, NetworkKind, RecordHeader, SweepConfig};
use crate::analysis::TrafficPrediction;
use crate::diffusion::{run_mf_tree, run_tas_tree, Protocol};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::sps::AggregateSums;
use crate::topology::random_tree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuccessRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub n_p: usize,
    pub trial: usize,
    pub depth: usize,
    pub tas_scalars: u64,
    pub mf_scalars: u64,
    pub tas_favorable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub n_p: usize,
    pub trials: usize,
    pub favorable: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessRecord {
    pub header: RecordHeader,
    pub summary: Vec<SuccessSummary>,
    pub rows: Vec<SuccessRow>,
}

impl SuccessRecord {
    pub fn rate(&self, n: usize, n_p: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.n == n && s.n_p == n_p)
            .map(|s| s.success_rate)
    }
}

fn checked(simulated: u64, predicted: u64) -> Result<u64> {
    if simulated == predicted {
        Ok(simulated)
    } else {
        Err(Error::TrafficMismatch { simulated, predicted })
    }
}

/// Share of random-tree realizations on which level-scheduled TAS sends
/// fewer scalars than MF, for every `(N, n_p)` of the sweep. Simulated
/// totals are checked against the census formulas.
///
/// The same tree realizations are used for every `n_p`.
pub fn run_success_rate(config: &ExperimentConfig) -> Result<SuccessRecord> {
    config.validate()?;
    if config.topology.kind != NetworkKind::RandomTree {
        return Err(Error::Config("success-rate needs topology kind random-tree".into()));
    }
    let sweep = config.sweep.clone().unwrap_or_default();
    let SweepConfig { n_values, n_p } = &sweep;
    let m = config.sps.m;
    let jobs: Vec<(usize, usize)> = n_values
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let per_job: Result<Vec<Vec<SuccessRow>>> = jobs
        .into_par_iter()
        .map(|(n, trial)| {
            let mut rng = substream(derive_seed(config.seed, "tree", n as u64), "trial", trial as u64);
            let (_, tree) = random_tree(n, &mut rng)?;
            n_p.iter()
                .map(|&np| {
                    let locals = vec![AggregateSums::zero(np, m); n];
                    let tas = run_tas_tree(&tree, &locals)?.log().total();
                    let mf = run_mf_tree(&tree, &locals)?.log().total();
                    let tas = checked(tas, TrafficPrediction::random_tree(Protocol::Tas, &tree, np, m)?.scalars)?;
                    let mf = checked(mf, TrafficPrediction::random_tree(Protocol::Mf, &tree, np, m)?.scalars)?;
                    Ok(SuccessRow {
                        n,
                        n_p: np,
                        trial,
                        depth: tree.depth(),
                        tas_scalars: tas,
                        mf_scalars: mf,
                        tas_favorable: tas < mf,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<SuccessRow> = per_job?.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.n, r.n_p, r.trial));

    let mut summary = Vec::new();
    for &n in n_values {
        for &np in n_p {
            let sel: Vec<&SuccessRow> = rows.iter().filter(|r| r.n == n && r.n_p == np).collect();
            let favorable = sel.iter().filter(|r| r.tas_favorable).count();
            summary.push(SuccessSummary {
                n,
                n_p: np,
                trials: sel.len(),
                favorable,
                success_rate: favorable as f64 / sel.len() as f64,
            });
        }
    }
    Ok(SuccessRecord {
        header: RecordHeader::new("success-rate", config),
        summary,
        rows,
    })
}
