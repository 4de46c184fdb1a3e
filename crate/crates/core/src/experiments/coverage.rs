use rayon::prelude::*;
use serde::Serialize;

use super::{run_diffusion, trial_locals, trial_network, weight_summary, ExperimentConfig, RecordHeader};
use crate::error::Result;
use crate::rng::substream;
use crate::sps::{membership, z_values};

/// Normal quantile used for the reported interval.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub trial: usize,
    pub node: usize,
    pub rounds_done: usize,
    pub node_scalars: u64,
    pub covers_truth: bool,
    pub c_sum: f64,
    pub c_min: f64,
    pub c_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub nominal: f64,
    pub trials: usize,
    pub evaluations: usize,
    pub hits: usize,
    pub coverage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Lowest and highest per-node coverage when several nodes are assessed.
    pub node_min: f64,
    pub node_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRecord {
    pub header: RecordHeader,
    pub summary: CoverageSummary,
    pub rows: Vec<CoverageRow>,
}

/// Wilson score interval for `hits` successes in `n` trials at normal
/// quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Checks whether `p_true` lies in the region built at the assessed nodes
/// after the configured diffusion, over `trials` fresh noise and sign draws.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageRecord> {
    config.validate()?;
    let n = config.n();
    let nodes: Vec<usize> = if config.evaluation.all_nodes {
        (0..n).collect()
    } else {
        config.evaluation.nodes.clone().unwrap_or_else(|| vec![0])
    };
    let per_trial: Result<Vec<Vec<CoverageRow>>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let network = trial_network(config, trial)?;
            let (_, locals) = trial_locals(config, &network, trial)?;
            let run = run_diffusion(&config.diffusion, &network, &locals)?;
            let sent = run.log().per_node_totals();
            nodes
                .iter()
                .map(|&k| {
                    let est = run.estimate(k, &locals)?;
                    let z = z_values(&est.aggregate, &config.model.p_true)?;
                    let mut ties = substream(config.seed, "ties", (trial * n + k) as u64);
                    let covers_truth = membership(&z, config.sps.q, &mut ties)?;
                    let (c_sum, c_min, c_max) = weight_summary(&est.raw_weights);
                    Ok(CoverageRow {
                        trial,
                        node: k,
                        rounds_done: run.rounds,
                        node_scalars: sent[k],
                        covers_truth,
                        c_sum,
                        c_min,
                        c_max,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<CoverageRow> = per_trial?.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.trial, r.node));

    let hits = rows.iter().filter(|r| r.covers_truth).count();
    let (ci_low, ci_high) = wilson_interval(hits, rows.len(), Z_95);
    let node_rates: Vec<f64> = nodes
        .iter()
        .map(|&k| {
            let mine: Vec<&CoverageRow> = rows.iter().filter(|r| r.node == k).collect();
            mine.iter().filter(|r| r.covers_truth).count() as f64 / mine.len() as f64
        })
        .collect();
    let summary = CoverageSummary {
        nominal: 1.0 - config.sps.q as f64 / config.sps.m as f64,
        trials: config.trials,
        evaluations: rows.len(),
        hits,
        coverage: hits as f64 / rows.len() as f64,
        ci_low,
        ci_high,
        node_min: node_rates.iter().copied().fold(f64::INFINITY, f64::min),
        node_max: node_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(CoverageRecord {
        header: RecordHeader::new("coverage", config),
        summary,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_hand_values() {
        // 50/100 at z = 2: center 0.5, half-width 2·sqrt(0.0025 + 0.0001)/1.04
        let (lo, hi) = wilson_interval(50, 100, 2.0);
        let half = 2.0 * (0.0026f64).sqrt() / 1.04;
        assert!((lo - (0.5 - half)).abs() < 1e-12);
        assert!((hi - (0.5 + half)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 10, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.2 && hi < 0.35);
        assert_eq!(wilson_interval(0, 0, Z_95), (0.0, 1.0));
    }
}
