use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spsnet::analysis::{compare, write_predictions_csv, TopologyKind, TrafficPrediction};
use spsnet::diffusion::Protocol;
use spsnet::experiments::{
    run_coverage, run_diffusion, run_success_rate, run_tradeoff, trial_locals, trial_network, weight_summary,
    write_csv_rows, write_file, ExperimentConfig, NetworkKind, Preset, RecordHeader, RegionInput,
};
use spsnet::rng::substream;
use spsnet::topology::random_tree;
use spsnet::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spsnet", version, about = "Distributed SPS confidence regions over simulated sensor networks")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a network and print it as JSON, an edge list or DOT.
    Topology {
        #[arg(long)]
        kind: Option<NetworkKind>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long = "L")]
        depth: Option<usize>,
        #[arg(long)]
        n_c: Option<usize>,
        #[arg(long)]
        dot: bool,
    },
    /// Run one diffusion and report per-node traffic and weights.
    Diffuse {
        #[arg(long)]
        protocol: Option<Protocol>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Evaluate a confidence region on a grid.
    Region {
        #[arg(long)]
        input: PathBuf,
    },
    /// Monte Carlo coverage of the true parameter.
    Coverage {
        #[arg(long)]
        all_nodes: bool,
    },
    /// Region volume against per-node traffic.
    Tradeoff,
    /// Share of random trees on which TAS beats MF.
    SuccessRate,
    /// Closed-form traffic of TAS and MF.
    TrafficPredict {
        #[arg(long)]
        topology: TopologyArg,
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "np")]
        n_p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n_c: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Binary,
    RandomTree,
    Clustered,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::Config(_) | Error::InvalidParameter(_)));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn load_config(cli: &Cli, preset: Preset) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Writes `body` to `dir/name`, or to stdout without a directory.
fn emit(dir: Option<&Path>, name: &str, body: &[u8]) -> anyhow::Result<()> {
    match dir {
        Some(d) => {
            write_file(d, name, |buf| {
                buf.extend_from_slice(body);
                Ok(())
            })?;
        }
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

fn csv_bytes<T: Serialize>(header: &RecordHeader, rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv_rows(header, rows, &mut buf)?;
    Ok(buf)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let format = cli.format;
    match &cli.command {
        Command::Topology {
            kind,
            n,
            depth,
            n_c,
            dot,
        } => {
            let mut config = load_config(&cli, Preset::Coverage)?;
            if let Some(k) = kind {
                config.topology.kind = *k;
            }
            if n.is_some() {
                config.topology.n = *n;
            }
            if depth.is_some() {
                config.topology.depth = *depth;
                if kind == &Some(NetworkKind::Binary) && n.is_none() {
                    config.topology.n = None;
                }
            }
            if n_c.is_some() {
                config.topology.n_c = *n_c;
            }
            config.validate()?;
            let net = trial_network(&config, 0)?;
            let dir = config.output_dir.as_deref();
            if *dot {
                let text = match &net.tree {
                    Some(t) => t.to_dot(),
                    None => net.graph.to_dot(),
                };
                return emit(dir, "topology.dot", text.as_bytes());
            }
            match format {
                Some(Format::Csv) => {
                    let header = RecordHeader::new("topology", &config);
                    #[derive(Serialize)]
                    struct Edge {
                        a: usize,
                        b: usize,
                    }
                    let edges: Vec<Edge> = net.graph.edges().into_iter().map(|[a, b]| Edge { a, b }).collect();
                    emit(dir, "topology.csv", &csv_bytes(&header, &edges)?)
                }
                _ => emit(dir, "topology.json", json(&net.graph)?.as_bytes()),
            }
        }
        Command::Diffuse { protocol, rounds } => {
            let mut config = load_config(&cli, Preset::Coverage)?;
            if let Some(p) = protocol {
                config.diffusion.protocol = *p;
            }
            if rounds.is_some() {
                config.diffusion.rounds = *rounds;
            }
            config.validate()?;
            let net = trial_network(&config, 0)?;
            let (_, locals) = trial_locals(&config, &net, 0)?;
            let run = run_diffusion(&config.diffusion, &net, &locals)?;
            let header = RecordHeader::new("diffuse", &config);
            let sent = run.log().per_node_totals();
            #[derive(Serialize)]
            struct NodeRow {
                node: usize,
                rounds_done: usize,
                node_scalars: u64,
                c_sum: f64,
                c_min: f64,
                c_max: f64,
                complete: bool,
            }
            let rows = (0..net.n())
                .map(|k| {
                    let est = run.estimate(k, &locals)?;
                    let (c_sum, c_min, c_max) = weight_summary(&est.raw_weights);
                    Ok(NodeRow {
                        node: k,
                        rounds_done: run.rounds,
                        node_scalars: sent[k],
                        c_sum,
                        c_min,
                        c_max,
                        complete: est.weights.is_complete(),
                    })
                })
                .collect::<spsnet::Result<Vec<_>>>()?;
            let dir = config.output_dir.as_deref();
            match format {
                Some(Format::Json) => {
                    #[derive(Serialize)]
                    struct Out<'a> {
                        header: &'a RecordHeader,
                        protocol: Protocol,
                        rounds: usize,
                        total_scalars: u64,
                        nodes: &'a [NodeRow],
                    }
                    let out = Out {
                        header: &header,
                        protocol: config.diffusion.protocol,
                        rounds: run.rounds,
                        total_scalars: run.log().total(),
                        nodes: &rows,
                    };
                    emit(dir, "diffuse.json", json(&out)?.as_bytes())
                }
                _ => {
                    if let Some(d) = dir {
                        let mut traffic = format!("{}\n", header.comment_line()).into_bytes();
                        run.log().write_csv(&mut traffic)?;
                        emit(Some(d), "traffic.csv", &traffic)?;
                    }
                    emit(dir, "nodes.csv", &csv_bytes(&header, &rows)?)
                }
            }
        }
        Command::Region { input } => {
            let text = std::fs::read_to_string(input)
                .with_context(|| format!("cannot read {}", input.display()))?;
            let result = RegionInput::from_json(&text)?.evaluate()?;
            let dir = cli.out.as_deref();
            match format {
                Some(Format::Csv) => {
                    let mut buf = Vec::new();
                    result.write_csv_summary(&mut buf)?;
                    emit(dir, "region.csv", &buf)
                }
                _ => emit(dir, "region.json", json(&result)?.as_bytes()),
            }
        }
        Command::Coverage { all_nodes } => {
            let mut config = load_config(&cli, Preset::Coverage)?;
            config.evaluation.all_nodes |= *all_nodes;
            let record = run_coverage(&config)?;
            let dir = config.output_dir.as_deref();
            if format == Some(Format::Json) {
                return emit(dir, "coverage.json", json(&record)?.as_bytes());
            }
            if let Some(d) = dir {
                emit(Some(d), "coverage.csv", &csv_bytes(&record.header, &record.rows)?)?;
            }
            emit(dir, "coverage_summary.csv", &csv_bytes(&record.header, &[&record.summary])?)
        }
        Command::Tradeoff => {
            let config = load_config(&cli, Preset::Tradeoff)?;
            let record = run_tradeoff(&config)?;
            let dir = config.output_dir.as_deref();
            if format == Some(Format::Json) {
                return emit(dir, "tradeoff.json", json(&record)?.as_bytes());
            }
            if let Some(d) = dir {
                emit(Some(d), "tradeoff.csv", &csv_bytes(&record.header, &record.rows)?)?;
            }
            emit(dir, "tradeoff_curves.csv", &csv_bytes(&record.header, &record.curves)?)
        }
        Command::SuccessRate => {
            let config = load_config(&cli, Preset::SuccessRate)?;
            let record = run_success_rate(&config)?;
            let dir = config.output_dir.as_deref();
            if format == Some(Format::Json) {
                return emit(dir, "success_rate.json", json(&record)?.as_bytes());
            }
            if let Some(d) = dir {
                emit(Some(d), "success_rate.csv", &csv_bytes(&record.header, &record.rows)?)?;
            }
            emit(dir, "success_rate_summary.csv", &csv_bytes(&record.header, &record.summary)?)
        }
        Command::TrafficPredict {
            topology,
            n,
            n_p,
            m,
            n_c,
        } => {
            let predict = |protocol| -> anyhow::Result<TrafficPrediction> {
                Ok(match topology {
                    TopologyArg::Binary => TrafficPrediction::binary(protocol, *n, *n_p, *m)?,
                    TopologyArg::Clustered => {
                        let Some(n_c) = n_c else {
                            bail!(Error::Config("clustered prediction needs --n-c".into()));
                        };
                        TrafficPrediction::clustered(protocol, *n, *n_c, *n_p, *m)?
                    }
                    TopologyArg::RandomTree => {
                        let (_, tree) = random_tree(*n, &mut substream(cli.seed.unwrap_or(0), "tree", 0))?;
                        TrafficPrediction::random_tree(protocol, &tree, *n_p, *m)?
                    }
                })
            };
            let preds = [predict(Protocol::Tas)?, predict(Protocol::Mf)?];
            let dir = cli.out.as_deref();
            match format {
                Some(Format::Json) => emit(dir, "traffic.json", json(&preds)?.as_bytes()),
                Some(Format::Csv) => {
                    let mut buf = Vec::new();
                    write_predictions_csv(&preds, &mut buf)?;
                    emit(dir, "traffic.csv", &buf)
                }
                None => {
                    let cmp = compare(&preds[0], &preds[1])?;
                    let kind: TopologyKind = preds[0].topology_kind;
                    let winner = cmp.winner.map_or("tie".to_string(), |p| p.name().to_uppercase());
                    let text = format!(
                        "topology {} N {}\nTAS {}\nMF {}\ncheaper {}\n",
                        kind.name(),
                        n,
                        preds[0].scalars,
                        preds[1].scalars,
                        winner
                    );
                    emit(dir, "traffic.txt", text.as_bytes())
                }
            }
        }
    }
}
