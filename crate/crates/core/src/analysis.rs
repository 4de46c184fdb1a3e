//! Closed-form traffic predictions, in exact integer arithmetic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffusion::{payload_sizes, Protocol};
use crate::error::{Error, Result};
use crate::topology::TreeTopology;

fn overflow() -> Error {
    Error::InvalidParameter("traffic count overflows u64".into())
}

fn mul(a: u64, b: u64) -> Result<u64> {
    a.checked_mul(b).ok_or_else(overflow)
}

fn check_census(lambda: &[usize], lambda_bar: &[usize]) -> Result<()> {
    if lambda.is_empty() || lambda[0] != 1 {
        return Err(Error::InvalidParameter("census must start with Λ(0) = 1".into()));
    }
    if lambda.len() != lambda_bar.len() {
        return Err(Error::InvalidParameter(format!(
            "census lengths differ: {} levels vs {}",
            lambda.len(),
            lambda_bar.len()
        )));
    }
    for (l, (&a, &b)) in lambda.iter().zip(lambda_bar).enumerate() {
        if a == 0 || b > a {
            return Err(Error::InvalidParameter(format!(
                "bad census at level {l}: Λ={a}, Λ̄={b}"
            )));
        }
    }
    Ok(())
}

/// Sum over the inner levels `1..L` (empty when `L < 2`).
fn inner(v: &[usize]) -> u64 {
    let depth = v.len() - 1;
    if depth < 2 {
        0
    } else {
        v[1..depth].iter().map(|&x| x as u64).sum()
    }
}

/// Level-scheduled TAS on a tree: `(ΣΛ + Σ_inner Λ − Σ_inner Λ̄)·d_TAS`.
pub fn traffic_tas_random_tree(lambda: &[usize], lambda_bar: &[usize], d_tas: usize) -> Result<u64> {
    check_census(lambda, lambda_bar)?;
    let n: u64 = lambda.iter().map(|&x| x as u64).sum();
    mul(n + inner(lambda) - inner(lambda_bar), d_tas as u64)
}

/// Level-scheduled MF on a tree:
/// `(ΣΛ + Λ(L) + N·Σ_inner(Λ − Λ̄) + Σ_inner Λ̄)·d_MF`.
///
/// For a single node (`L = 0`) the terms evaluate to `2·d_MF`, although one
/// transmission suffices.
pub fn traffic_mf_random_tree(lambda: &[usize], lambda_bar: &[usize], n: usize, d_mf: usize) -> Result<u64> {
    check_census(lambda, lambda_bar)?;
    let total: u64 = lambda.iter().map(|&x| x as u64).sum();
    if total != n as u64 {
        return Err(Error::InvalidParameter(format!(
            "census counts {total} nodes but N = {n}"
        )));
    }
    let last = *lambda.last().unwrap() as u64;
    let with_sons = inner(lambda) - inner(lambda_bar);
    let units = total + last + mul(n as u64, with_sons)? + inner(lambda_bar);
    mul(units, d_mf as u64)
}

/// Depth `L` of a complete binary tree with `n = 2^{L+1} − 1` nodes.
pub fn binary_depth(n: usize) -> Result<usize> {
    let m = n.checked_add(1).ok_or_else(overflow)?;
    if n == 0 || !m.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "N = {n} is not of the form 2^(L+1) - 1"
        )));
    }
    Ok(m.trailing_zeros() as usize - 1)
}

/// `((3N − 3)/2)·d_TAS`; zero for `N = 1`.
pub fn traffic_tas_binary(n: usize, d_tas: usize) -> Result<u64> {
    binary_depth(n)?;
    mul((3 * n as u64 - 3) / 2, d_tas as u64)
}

/// `((N² + 1)/2)·d_MF`.
pub fn traffic_mf_binary(n: usize, d_mf: usize) -> Result<u64> {
    binary_depth(n)?;
    let n = n as u64;
    mul((mul(n, n)? + 1) / 2, d_mf as u64)
}

fn check_clusters(n: usize, n_c: usize) -> Result<()> {
    if n_c == 0 || n_c > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_c <= N, got n_c={n_c}, N={n}"
        )));
    }
    Ok(())
}

/// `(N + n_c)·d_TAS`.
pub fn traffic_tas_clustered(n: usize, n_c: usize, d_tas: usize) -> Result<u64> {
    check_clusters(n, n_c)?;
    mul((n + n_c) as u64, d_tas as u64)
}

/// `(N − n_c + n_c·N)·d_MF`.
pub fn traffic_mf_clustered(n: usize, n_c: usize, d_mf: usize) -> Result<u64> {
    check_clusters(n, n_c)?;
    let units = (n - n_c) as u64 + mul(n_c as u64, n as u64)?;
    mul(units, d_mf as u64)
}

/// Binary-tree size above which TAS sends fewer scalars than MF.
pub fn critical_n(n_p: usize, m: usize) -> Result<f64> {
    let (d_mf, d_tas) = payload_sizes(n_p, m)?;
    let k1 = d_mf as f64 / d_tas as f64;
    let disc = 9.0 - 4.0 * k1 * (3.0 + k1);
    if disc < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no crossover for n_p={n_p}, m={m} (discriminant {disc})"
        )));
    }
    Ok((3.0 + disc.sqrt()) / (2.0 * k1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Binary,
    RandomTree,
    Clustered,
}

impl TopologyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::RandomTree => "random-tree",
            Self::Clustered => "clustered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficPrediction {
    pub protocol: Protocol,
    pub topology_kind: TopologyKind,
    pub scalars: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_c: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub lambda: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub lambda_bar: Vec<usize>,
    pub d_mf: usize,
    pub d_tas: usize,
}

impl TrafficPrediction {
    fn base(protocol: Protocol, kind: TopologyKind, n: usize, n_p: usize, m: usize) -> Result<Self> {
        let (d_mf, d_tas) = payload_sizes(n_p, m)?;
        Ok(Self {
            protocol,
            topology_kind: kind,
            scalars: 0,
            n,
            depth: None,
            n_c: None,
            lambda: Vec::new(),
            lambda_bar: Vec::new(),
            d_mf,
            d_tas,
        })
    }

    fn check_protocol(protocol: Protocol) -> Result<()> {
        match protocol {
            Protocol::Mf | Protocol::Tas => Ok(()),
            p => Err(Error::InvalidParameter(format!("no closed form for protocol {p}"))),
        }
    }

    pub fn binary(protocol: Protocol, n: usize, n_p: usize, m: usize) -> Result<Self> {
        Self::check_protocol(protocol)?;
        let mut p = Self::base(protocol, TopologyKind::Binary, n, n_p, m)?;
        p.depth = Some(binary_depth(n)?);
        p.scalars = match protocol {
            Protocol::Tas => traffic_tas_binary(n, p.d_tas)?,
            _ => traffic_mf_binary(n, p.d_mf)?,
        };
        Ok(p)
    }

    pub fn random_tree(protocol: Protocol, tree: &TreeTopology, n_p: usize, m: usize) -> Result<Self> {
        Self::census(protocol, tree.lambda(), tree.lambda_bar(), n_p, m)
    }

    pub fn census(protocol: Protocol, lambda: &[usize], lambda_bar: &[usize], n_p: usize, m: usize) -> Result<Self> {
        Self::check_protocol(protocol)?;
        let n = lambda.iter().sum();
        let mut p = Self::base(protocol, TopologyKind::RandomTree, n, n_p, m)?;
        p.scalars = match protocol {
            Protocol::Tas => traffic_tas_random_tree(lambda, lambda_bar, p.d_tas)?,
            _ => traffic_mf_random_tree(lambda, lambda_bar, n, p.d_mf)?,
        };
        p.depth = Some(lambda.len() - 1);
        p.lambda = lambda.to_vec();
        p.lambda_bar = lambda_bar.to_vec();
        Ok(p)
    }

    pub fn clustered(protocol: Protocol, n: usize, n_c: usize, n_p: usize, m: usize) -> Result<Self> {
        Self::check_protocol(protocol)?;
        let mut p = Self::base(protocol, TopologyKind::Clustered, n, n_p, m)?;
        p.n_c = Some(n_c);
        p.scalars = match protocol {
            Protocol::Tas => traffic_tas_clustered(n, n_c, p.d_tas)?,
            _ => traffic_mf_clustered(n, n_c, p.d_mf)?,
        };
        Ok(p)
    }

    fn same_setting(&self, other: &Self) -> bool {
        self.topology_kind == other.topology_kind
            && self.n == other.n
            && self.depth == other.depth
            && self.n_c == other.n_c
            && self.lambda == other.lambda
            && self.lambda_bar == other.lambda_bar
            && self.d_mf == other.d_mf
            && self.d_tas == other.d_tas
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    /// Cheaper protocol; `None` on a tie.
    pub winner: Option<Protocol>,
    pub winner_scalars: u64,
    pub loser_scalars: u64,
    pub margin: u64,
}

/// Picks the protocol transmitting fewer scalars on one setting.
pub fn compare(a: &TrafficPrediction, b: &TrafficPrediction) -> Result<Comparison> {
    if !a.same_setting(b) {
        return Err(Error::InvalidParameter("predictions refer to different settings".into()));
    }
    let (lo, hi) = if a.scalars <= b.scalars { (a, b) } else { (b, a) };
    Ok(Comparison {
        winner: (lo.scalars != hi.scalars).then_some(lo.protocol),
        winner_scalars: lo.scalars,
        loser_scalars: hi.scalars,
        margin: hi.scalars - lo.scalars,
    })
}

/// Rows `topology, protocol, N, params, predicted_scalars`; `params` is a
/// `;`-separated `key=value` list.
pub fn write_predictions_csv<W: Write>(preds: &[TrafficPrediction], w: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["topology", "protocol", "N", "params", "predicted_scalars"])
        .map_err(io)?;
    for p in preds {
        let mut params = vec![format!("d_mf={}", p.d_mf), format!("d_tas={}", p.d_tas)];
        if let Some(l) = p.depth {
            params.push(format!("L={l}"));
        }
        if let Some(c) = p.n_c {
            params.push(format!("n_c={c}"));
        }
        wr.write_record([
            p.topology_kind.name().to_string(),
            p.protocol.name().to_string(),
            p.n.to_string(),
            params.join(";"),
            p.scalars.to_string(),
        ])
        .map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(())
}
