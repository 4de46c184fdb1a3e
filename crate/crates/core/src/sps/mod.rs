//! Sign-perturbed sums: aggregate sums, the rank test with uniform tie
//! breaking, the least-squares estimate and grid evaluation of the region.

mod aggregate;
pub mod region;
mod signs;

pub use aggregate::{
    local_aggregate, local_aggregates, payload_scalar_count, sum_aggregates, truncated_aggregate,
    weighted_sum, AggregateSums,
};
pub use region::{evaluate_region, RegionRequest, RegionResult, RunLengthMask, SearchBox};
pub use signs::{draw_sign_matrix, SignMatrix};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Condition number above which the normal matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpsConfig {
    pub m: usize,
    pub q: usize,
    pub sign_seed: u64,
}

impl SpsConfig {
    pub fn new(m: usize, q: usize, sign_seed: u64) -> Result<Self> {
        validate_mq(m, q)?;
        Ok(Self { m, q, sign_seed })
    }

    pub fn confidence(&self) -> f64 {
        1.0 - self.q as f64 / self.m as f64
    }
}

pub(crate) fn validate_mq(m: usize, q: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("m must be at least 2, got {m}")));
    }
    if q == 0 || q >= m {
        return Err(Error::InvalidParameter(format!(
            "q must satisfy 1 <= q < m, got q={q}, m={m}"
        )));
    }
    Ok(())
}

/// Per-node contribution weights `c_i` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WrapUpWeights(Vec<f64>);

impl WrapUpWeights {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = c
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidParameter(format!(
                "weight c[{i}] = {v} outside [0, 1]"
            )));
        }
        Ok(Self(c))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::InvalidParameter(format!("node {k} out of range for N={n}")));
        }
        let mut c = vec![0.0; n];
        c[k] = 1.0;
        Ok(Self(c))
    }

    /// Clamps into `[0, 1]`; used for weights known to be valid up to
    /// floating-point error.
    pub fn clamped(c: Vec<f64>) -> Self {
        Self(c.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(|&v| v == 1.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for WrapUpWeights {
    type Error = Error;
    fn try_from(c: Vec<f64>) -> Result<Self> {
        Self::new(c)
    }
}

impl From<WrapUpWeights> for Vec<f64> {
    fn from(w: WrapUpWeights) -> Self {
        w.0
    }
}

/// `Z_j(p) = || vec_j - mat_j p ||^2` for `j = 0..m`.
pub fn z_values(agg: &AggregateSums, p: &[f64]) -> Result<Vec<f64>> {
    check_len(agg.n_p(), p.len(), "parameter length vs n_p")?;
    Ok((0..agg.m()).map(|j| z_single(agg, j, p)).collect())
}

#[inline]
pub(crate) fn z_single(agg: &AggregateSums, j: usize, p: &[f64]) -> f64 {
    let n = agg.n_p();
    let v = agg.vec_slice(j);
    let mat = agg.mat_slice(j);
    let mut acc = 0.0;
    for r in 0..n {
        let row = &mat[r * n..(r + 1) * n];
        let mut s = v[r];
        for c in 0..n {
            s -= row[c] * p[c];
        }
        acc += s * s;
    }
    acc
}

/// Outcome of ranking `Z_0` against the other values before ties are
/// resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RankCounts {
    pub strictly_above: usize,
    pub tied: usize,
}

pub(crate) fn rank_counts(z: &[f64]) -> RankCounts {
    let z0 = z[0];
    let mut counts = RankCounts {
        strictly_above: 0,
        tied: 0,
    };
    for &zj in &z[1..] {
        if zj > z0 {
            counts.strictly_above += 1;
        } else if zj == z0 {
            counts.tied += 1;
        }
    }
    counts
}

/// Resolves ties by uniform keys: `Z_0` and each tied value draw a
/// `U(0,1)` key and tied values with a larger key rank above `Z_0`.
/// No randomness is consumed when the answer does not depend on it.
pub(crate) fn resolve<R: Rng>(counts: RankCounts, q: usize, rng: impl FnOnce() -> R) -> bool {
    if counts.strictly_above >= q {
        return true;
    }
    if counts.strictly_above + counts.tied < q {
        return false;
    }
    let mut rng = rng();
    let u0: f64 = rng.random();
    let tied_above = (0..counts.tied).filter(|_| rng.random::<f64>() > u0).count();
    counts.strictly_above + tied_above >= q
}

/// True iff `Z_0` is not among the `q` largest values once ties are broken
/// uniformly at random.
pub fn membership<R: Rng>(z: &[f64], q: usize, tie_rng: &mut R) -> Result<bool> {
    if z.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 Z values, got {}",
            z.len()
        )));
    }
    validate_mq(z.len(), q)?;
    Ok(resolve(rank_counts(z), q, || tie_rng))
}

/// Ascending permutation of `z` where ties are ordered by independent
/// uniform keys, so all orderings of a tied group are equally likely.
pub fn tie_broken_order<R: Rng + ?Sized>(z: &[f64], tie_rng: &mut R) -> Vec<usize> {
    let keys: Vec<f64> = z.iter().map(|_| tie_rng.random()).collect();
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(keys[a].total_cmp(&keys[b])));
    order
}

/// 2-norm condition number of `mat_0`.
pub fn condition_number(agg: &AggregateSums) -> f64 {
    let n = agg.n_p();
    let mat = DMatrix::from_row_slice(n, n, agg.mat_slice(0));
    let sv = mat.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves the normal equations `mat_0 p = vec_0`.
pub fn ls_estimate(agg: &AggregateSums) -> Result<Vec<f64>> {
    let condition = condition_number(agg);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularMatrix { condition });
    }
    let n = agg.n_p();
    let mat = DMatrix::from_row_slice(n, n, agg.mat_slice(0));
    let rhs = DVector::from_column_slice(agg.vec_slice(0));
    mat.lu()
        .solve(&rhs)
        .map(|p| p.iter().copied().collect())
        .ok_or(Error::SingularMatrix { condition })
}
