use std::ops::{AddAssign, SubAssign};

use nalgebra::{DMatrixView, DVectorView};
use serde::{Deserialize, Serialize};

use super::signs::SignMatrix;
use super::WrapUpWeights;
use crate::error::{check_len, Error, Result};
use crate::model::RegressorSample;

/// The `m` pairs `(sum c_i a_ji phi_i y_i, sum c_i a_ji phi_i phi_i^T)`.
///
/// Storage is one flat buffer: the `m` vectors first, then the `m` full
/// `n_p x n_p` matrices, each row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSums {
    n_p: usize,
    m: usize,
    data: Vec<f64>,
}

impl AggregateSums {
    pub fn zero(n_p: usize, m: usize) -> Self {
        Self {
            n_p,
            m,
            data: vec![0.0; m * (n_p + n_p * n_p)],
        }
    }

    /// Wraps a flat buffer laid out as described on the type.
    pub fn from_raw(n_p: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        check_len(m * (n_p + n_p * n_p), data.len(), "raw aggregate buffer")?;
        Ok(Self { n_p, m, data })
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Real scalars on the wire, exploiting the symmetry of each matrix.
    pub fn payload_scalar_count(&self) -> usize {
        payload_scalar_count(self.n_p, self.m)
    }

    pub fn vec_slice(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_p..(j + 1) * self.n_p]
    }

    /// Row-major `n_p x n_p` matrix of sum `j`.
    pub fn mat_slice(&self, j: usize) -> &[f64] {
        let base = self.m * self.n_p;
        let sq = self.n_p * self.n_p;
        &self.data[base + j * sq..base + (j + 1) * sq]
    }

    pub fn vec_j(&self, j: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(self.vec_slice(j), self.n_p)
    }

    pub fn mat_j(&self, j: usize) -> DMatrixView<'_, f64> {
        // symmetric, so row-major and column-major reads coincide
        DMatrixView::from_slice(self.mat_slice(j), self.n_p, self.n_p)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.n_p != other.n_p || self.m != other.m {
            return Err(Error::InvalidParameter(format!(
                "aggregate shape mismatch: (n_p={}, m={}) vs (n_p={}, m={})",
                self.n_p, self.m, other.n_p, other.m
            )));
        }
        Ok(())
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &Self, weight: f64) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_p: self.n_p,
            m: self.m,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Largest asymmetry `|M_j[a,b] - M_j[b,a]|` over all matrices.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n_p;
        (0..self.m)
            .flat_map(|j| {
                let mat = self.mat_slice(j);
                (0..n).flat_map(move |a| (0..n).map(move |b| (mat[a * n + b] - mat[b * n + a]).abs()))
            })
            .fold(0.0, f64::max)
    }

    /// Max elementwise difference relative to the larger magnitude of the
    /// two buffers (absolute below 1).
    pub fn relative_distance(&self, other: &Self) -> f64 {
        let scale = self
            .data
            .iter()
            .chain(&other.data)
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

impl AddAssign<&AggregateSums> for AggregateSums {
    fn add_assign(&mut self, rhs: &AggregateSums) {
        self.add_scaled(rhs, 1.0).expect("aggregate shape mismatch");
    }
}

impl SubAssign<&AggregateSums> for AggregateSums {
    fn sub_assign(&mut self, rhs: &AggregateSums) {
        self.add_scaled(rhs, -1.0).expect("aggregate shape mismatch");
    }
}

pub fn payload_scalar_count(n_p: usize, m: usize) -> usize {
    m * (n_p + n_p * (n_p + 1) / 2)
}

/// Local contribution of one node: `vec_j = a_j phi y`, `mat_j = a_j phi phi^T`,
/// with `a_0 = +1` regardless of `signs[0]`.
pub fn local_aggregate(sample: &RegressorSample, signs: &[i8]) -> Result<AggregateSums> {
    let n_p = sample.phi.len();
    let m = signs.len();
    if m < 2 {
        return Err(Error::InvalidParameter(format!("m must be at least 2, got {m}")));
    }
    if signs.iter().any(|&a| a != 1 && a != -1) {
        return Err(Error::InvalidParameter("signs must be +1 or -1".into()));
    }
    let mut agg = AggregateSums::zero(n_p, m);
    let base = m * n_p;
    for j in 0..m {
        let a = if j == 0 { 1.0 } else { signs[j] as f64 };
        for r in 0..n_p {
            agg.data[j * n_p + r] = a * sample.phi[r] * sample.y;
            for c in 0..n_p {
                agg.data[base + j * n_p * n_p + r * n_p + c] = a * sample.phi[r] * sample.phi[c];
            }
        }
    }
    Ok(agg)
}

/// Local aggregates of every node, using column `i` of the sign matrix.
pub fn local_aggregates(samples: &[RegressorSample], signs: &SignMatrix) -> Result<Vec<AggregateSums>> {
    check_len(signs.n(), samples.len(), "sign matrix columns vs samples")?;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| local_aggregate(s, &signs.column(i)))
        .collect()
}

pub fn sum_aggregates(a: &AggregateSums, b: &AggregateSums) -> Result<AggregateSums> {
    let mut out = a.clone();
    out.add_scaled(b, 1.0)?;
    Ok(out)
}

/// Node-`i` contributions scaled by `c_i`. All-ones weights give the
/// complete aggregate.
pub fn truncated_aggregate(
    samples: &[RegressorSample],
    signs: &SignMatrix,
    weights: &WrapUpWeights,
) -> Result<AggregateSums> {
    check_len(samples.len(), weights.len(), "weights vs samples")?;
    let locals = local_aggregates(samples, signs)?;
    let n_p = samples.first().map(|s| s.phi.len()).unwrap_or(1);
    weighted_sum(&locals, weights.as_slice(), n_p, signs.m())
}

/// `sum_i w_i * parts[i]`, skipping zero weights.
pub fn weighted_sum(parts: &[AggregateSums], weights: &[f64], n_p: usize, m: usize) -> Result<AggregateSums> {
    check_len(parts.len(), weights.len(), "weights vs aggregates")?;
    let mut out = AggregateSums::zero(n_p, m);
    for (part, &w) in parts.iter().zip(weights) {
        if w != 0.0 {
            out.add_scaled(part, w)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sps::signs::draw_sign_matrix;
    use proptest::prelude::*;

    fn sample(phi: Vec<f64>, y: f64) -> RegressorSample {
        RegressorSample {
            node_id: 0,
            position: vec![0.0, 0.0],
            phi,
            y,
        }
    }

    #[test]
    fn local_expansion_by_hand() {
        let agg = local_aggregate(&sample(vec![1.0, 0.0], 2.0), &[1, -1]).unwrap();
        assert_eq!(agg.vec_slice(0), &[2.0, 0.0]);
        assert_eq!(agg.vec_slice(1), &[-2.0, 0.0]);
        assert_eq!(agg.mat_slice(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(agg.mat_slice(1), &[-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(agg.payload_scalar_count(), 2 * (2 + 3));
    }

    #[test]
    fn zero_measurement_gives_zero_vectors() {
        let agg = local_aggregate(&sample(vec![0.3, 0.5], 0.0), &[1, 1, -1]).unwrap();
        for j in 0..3 {
            assert!(agg.vec_slice(j).iter().all(|&v| v == 0.0));
        }
        assert!(agg.max_asymmetry() <= 1e-12);
    }

    /// Direct evaluation of the sums, independent of the per-node path.
    fn batch_oracle(samples: &[RegressorSample], signs: &SignMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_p = samples[0].phi.len();
        let mut vecs = vec![vec![0.0; n_p]; signs.m()];
        let mut mats = vec![vec![0.0; n_p * n_p]; signs.m()];
        for j in 0..signs.m() {
            for (i, s) in samples.iter().enumerate() {
                let a = signs.get(j, i) as f64;
                for r in 0..n_p {
                    vecs[j][r] += a * s.phi[r] * s.y;
                    for c in 0..n_p {
                        mats[j][r * n_p + c] += a * s.phi[r] * s.phi[c];
                    }
                }
            }
        }
        (vecs, mats)
    }

    fn random_samples(n: usize, n_p: usize, seed: u64) -> Vec<RegressorSample> {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, "agg-test", 0);
        (0..n)
            .map(|i| RegressorSample {
                node_id: i,
                position: vec![0.0, 0.0],
                phi: (0..n_p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                y: rng.random_range(-2.0..2.0),
            })
            .collect()
    }

    #[test]
    fn fold_of_locals_matches_batch() {
        let samples = random_samples(37, 3, 1);
        let signs = draw_sign_matrix(6, 37, 99).unwrap();
        let locals = local_aggregates(&samples, &signs).unwrap();
        let mut folded = AggregateSums::zero(3, 6);
        for l in &locals {
            folded = sum_aggregates(&folded, l).unwrap();
        }
        let (vecs, mats) = batch_oracle(&samples, &signs);
        for j in 0..6 {
            for (a, b) in folded.vec_slice(j).iter().zip(&vecs[j]) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in folded.mat_slice(j).iter().zip(&mats[j]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let trunc = truncated_aggregate(&samples, &signs, &WrapUpWeights::ones(37)).unwrap();
        assert!(trunc.relative_distance(&folded) < 1e-12);
    }

    #[test]
    fn truncated_special_weights() {
        let samples = random_samples(5, 2, 3);
        let signs = draw_sign_matrix(4, 5, 7).unwrap();
        let zero = truncated_aggregate(&samples, &signs, &WrapUpWeights::zeros(5)).unwrap();
        assert!(zero.is_zero());
        let hot = truncated_aggregate(&samples, &signs, &WrapUpWeights::one_hot(5, 2).unwrap()).unwrap();
        let local = local_aggregate(&samples[2], &signs.column(2)).unwrap();
        assert_eq!(hot, local);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = AggregateSums::zero(2, 3);
        let b = AggregateSums::zero(3, 3);
        assert!(sum_aggregates(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn sum_is_commutative_and_associative(seed in 0u64..1000) {
            let samples = random_samples(3, 2, seed);
            let signs = draw_sign_matrix(3, 3, seed).unwrap();
            let l = local_aggregates(&samples, &signs).unwrap();
            let ab = sum_aggregates(&l[0], &l[1]).unwrap();
            let ba = sum_aggregates(&l[1], &l[0]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let left = sum_aggregates(&ab, &l[2]).unwrap();
            let right = sum_aggregates(&l[0], &sum_aggregates(&l[1], &l[2]).unwrap()).unwrap();
            prop_assert!(left.relative_distance(&right) < 1e-9);
            let id = sum_aggregates(&l[0], &AggregateSums::zero(2, 3)).unwrap();
            prop_assert_eq!(&id, &l[0]);
        }
    }
}
