//! Linear measurement model: regressors, symmetric noise and per-node samples.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::{derive_seed, mix64, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    Laplace,
    TwoPoint,
}

/// Zero-symmetric noise law.
///
/// `scale` is the standard deviation for `gaussian`, the half-width for
/// `uniform`, the diversity `b` for `laplace` and the magnitude of the two
/// atoms `±scale` for `two-point`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            scale: 0.1,
        }
    }
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        let spec = Self { kind, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise scale must be finite and non-negative, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.scale;
        if s == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => Normal::new(0.0, s)
                .expect("validated scale")
                .sample(rng),
            NoiseKind::Uniform => rng.random_range(-s..=s),
            NoiseKind::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
                s * mag * u.signum()
            }
            NoiseKind::TwoPoint => {
                if rng.random::<bool>() {
                    s
                } else {
                    -s
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum RegressorFamily {
    /// Monomials of the position coordinates in graded order, starting with 1.
    Polynomial,
    /// Entries i.i.d. uniform on [-1, 1], a deterministic function of
    /// `(position, seed)`.
    SeededRandom { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub n_p: usize,
    pub n_x: usize,
    pub regressor: RegressorFamily,
    pub p_true: Vec<f64>,
    pub noise: NoiseSpec,
}

impl FieldConfig {
    pub fn new(p_true: Vec<f64>, regressor: RegressorFamily, noise: NoiseSpec) -> Result<Self> {
        let config = Self {
            n_p: p_true.len(),
            n_x: 2,
            regressor,
            p_true,
            noise,
        };
        config.validate()?;
        Ok(config)
    }

    /// Polynomial regressors in the plane with gaussian noise of scale 0.1.
    pub fn polynomial(p_true: Vec<f64>) -> Result<Self> {
        Self::new(p_true, RegressorFamily::Polynomial, NoiseSpec::default())
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_p == 0 {
            return Err(Error::InvalidParameter("n_p must be at least 1".into()));
        }
        if self.n_x == 0 {
            return Err(Error::InvalidParameter("n_x must be at least 1".into()));
        }
        check_len(self.n_p, self.p_true.len(), "p_true length vs n_p")?;
        if self.p_true.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("p_true must be finite".into()));
        }
        self.noise.validate()
    }
}

/// One node's position, regressor vector and scalar measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSample {
    pub node_id: usize,
    pub position: Vec<f64>,
    pub phi: Vec<f64>,
    pub y: f64,
}

/// Exponent vectors of the monomials in `n_x` variables, graded by total
/// degree and lexicographically decreasing within a degree.
fn graded_exponents(n_x: usize, count: usize) -> Vec<Vec<u32>> {
    fn fill(n_x: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n_x - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(n_x, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut degree = 0u32;
    while out.len() < count {
        let mut level = Vec::new();
        fill(n_x, degree, &mut Vec::with_capacity(n_x), &mut level);
        out.extend(level);
        degree += 1;
    }
    out.truncate(count);
    out
}

pub fn regressor(position: &[f64], config: &FieldConfig) -> Result<Vec<f64>> {
    check_len(config.n_x, position.len(), "position length vs n_x")?;
    match config.regressor {
        RegressorFamily::Polynomial => Ok(graded_exponents(config.n_x, config.n_p)
            .iter()
            .map(|exps| {
                exps.iter()
                    .zip(position)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product()
            })
            .collect()),
        RegressorFamily::SeededRandom { seed } => {
            let key = position
                .iter()
                .fold(seed, |acc, x| mix64(acc ^ x.to_bits()));
            let mut rng = rng_from_seed(derive_seed(key, "regressor", config.n_p as u64));
            Ok((0..config.n_p)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect())
        }
    }
}

pub fn eval_field(phi: &[f64], p: &[f64]) -> Result<f64> {
    check_len(phi.len(), p.len(), "regressor vs parameter length")?;
    Ok(phi.iter().zip(p).map(|(a, b)| a * b).sum())
}

/// Draws `y_i = phi_i^T p_true + w_i` for every position, noise independent
/// across nodes.
pub fn generate_measurements<R: Rng + ?Sized>(
    positions: &[Vec<f64>],
    config: &FieldConfig,
    rng: &mut R,
) -> Result<Vec<RegressorSample>> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("no positions given".into()));
    }
    config.validate()?;
    positions
        .iter()
        .enumerate()
        .map(|(node_id, x)| {
            let phi = regressor(x, config)?;
            let y = eval_field(&phi, &config.p_true)? + config.noise.sample(rng);
            Ok(RegressorSample {
                node_id,
                position: x.clone(),
                phi,
                y,
            })
        })
        .collect()
}

/// Redraws only the measurement noise, keeping positions and regressors.
pub fn resample_noise<R: Rng + ?Sized>(
    samples: &[RegressorSample],
    config: &FieldConfig,
    rng: &mut R,
) -> Result<Vec<RegressorSample>> {
    samples
        .iter()
        .map(|s| {
            let y = eval_field(&s.phi, &config.p_true)? + config.noise.sample(rng);
            Ok(RegressorSample { y, ..s.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg(n_p: usize) -> FieldConfig {
        FieldConfig::polynomial(vec![0.2; n_p]).unwrap()
    }

    #[test]
    fn polynomial_basis_is_graded() {
        let phi = regressor(&[0.5, 0.2], &cfg(3)).unwrap();
        assert_eq!(phi, vec![1.0, 0.5, 0.2]);
        assert_eq!(regressor(&[0.9, -3.0], &cfg(1)).unwrap(), vec![1.0]);
        let phi6 = regressor(&[2.0, 3.0], &cfg(6)).unwrap();
        assert_eq!(phi6, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn seeded_random_regressor_is_deterministic() {
        let c = FieldConfig::new(
            vec![0.1, 0.2, 0.3],
            RegressorFamily::SeededRandom { seed: 11 },
            NoiseSpec::default(),
        )
        .unwrap();
        let a = regressor(&[0.3, 0.7], &c).unwrap();
        assert_eq!(a, regressor(&[0.3, 0.7], &c).unwrap());
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, regressor(&[0.3, 0.71], &c).unwrap());
    }

    #[test]
    fn regressor_rejects_wrong_position_dimension() {
        assert!(matches!(
            regressor(&[0.1], &cfg(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn field_inner_product() {
        assert_eq!(eval_field(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(eval_field(&[0.0, 0.0], &[-7.0, 4.0]).unwrap(), 0.0);
        assert_eq!(eval_field(&[1.0], &[0.2]).unwrap(), 0.2);
        assert!(eval_field(&[1.0], &[0.2, 0.1]).is_err());
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let c = cfg(3)
            .with_noise(NoiseSpec::new(NoiseKind::Gaussian, 0.0).unwrap())
            .unwrap();
        let pos = vec![vec![0.1, 0.4], vec![0.9, 0.3]];
        let s = generate_measurements(&pos, &c, &mut substream(1, "t", 0)).unwrap();
        for sample in &s {
            assert_eq!(sample.y, eval_field(&sample.phi, &c.p_true).unwrap());
        }
    }

    #[test]
    fn gaussian_noise_mean_concentrates() {
        let c = cfg(1);
        let pos: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64 / 1000.0, 0.5]).collect();
        let s = generate_measurements(&pos, &c, &mut substream(5, "t", 0)).unwrap();
        let mean_w: f64 = s.iter().map(|x| x.y - 0.2).sum::<f64>() / 1000.0;
        assert!(mean_w.abs() < 4.0 * 0.1 / (1000f64).sqrt(), "mean {mean_w}");
    }

    #[test]
    fn measurements_are_reproducible() {
        let pos = vec![vec![0.1, 0.4], vec![0.9, 0.3], vec![0.5, 0.5]];
        let a = generate_measurements(&pos, &cfg(2), &mut substream(9, "t", 0)).unwrap();
        let b = generate_measurements(&pos, &cfg(2), &mut substream(9, "t", 0)).unwrap();
        assert_eq!(a, b);
        assert!(generate_measurements(&[], &cfg(2), &mut substream(9, "t", 0)).is_err());
    }

    /// Two-sample Kolmogorov-Smirnov distance between the empirical laws of
    /// `w` and `-w`.
    fn ks_sign_flip(mut w: Vec<f64>) -> f64 {
        w.sort_by(f64::total_cmp);
        let mut neg: Vec<f64> = w.iter().rev().map(|x| -x).collect();
        neg.sort_by(f64::total_cmp);
        let n = w.len() as f64;
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < w.len() && j < neg.len() {
            let x = w[i].min(neg[j]);
            while i < w.len() && w[i] <= x {
                i += 1;
            }
            while j < neg.len() && neg[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / n).abs());
        }
        d
    }

    #[test]
    fn every_noise_kind_is_symmetric() {
        for kind in [
            NoiseKind::Gaussian,
            NoiseKind::Uniform,
            NoiseKind::Laplace,
            NoiseKind::TwoPoint,
        ] {
            let spec = NoiseSpec::new(kind, 0.3).unwrap();
            let mut rng = substream(42, "sym", kind as u64);
            let w: Vec<f64> = (0..100_000).map(|_| spec.sample(&mut rng)).collect();
            let d = ks_sign_flip(w);
            assert!(d < 0.01, "{kind:?}: KS distance {d}");
        }
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(NoiseSpec::new(NoiseKind::Uniform, -1.0).is_err());
    }
}
