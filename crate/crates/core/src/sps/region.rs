//! Dense-grid outer approximation of the confidence region.
//!
//! Membership is evaluated at every cell center. Each cell owns its own tie
//! stream, a ChaCha8 stream selected by the cell index under `tie_seed`, so
//! results do not depend on evaluation order.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rank_counts, resolve, validate_mq, z_single, AggregateSums};
use crate::error::{check_len, Error, Result};

/// Largest parameter dimension evaluated without `allow_high_dim`.
pub const MAX_GRID_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SearchBox(Vec<[f64; 2]>);

impl SearchBox {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidParameter("search box has no dimensions".into()));
        }
        for (d, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "search box dimension {d} is empty or not finite: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self(bounds))
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![[lo, hi]; dim])
    }

    /// `center ± half_width` in every dimension.
    pub fn centered(center: &[f64], half_width: f64) -> Result<Self> {
        Self::new(center.iter().map(|c| [c - half_width, c + half_width]).collect())
    }

    /// `[-1, 1]^n_p`, widened where needed so that every `center_i ±
    /// 5 * dispersion_i` fits.
    pub fn default_for(center: &[f64], dispersion: &[f64]) -> Result<Self> {
        check_len(center.len(), dispersion.len(), "dispersion vs center")?;
        Self::new(
            center
                .iter()
                .zip(dispersion)
                .map(|(c, d)| [(-1.0f64).min(c - 5.0 * d), 1.0f64.max(c + 5.0 * d)])
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(|[lo, hi]| hi - lo).product()
    }
}

impl TryFrom<Vec<[f64; 2]>> for SearchBox {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SearchBox> for Vec<[f64; 2]> {
    fn from(b: SearchBox) -> Self {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRequest {
    pub search_box: SearchBox,
    pub grid_per_dim: Vec<usize>,
    pub q: usize,
    pub tie_seed: u64,
    #[serde(default)]
    pub allow_high_dim: bool,
}

impl RegionRequest {
    pub fn uniform(search_box: SearchBox, cells_per_dim: usize, q: usize, tie_seed: u64) -> Self {
        let dim = search_box.dim();
        Self {
            search_box,
            grid_per_dim: vec![cells_per_dim; dim],
            q,
            tie_seed,
            allow_high_dim: false,
        }
    }
}

/// Boolean mask stored as alternating run lengths starting with `first`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLengthMask {
    pub first: bool,
    pub runs: Vec<usize>,
}

impl RunLengthMask {
    pub fn encode(mask: &[bool]) -> Self {
        let first = mask.first().copied().unwrap_or(false);
        let mut runs = Vec::new();
        let mut current = first;
        let mut len = 0usize;
        for &b in mask {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        if len > 0 {
            runs.push(len);
        }
        Self { first, runs }
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.runs.iter().sum());
        let mut value = self.first;
        for &r in &self.runs {
            out.extend(std::iter::repeat_n(value, r));
            value = !value;
        }
        out
    }
}

mod rle_serde {
    use super::RunLengthMask;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        RunLengthMask::encode(mask).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Ok(RunLengthMask::deserialize(d)?.decode())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub grid_shape: Vec<usize>,
    pub search_box: SearchBox,
    pub cell_widths: Vec<f64>,
    #[serde(with = "rle_serde")]
    pub member_mask: Vec<bool>,
    pub member_count: usize,
    pub volume: f64,
    /// Tight hull of the member cells; `None` when the region is empty.
    pub bounding_box: Option<Vec<[f64; 2]>>,
    pub m: usize,
    pub q: usize,
    pub tie_seed: u64,
}

impl RegionResult {
    pub fn total_cells(&self) -> usize {
        self.member_mask.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_widths.iter().product()
    }

    pub fn member_fraction(&self) -> f64 {
        self.member_count as f64 / self.total_cells() as f64
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.grid_shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Index of the cell containing `p`, if `p` lies inside the box.
    pub fn cell_containing(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.grid_shape.len() {
            return None;
        }
        let mut multi = Vec::with_capacity(p.len());
        for (d, &x) in p.iter().enumerate() {
            let [lo, hi] = self.search_box.bounds()[d];
            if x < lo || x > hi {
                return None;
            }
            let i = ((x - lo) / self.cell_widths[d]).floor() as usize;
            multi.push(i.min(self.grid_shape[d] - 1));
        }
        Some(self.cell_index(&multi))
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.cell_containing(p).is_some_and(|c| self.member_mask[c])
    }

    /// One-row CSV summary: volume, cell counts and bounding box per
    /// dimension (empty fields when the region is empty).
    pub fn write_csv_summary<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec![
            "volume".to_string(),
            "member_cells".into(),
            "total_cells".into(),
            "cell_volume".into(),
        ];
        for d in 0..self.grid_shape.len() {
            header.push(format!("bbox_lo_{d}"));
            header.push(format!("bbox_hi_{d}"));
        }
        let mut row = vec![
            format!("{}", self.volume),
            self.member_count.to_string(),
            self.total_cells().to_string(),
            format!("{}", self.cell_volume()),
        ];
        for d in 0..self.grid_shape.len() {
            match &self.bounding_box {
                Some(bb) => {
                    row.push(format!("{}", bb[d][0]));
                    row.push(format!("{}", bb[d][1]));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        wr.write_record(&header).map_err(io)?;
        wr.write_record(&row).map_err(io)?;
        wr.flush()
            .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// Tie stream for one grid cell.
pub fn cell_tie_rng(tie_seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
    rng.set_stream(cell as u64);
    rng
}

pub fn evaluate_region(agg: &AggregateSums, request: &RegionRequest) -> Result<RegionResult> {
    let dim = agg.n_p();
    check_len(dim, request.search_box.dim(), "search box dimension vs n_p")?;
    check_len(dim, request.grid_per_dim.len(), "grid dimensions vs n_p")?;
    if dim > MAX_GRID_DIM && !request.allow_high_dim {
        return Err(Error::InvalidParameter(format!(
            "grid evaluation in {dim} dimensions refused (limit {MAX_GRID_DIM}); set allow_high_dim to override"
        )));
    }
    if request.grid_per_dim.contains(&0) {
        return Err(Error::InvalidParameter("grid needs at least one cell per dimension".into()));
    }
    validate_mq(agg.m(), request.q)?;

    let shape = request.grid_per_dim.clone();
    let bounds = request.search_box.bounds();
    let widths: Vec<f64> = bounds
        .iter()
        .zip(&shape)
        .map(|([lo, hi], &n)| (hi - lo) / n as f64)
        .collect();
    let total: usize = shape.iter().product();
    let base_rng = ChaCha8Rng::seed_from_u64(request.tie_seed);

    let mut mask = vec![false; total];
    let mut multi = vec![0usize; dim];
    let mut p = vec![0.0; dim];
    let mut z = vec![0.0; agg.m()];
    let mut lo_idx = vec![usize::MAX; dim];
    let mut hi_idx = vec![0usize; dim];
    let mut count = 0usize;

    for (cell, slot) in mask.iter_mut().enumerate() {
        for d in 0..dim {
            p[d] = bounds[d][0] + (multi[d] as f64 + 0.5) * widths[d];
        }
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = z_single(agg, j, &p);
        }
        let member = resolve(rank_counts(&z), request.q, || {
            let mut rng = base_rng.clone();
            rng.set_stream(cell as u64);
            rng
        });
        if member {
            *slot = true;
            count += 1;
            for d in 0..dim {
                lo_idx[d] = lo_idx[d].min(multi[d]);
                hi_idx[d] = hi_idx[d].max(multi[d]);
            }
        }
        // odometer increment, last dimension fastest
        for d in (0..dim).rev() {
            multi[d] += 1;
            if multi[d] < shape[d] {
                break;
            }
            multi[d] = 0;
        }
    }

    let cell_volume: f64 = widths.iter().product();
    let bounding_box = (count > 0).then(|| {
        (0..dim)
            .map(|d| {
                [
                    bounds[d][0] + lo_idx[d] as f64 * widths[d],
                    bounds[d][0] + (hi_idx[d] + 1) as f64 * widths[d],
                ]
            })
            .collect()
    });

    Ok(RegionResult {
        grid_shape: shape,
        search_box: request.search_box.clone(),
        cell_widths: widths,
        member_mask: mask,
        member_count: count,
        volume: count as f64 * cell_volume,
        bounding_box,
        m: agg.m(),
        q: request.q,
        tie_seed: request.tie_seed,
    })
}
