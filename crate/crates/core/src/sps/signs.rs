use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `m x N` matrix of random signs; row 0 is all `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMatrix {
    m: usize,
    n: usize,
    entries: Vec<i8>,
}

impl SignMatrix {
    /// Builds a matrix from explicit rows, checking the sign alphabet and
    /// the all-ones first row.
    pub fn from_rows(rows: Vec<Vec<i8>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidParameter(format!("m must be at least 2, got {m}")));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("sign rows must share a nonzero length".into()));
        }
        if rows[0].iter().any(|&a| a != 1) {
            return Err(Error::InvalidParameter("row 0 of the sign matrix must be all +1".into()));
        }
        if rows.iter().flatten().any(|&a| a != 1 && a != -1) {
            return Err(Error::InvalidParameter("signs must be +1 or -1".into()));
        }
        Ok(Self {
            m,
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, i: usize) -> i8 {
        self.entries[j * self.n + i]
    }

    pub fn row(&self, j: usize) -> &[i8] {
        &self.entries[j * self.n..(j + 1) * self.n]
    }

    pub fn column(&self, i: usize) -> Vec<i8> {
        (0..self.m).map(|j| self.get(j, i)).collect()
    }
}

/// Draws rows `1..m` i.i.d. uniform on `{-1, +1}` from `sign_seed`.
pub fn draw_sign_matrix(m: usize, n: usize, sign_seed: u64) -> Result<SignMatrix> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("m must be at least 2, got {m}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let mut rng = rng_from_seed(sign_seed);
    let mut entries = vec![1i8; m * n];
    for a in entries[n..].iter_mut() {
        *a = if rng.random::<bool>() { 1 } else { -1 };
    }
    Ok(SignMatrix { m, n, entries })
}
