//! Wrap-up linear program: choose row coefficients `b` maximizing the
//! number of node contributions `Σ_i c_i` with `c = Tᵀ b` kept in `[0, 1]`.

use fixedbitset::FixedBitSet;
use nalgebra::{DMatrix, DVector};

use super::tags::{Tag, TagTable};
use crate::error::{Error, Result};
use crate::sps::{AggregateSums, WrapUpWeights};

const PIVOT_EPS: f64 = 1e-9;
const ZERO_EPS: f64 = 1e-12;
const RANK_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    n: usize,
    tags: Vec<Tag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub b: Vec<f64>,
    pub objective: f64,
}

impl LpProblem {
    pub fn new(n: usize, tags: Vec<Tag>) -> Result<Self> {
        for (r, t) in tags.iter().enumerate() {
            if t.is_clear() {
                return Err(Error::Lp(format!("row {r} has an empty tag")));
            }
            if t.ones().any(|i| i >= n) {
                return Err(Error::Lp(format!("row {r} tags a node outside 0..{n}")));
            }
        }
        Ok(Self { n, tags })
    }

    /// Builds from 0/1 rows of length `n`.
    pub fn from_rows(n: usize, rows: &[Vec<u8>]) -> Result<Self> {
        let tags = rows
            .iter()
            .map(|row| {
                let mut t = FixedBitSet::with_capacity(n);
                for (i, &v) in row.iter().enumerate() {
                    if v != 0 {
                        t.insert(i);
                    }
                }
                t
            })
            .collect();
        Self::new(n, tags)
    }

    pub fn from_table(table: &TagTable) -> Self {
        Self {
            n: table.n(),
            tags: table.rows().iter().map(|r| r.tag.clone()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.tags.len()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// `w_r = |t_r|`.
    pub fn objective(&self) -> Vec<f64> {
        self.tags.iter().map(|t| t.count_ones(..) as f64).collect()
    }

    /// `c_i = Σ_r b_r t_{r,i}`.
    pub fn node_weights(&self, b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for (t, &br) in self.tags.iter().zip(b) {
            for i in t.ones() {
                c[i] += br;
            }
        }
        c
    }
}

/// Solves the wrap-up LP exactly up to floating point.
///
/// Rows are split into connected components (rows sharing a node); each
/// component is solved independently, with identical node columns merged
/// into a single constraint pair.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    let r_count = problem.rows();
    let mut b = vec![0.0; r_count];
    for comp in components(problem) {
        if comp.len() == 1 {
            b[comp[0]] = 1.0;
            continue;
        }
        let sub = solve_component(problem, &comp)?;
        for (k, &r) in comp.iter().enumerate() {
            b[r] = sub[k];
        }
    }
    let objective = problem
        .objective()
        .iter()
        .zip(&b)
        .map(|(w, x)| w * x)
        .sum();
    Ok(LpSolution { b, objective })
}

fn components(problem: &LpProblem) -> Vec<Vec<usize>> {
    let r_count = problem.rows();
    let mut parent: Vec<usize> = (0..r_count).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut owner: Vec<Option<usize>> = vec![None; problem.n];
    for (r, t) in problem.tags.iter().enumerate() {
        for i in t.ones() {
            match owner[i] {
                None => owner[i] = Some(r),
                Some(o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, r));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; r_count];
    for r in 0..r_count {
        let root = find(&mut parent, r);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(r);
    }
    groups
}

fn solve_component(problem: &LpProblem, rows: &[usize]) -> Result<Vec<f64>> {
    // Distinct node columns restricted to these rows, with multiplicities.
    let mut nodes = FixedBitSet::with_capacity(problem.n);
    for &r in rows {
        nodes.union_with(&problem.tags[r]);
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for i in nodes.ones() {
        let col: Vec<bool> = rows.iter().map(|&r| problem.tags[r].contains(i)).collect();
        match seen.get(&col) {
            Some(&j) => mult[j] += 1.0,
            None => {
                seen.insert(col.clone(), columns.len());
                columns.push(col.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
                mult.push(1.0);
            }
        }
    }
    let nc = columns.len();
    let dense: Vec<Vec<f64>> = (0..rows.len())
        .map(|k| columns.iter().map(|col| col[k]).collect())
        .collect();

    // Every feasible c lies in the row space. In reduced row echelon form
    // the pivot entries of c are free coordinates of that space, and each
    // is itself a weight in [0, 1], so the LP below is bounded.
    let (rref, pivots) = row_echelon(&dense);
    let r = pivots.len();
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; nc];
        pivots.iter().for_each(|&j| v[j] = true);
        v
    };
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    for (k, _) in pivots.iter().enumerate() {
        let mut row = vec![0.0; r];
        row[k] = 1.0;
        a.push(row);
        rhs.push(1.0);
    }
    for j in (0..nc).filter(|&j| !is_pivot[j]) {
        let upper: Vec<f64> = (0..r).map(|k| rref[k][j]).collect();
        if upper.iter().all(|&v| v == 0.0) {
            continue;
        }
        let lower = upper.iter().map(|v| -v).collect();
        a.push(upper);
        rhs.push(1.0);
        a.push(lower);
        rhs.push(0.0);
    }
    let cost: Vec<f64> = (0..r)
        .map(|k| (0..nc).map(|j| mult[j] * rref[k][j]).sum())
        .collect();
    let y = simplex_max(&a, &rhs, &cost)?;

    // Row weights reproducing c on the pivot columns, using the rows that
    // span the space.
    let keep = independent_rows(&dense);
    if keep.len() != r {
        return Err(Error::Lp("inconsistent rank estimate".into()));
    }
    let sys = DMatrix::from_fn(r, r, |p, q| dense[keep[q]][pivots[p]]);
    let sol = sys
        .lu()
        .solve(&DVector::from_column_slice(&y))
        .ok_or_else(|| Error::Lp("singular row system".into()))?;
    let mut b = vec![0.0; rows.len()];
    for (q, &k) in keep.iter().enumerate() {
        b[k] = sol[q];
    }
    Ok(b)
}

/// Reduced row echelon form with partial pivoting; returns the nonzero
/// rows and their pivot columns.
fn row_echelon(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let ncols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut top = 0;
    for j in 0..ncols {
        if top == m.len() {
            break;
        }
        let (best, max) = (top..m.len())
            .map(|i| (i, m[i][j].abs()))
            .fold((top, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max <= RANK_TOL {
            continue;
        }
        m.swap(top, best);
        let inv = 1.0 / m[top][j];
        m[top].iter_mut().for_each(|v| *v *= inv);
        let prow = m[top].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i == top {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                    if v.abs() < ZERO_EPS {
                        *v = 0.0;
                    }
                }
            }
        }
        pivots.push(j);
        top += 1;
    }
    m.truncate(top);
    (m, pivots)
}

/// Greedy maximal linearly independent subset, scanning rows in order.
fn independent_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut keep = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let mut v = row.clone();
        for (pivot, b) in &basis {
            let f = v[*pivot];
            if f != 0.0 {
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= f * y;
                }
            }
        }
        let (pivot, max) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if max > RANK_TOL {
            let inv = 1.0 / v[pivot];
            v.iter_mut().for_each(|x| *x *= inv);
            basis.push((pivot, v));
            keep.push(k);
        }
    }
    keep
}

/// Maximizes `cost·x` subject to `A x ≤ rhs`, `x ≥ 0`, with `rhs ≥ 0` so
/// the slack basis is feasible.
///
/// Dense tableau. Entering columns are priced by the most negative reduced
/// cost; after a run of degenerate pivots the solver switches to Bland's
/// smallest-index rule until the objective moves again, which rules out
/// cycling.
pub fn simplex_max(a: &[Vec<f64>], rhs: &[f64], cost: &[f64]) -> Result<Vec<f64>> {
    let m = a.len();
    let nv = cost.len();
    if rhs.len() != m || a.iter().any(|row| row.len() != nv) {
        return Err(Error::Lp("inconsistent problem dimensions".into()));
    }
    if rhs.iter().any(|&v| v < 0.0) {
        return Err(Error::Lp("slack basis infeasible: negative right-hand side".into()));
    }
    let width = nv + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        row[..nv].copy_from_slice(&a[i]);
        row[nv + i] = 1.0;
        row[width - 1] = rhs[i];
    }
    let obj = m * width;
    for j in 0..nv {
        t[obj + j] = -cost[j];
    }
    let mut basis: Vec<usize> = (nv..nv + m).collect();
    let mut degenerate_run = 0usize;

    for _ in 0..MAX_PIVOTS {
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let enter = if bland {
            (0..nv + m).find(|&j| t[obj + j] < -PIVOT_EPS)
        } else {
            (0..nv + m)
                .filter(|&j| t[obj + j] < -PIVOT_EPS)
                .min_by(|&x, &y| t[obj + x].total_cmp(&t[obj + y]))
        };
        let Some(enter) = enter else {
            let mut x = vec![0.0; nv];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < nv {
                    x[bv] = t[i * width + width - 1];
                }
            }
            return Ok(x);
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[i * width + enter];
            if aij > PIVOT_EPS {
                let ratio = t[i * width + width - 1] / aij;
                let better = match leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && basis[i] < basis[l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((p, ratio)) = leave else {
            return Err(Error::Lp("objective unbounded".into()));
        };
        if ratio <= PIVOT_EPS {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        pivot(&mut t, width, m, p, enter);
        basis[p] = enter;
    }
    Err(Error::Lp(format!("no optimum after {MAX_PIVOTS} pivots")))
}

fn pivot(t: &mut [f64], width: usize, m: usize, p: usize, q: usize) {
    let inv = 1.0 / t[p * width + q];
    for v in &mut t[p * width..(p + 1) * width] {
        *v *= inv;
    }
    let prow: Vec<f64> = t[p * width..(p + 1) * width].to_vec();
    for i in 0..=m {
        if i == p {
            continue;
        }
        let f = t[i * width + q];
        if f != 0.0 {
            for (v, &pv) in t[i * width..(i + 1) * width].iter_mut().zip(&prow) {
                *v -= f * pv;
                if v.abs() < ZERO_EPS {
                    *v = 0.0;
                }
            }
            t[i * width + q] = 0.0;
        }
    }
}

/// Result of the wrap-up phase at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct WrapUp {
    pub b: Vec<f64>,
    pub objective: f64,
    pub weights: WrapUpWeights,
    pub aggregate: AggregateSums,
}

impl WrapUp {
    pub fn is_complete(&self) -> bool {
        self.weights.is_complete()
    }
}

/// Combines the rows of `table` into the best available aggregate.
///
/// If a greedy disjoint cover already spans every node the rows are simply
/// added; otherwise the LP is solved. An optimum of `N` means every node
/// contributes exactly once and `c` is reported as exact ones.
pub fn tas_wrapup(table: &TagTable) -> Result<WrapUp> {
    let n = table.n();
    let r_count = table.len();
    let rows = table.rows();
    let problem = LpProblem::from_table(table);
    let (used, cover) = table.greedy_cover();
    let b = if cover.count_ones(..) == n {
        let mut b = vec![0.0; r_count];
        for r in used {
            b[r] = 1.0;
        }
        b
    } else {
        solve_lp(&problem)?.b
    };
    let c = problem.node_weights(&b);
    let objective: f64 = c.iter().sum();
    if let Some((i, v)) = c
        .iter()
        .enumerate()
        .find(|(_, &v)| !(-FEAS_TOL..=1.0 + FEAS_TOL).contains(&v))
    {
        return Err(Error::Lp(format!("solution violates 0 <= c <= 1 at node {i}: {v}")));
    }
    let weights = if objective >= n as f64 - FEAS_TOL {
        WrapUpWeights::ones(n)
    } else {
        WrapUpWeights::clamped(c)
    };
    let first = &rows[0].payload;
    let mut aggregate = AggregateSums::zero(first.n_p(), first.m());
    for (row, &br) in rows.iter().zip(&b) {
        if br != 0.0 {
            aggregate.add_scaled(&row.payload, br)?;
        }
    }
    Ok(WrapUp {
        b,
        objective,
        weights,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize, rows: &[&[usize]]) -> LpProblem {
        let dense: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| (0..n).map(|i| r.contains(&i) as u8).collect())
            .collect();
        LpProblem::from_rows(n, &dense).unwrap()
    }

    /// Best feasible vertex in `b`: every choice of `r` active bounds
    /// `c_i ∈ {0, 1}` that pins `b` down uniquely. Returns `-inf` when the
    /// rows are linearly dependent (no vertex in `b`).
    fn vertex_oracle(p: &LpProblem) -> f64 {
        use nalgebra::{DMatrix, DVector};
        let r = p.rows();
        let n = p.n();
        let mut best = f64::NEG_INFINITY;
        let choices: Vec<(usize, f64)> = (0..n).flat_map(|i| [(i, 0.0), (i, 1.0)]).collect();
        let mut idx = vec![0usize; r];
        fn rec(
            k: usize,
            start: usize,
            idx: &mut Vec<usize>,
            choices: &[(usize, f64)],
            p: &LpProblem,
            best: &mut f64,
        ) {
            let r = idx.len();
            if k == r {
                let m = DMatrix::from_fn(r, r, |a, j| p.tags()[j].contains(choices[idx[a]].0) as u8 as f64);
                let rhs = DVector::from_fn(r, |a, _| choices[idx[a]].1);
                if let Some(b) = m.lu().solve(&rhs) {
                    let b: Vec<f64> = b.iter().copied().collect();
                    let c = p.node_weights(&b);
                    if c.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)) {
                        *best = best.max(c.iter().sum());
                    }
                }
                return;
            }
            for s in start..choices.len() {
                idx[k] = s;
                rec(k + 1, s + 1, idx, choices, p, best);
            }
        }
        rec(0, 0, &mut idx, &choices, p, &mut best);
        best
    }

    #[test]
    fn single_bound() {
        let x = simplex_max(&[vec![1.0]], &[1.0], &[1.0]).unwrap();
        assert_eq!(x, vec![1.0]);
        assert!(simplex_max(&[vec![-1.0]], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn identity_table() {
        let s = solve_lp(&lp(2, &[&[0], &[1]])).unwrap();
        assert_eq!(s.b, vec![1.0, 1.0]);
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn nested_rows() {
        let p = lp(2, &[&[0, 1], &[1]]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        let c = p.node_weights(&s.b);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
        assert!((s.b[0] - 1.0).abs() < 1e-12 && s.b[1].abs() < 1e-12);
    }

    #[test]
    fn overlapping_pair_is_fractional_at_most() {
        let p = lp(3, &[&[0, 1], &[1, 2]]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.b[0] + s.b[1] - 1.0).abs() < 1e-12);
        let c = p.node_weights(&s.b);
        assert!((c[1] - 1.0).abs() < 1e-12);
        assert!((vertex_oracle(&p) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_coefficients_help() {
        let p = lp(3, &[&[0, 1], &[1, 2], &[1]]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((vertex_oracle(&p) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_vertex_oracle_on_small_tables() {
        use rand::Rng;
        let mut rng = crate::rng::substream(11, "lp", 0);
        for _ in 0..300 {
            let n = rng.random_range(1..=4);
            let rows = rng.random_range(1..=3);
            let dense: Vec<Vec<u8>> = (0..rows)
                .map(|_| loop {
                    let row: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
                    if row.contains(&1) {
                        break row;
                    }
                })
                .collect();
            let p = LpProblem::from_rows(n, &dense).unwrap();
            let s = solve_lp(&p).unwrap();
            let o = vertex_oracle(&p);
            if o.is_finite() {
                assert!((s.objective - o).abs() < 1e-9, "{dense:?}: {} vs {o}", s.objective);
            }
            assert!(s.objective <= n as f64 + 1e-9);
            for c in p.node_weights(&s.b) {
                assert!((-1e-9..=1.0 + 1e-9).contains(&c));
            }
        }
    }

    #[test]
    fn components_are_independent() {
        let p = lp(6, &[&[0, 1], &[4], &[1, 2], &[5, 3]]);
        let comps = components(&p);
        assert_eq!(comps, vec![vec![0, 2], vec![1], vec![3]]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(LpProblem::from_rows(2, &[vec![0, 0]]).is_err());
        assert!(LpProblem::new(2, vec![crate::diffusion::tags::one_hot_tag(4, 3)]).is_err());
    }
}
