//! Network structures: random geometric graphs, BFS spanning trees, complete
//! binary trees and clustered networks.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONNECT_ATTEMPTS: usize = 100;

/// Communication radius for `N` nodes on the unit square.
pub fn comm_radius(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("comm_radius needs N >= 2, got {n}")));
    }
    let n = n as f64;
    Ok((n.log2() / (2.0 * n)).sqrt())
}

/// Undirected simple graph stored as sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
    positions: Option<Vec<Vec<f64>>>,
    d_comm: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_comm: Option<f64>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;
    fn try_from(r: GraphRepr) -> Result<Self> {
        let mut g = Graph::from_edges(r.n, &r.edges)?;
        if let Some(p) = &r.positions {
            if p.len() != r.n {
                return Err(Error::DimensionMismatch {
                    expected: r.n,
                    actual: p.len(),
                    context: "graph positions",
                });
            }
        }
        g.positions = r.positions;
        g.d_comm = r.d_comm;
        Ok(g)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n(),
            edges: g.edges(),
            positions: g.positions,
            d_comm: g.d_comm,
        }
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
            positions: None,
            d_comm: None,
        }
    }

    pub fn from_edges(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &[a, b] in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range for N={n}")));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self loop at node {a}")));
            }
            g.neighbors[a].push(b);
            g.neighbors[b].push(a);
        }
        for nb in &mut g.neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<[usize; 2]> = (1..n).map(|i| [i - 1, i]).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push([a, b]);
            }
        }
        Self::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// Node 0 is the hub.
    pub fn star(n: usize) -> Self {
        let edges: Vec<[usize; 2]> = (1..n).map(|i| [0, i]).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    /// Edges `(i, j)` with `‖x_i − x_j‖ ≤ d_comm`.
    pub fn geometric(positions: Vec<Vec<f64>>, d_comm: f64) -> Self {
        let n = positions.len();
        let mut g = Self::empty(n);
        let r2 = d_comm * d_comm;
        for a in 0..n {
            for b in a + 1..n {
                let d2: f64 = positions[a]
                    .iter()
                    .zip(&positions[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if d2 <= r2 {
                    g.neighbors[a].push(b);
                    g.neighbors[b].push(a);
                }
            }
        }
        g.positions = Some(positions);
        g.d_comm = Some(d_comm);
        g
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&b| b > a).map(|&b| [a, b]));
        }
        out
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        let mut adj = vec![vec![false; n]; n];
        for (a, nb) in self.neighbors.iter().enumerate() {
            for &b in nb {
                adj[a][b] = true;
            }
        }
        adj
    }

    pub fn positions(&self) -> Option<&[Vec<f64>]> {
        self.positions.as_deref()
    }

    pub fn d_comm(&self) -> Option<f64> {
        self.d_comm
    }

    /// Hop distances from `src`; `usize::MAX` for unreachable nodes.
    pub fn bfs_distances(&self, src: usize) -> Vec<usize> {
        self.bfs(src).0
    }

    fn bfs(&self, src: usize) -> (Vec<usize>, Vec<Option<usize>>) {
        let n = self.n();
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        (dist, parent)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    pub fn eccentricity(&self, i: usize) -> Result<usize> {
        let d = self.bfs_distances(i);
        if d.contains(&usize::MAX) {
            return Err(Error::Disconnected);
        }
        Ok(d.into_iter().max().unwrap_or(0))
    }

    pub fn diameter(&self) -> Result<usize> {
        if self.n() == 0 {
            return Err(Error::InvalidParameter("empty graph".into()));
        }
        (0..self.n()).try_fold(0, |acc, i| Ok(acc.max(self.eccentricity(i)?)))
    }

    /// Graphviz rendering; positions, when present, are emitted as `pos`.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph G {\n");
        for i in 0..self.n() {
            match &self.positions {
                Some(p) if p[i].len() >= 2 => {
                    let _ = writeln!(s, "  {i} [pos=\"{},{}!\"];", p[i][0], p[i][1]);
                }
                _ => {
                    let _ = writeln!(s, "  {i};");
                }
            }
        }
        for [a, b] in self.edges() {
            let _ = writeln!(s, "  {a} -- {b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Uniform positions on the unit square joined within [`comm_radius`],
/// redrawn until connected.
pub fn random_geometric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph> {
    random_geometric_with(n, comm_radius(n)?, DEFAULT_CONNECT_ATTEMPTS, rng).map(|(g, _)| g)
}

/// Like [`random_geometric`] with explicit radius and retry budget; also
/// returns the number of attempts used.
pub fn random_geometric_with<R: Rng + ?Sized>(
    n: usize,
    d_comm: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<(Graph, usize)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("random geometric graph needs N >= 2, got {n}")));
    }
    if !(d_comm > 0.0) {
        return Err(Error::InvalidParameter(format!("d_comm must be positive, got {d_comm}")));
    }
    for attempt in 1..=max_attempts {
        let positions: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let g = Graph::geometric(positions, d_comm);
        if g.is_connected() {
            log::debug!("connected geometric graph with N={n} after {attempt} attempt(s)");
            return Ok((g, attempt));
        }
    }
    Err(Error::ConnectivityFailure {
        attempts: max_attempts,
    })
}

/// Approximate center by a double BFS sweep: from `start` find the farthest
/// node `a`, from `a` the farthest `b`, and return the middle of the `a–b`
/// path. Ties go to the smallest id.
pub fn choose_root(graph: &Graph, start: usize) -> Result<usize> {
    let (d0, _) = graph.bfs(start);
    if d0.contains(&usize::MAX) {
        return Err(Error::Disconnected);
    }
    let far = |d: &[usize]| {
        let max = *d.iter().max().unwrap();
        d.iter().position(|&x| x == max).unwrap()
    };
    let a = far(&d0);
    let (da, parent) = graph.bfs(a);
    let b = far(&da);
    let mut v = b;
    for _ in 0..da[b] / 2 {
        v = parent[v].expect("path to a exists");
    }
    Ok(v)
}

/// Rooted tree with its level census.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct TreeTopology {
    root: usize,
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    children: Vec<Vec<usize>>,
    lambda: Vec<usize>,
    lambda_bar: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    parent: Vec<Option<usize>>,
    #[serde(default)]
    lambda: Vec<usize>,
    #[serde(default)]
    lambda_bar: Vec<usize>,
}

impl TryFrom<TreeRepr> for TreeTopology {
    type Error = Error;
    fn try_from(r: TreeRepr) -> Result<Self> {
        TreeTopology::from_parents(r.parent)
    }
}

impl From<TreeTopology> for TreeRepr {
    fn from(t: TreeTopology) -> Self {
        TreeRepr {
            parent: t.parent,
            lambda: t.lambda,
            lambda_bar: t.lambda_bar,
        }
    }
}

impl TreeTopology {
    /// Builds a tree from parent pointers; exactly one node has no parent.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::InvalidParameter("tree needs at least one node".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "tree needs exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(Error::InvalidParameter(format!("bad parent {p} for node {i}")));
                }
                children[p].push(i);
            }
        }
        let mut level = vec![usize::MAX; n];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut seen = 1;
        while let Some(u) = queue.pop_front() {
            for &c in &children[u] {
                level[c] = level[u] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != n {
            return Err(Error::InvalidParameter("parent pointers contain a cycle".into()));
        }
        let depth = *level.iter().max().unwrap();
        let mut lambda = vec![0; depth + 1];
        let mut lambda_bar = vec![0; depth + 1];
        for i in 0..n {
            lambda[level[i]] += 1;
            if children[i].is_empty() {
                lambda_bar[level[i]] += 1;
            }
        }
        Ok(Self {
            root,
            parent,
            level,
            children,
            lambda,
            lambda_bar,
        })
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn level(&self, i: usize) -> usize {
        self.level[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Maximum level `L`.
    pub fn depth(&self) -> usize {
        self.lambda.len() - 1
    }

    /// `Λ(ℓ)`: nodes per level.
    pub fn lambda(&self) -> &[usize] {
        &self.lambda
    }

    /// `Λ̄(ℓ)`: sonless nodes per level.
    pub fn lambda_bar(&self) -> &[usize] {
        &self.lambda_bar
    }

    /// Nodes at level `l` in increasing id order.
    pub fn nodes_at_level(&self, l: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.level[i] == l).collect()
    }

    pub fn to_graph(&self) -> Graph {
        let edges: Vec<[usize; 2]> = (0..self.n())
            .filter_map(|i| self.parent[i].map(|p| [p, i]))
            .collect();
        Graph::from_edges(self.n(), &edges).expect("tree edges are valid")
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph T {\n");
        for i in 0..self.n() {
            let _ = writeln!(s, "  {i} [label=\"{i} (l={})\"];", self.level[i]);
        }
        for i in 0..self.n() {
            for &c in &self.children[i] {
                let _ = writeln!(s, "  {i} -> {c};");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// BFS tree of `graph` rooted at `root`; children are discovered in
/// increasing id order.
pub fn spanning_tree(graph: &Graph, root: usize) -> Result<TreeTopology> {
    if root >= graph.n() {
        return Err(Error::InvalidParameter(format!("root {root} out of range")));
    }
    let (dist, parent) = graph.bfs(root);
    if dist.contains(&usize::MAX) {
        return Err(Error::Disconnected);
    }
    TreeTopology::from_parents(parent)
}

/// Random geometric graph plus a BFS tree rooted at its approximate center.
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(Graph, TreeTopology)> {
    let g = random_geometric(n, rng)?;
    let start = rng.random_range(0..n);
    let root = choose_root(&g, start)?;
    let t = spanning_tree(&g, root)?;
    Ok((g, t))
}

/// Heap-ordered complete binary tree: node `i` has sons `2i+1` and `2i+2`.
pub fn complete_binary_tree(depth: usize) -> Result<TreeTopology> {
    if depth >= usize::BITS as usize - 2 {
        return Err(Error::InvalidParameter(format!("binary tree depth {depth} too large")));
    }
    let n = (1usize << (depth + 1)) - 1;
    let parent = (0..n)
        .map(|i| if i == 0 { None } else { Some((i - 1) / 2) })
        .collect();
    TreeTopology::from_parents(parent)
}

/// Partition into clusters, each with a head; members talk only to their
/// head and heads form a clique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteredTopology {
    pub heads: Vec<usize>,
    pub assign: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl ClusteredTopology {
    pub fn from_assignment(assign: Vec<usize>, heads: Vec<usize>) -> Result<Self> {
        let n_c = heads.len();
        if n_c == 0 || assign.is_empty() {
            return Err(Error::InvalidParameter("clustered topology needs nodes and clusters".into()));
        }
        let mut sizes = vec![0; n_c];
        for (i, &c) in assign.iter().enumerate() {
            if c >= n_c {
                return Err(Error::InvalidParameter(format!("node {i} assigned to missing cluster {c}")));
            }
            sizes[c] += 1;
        }
        for (c, &h) in heads.iter().enumerate() {
            if h >= assign.len() || assign[h] != c {
                return Err(Error::InvalidParameter(format!("head {h} is not in cluster {c}")));
            }
        }
        Ok(Self { heads, assign, sizes })
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn n_c(&self) -> usize {
        self.heads.len()
    }

    pub fn is_head(&self, i: usize) -> bool {
        self.heads[self.assign[i]] == i
    }

    pub fn head_of(&self, i: usize) -> usize {
        self.heads[self.assign[i]]
    }

    /// Members of cluster `c` (head included) in id order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assign[i] == c).collect()
    }

    pub fn to_graph(&self) -> Graph {
        let mut edges = Vec::new();
        for i in 0..self.n() {
            let h = self.head_of(i);
            if h != i {
                edges.push([h, i]);
            }
        }
        for (a, &ha) in self.heads.iter().enumerate() {
            for &hb in &self.heads[a + 1..] {
                edges.push([ha, hb]);
            }
        }
        Graph::from_edges(self.n(), &edges).expect("cluster edges are valid")
    }
}

const CLUSTER_REJECTION_ATTEMPTS: usize = 1000;

/// Uniform assignment of `n` nodes to `n_c` clusters conditioned on no
/// cluster being empty, with a uniformly chosen head per cluster.
///
/// Rejection sampling is used first; if it keeps failing (which happens
/// when `n_c` is close to `n`) one random node is pinned to each cluster and
/// the rest are assigned uniformly.
pub fn clustered<R: Rng + ?Sized>(n: usize, n_c: usize, rng: &mut R) -> Result<ClusteredTopology> {
    if n_c == 0 || n_c > n {
        return Err(Error::InvalidParameter(format!("need 1 <= n_c <= N, got n_c={n_c}, N={n}")));
    }
    let mut assign = vec![0; n];
    let mut found = false;
    for _ in 0..CLUSTER_REJECTION_ATTEMPTS {
        let mut sizes = vec![0usize; n_c];
        for a in assign.iter_mut() {
            *a = rng.random_range(0..n_c);
            sizes[*a] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            found = true;
            break;
        }
    }
    if !found {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for (k, &i) in order.iter().enumerate() {
            assign[i] = if k < n_c { k } else { rng.random_range(0..n_c) };
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_c];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(i);
    }
    let heads = members
        .iter()
        .map(|m| m[rng.random_range(0..m.len())])
        .collect();
    ClusteredTopology::from_assignment(assign, heads)
}
