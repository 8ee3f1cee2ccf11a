//! Undirected communication graphs.
//!
//! Nodes are dense labels `0..n`. Adjacency lists are sorted, duplicate-free
//! and never contain the node itself: a walker "staying put" is expressed by
//! the diagonal of a transition matrix, not by a stored self-loop.
//!
//! Random generators take an explicit `u64` seed and resample the whole graph
//! until it is connected. Attempt `i` (zero based) uses seed `seed + i`, up to
//! [`CONNECT_RETRIES`] attempts.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, parse_err, Error, Result};

/// Number of resampling attempts for random generators before giving up.
pub const CONNECT_RETRIES: u32 = 100;

/// A connected, undirected, simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    generator: String,
    seed: Option<u64>,
}

impl Graph {
    /// Builds a graph from an explicit edge list.
    ///
    /// Duplicate edges (in either orientation) are merged. Self-loops are
    /// rejected, as are disconnected graphs. A single isolated node (`n == 1`,
    /// no edges) is accepted; it is the only graph allowed to have a node of
    /// degree zero.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], generator: &str) -> Result<Self> {
        if n == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop at node {u}")));
            }
            sets[u].insert(v);
            sets[v].insert(u);
        }
        let g = Self::from_sets(sets, generator, None);
        if !g.is_connected() {
            return Err(invalid(format!("graph '{generator}' is not connected")));
        }
        Ok(g)
    }

    fn from_sets(sets: Vec<BTreeSet<usize>>, generator: &str, seed: Option<u64>) -> Self {
        Graph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            generator: sanitize_tag(generator),
            seed,
        }
    }

    /// Cycle on `n >= 3` nodes.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges, &format!("ring({n})"))
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("path needs n >= 2, got {n}")));
        }
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges, &format!("path({n})"))
    }

    /// Complete graph on `n >= 2` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("complete graph needs n >= 2, got {n}")));
        }
        let edges: Vec<_> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        Self::from_edges(n, &edges, &format!("complete({n})"))
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Result<Self> {
        if leaves < 1 {
            return Err(invalid("star needs at least one leaf"));
        }
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Self::from_edges(leaves + 1, &edges, &format!("star({leaves})"))
    }

    /// The one-node graph. Every transition matrix on it is the 1x1 identity.
    pub fn singleton() -> Self {
        Graph {
            adjacency: vec![Vec::new()],
            generator: "singleton".into(),
            seed: None,
        }
    }

    /// Non-wrapping 4-neighbour lattice. Node `(i, j)` has label `i * cols + j`.
    pub fn grid2d(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(invalid(format!(
                "grid needs rows*cols >= 2, got {rows}x{cols}"
            )));
        }
        let mut edges = Vec::with_capacity(2 * rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = i * cols + j;
                if j + 1 < cols {
                    edges.push((v, v + 1));
                }
                if i + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges, &format!("grid2d({rows},{cols})"))
    }

    /// G(n, p): every unordered pair is an edge independently with probability `p`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("erdos_renyi needs n >= 2, got {n}")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(format!("erdos_renyi needs 0 < p <= 1, got {p}")));
        }
        let tag = format!("erdos_renyi({n},{p})");
        resample_until_connected(seed, &tag, |rng| {
            let mut sets = vec![BTreeSet::new(); n];
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random_bool(p) {
                        sets[u].insert(v);
                        sets[v].insert(u);
                    }
                }
            }
            sets
        })
    }

    /// Watts-Strogatz small world: ring lattice with `k / 2` neighbours per
    /// side, each lattice edge `(u, u + j)` rewired with probability `beta` to
    /// a uniformly chosen node that is neither `u` nor already adjacent to it.
    pub fn watts_strogatz(n: usize, k: usize, beta: f64, seed: u64) -> Result<Self> {
        if k < 2 || !k.is_multiple_of(2) || n <= k {
            return Err(invalid(format!(
                "watts_strogatz needs even k >= 2 and n > k, got n={n} k={k}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(format!("watts_strogatz needs 0 <= beta <= 1, got {beta}")));
        }
        let tag = format!("watts_strogatz({n},{k},{beta})");
        resample_until_connected(seed, &tag, |rng| {
            let mut sets = vec![BTreeSet::new(); n];
            for u in 0..n {
                for j in 1..=k / 2 {
                    let v = (u + j) % n;
                    sets[u].insert(v);
                    sets[v].insert(u);
                }
            }
            for j in 1..=k / 2 {
                for u in 0..n {
                    let v = (u + j) % n;
                    if !rng.random_bool(beta) || sets[u].len() >= n - 1 {
                        continue;
                    }
                    let w = loop {
                        let w = rng.random_range(0..n);
                        if w != u && !sets[u].contains(&w) {
                            break w;
                        }
                    };
                    sets[u].remove(&v);
                    sets[v].remove(&u);
                    sets[u].insert(w);
                    sets[w].insert(u);
                }
            }
            sets
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, nb)| nb.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Writes the edge-list text format:
    ///
    /// ```text
    /// # nodes=<n> generator=<tag> seed=<seed|none>
    /// u v
    /// ```
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_edge_list().as_bytes())
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        let _ = writeln!(s, "# nodes={} generator={} seed={}", self.n(), self.generator, seed);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }

    /// Parses the format written by [`Graph::write_edge_list`].
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| parse_err(1, "missing '#' header"))?;
        let mut n = None;
        let mut generator = None;
        let mut seed = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("nodes", v)) => {
                    n = Some(v.parse::<usize>().map_err(|e| parse_err(1, e.to_string()))?)
                }
                Some(("generator", v)) => generator = Some(v.to_string()),
                Some(("seed", "none")) => seed = None,
                Some(("seed", v)) => {
                    seed = Some(v.parse::<u64>().map_err(|e| parse_err(1, e.to_string()))?)
                }
                _ => return Err(parse_err(1, format!("unexpected header field '{field}'"))),
            }
        }
        let n = n.ok_or_else(|| parse_err(1, "header lacks nodes="))?;
        let generator = generator.unwrap_or_else(|| "loaded".into());
        let mut edges = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| parse_err(i + 1, "expected 'u v'"))?
                    .parse()
                    .map_err(|e: std::num::ParseIntError| parse_err(i + 1, e.to_string()))
            };
            edges.push((next()?, next()?));
        }
        if n == 1 && edges.is_empty() {
            let mut g = Self::singleton();
            g.generator = generator;
            g.seed = seed;
            return Ok(g);
        }
        let mut g = Self::from_edges(n, &edges, &generator)?;
        g.seed = seed;
        Ok(g)
    }
}

fn sanitize_tag(tag: &str) -> String {
    tag.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

fn resample_until_connected<F>(seed: u64, tag: &str, mut sample: F) -> Result<Graph>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<BTreeSet<usize>>,
{
    for attempt in 0..CONNECT_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let g = Graph::from_sets(sample(&mut rng), tag, Some(seed));
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConstructionFailure {
        attempts: CONNECT_RETRIES,
        reason: format!("{tag} never produced a connected sample"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_simple(g: &Graph) {
        for v in 0..g.n() {
            let nb = g.neighbors(v);
            assert!(nb.windows(2).all(|w| w[0] < w[1]), "sorted, distinct");
            assert!(!nb.contains(&v));
            for &u in nb {
                assert!(g.has_edge(u, v));
            }
        }
        assert!(g.is_connected());
    }

    #[test]
    fn ring_examples() {
        let g = Graph::ring(5).unwrap();
        assert_eq!(g.neighbors(0), &[1, 4]);
        assert!((0..5).all(|v| g.degree(v) == 2));
        assert_eq!(g.edge_count(), 5);
        assert_eq!(Graph::ring(3).unwrap().neighbors(0), &[1, 2]);
        assert!(matches!(Graph::ring(2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn grid_examples() {
        let g = Graph::grid2d(2, 2).unwrap();
        assert!((0..4).all(|v| g.degree(v) == 2));
        let g = Graph::grid2d(3, 3).unwrap();
        assert_eq!(g.degree(4), 4);
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.degree(1), 3);
        assert_eq!(g.edge_count(), 3 * 3 * 2 - 3 - 3);
        assert!(Graph::grid2d(1, 1).is_err());
    }

    #[test]
    fn degenerate_grid_is_a_path() {
        let g = Graph::grid2d(1, 5).unwrap();
        let expected: Vec<Vec<usize>> =
            vec![vec![1], vec![0, 2], vec![1, 3], vec![2, 4], vec![3]];
        for (v, nb) in expected.iter().enumerate() {
            assert_eq!(g.neighbors(v), nb.as_slice());
        }
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(4), 1);
    }

    #[test]
    fn erdos_renyi_forced_edge() {
        let g = Graph::erdos_renyi(2, 1.0, 9).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn erdos_renyi_bad_parameters() {
        assert!(Graph::erdos_renyi(1, 0.5, 0).is_err());
        assert!(Graph::erdos_renyi(10, 0.0, 0).is_err());
        assert!(Graph::erdos_renyi(10, 1.5, 0).is_err());
    }

    #[test]
    fn erdos_renyi_exhausts_retries() {
        // p this small essentially never yields a connected graph on 50 nodes
        match Graph::erdos_renyi(50, 1e-4, 3) {
            Err(Error::ConstructionFailure { attempts, .. }) => assert_eq!(attempts, CONNECT_RETRIES),
            other => panic!("expected construction failure, got {other:?}"),
        }
    }

    #[test]
    fn watts_strogatz_without_rewiring_is_a_lattice() {
        let g = Graph::watts_strogatz(12, 4, 0.0, 5).unwrap();
        for v in 0..12 {
            let mut expect: Vec<usize> = [1, 2, 10, 11].iter().map(|o| (v + o) % 12).collect();
            expect.sort_unstable();
            assert_eq!(g.neighbors(v), expect.as_slice());
        }
    }

    #[test]
    fn watts_strogatz_preserves_edge_count() {
        let g = Graph::watts_strogatz(1000, 4, 0.1, 11).unwrap();
        assert_eq!(g.edge_count(), 2000);
        assert_eq!(g.mean_degree(), 4.0);
        check_simple(&g);
        assert!(Graph::watts_strogatz(4, 4, 0.1, 0).is_err());
        assert!(Graph::watts_strogatz(10, 3, 0.1, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = Graph::erdos_renyi(60, 0.1, 42).unwrap();
        let b = Graph::erdos_renyi(60, 0.1, 42).unwrap();
        assert_eq!(a.to_edge_list(), b.to_edge_list());
        let a = Graph::watts_strogatz(60, 4, 0.3, 42).unwrap();
        let b = Graph::watts_strogatz(60, 4, 0.3, 42).unwrap();
        assert_eq!(a.to_edge_list(), b.to_edge_list());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::watts_strogatz(30, 4, 0.2, 8).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("# nodes=30 generator=watts_strogatz(30,4,0.2) seed=8\n"));
        let back = Graph::parse_edge_list(&text).unwrap();
        assert_eq!(back, g);
        let s = Graph::parse_edge_list(&Graph::singleton().to_edge_list()).unwrap();
        assert_eq!(s.n(), 1);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(Graph::parse_edge_list("").is_err());
        assert!(Graph::parse_edge_list("0 1\n").is_err());
        assert!(Graph::parse_edge_list("# nodes=3\n0 1\n").is_err(), "disconnected");
        assert!(Graph::parse_edge_list("# nodes=3\n0 x\n").is_err());
    }

    #[test]
    fn from_edges_validation() {
        assert!(Graph::from_edges(3, &[(0, 0), (1, 2)], "t").is_err());
        assert!(Graph::from_edges(3, &[(0, 3)], "t").is_err());
        let g = Graph::from_edges(3, &[(0, 1), (1, 0), (1, 2)], "t").unwrap();
        assert_eq!(g.edge_count(), 2);
    }
}
