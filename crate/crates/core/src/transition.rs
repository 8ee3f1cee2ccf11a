//! Transition kernels over graph nodes and Markov-chain diagnostics.
//!
//! All kernels are stored as sparse row-stochastic matrices. The builders
//! cover the simple random walk, Metropolis-Hastings towards an arbitrary
//! target (uniform and importance-sampling targets being the two cases the
//! simulator uses), the Levy jump kernel and convex mixtures of kernels.
//!
//! Diagnostics are exact computations on the kernel, not estimates from
//! sample paths: power iteration for the stationary law, per-start
//! iteration of row distributions for the mixing time.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{invalid, parse_err, Error, Result};
use crate::graph::Graph;

/// Allowed deviation of a row sum (or a distribution's total mass) from 1.
pub const SUM_TOL: f64 = 1e-12;

/// Default power-iteration tolerance on successive-iterate TV distance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default power-iteration cap.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Default TV threshold for the mixing time.
pub const DEFAULT_MIXING_EPS: f64 = 0.25;

/// A probability vector over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and normalization (within [`SUM_TOL`]).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("distribution must be non-empty"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(invalid(format!("distribution weight {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("distribution sums to {total}, not 1")));
        }
        Ok(Distribution { weights })
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_unnormalized(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(invalid(format!("weight {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("weights have zero total mass"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, v: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[v] = 1.0;
        Distribution { weights }
    }

    /// The importance distribution `pi(v) = L_v / sum_u L_u`.
    pub fn importance(lipschitz: &[f64]) -> Result<Self> {
        check_positive(lipschitz, "Lipschitz constant")?;
        Self::from_unnormalized(lipschitz)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, v: usize) -> f64 {
        self.weights[v]
    }

    pub fn tv_distance(&self, other: &Distribution) -> Result<f64> {
        tv_distance(self, other)
    }
}

/// Total-variation distance `(1/2) sum_i |a_i - b_i|`.
pub fn tv_distance(a: &Distribution, b: &Distribution) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(tv_slices(&a.weights, &b.weights))
}

fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn check_positive(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(i) => Err(invalid(format!("{what} at node {i} must be positive, got {}", values[i]))),
        None => Ok(()),
    }
}

/// Sparse row-stochastic matrix. Rows hold `(column, probability)` pairs
/// sorted by column, with exact zeros dropped.
///
/// `support_hops` records the support constraint the builder guarantees:
/// every off-diagonal entry `(i, j)` has `j` within that many hops of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    kind: String,
    support_hops: usize,
}

impl RowStochasticMatrix {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, kind: &str, support_hops: usize) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("matrix must have at least one row"));
        }
        let mut clean = Vec::with_capacity(n);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, p)| p != 0.0);
            row.sort_by_key(|&(j, _)| j);
            let mut sum = 0.0;
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(invalid(format!("row {i} repeats column {}", w[0].0)));
                }
            }
            for (j, p) in row.iter_mut() {
                if *j >= n {
                    return Err(invalid(format!("row {i} has column {j} out of range")));
                }
                if *p > 1.0 && *p <= 1.0 + SUM_TOL {
                    *p = 1.0;
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid(format!("entry ({i}, {j}) = {p} outside [0, 1]")));
                }
                sum += *p;
            }
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(invalid(format!("row {i} sums to {sum}")));
            }
            clean.push(row);
        }
        Ok(RowStochasticMatrix {
            rows: clean,
            kind: kind.to_string(),
            support_hops,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| row[k].1)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn support_hops(&self) -> usize {
        self.support_hops
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Draws a column of row `i` by inverse CDF, given `u` in `[0, 1)`.
    pub fn sample_row(&self, i: usize, u: f64) -> usize {
        let row = &self.rows[i];
        let mut acc = 0.0;
        for &(j, p) in row {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the accumulated total
        row.last().map_or(i, |&(j, _)| j)
    }

    /// `out = x P` for a row vector `x`.
    pub fn left_multiply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += xi * p;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, p) in row {
                    dense[j] = p;
                }
                dense
            })
            .collect()
    }

    /// Verifies the recorded support constraint against `graph`.
    pub fn check_support(&self, graph: &Graph) -> Result<()> {
        if graph.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: graph.n(),
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            let dist = graph.bfs_distances(i);
            for &(j, _) in row {
                if j == i {
                    continue;
                }
                match dist[j] {
                    Some(d) if d <= self.support_hops => {}
                    _ => {
                        return Err(invalid(format!(
                            "entry ({i}, {j}) lies outside the {}-hop support",
                            self.support_hops
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Sparse triplet dump: header `# n=<n> kind=<tag>`, then `i j p` lines
    /// with 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_triplets().as_bytes())
    }

    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# n={} kind={}", self.n(), self.kind);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                let _ = writeln!(s, "{i} {j} {}", fmt17(p));
            }
        }
        s
    }

    /// Parses a triplet dump. The support constraint is not serialized; the
    /// loaded matrix declares `n - 1` hops (anything connected).
    pub fn parse_triplets(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| parse_err(1, "missing '#' header"))?;
        let mut n = None;
        let mut kind = "loaded".to_string();
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|e| parse_err(1, e.to_string()))?),
                Some(("kind", v)) => kind = v.to_string(),
                _ => return Err(parse_err(1, format!("unexpected header field '{field}'"))),
            }
        }
        let n = n.ok_or_else(|| parse_err(1, "header lacks n="))?;
        let mut rows = vec![Vec::new(); n];
        for (k, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(k + 1, "expected 'i j p'"));
            }
            let i: usize = parts[0].parse().map_err(|_| parse_err(k + 1, "bad row index"))?;
            let j: usize = parts[1].parse().map_err(|_| parse_err(k + 1, "bad column index"))?;
            let p: f64 = parts[2].parse().map_err(|_| parse_err(k + 1, "bad probability"))?;
            if i >= n {
                return Err(parse_err(k + 1, format!("row {i} out of range")));
            }
            rows[i].push((j, p));
        }
        Self::new(rows, &kind, n.saturating_sub(1))
    }
}

/// Formats a float with 17 significant digits, enough to round-trip `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Simple random walk: uniform over neighbours, zero diagonal.
pub fn simple_rw(graph: &Graph) -> RowStochasticMatrix {
    let rows = (0..graph.n())
        .map(|v| {
            let nb = graph.neighbors(v);
            if nb.is_empty() {
                return vec![(v, 1.0)];
            }
            let p = 1.0 / nb.len() as f64;
            nb.iter().map(|&u| (u, p)).collect()
        })
        .collect();
    RowStochasticMatrix::new(rows, "simple_rw", 1).expect("simple random walk is row-stochastic")
}

/// Metropolis-Hastings with a simple-random-walk proposal. `ratio(i, j)` is
/// the target ratio `pi(j) / pi(i)`; off-diagonal entries are
/// `(1/deg i) min{1, deg(i) ratio / deg(j)}` and the diagonal takes the rest.
fn metropolis<F>(graph: &Graph, kind: &str, ratio: F) -> RowStochasticMatrix
where
    F: Fn(usize, usize) -> f64,
{
    let rows = (0..graph.n())
        .map(|i| {
            let nb = graph.neighbors(i);
            let deg_i = nb.len() as f64;
            let mut row = Vec::with_capacity(nb.len() + 1);
            let mut off = 0.0;
            for &j in nb {
                let deg_j = graph.degree(j) as f64;
                let p = (1.0 / deg_i) * f64::min(1.0, deg_i * ratio(i, j) / deg_j);
                off += p;
                row.push((j, p));
            }
            row.push((i, (1.0 - off).max(0.0)));
            row
        })
        .collect();
    RowStochasticMatrix::new(rows, kind, 1).expect("Metropolis-Hastings rows are row-stochastic")
}

/// MH towards the uniform distribution: `min{1, deg(v)/deg(u)} / deg(v)`.
pub fn mh_uniform(graph: &Graph) -> RowStochasticMatrix {
    metropolis(graph, "mh_uniform", |_, _| 1.0)
}

/// MH towards `pi_IS`, with entries
/// `(1/deg i) min{1, deg(i) L_j / (deg(j) L_i)}` off the diagonal.
pub fn mh_importance(graph: &Graph, lipschitz: &[f64]) -> Result<RowStochasticMatrix> {
    if lipschitz.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: lipschitz.len(),
        });
    }
    check_positive(lipschitz, "Lipschitz constant")?;
    Ok(metropolis(graph, "mh_importance", |i, j| lipschitz[j] / lipschitz[i]))
}

/// MH towards an arbitrary strictly positive target.
pub fn mh_target(graph: &Graph, target: &Distribution) -> Result<RowStochasticMatrix> {
    if target.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            expected: graph.n(),
            got: target.len(),
        });
    }
    check_positive(target.weights(), "target mass")?;
    let w = target.weights();
    Ok(metropolis(graph, "mh_target", |i, j| w[j] / w[i]))
}

/// Truncated-geometric weights `p(1-p)^(i-1) / (1 - (1-p)^r)` for `i = 1..=r`.
pub fn truncated_geometric_weights(p_d: f64, r: usize) -> Result<Vec<f64>> {
    if !(p_d > 0.0 && p_d < 1.0) {
        return Err(invalid(format!("p_d must lie in (0, 1), got {p_d}")));
    }
    if r == 0 {
        return Err(invalid("r must be at least 1"));
    }
    let log_q = (-p_d).ln_1p();
    let raw: Vec<f64> = (0..r).map(|i| p_d * (i as f64 * log_q).exp()).collect();
    let mass: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / mass).collect())
}

/// Options for [`levy_matrix_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LevyOptions {
    /// Count "stay" as a hop, i.e. use `A + I` instead of `A`.
    pub include_self: bool,
}

/// Levy jump kernel: the truncated-geometric mixture over `i = 1..=r` of the
/// row-normalized walk-count matrices `diag(A^i 1)^-1 A^i`.
pub fn levy_matrix(graph: &Graph, p_d: f64, r: usize) -> Result<RowStochasticMatrix> {
    levy_matrix_with(graph, p_d, r, LevyOptions::default())
}

pub fn levy_matrix_with(
    graph: &Graph,
    p_d: f64,
    r: usize,
    options: LevyOptions,
) -> Result<RowStochasticMatrix> {
    let weights = truncated_geometric_weights(p_d, r)?;
    let rows = (0..graph.n())
        .into_par_iter()
        .map(|v| levy_row(graph, v, &weights, options.include_self))
        .collect::<Result<Vec<_>>>()?;
    RowStochasticMatrix::new(rows, "levy", r)
}

/// One row of the Levy kernel by repeated neighbour expansion with exact
/// integer walk counts.
fn levy_row(
    graph: &Graph,
    source: usize,
    weights: &[f64],
    include_self: bool,
) -> Result<Vec<(usize, f64)>> {
    let n = graph.n();
    let mut counts = vec![0u64; n];
    counts[source] = 1;
    let mut next = vec![0u64; n];
    let mut acc = vec![0.0f64; n];
    for (hop, &w) in weights.iter().enumerate() {
        next.iter_mut().for_each(|c| *c = 0);
        for (u, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let overflow = || Error::CountOverflow {
                source_node: source,
                hop: hop + 1,
            };
            let nb = graph.neighbors(u);
            if nb.is_empty() || include_self {
                next[u] = next[u].checked_add(c).ok_or_else(overflow)?;
            }
            for &x in nb {
                next[x] = next[x].checked_add(c).ok_or_else(overflow)?;
            }
        }
        std::mem::swap(&mut counts, &mut next);
        let total = counts.iter().try_fold(0u64, |s, &c| s.checked_add(c)).ok_or(
            Error::CountOverflow {
                source_node: source,
                hop: hop + 1,
            },
        )? as f64;
        for (x, &c) in counts.iter().enumerate() {
            if c != 0 {
                acc[x] += w * (c as f64 / total);
            }
        }
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p != 0.0)
        .collect())
}

/// Convex combination `(1 - p_j) a + p_j b`.
pub fn mix(a: &RowStochasticMatrix, b: &RowStochasticMatrix, p_j: f64) -> Result<RowStochasticMatrix> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    if !(0.0..=1.0).contains(&p_j) {
        return Err(invalid(format!("p_j must lie in [0, 1], got {p_j}")));
    }
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| merge_rows(ra, rb, |x, y| (1.0 - p_j) * x + p_j * y))
        .collect();
    RowStochasticMatrix::new(rows, "mix", a.support_hops.max(b.support_hops))
}

/// Applies `f(a_ij, b_ij)` over the union of the two supports.
fn merge_rows<F>(ra: &[(usize, f64)], rb: &[(usize, f64)], f: F) -> Vec<(usize, f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let mut out = Vec::with_capacity(ra.len() + rb.len());
    let (mut i, mut k) = (0, 0);
    while i < ra.len() || k < rb.len() {
        let ca = ra.get(i).map_or(usize::MAX, |e| e.0);
        let cb = rb.get(k).map_or(usize::MAX, |e| e.0);
        let (col, x, y) = if ca == cb {
            i += 1;
            k += 1;
            (ca, ra[i - 1].1, rb[k - 1].1)
        } else if ca < cb {
            i += 1;
            (ca, ra[i - 1].1, 0.0)
        } else {
            k += 1;
            (cb, 0.0, rb[k - 1].1)
        };
        out.push((col, f(x, y)));
    }
    out
}

/// Left fixed point `nu P = nu` by power iteration from the uniform start.
/// Stops once successive iterates are within `tol` in TV distance.
///
/// A periodic chain started from uniform keeps oscillating unless uniform
/// happens to be stationary (e.g. the simple walk on an even ring); such
/// chains end in [`Error::NonConvergence`].
pub fn stationary(p: &RowStochasticMatrix, tol: f64, max_iter: usize) -> Result<Distribution> {
    let n = p.n();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        p.left_multiply_into(&x, &mut y);
        let total: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= total);
        residual = tv_slices(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if residual < tol {
            return Distribution::from_unnormalized(&x);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
        last: x,
    })
}

/// Mixing time: the smallest `t <= t_max` with
/// `max_v TV(P^t(v, .), pi) <= eps`, where `pi` comes from [`stationary`].
pub fn mixing_time(p: &RowStochasticMatrix, eps: f64, t_max: usize) -> Result<usize> {
    let pi = stationary(p, 1e-14, DEFAULT_MAX_ITER)?;
    mixing_time_to(p, &pi, eps, t_max)
}

/// Mixing time against a known stationary distribution.
///
/// The TV distance of each start's row to `pi` is nonincreasing in `t`, so
/// the worst case is the largest per-start hitting time; rows are iterated
/// independently (and in parallel).
pub fn mixing_time_to(
    p: &RowStochasticMatrix,
    pi: &Distribution,
    eps: f64,
    t_max: usize,
) -> Result<usize> {
    if pi.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: pi.len(),
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let n = p.n();
    let hits = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut mu = vec![0.0; n];
            mu[v] = 1.0;
            let mut next = vec![0.0; n];
            let mut tv = tv_slices(&mu, pi.weights());
            if tv <= eps {
                return Ok(0);
            }
            for t in 1..=t_max {
                p.left_multiply_into(&mu, &mut next);
                std::mem::swap(&mut mu, &mut next);
                tv = tv_slices(&mu, pi.weights());
                if tv <= eps {
                    return Ok(t);
                }
            }
            Err(Error::NonConvergence {
                iterations: t_max,
                residual: tv,
                last: Vec::new(),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.into_iter().max().unwrap_or(0))
}

/// `max_(i,j) |pi_i p_ij - pi_j p_ji|` over stored entries.
pub fn detailed_balance_residual(p: &RowStochasticMatrix, pi: &Distribution) -> Result<f64> {
    if pi.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: pi.len(),
        });
    }
    let w = pi.weights();
    let mut worst = 0.0f64;
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, pij) in row {
            let r = (w[i] * pij - w[j] * p.get(j, i)).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Max absolute row sum of `a - b`.
pub fn one_norm_diff(a: &RowStochasticMatrix, b: &RowStochasticMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(a.rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| {
            merge_rows(ra, rb, |x, y| (x - y).abs())
                .iter()
                .map(|e| e.1)
                .sum::<f64>()
        })
        .fold(0.0, f64::max))
}
