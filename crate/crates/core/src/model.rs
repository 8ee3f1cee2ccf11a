//! Synthetic linear-regression data, one record per node.
//!
//! Node `v` holds `(a_v, y_v)` with local loss `f_v(x) = (y_v - x.a_v)^2`,
//! gradient `2 (x.a_v - y_v) a_v` and smoothness constant `L_v = 2 |a_v|^2`.
//!
//! # Sampling order
//!
//! Generation is reproducible from the seed alone. A single `ChaCha8Rng`
//! seeded with `seed_from_u64(seed)` is consumed in this order:
//!
//! 1. `x_true`: `d` standard normals;
//! 2. variance classes: `n` uniforms, node `v` is heavy when `u_v < p_high`;
//! 3. if fewer than `min_heavy` nodes are heavy, light nodes are promoted by
//!    drawing uniform indices among the remaining light nodes;
//! 4. per node in label order: `d` standard normals for `a_v`, then one
//!    standard normal for the noise.
//!
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, parse_err, Error, Result};
use crate::transition::fmt17;

/// Condition-number ceiling for the normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// One node's data point.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    a: Vec<f64>,
    y: f64,
    lipschitz: f64,
}

impl NodeData {
    pub fn new(a: Vec<f64>, y: f64) -> Self {
        let lipschitz = 2.0 * dot(&a, &a);
        NodeData { a, y, lipschitz }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `x.a - y`; callers guarantee matching dimensions.
    pub(crate) fn residual_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.y
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.a.len() {
            return Err(Error::DimensionMismatch {
                expected: self.a.len(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(y - x.a)^2`.
pub fn local_loss(node: &NodeData, x: &[f64]) -> Result<f64> {
    node.check_dim(x)?;
    let r = node.residual_unchecked(x);
    Ok(r * r)
}

/// `2 (x.a - y) a`.
pub fn local_grad(node: &NodeData, x: &[f64]) -> Result<Vec<f64>> {
    node.check_dim(x)?;
    let r = node.residual_unchecked(x);
    Ok(node.a.iter().map(|ai| 2.0 * r * ai).collect())
}

/// Parameters of the two-class Gaussian feature generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub n: usize,
    pub d: usize,
    pub sigma_l_sq: f64,
    pub sigma_h_sq: f64,
    pub p_high: f64,
    pub min_heavy: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl DataSpec {
    /// Heterogeneous spec with unit noise.
    pub fn heterogeneous(
        n: usize,
        d: usize,
        sigma_l_sq: f64,
        sigma_h_sq: f64,
        p_high: f64,
        seed: u64,
        min_heavy: usize,
    ) -> Self {
        DataSpec {
            n,
            d,
            sigma_l_sq,
            sigma_h_sq,
            p_high,
            min_heavy,
            noise_sd: 1.0,
            seed,
        }
    }

    /// Single variance class with unit noise.
    pub fn homogeneous(n: usize, d: usize, sigma_sq: f64, seed: u64) -> Self {
        Self::heterogeneous(n, d, sigma_sq, sigma_sq, 0.0, seed, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        if !(self.sigma_l_sq > 0.0 && self.sigma_h_sq > 0.0) {
            return Err(invalid("variances must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_high) {
            return Err(invalid(format!("p_high must lie in [0, 1], got {}", self.p_high)));
        }
        if self.min_heavy > self.n {
            return Err(invalid(format!(
                "min_heavy = {} exceeds n = {}",
                self.min_heavy, self.n
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(invalid("noise_sd must be a nonnegative number"));
        }
        Ok(())
    }
}

/// Per-node data plus its generating vector and Lipschitz aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    nodes: Vec<NodeData>,
    d: usize,
    x_true: Vec<f64>,
    heavy: Vec<bool>,
    spec: Option<DataSpec>,
    l_bar: f64,
    l_min: f64,
    l_max: f64,
}

impl Dataset {
    /// Assembles a dataset from explicit records. `heavy` flags default to
    /// all-light.
    pub fn from_nodes(nodes: Vec<NodeData>, x_true: Vec<f64>) -> Result<Self> {
        let heavy = vec![false; nodes.len()];
        Self::assemble(nodes, x_true, heavy, None)
    }

    fn assemble(
        nodes: Vec<NodeData>,
        x_true: Vec<f64>,
        heavy: Vec<bool>,
        spec: Option<DataSpec>,
    ) -> Result<Self> {
        let d = x_true.len();
        if nodes.is_empty() {
            return Err(invalid("dataset needs at least one node"));
        }
        if let Some(bad) = nodes.iter().find(|nd| nd.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        let ls = nodes.iter().map(NodeData::lipschitz);
        let l_min = ls.clone().fold(f64::INFINITY, f64::min);
        let l_max = ls.clone().fold(f64::NEG_INFINITY, f64::max);
        let l_bar = ls.sum::<f64>() / nodes.len() as f64;
        Ok(Dataset {
            nodes,
            d,
            x_true,
            heavy,
            spec,
            l_bar,
            l_min,
            l_max,
        })
    }

    pub fn nodes(&self) -> &[NodeData] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &NodeData {
        &self.nodes[v]
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x_true(&self) -> &[f64] {
        &self.x_true
    }

    /// Which nodes were drawn from the high-variance class.
    pub fn heavy_class(&self) -> &[bool] {
        &self.heavy
    }

    pub fn spec(&self) -> Option<&DataSpec> {
        self.spec.as_ref()
    }

    pub fn lipschitz(&self) -> Vec<f64> {
        self.nodes.iter().map(NodeData::lipschitz).collect()
    }

    pub fn l_bar(&self) -> f64 {
        self.l_bar
    }

    pub fn l_min(&self) -> f64 {
        self.l_min
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// Text dump: `#` header lines carrying the generator parameters and
    /// `x_true`, then one `v y a_1 ... a_d` line per node, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# rwalk-dataset v1");
        let _ = write!(s, "# n={} d={}", self.n(), self.d);
        if let Some(sp) = &self.spec {
            let _ = write!(
                s,
                " seed={} sigma_l_sq={} sigma_h_sq={} p_high={} min_heavy={} noise_sd={}",
                sp.seed, sp.sigma_l_sq, sp.sigma_h_sq, sp.p_high, sp.min_heavy, sp.noise_sd
            );
        }
        s.push('\n');
        let xs: Vec<String> = self.x_true.iter().map(|&x| fmt17(x)).collect();
        let _ = writeln!(s, "# x_true={}", xs.join(","));
        let heavy: Vec<String> = self
            .heavy
            .iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(v, _)| v.to_string())
            .collect();
        let _ = writeln!(s, "# heavy={}", heavy.join(","));
        for (v, nd) in self.nodes.iter().enumerate() {
            let _ = write!(s, "{v} {}", fmt17(nd.y));
            for &a in &nd.a {
                let _ = write!(s, " {}", fmt17(a));
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Dataset::to_text`] output. Generator parameters in the
    /// header are restored when complete.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut d = None;
        let mut x_true = None;
        let mut heavy_idx = Vec::new();
        let mut params = std::collections::BTreeMap::new();
        let mut nodes = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                for field in h.split_whitespace() {
                    let Some((key, val)) = field.split_once('=') else {
                        continue;
                    };
                    match key {
                        "n" => n = Some(parse_num::<usize>(val, line_no)?),
                        "d" => d = Some(parse_num::<usize>(val, line_no)?),
                        "x_true" => {
                            x_true = Some(
                                val.split(',')
                                    .filter(|t| !t.is_empty())
                                    .map(|t| parse_num::<f64>(t, line_no))
                                    .collect::<Result<Vec<_>>>()?,
                            )
                        }
                        "heavy" => {
                            heavy_idx = val
                                .split(',')
                                .filter(|t| !t.is_empty())
                                .map(|t| parse_num::<usize>(t, line_no))
                                .collect::<Result<Vec<_>>>()?
                        }
                        _ => {
                            params.insert(key.to_string(), val.to_string());
                        }
                    }
                }
                continue;
            }
            let d = d.ok_or_else(|| parse_err(line_no, "data before header"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != d + 2 {
                return Err(parse_err(line_no, format!("expected {} fields", d + 2)));
            }
            let v = parse_num::<usize>(toks[0], line_no)?;
            if v != nodes.len() {
                return Err(parse_err(line_no, format!("node {v} out of order")));
            }
            let y = parse_num::<f64>(toks[1], line_no)?;
            let a = toks[2..]
                .iter()
                .map(|t| parse_num::<f64>(t, line_no))
                .collect::<Result<Vec<_>>>()?;
            nodes.push(NodeData::new(a, y));
        }
        let n = n.ok_or_else(|| parse_err(1, "header lacks n="))?;
        if nodes.len() != n {
            return Err(parse_err(0, format!("expected {n} nodes, found {}", nodes.len())));
        }
        let x_true = x_true.ok_or_else(|| parse_err(1, "header lacks x_true="))?;
        let mut heavy = vec![false; n];
        for v in heavy_idx {
            *heavy
                .get_mut(v)
                .ok_or_else(|| parse_err(1, format!("heavy node {v} out of range")))? = true;
        }
        let spec = (|| {
            Some(DataSpec {
                n,
                d: x_true.len(),
                sigma_l_sq: params.get("sigma_l_sq")?.parse().ok()?,
                sigma_h_sq: params.get("sigma_h_sq")?.parse().ok()?,
                p_high: params.get("p_high")?.parse().ok()?,
                min_heavy: params.get("min_heavy")?.parse().ok()?,
                noise_sd: params.get("noise_sd")?.parse().ok()?,
                seed: params.get("seed")?.parse().ok()?,
            })
        })();
        Self::assemble(nodes, x_true, heavy, spec)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse '{s}'")))
}

/// Two-class heterogeneous data: `a_v ~ N(0, s_v^2 I_d)` with
/// `s_v^2 = sigma_h_sq` with probability `p_high` (else `sigma_l_sq`), and
/// `y_v = a_v.x_true + noise_sd * eps`.
pub fn generate_heterogeneous(spec: &DataSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x_true: Vec<f64> = (0..spec.d).map(|_| rng.sample(StandardNormal)).collect();
    let mut heavy: Vec<bool> = (0..spec.n).map(|_| rng.random::<f64>() < spec.p_high).collect();
    let drawn = heavy.iter().filter(|h| **h).count();
    if drawn < spec.min_heavy {
        let mut light: Vec<usize> = (0..spec.n).filter(|&v| !heavy[v]).collect();
        for _ in drawn..spec.min_heavy {
            let k = rng.random_range(0..light.len());
            heavy[light.swap_remove(k)] = true;
        }
    }
    let nodes = heavy
        .iter()
        .map(|&h| {
            let sd = if h { spec.sigma_h_sq } else { spec.sigma_l_sq }.sqrt();
            let a: Vec<f64> = (0..spec.d)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let eps: f64 = rng.sample(StandardNormal);
            let y = dot(&a, &x_true) + spec.noise_sd * eps;
            NodeData::new(a, y)
        })
        .collect();
    Dataset::assemble(nodes, x_true, heavy, Some(spec.clone()))
}

/// Single variance class; identical to the heterogeneous generator with
/// `p_high = 0` and `min_heavy = 0`.
pub fn generate_homogeneous(n: usize, d: usize, sigma_sq: f64, seed: u64) -> Result<Dataset> {
    generate_heterogeneous(&DataSpec::homogeneous(n, d, sigma_sq, seed))
}

/// The global least-squares solution and the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x_star: Vec<f64>,
    /// `max_v |grad f_v(x_star)|^2`.
    pub sigma_star_sq: f64,
    pub mse_star: f64,
    /// Condition number of the normal matrix.
    pub condition: f64,
}

/// Solves `min_x sum_v (y_v - x.a_v)^2` through the normal equations with a
/// Cholesky factorization.
pub fn solve_least_squares(dataset: &Dataset) -> Result<GroundTruth> {
    let d = dataset.d();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for nd in dataset.nodes() {
        let a = DVector::from_column_slice(nd.a());
        gram.ger(1.0, &a, &a, 1.0);
        rhs.axpy(nd.y(), &a, 1.0);
    }
    let eig = gram.clone().symmetric_eigen();
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient { condition })?;
    let mut x = chol.solve(&rhs);
    // one step of iterative refinement
    let r = &rhs - &gram * &x;
    x += chol.solve(&r);
    let x_star: Vec<f64> = x.iter().copied().collect();
    let sigma_star_sq = dataset
        .nodes()
        .iter()
        .map(|nd| {
            let r = nd.residual_unchecked(&x_star);
            4.0 * r * r * dot(nd.a(), nd.a())
        })
        .fold(0.0, f64::max);
    let mse_star = global_mse(dataset, &x_star)?;
    Ok(GroundTruth {
        x_star,
        sigma_star_sq,
        mse_star,
        condition,
    })
}

/// `(1/n) sum_v (y_v - x.a_v)^2`.
pub fn global_mse(dataset: &Dataset, x: &[f64]) -> Result<f64> {
    if x.len() != dataset.d() {
        return Err(Error::DimensionMismatch {
            expected: dataset.d(),
            got: x.len(),
        });
    }
    Ok(mse_unchecked(dataset, x))
}

pub(crate) fn mse_unchecked(dataset: &Dataset, x: &[f64]) -> f64 {
    let total: f64 = dataset
        .nodes()
        .iter()
        .map(|nd| {
            let r = nd.residual_unchecked(x);
            r * r
        })
        .sum();
    total / dataset.n() as f64
}
