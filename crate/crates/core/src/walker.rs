//! Node-to-node movement of the model token.
//!
//! A [`WalkerState`] owns its position, its RNG and two counters:
//!
//! * `hops`: node visits, one per Metropolis-Hastings step (self-loops
//!   included) and one per jump hop;
//! * `transfers`: hops that actually changed the node, i.e. the model was
//!   sent over an edge.
//!
//! # RNG consumption
//!
//! Per step, uniforms are drawn from the walker's `ChaCha8Rng` in this order:
//!
//! 1. the jump decision, only when the effective jump probability is
//!    positive (so `p_j = 0` reproduces a plain MH walk draw for draw);
//! 2. without a jump: one uniform for inverse-CDF sampling of the kernel row;
//! 3. with a jump: one uniform for the jump length, then one uniform index
//!    per hop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::transition::RowStochasticMatrix;

/// Levy-jump parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub p_j: f64,
    pub p_d: f64,
    pub r: usize,
    /// Update index from which the jump probability drops to zero.
    #[serde(default)]
    pub t_switch: Option<u64>,
    /// Let a hop stay at the current node (uniform over `N(v) + {v}`).
    #[serde(default)]
    pub include_self: bool,
    /// Perform `d + 1` hops instead of `d`, as a literal reading of the
    /// pseudocode loop `while d >= 0` would.
    #[serde(default)]
    pub extra_hop: bool,
}

impl JumpParams {
    pub fn new(p_j: f64, p_d: f64, r: usize) -> Result<Self> {
        let p = JumpParams {
            p_j,
            p_d,
            r,
            t_switch: None,
            include_self: false,
            extra_hop: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_switch(mut self, t_switch: u64) -> Self {
        self.t_switch = Some(t_switch);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_j) {
            return Err(invalid(format!("p_j must lie in [0, 1], got {}", self.p_j)));
        }
        if !(self.p_d > 0.0 && self.p_d < 1.0) {
            return Err(invalid(format!("p_d must lie in (0, 1), got {}", self.p_d)));
        }
        if self.r == 0 {
            return Err(invalid("r must be at least 1"));
        }
        Ok(())
    }

    /// Jump probability in force at update index `t` (zero based).
    pub fn p_j_at(&self, t: u64) -> f64 {
        match self.t_switch {
            Some(s) if t >= s => 0.0,
            _ => self.p_j,
        }
    }
}

/// Inverse-CDF draw from `P(D = d) = p(1-p)^(d-1) / (1 - (1-p)^r)`, `1 <= d <= r`.
pub fn sample_trunc_geom<R: Rng + ?Sized>(p_d: f64, r: usize, rng: &mut R) -> usize {
    trunc_geom_quantile(p_d, r, rng.random::<f64>())
}

/// Quantile function of the truncated geometric law at `u` in `[0, 1)`.
pub fn trunc_geom_quantile(p_d: f64, r: usize, u: f64) -> usize {
    debug_assert!(p_d > 0.0 && p_d < 1.0 && r >= 1);
    let log_q = (-p_d).ln_1p();
    let mass = -(r as f64 * log_q).exp_m1();
    // F(k) = (1 - q^k) / mass, so the answer is the least k with q^k <= 1 - u mass
    let k = ((-u * mass).ln_1p() / log_q).ceil();
    (k.max(1.0) as usize).min(r)
}

/// Upper bound on expected node visits per update:
/// `1 + p_j (1/p_d - 1)`.
pub fn expected_comm_bound(p_j: f64, p_d: f64) -> f64 {
    1.0 + p_j * (1.0 / p_d - 1.0)
}

/// Exact expected node visits per update, `(1 - p_j) + p_j E[d]`, for the
/// truncated jump length.
pub fn expected_visits_per_update(p_j: f64, p_d: f64, r: usize) -> f64 {
    let q = 1.0 - p_d;
    let mass = 1.0 - q.powi(r as i32);
    let mean: f64 = (1..=r)
        .map(|d| d as f64 * p_d * q.powi(d as i32 - 1) / mass)
        .sum();
    (1.0 - p_j) + p_j * mean
}

/// Position, RNG stream and communication counters of one walker.
#[derive(Debug, Clone)]
pub struct WalkerState {
    node: usize,
    rng: ChaCha8Rng,
    transfers: u64,
    hops: u64,
    updates: u64,
}

impl WalkerState {
    pub fn new(start: usize, seed: u64) -> Self {
        WalkerState {
            node: start,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transfers: 0,
            hops: 0,
            updates: 0,
        }
    }

    /// Start node drawn uniformly from `0..n`, as the first draw of the stream.
    pub fn with_random_start(n: usize, seed: u64) -> Self {
        let mut w = Self::new(0, seed);
        w.node = w.rng.random_range(0..n);
        w
    }

    pub fn node(&self) -> usize {
        self.node
    }

    /// Node-to-node transfers so far.
    pub fn comm_count(&self) -> u64 {
        self.transfers
    }

    /// Node visits so far, counting self-loop steps.
    pub fn hop_count(&self) -> u64 {
        self.hops
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn record_update(&mut self) {
        self.updates += 1;
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn move_to(&mut self, next: usize) {
        self.hops += 1;
        if next != self.node {
            self.transfers += 1;
        }
        self.node = next;
    }

    /// One step drawn from row `node` of `p`.
    pub fn step_mh(&mut self, p: &RowStochasticMatrix) -> usize {
        let u = self.rng.random::<f64>();
        let next = p.sample_row(self.node, u);
        self.move_to(next);
        next
    }

    /// One MHLJ move: with probability `p_j` (at the current update index) a
    /// jump of `d ~ TruncGeom(p_d, r)` uniform-neighbour hops, otherwise an
    /// MH step on `p_is`.
    pub fn step_mhlj(&mut self, graph: &Graph, p_is: &RowStochasticMatrix, params: &JumpParams) -> usize {
        let p_j = params.p_j_at(self.updates);
        let jump = p_j > 0.0 && self.rng.random::<f64>() < p_j;
        if !jump {
            return self.step_mh(p_is);
        }
        let mut d = sample_trunc_geom(params.p_d, params.r, &mut self.rng);
        if params.extra_hop {
            d += 1;
        }
        for _ in 0..d {
            let nb = graph.neighbors(self.node);
            let slots = nb.len() + usize::from(params.include_self || nb.is_empty());
            let k = self.rng.random_range(0..slots);
            let next = nb.get(k).copied().unwrap_or(self.node);
            self.move_to(next);
        }
        self.node
    }
}
