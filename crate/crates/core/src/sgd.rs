//! Random-walk SGD: one model token, updated at the node it sits on, then
//! handed on by the walker.
//!
//! Each iteration `t` applies
//!
//! ```text
//! x <- x - gamma * w(v_t) * grad f_{v_t}(x)
//! ```
//!
//! with `w = 1` for the uniform-MH baseline and `w = L_bar / L_v` for the
//! importance-sampling samplers, then moves the walker. The run starts from
//! `x = 0` at a node drawn uniformly with the run seed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::model::{mse_unchecked, Dataset, GroundTruth};
use crate::transition::{fmt17, mh_importance, mh_uniform, RowStochasticMatrix};
use crate::walker::{JumpParams, WalkerState};

/// Node-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SamplerKind {
    /// MH towards uniform with the plain (unweighted) update.
    #[serde(rename = "uniform-mh")]
    UniformMh,
    /// MH towards `pi_IS` with the `L_bar / L_v` weighted update.
    #[serde(rename = "is-mh")]
    IsMh,
    /// `is-mh` perturbed by Levy jumps.
    #[serde(rename = "mhlj")]
    Mhlj,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::UniformMh, SamplerKind::IsMh, SamplerKind::Mhlj];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::UniformMh => "uniform-mh",
            SamplerKind::IsMh => "is-mh",
            SamplerKind::Mhlj => "mhlj",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown sampler kind '{s}'")))
    }
}

/// One simulation's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub total_updates: u64,
    pub sampler: SamplerKind,
    /// Required for [`SamplerKind::Mhlj`], ignored otherwise.
    pub jump: Option<JumpParams>,
    pub log_every: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(sampler: SamplerKind, gamma: f64, total_updates: u64, seed: u64) -> Self {
        RunConfig {
            gamma,
            total_updates,
            sampler,
            jump: None,
            log_every: default_log_every(total_updates),
            seed,
        }
    }

    pub fn with_jump(mut self, jump: JumpParams) -> Self {
        self.jump = Some(jump);
        self
    }

    pub fn with_log_every(mut self, log_every: u64) -> Self {
        self.log_every = log_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be a nonnegative number, got {}", self.gamma)));
        }
        if self.total_updates == 0 {
            return Err(invalid("total_updates must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every must be at least 1"));
        }
        if self.sampler == SamplerKind::Mhlj {
            let jump = self
                .jump
                .as_ref()
                .ok_or_else(|| invalid("mhlj needs jump parameters"))?;
            jump.validate()?;
            if let Some(s) = jump.t_switch {
                if s > self.total_updates {
                    return Err(invalid(format!(
                        "t_switch = {s} exceeds total updates {}",
                        self.total_updates
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `max(1, T / 2000)`.
pub fn default_log_every(total_updates: u64) -> u64 {
    (total_updates / 2000).max(1)
}

/// One logged point: state after `iter` updates, the last of which was
/// applied at `node`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: u64,
    pub node: usize,
    pub mse: f64,
    pub dist_sq: f64,
    pub comm_count: u64,
}

/// Logged trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub final_x: Vec<f64>,
    pub config: RunConfig,
    /// Node visits, counting MH self-loops.
    pub hop_count: u64,
    /// Node-to-node transfers.
    pub comm_count: u64,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_mse(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.mse)
    }

    pub fn final_dist_sq(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.dist_sq)
    }

    /// Whether every update was logged.
    pub fn is_complete(&self) -> bool {
        self.config.log_every == 1
    }

    /// Mean over the final `fraction` of logged records (at least one).
    pub fn plateau<F: Fn(&TraceRecord) -> f64>(&self, fraction: f64, metric: F) -> f64 {
        let k = ((self.records.len() as f64 * fraction).ceil() as usize)
            .clamp(1, self.records.len().max(1));
        let tail = &self.records[self.records.len().saturating_sub(k)..];
        tail.iter().map(metric).sum::<f64>() / tail.len() as f64
    }

    /// Plateau of the MSE over the final 10% of records.
    pub fn plateau_mse(&self) -> f64 {
        self.plateau(PLATEAU_FRACTION, |r| r.mse)
    }

    pub fn plateau_dist_sq(&self) -> f64 {
        self.plateau(PLATEAU_FRACTION, |r| r.dist_sq)
    }

    pub fn hops_per_update(&self) -> f64 {
        self.hop_count as f64 / self.config.total_updates as f64
    }

    pub fn comm_per_update(&self) -> f64 {
        self.comm_count as f64 / self.config.total_updates as f64
    }

    /// CSV with header `iter,node,mse,dist_sq,comm_count`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(TRACE_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.iter,
                r.node,
                fmt17(r.mse),
                fmt17(r.dist_sq),
                r.comm_count
            );
        }
        s
    }
}

pub const TRACE_CSV_HEADER: &str = "iter,node,mse,dist_sq,comm_count";

/// Default plateau window: final 10% of logged records.
pub const PLATEAU_FRACTION: f64 = 0.1;

/// A dataset, graph and ground truth bound together with the MH kernel of a
/// sampler, ready to run many seeds.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    dataset: &'a Dataset,
    graph: &'a Graph,
    truth: &'a GroundTruth,
    sampler: SamplerKind,
    kernel: RowStochasticMatrix,
}

impl<'a> Simulation<'a> {
    pub fn new(
        dataset: &'a Dataset,
        graph: &'a Graph,
        truth: &'a GroundTruth,
        sampler: SamplerKind,
    ) -> Result<Self> {
        if dataset.n() != graph.n() {
            return Err(Error::DimensionMismatch {
                expected: graph.n(),
                got: dataset.n(),
            });
        }
        if truth.x_star.len() != dataset.d() {
            return Err(Error::DimensionMismatch {
                expected: dataset.d(),
                got: truth.x_star.len(),
            });
        }
        let kernel = match sampler {
            SamplerKind::UniformMh => mh_uniform(graph),
            SamplerKind::IsMh | SamplerKind::Mhlj => mh_importance(graph, &dataset.lipschitz())?,
        };
        Ok(Simulation {
            dataset,
            graph,
            truth,
            sampler,
            kernel,
        })
    }

    pub fn kernel(&self) -> &RowStochasticMatrix {
        &self.kernel
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn run(&self, config: &RunConfig) -> Result<Trace> {
        if config.sampler != self.sampler {
            return Err(invalid(format!(
                "simulation built for {} but config asks for {}",
                self.sampler, config.sampler
            )));
        }
        config.validate()?;
        let ds = self.dataset;
        let x_star = &self.truth.x_star;
        let l_bar = ds.l_bar();
        let mut x = vec![0.0; ds.d()];
        let mut walker = WalkerState::with_random_start(ds.n(), config.seed);
        let total = config.total_updates;
        let mut records = Vec::with_capacity((total / config.log_every + 1) as usize);
        for t in 0..total {
            let v = walker.node();
            let node = ds.node(v);
            let weight = match self.sampler {
                SamplerKind::UniformMh => 1.0,
                SamplerKind::IsMh | SamplerKind::Mhlj => l_bar / node.lipschitz(),
            };
            let coef = config.gamma * weight * 2.0 * node.residual_unchecked(&x);
            for (xi, ai) in x.iter_mut().zip(node.a()) {
                *xi -= coef * ai;
            }
            if !x.iter().all(|xi| xi.is_finite()) {
                return Err(Error::Divergence { iteration: t + 1 });
            }
            self.advance(&mut walker, config);
            let iter = t + 1;
            if iter % config.log_every == 0 || iter == total {
                records.push(TraceRecord {
                    iter,
                    node: v,
                    mse: mse_unchecked(ds, &x),
                    dist_sq: dist_sq(&x, x_star),
                    comm_count: walker.comm_count(),
                });
            }
        }
        Ok(Trace {
            records,
            final_x: x,
            config: config.clone(),
            hop_count: walker.hop_count(),
            comm_count: walker.comm_count(),
        })
    }
}

impl Simulation<'_> {
    fn advance(&self, walker: &mut WalkerState, config: &RunConfig) {
        walker.record_update();
        match (self.sampler, &config.jump) {
            (SamplerKind::Mhlj, Some(jump)) => {
                walker.step_mhlj(self.graph, &self.kernel, jump);
            }
            _ => {
                walker.step_mh(&self.kernel);
            }
        }
    }

    /// The nodes that perform updates `1..=T` under `config`, without
    /// touching the model. The walk does not depend on the iterates, so this
    /// is exactly the node column of an undecimated trace.
    pub fn visits(&self, config: &RunConfig) -> Result<Vec<usize>> {
        config.validate()?;
        let mut walker = WalkerState::with_random_start(self.dataset.n(), config.seed);
        let mut out = Vec::with_capacity(config.total_updates as usize);
        for _ in 0..config.total_updates {
            out.push(walker.node());
            self.advance(&mut walker, config);
        }
        Ok(out)
    }
}

fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Runs one simulation end to end.
pub fn run(dataset: &Dataset, graph: &Graph, truth: &GroundTruth, config: &RunConfig) -> Result<Trace> {
    Simulation::new(dataset, graph, truth, config.sampler)?.run(config)
}

/// Step-size ceiling of the random-walk SGD convergence bound, reported as a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCap {
    pub cap: f64,
    /// `1 / L_bar`.
    pub smoothness_branch: f64,
    /// `(1/(T mu)) ln(T |x0 - x*|^2 mu^2 / (tau_mix sigma*^2 L_bar))`, when
    /// the log argument exceeds 1.
    pub log_branch: Option<f64>,
    /// The log argument was at most 1, so only `1 / L_bar` applies.
    pub vacuous_log_branch: bool,
}

/// `min{1/L_bar, (1/(T mu)) ln(T dist0 mu^2 / (tau_mix sigma*^2 L_bar))}`.
pub fn theoretical_step_cap(
    l_bar: f64,
    mu: f64,
    total_updates: f64,
    tau_mix: f64,
    sigma_star_sq: f64,
    dist0_sq: f64,
) -> Result<StepCap> {
    let inputs = [l_bar, mu, total_updates, tau_mix, sigma_star_sq, dist0_sq];
    if inputs.iter().any(|x| !(*x > 0.0)) {
        return Err(invalid("step-cap inputs must all be positive"));
    }
    let smoothness_branch = 1.0 / l_bar;
    let arg = total_updates * dist0_sq * mu * mu / (tau_mix * sigma_star_sq * l_bar);
    if arg <= 1.0 {
        return Ok(StepCap {
            cap: smoothness_branch,
            smoothness_branch,
            log_branch: None,
            vacuous_log_branch: true,
        });
    }
    let log_branch = arg.ln() / (total_updates * mu);
    Ok(StepCap {
        cap: smoothness_branch.min(log_branch),
        smoothness_branch,
        log_branch: Some(log_branch),
        vacuous_log_branch: false,
    })
}

/// The constant-free error-gap term `p_j^2 |P_IS - P_Levy|_1^2`.
pub fn error_gap_estimate(p_j: f64, norm1diff: f64) -> f64 {
    p_j * p_j * norm1diff * norm1diff
}
