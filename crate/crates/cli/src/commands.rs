//! The four subcommands. Each returns its report and writes its files under
//! an output directory; every file starts with a format line and a config echo.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rwalk::diagnostics::{occupancy_of_nodes, OccupancyReport, DEFAULT_HEAVY_FACTOR};
use rwalk::graph::Graph;
use rwalk::model::{global_mse, solve_least_squares, Dataset, GroundTruth};
use rwalk::sgd::{error_gap_estimate, theoretical_step_cap, RunConfig, SamplerKind, Simulation, Trace};
use rwalk::transition::{
    detailed_balance_residual, fmt17, levy_matrix, mh_importance, mh_uniform, mix, mixing_time_to,
    one_norm_diff, stationary, Distribution, RowStochasticMatrix, DEFAULT_MAX_ITER,
};
use serde::Serialize;

use crate::config::{DiagnosticsSection, ExperimentConfig, Gamma};
use crate::error::{config_err, CliError};

pub const TRACE_FORMAT: &str = "rwalk-trace v1";
pub const SUMMARY_FORMAT: &str = "rwalk-summary v1";
pub const STATIONARY_FORMAT: &str = "rwalk-stationary v1";
pub const DIAGNOSE_FORMAT: &str = "rwalk-diagnose v1";
pub const SWEEP_FORMAT: &str = "rwalk-sweep v1";

/// Successive-iterate tolerance for stationary laws in reports. The error of
/// power iteration is roughly this over the spectral gap, so slow chains
/// need it well below the library default.
pub const STATIONARY_TOL: f64 = 1e-14;

/// Deepest grid point tried by `"auto-grid"`, i.e. `gamma >= 2^-40`.
pub const AUTO_GRID_DEPTH: i32 = 40;

/// Graph, data and least-squares solution of one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let graph = cfg.build_graph()?;
    let dataset = cfg.build_dataset(graph.n())?;
    let truth = solve_least_squares(&dataset)?;
    Ok(Prepared { graph, dataset, truth })
}

/// Largest `gamma` in `{1, 1/2, 1/4, ...}` for which uniform-mh runs `T`
/// updates without diverging and ends no worse than the starting point
/// `x = 0`.
pub fn auto_grid(prep: &Prepared, total_updates: u64, seed: u64) -> Result<f64, CliError> {
    let sim = Simulation::new(&prep.dataset, &prep.graph, &prep.truth, SamplerKind::UniformMh)?;
    let start = global_mse(&prep.dataset, &vec![0.0; prep.dataset.d()])?;
    for k in 0..=AUTO_GRID_DEPTH {
        let gamma = 0.5f64.powi(k);
        let cfg = RunConfig::new(SamplerKind::UniformMh, gamma, total_updates, seed).with_log_every(total_updates);
        match sim.run(&cfg) {
            Ok(t) if t.final_mse() <= start => return Ok(gamma),
            Ok(_) | Err(rwalk::Error::Divergence { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(config_err(format!(
        "auto-grid found no step size down to 2^-{AUTO_GRID_DEPTH} for which uniform-mh converges"
    )))
}

pub fn resolve_gamma(cfg: &ExperimentConfig, prep: &Prepared) -> Result<f64, CliError> {
    match cfg.algo.gamma {
        Gamma::Value(g) => Ok(g),
        Gamma::AutoGrid => auto_grid(prep, cfg.algo.total_updates, cfg.algo.seed),
    }
}

/// Per-sampler outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub sampler: SamplerKind,
    pub gamma: f64,
    pub total_updates: u64,
    pub final_mse: f64,
    pub final_dist_sq: f64,
    pub plateau_mse: f64,
    pub plateau_dist_sq: f64,
    pub mse_star: f64,
    pub comm_count: u64,
    pub hop_count: u64,
    pub comm_per_update: f64,
    pub hops_per_update: f64,
    pub heavy_share: f64,
    pub max_dwell: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_gap_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical_step_cap: Option<f64>,
}

fn run_config(cfg: &ExperimentConfig, kind: SamplerKind, gamma: f64) -> Result<RunConfig, CliError> {
    let total = cfg.algo.total_updates;
    let mut rc = RunConfig::new(kind, gamma, total, cfg.algo.seed);
    if let Some(l) = cfg.output.log_every {
        rc = rc.with_log_every(l);
    }
    if kind == SamplerKind::Mhlj {
        rc = rc.with_jump(cfg.jump()?);
    }
    Ok(rc)
}

/// Runs one sampler and summarizes it. Occupancy statistics use the full
/// visit sequence, whatever the logging interval.
pub fn run_sampler(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    kind: SamplerKind,
    gamma: f64,
) -> Result<(Trace, RunSummary), CliError> {
    let rc = run_config(cfg, kind, gamma)?;
    let sim = Simulation::new(&prep.dataset, &prep.graph, &prep.truth, kind)?;
    let trace = sim.run(&rc)?;
    let visits = sim.visits(&rc)?;
    let occ = occupancy_of_nodes(&visits, &prep.dataset, DEFAULT_HEAVY_FACTOR)?;

    let (mut gap, mut cap) = (None, None);
    if let Some(diag) = &cfg.diagnostics {
        let kernel = match kind {
            SamplerKind::Mhlj => {
                let jp = cfg.jump()?;
                let lev = levy_matrix(&prep.graph, jp.p_d, jp.r)?;
                gap = Some(error_gap_estimate(jp.p_j, one_norm_diff(sim.kernel(), &lev)?));
                mix(sim.kernel(), &lev, jp.p_j)?
            }
            _ => sim.kernel().clone(),
        };
        if let Some(mu) = diag.mu {
            cap = step_cap(prep, &kernel, mu, diag, rc.total_updates)?;
        }
    }
    let summary = summarize(kind, gamma, prep, &trace, &occ, gap, cap);
    Ok((trace, summary))
}

/// Step-size cap for `kernel`, or `None` when the kernel has no mixing time
/// (periodic chains such as uniform-mh on an even ring).
fn step_cap(
    prep: &Prepared,
    kernel: &RowStochasticMatrix,
    mu: f64,
    diag: &DiagnosticsSection,
    total_updates: u64,
) -> Result<Option<f64>, CliError> {
    let tau = match stationary(kernel, STATIONARY_TOL, DEFAULT_MAX_ITER)
        .and_then(|pi| mixing_time_to(kernel, &pi, diag.eps, diag.t_max))
    {
        Ok(t) => t,
        Err(rwalk::Error::NonConvergence { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let dist0: f64 = prep.truth.x_star.iter().map(|x| x * x).sum();
    let c = theoretical_step_cap(
        prep.dataset.l_bar(),
        mu,
        total_updates as f64,
        tau.max(1) as f64,
        prep.truth.sigma_star_sq,
        dist0,
    )
    .map_err(CliError::from_setup)?;
    Ok(Some(c.cap))
}

fn summarize(
    kind: SamplerKind,
    gamma: f64,
    prep: &Prepared,
    trace: &Trace,
    occ: &OccupancyReport,
    gap: Option<f64>,
    cap: Option<f64>,
) -> RunSummary {
    RunSummary {
        sampler: kind,
        gamma,
        total_updates: trace.config.total_updates,
        final_mse: trace.final_mse(),
        final_dist_sq: trace.final_dist_sq(),
        plateau_mse: trace.plateau_mse(),
        plateau_dist_sq: trace.plateau_dist_sq(),
        mse_star: prep.truth.mse_star,
        comm_count: trace.comm_count,
        hop_count: trace.hop_count,
        comm_per_update: trace.comm_per_update(),
        hops_per_update: trace.hops_per_update(),
        heavy_share: occ.heavy_share,
        max_dwell: occ.max_dwell,
        error_gap_estimate: gap,
        theoretical_step_cap: cap,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

fn preamble(format: &str, cfg: &ExperimentConfig) -> String {
    format!("# format={format}\n# config={}\n", cfg.echo())
}

/// Config echo with the step size resolved.
fn resolved(cfg: &ExperimentConfig, gamma: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.algo.gamma = Gamma::Value(gamma);
    c
}

/// Where the trace of `kind` goes: the configured path for a single sampler,
/// `<stem>-<sampler>.<ext>` when several run.
pub fn trace_path(cfg: &ExperimentConfig, out: &Path, kind: SamplerKind) -> PathBuf {
    let base = out.join(&cfg.output.csv);
    if cfg.algo.sampler_kind.len() == 1 {
        return base;
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{kind}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{kind}"),
    };
    base.with_file_name(name)
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a> {
    format: &'static str,
    config: &'a ExperimentConfig,
    runs: &'a [RunSummary],
}

/// Runs every configured sampler; writes one trace CSV per sampler and
/// `summary.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>, CliError> {
    let prep = prepare(cfg)?;
    let gamma = resolve_gamma(cfg, &prep)?;
    let echo_cfg = resolved(cfg, gamma);
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for &kind in &cfg.algo.sampler_kind {
        let (trace, summary) = run_sampler(cfg, &prep, kind, gamma)?;
        let mut text = preamble(TRACE_FORMAT, &echo_cfg);
        let _ = writeln!(
            text,
            "# sampler={kind} gamma={} mse_star={}",
            fmt17(gamma),
            fmt17(prep.truth.mse_star)
        );
        text.push_str(&trace.to_csv());
        outputs.push((trace_path(cfg, out, kind), text));
        summaries.push(summary);
    }
    for (path, text) in &outputs {
        write_file(path, text)?;
    }
    let file = SummaryFile {
        format: SUMMARY_FORMAT,
        config: &echo_cfg,
        runs: &summaries,
    };
    let json = serde_json::to_string_pretty(&file).expect("summary serializes") + "\n";
    write_file(&out.join("summary.json"), &json)?;
    Ok(summaries)
}

fn stationary_text(cfg: &ExperimentConfig, kind: &str, pi: &Distribution, target: &Distribution) -> String {
    let mut s = preamble(STATIONARY_FORMAT, cfg);
    let _ = writeln!(s, "# kernel={kind}");
    s.push_str("node,pi,pi_is\n");
    for v in 0..pi.len() {
        let _ = writeln!(s, "{v},{},{}", fmt17(pi.get(v)), fmt17(target.get(v)));
    }
    s
}

/// Matrix dumps keep their own header on the first line so they parse back.
fn with_echo(body: String, format: &str, cfg: &ExperimentConfig) -> String {
    let (head, rest) = body.split_once('\n').unwrap_or((&body, ""));
    format!("{head}\n{}{rest}", preamble(format, cfg))
}

/// Dumps the graph, the dataset, the kernels and their stationary laws.
/// Returns the written paths.
pub fn cmd_matrix(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let prep = prepare(cfg)?;
    let lip = prep.dataset.lipschitz();
    let target = Distribution::importance(&lip)?;
    let mut files: Vec<(PathBuf, String)> = vec![
        (
            out.join("graph.edges"),
            with_echo(prep.graph.to_edge_list(), "rwalk-edges v1", cfg),
        ),
        (
            out.join("dataset.txt"),
            with_echo(prep.dataset.to_text(), "rwalk-dataset v1", cfg),
        ),
    ];
    let p_uni = mh_uniform(&prep.graph);
    let p_is = mh_importance(&prep.graph, &lip)?;
    let mut kernels: Vec<(&str, RowStochasticMatrix)> = vec![("mh_uniform", p_uni), ("mh_importance", p_is.clone())];
    if let (Some(p_d), Some(r)) = (cfg.algo.p_d, cfg.algo.r) {
        let lev = levy_matrix(&prep.graph, p_d, r)?;
        if let Some(p_j) = cfg.algo.p_j {
            kernels.push(("mix", mix(&p_is, &lev, p_j)?));
        }
        kernels.push(("levy", lev));
    }
    for (name, p) in &kernels {
        files.push((
            out.join(format!("{name}.triplets")),
            with_echo(p.to_triplets(), "rwalk-triplets v1", cfg),
        ));
        if *name != "levy" {
            let pi = stationary(p, STATIONARY_TOL, DEFAULT_MAX_ITER)?;
            files.push((
                out.join(format!("stationary_{name}.csv")),
                stationary_text(cfg, name, &pi, &target),
            ));
        }
    }
    for (path, text) in &files {
        write_file(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Exact mixing and bias diagnostics of the importance kernel and its jump
/// perturbation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseReport {
    pub tau_mix_is: usize,
    pub tau_mix_mix: usize,
    pub residual_is: f64,
    pub residual_mix: f64,
    pub tv_mix_to_target: f64,
    pub norm1_is_levy: f64,
    pub error_gap_estimate: f64,
    pub heavy_holding_time_is: f64,
    pub heavy_holding_time_mix: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical_step_cap: Option<f64>,
}

impl DiagnoseReport {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tau_mix_is={}", self.tau_mix_is);
        let _ = writeln!(s, "tau_mix_mix={}", self.tau_mix_mix);
        let _ = writeln!(s, "residual_is={}", fmt17(self.residual_is));
        let _ = writeln!(s, "residual_mix={}", fmt17(self.residual_mix));
        let _ = writeln!(s, "tv_mix_to_target={}", fmt17(self.tv_mix_to_target));
        let _ = writeln!(s, "norm1_is_levy={}", fmt17(self.norm1_is_levy));
        let _ = writeln!(s, "error_gap_estimate={}", fmt17(self.error_gap_estimate));
        let _ = writeln!(s, "heavy_holding_time_is={}", fmt17(self.heavy_holding_time_is));
        let _ = writeln!(s, "heavy_holding_time_mix={}", fmt17(self.heavy_holding_time_mix));
        if let Some(c) = self.theoretical_step_cap {
            let _ = writeln!(s, "theoretical_step_cap={}", fmt17(c));
        }
        s
    }
}

pub fn diagnose(cfg: &ExperimentConfig, prep: &Prepared) -> Result<DiagnoseReport, CliError> {
    let jp = cfg.jump()?;
    let diag = cfg.diagnostics_or_default();
    let lip = prep.dataset.lipschitz();
    let target = Distribution::importance(&lip)?;
    let p_is = mh_importance(&prep.graph, &lip)?;
    let lev = levy_matrix(&prep.graph, jp.p_d, jp.r)?;
    let m = mix(&p_is, &lev, jp.p_j)?;
    let pi_mix = stationary(&m, STATIONARY_TOL, DEFAULT_MAX_ITER)?;
    let tau_mix_is = mixing_time_to(&p_is, &target, diag.eps, diag.t_max)?;
    let tau_mix_mix = mixing_time_to(&m, &pi_mix, diag.eps, diag.t_max)?;
    let norm = one_norm_diff(&p_is, &lev)?;
    let heaviest = (0..lip.len())
        .max_by(|&a, &b| lip[a].total_cmp(&lip[b]))
        .unwrap_or(0);
    let hold = |p: &RowStochasticMatrix| 1.0 / (1.0 - p.get(heaviest, heaviest));
    let theoretical_step_cap = match diag.mu {
        Some(mu) => {
            let dist0: f64 = prep.truth.x_star.iter().map(|x| x * x).sum();
            let c = theoretical_step_cap(
                prep.dataset.l_bar(),
                mu,
                cfg.algo.total_updates as f64,
                tau_mix_mix.max(1) as f64,
                prep.truth.sigma_star_sq,
                dist0,
            )
            .map_err(CliError::from_setup)?;
            Some(c.cap)
        }
        None => None,
    };
    Ok(DiagnoseReport {
        tau_mix_is,
        tau_mix_mix,
        residual_is: detailed_balance_residual(&p_is, &target)?,
        residual_mix: detailed_balance_residual(&m, &target)?,
        tv_mix_to_target: pi_mix.tv_distance(&target)?,
        norm1_is_levy: norm,
        error_gap_estimate: error_gap_estimate(jp.p_j, norm),
        heavy_holding_time_is: hold(&p_is),
        heavy_holding_time_mix: hold(&m),
        theoretical_step_cap,
    })
}

/// Writes `diagnose.txt` and returns the report.
pub fn cmd_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<DiagnoseReport, CliError> {
    let prep = prepare(cfg)?;
    let report = diagnose(cfg, &prep)?;
    let text = preamble(DIAGNOSE_FORMAT, cfg) + &report.to_key_values();
    write_file(&out.join("diagnose.txt"), &text)?;
    Ok(report)
}

/// One row of a sweep: a summary, or the iteration at which the run diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub replica: u64,
    pub sampler: SamplerKind,
    pub outcome: Result<RunSummary, u64>,
}

pub const SWEEP_CSV_HEADER: &str = "value,replica,sampler,gamma,final_mse,final_dist_sq,plateau_mse,plateau_dist_sq,mse_star,comm_count,hop_count,comm_per_update,hops_per_update,heavy_share,max_dwell,diverged_at";

impl SweepRow {
    pub fn to_csv_row(&self) -> String {
        let head = format!("{},{},{}", self.value, self.replica, self.sampler);
        match &self.outcome {
            Ok(s) => format!(
                "{head},{},{},{},{},{},{},{},{},{},{},{},{},",
                fmt17(s.gamma),
                fmt17(s.final_mse),
                fmt17(s.final_dist_sq),
                fmt17(s.plateau_mse),
                fmt17(s.plateau_dist_sq),
                fmt17(s.mse_star),
                s.comm_count,
                s.hop_count,
                fmt17(s.comm_per_update),
                fmt17(s.hops_per_update),
                fmt17(s.heavy_share),
                s.max_dwell
            ),
            Err(iter) => format!("{head}{}{iter}", ",".repeat(13)),
        }
    }
}

/// Worker count from `RWALK_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("RWALK_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

fn sweep_job(cfg: &ExperimentConfig, name: &str, value: f64, replica: u64) -> Result<Vec<SweepRow>, CliError> {
    let mut c = cfg.replica(replica);
    c.set_param(name, value)?;
    let prep = prepare(&c)?;
    let gamma = resolve_gamma(&c, &prep)?;
    c.algo
        .sampler_kind
        .iter()
        .map(|&kind| {
            let outcome = match run_sampler(&c, &prep, kind, gamma) {
                Ok((_, s)) => Ok(s),
                Err(CliError::Core(rwalk::Error::Divergence { iteration })) => Err(iteration),
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                value,
                replica,
                sampler: kind,
                outcome,
            })
        })
        .collect()
}

/// Runs `values x replicas` configurations on a worker pool and writes
/// `sweep.csv`, ordered by (value, replica, sampler) whatever the pool size.
/// Replica `i` shifts every seed by `i`.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    name: &str,
    values: &[f64],
    replicas: u64,
    threads: Option<usize>,
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(config_err("sweep has no values"));
    }
    if replicas == 0 {
        return Err(config_err("replicas must be at least 1"));
    }
    // reject a bad parameter name before spending any work
    cfg.clone().set_param(name, values[0])?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let jobs: Vec<(f64, u64)> = sorted
        .iter()
        .flat_map(|&v| (0..replicas).map(move |r| (v, r)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| config_err(format!("cannot start worker pool: {e}")))?;
    let chunks = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, r)| sweep_job(cfg, name, v, r))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let rows: Vec<SweepRow> = chunks.into_iter().flatten().collect();

    let mut text = preamble(SWEEP_FORMAT, cfg);
    let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(text, "# sweep={name}={} replicas={replicas}", vals.join(","));
    text.push_str(SWEEP_CSV_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_csv_row());
        text.push('\n');
    }
    write_file(&out.join("sweep.csv"), &text)?;
    Ok(rows)
}
