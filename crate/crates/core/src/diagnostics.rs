//! Entrapment measurements on traces.
//!
//! A node is "heavy" when its smoothness constant exceeds `heavy_factor`
//! times the mean (default 10). Occupancy and dwell statistics are exact
//! only for traces logged at every update; decimated traces are accepted and
//! flagged.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::sgd::Trace;
use crate::transition::{fmt17, tv_distance, Distribution, RowStochasticMatrix};

pub const DEFAULT_HEAVY_FACTOR: f64 = 10.0;

/// Nodes with `L_v > heavy_factor * L_bar`.
pub fn heavy_nodes(dataset: &Dataset, heavy_factor: f64) -> Vec<bool> {
    let threshold = heavy_factor * dataset.l_bar();
    dataset
        .nodes()
        .iter()
        .map(|nd| nd.lipschitz() > threshold)
        .collect()
}

/// Where a trace spent its updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyReport {
    pub visit_counts: Vec<u64>,
    pub empirical: Distribution,
    /// TV distance from the empirical occupancy to `pi_IS`.
    pub tv_to_target: f64,
    /// Longest run of consecutive records at one node.
    pub max_dwell: u64,
    /// Fraction of records at heavy nodes.
    pub heavy_share: f64,
    /// Counts come from a decimated trace.
    pub decimated: bool,
}

impl OccupancyReport {
    pub const CSV_HEADER: &'static str = "records,tv_to_target,max_dwell,heavy_share,decimated";

    pub fn total(&self) -> u64 {
        self.visit_counts.iter().sum()
    }

    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records={}", self.total());
        let _ = writeln!(s, "tv_to_target={}", fmt17(self.tv_to_target));
        let _ = writeln!(s, "max_dwell={}", self.max_dwell);
        let _ = writeln!(s, "heavy_share={}", fmt17(self.heavy_share));
        let _ = writeln!(s, "decimated={}", self.decimated);
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.total(),
            fmt17(self.tv_to_target),
            self.max_dwell,
            fmt17(self.heavy_share),
            self.decimated
        )
    }
}

pub fn occupancy(trace: &Trace, dataset: &Dataset) -> Result<OccupancyReport> {
    occupancy_with(trace, dataset, DEFAULT_HEAVY_FACTOR)
}

pub fn occupancy_with(trace: &Trace, dataset: &Dataset, heavy_factor: f64) -> Result<OccupancyReport> {
    let nodes: Vec<usize> = trace.records.iter().map(|r| r.node).collect();
    let mut report = occupancy_of_nodes(&nodes, dataset, heavy_factor)?;
    report.decimated = !trace.is_complete();
    Ok(report)
}

/// Occupancy of an explicit node sequence, e.g. from
/// [`Simulation::visits`](crate::sgd::Simulation::visits).
pub fn occupancy_of_nodes(nodes: &[usize], dataset: &Dataset, heavy_factor: f64) -> Result<OccupancyReport> {
    if nodes.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = dataset.n();
    let mut visit_counts = vec![0u64; n];
    for &v in nodes {
        let slot = visit_counts.get_mut(v).ok_or(Error::DimensionMismatch {
            expected: n,
            got: v + 1,
        })?;
        *slot += 1;
    }
    let total = nodes.len() as f64;
    let empirical =
        Distribution::from_unnormalized(&visit_counts.iter().map(|&c| c as f64).collect::<Vec<_>>())?;
    let target = Distribution::importance(&dataset.lipschitz())?;
    let heavy = heavy_nodes(dataset, heavy_factor);
    let heavy_visits: u64 = visit_counts
        .iter()
        .zip(&heavy)
        .filter(|(_, h)| **h)
        .map(|(c, _)| c)
        .sum();
    let max_dwell = runs(nodes).map(|(_, len)| len).max().unwrap_or(0);
    Ok(OccupancyReport {
        tv_to_target: tv_distance(&empirical, &target)?,
        visit_counts,
        empirical,
        max_dwell,
        heavy_share: heavy_visits as f64 / total,
        decimated: false,
    })
}

/// Maximal runs of consecutive records at the same node, as `(node, length)`.
fn runs(nodes: &[usize]) -> impl Iterator<Item = (usize, u64)> + '_ {
    let mut it = nodes.iter().copied().peekable();
    std::iter::from_fn(move || {
        let node = it.next()?;
        let mut len = 1;
        while it.peek() == Some(&node) {
            it.next();
            len += 1;
        }
        Some((node, len))
    })
}

/// Run-length histograms split by node class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DwellHistogram {
    /// Run length -> number of runs, heavy nodes.
    pub heavy: BTreeMap<u64, u64>,
    pub light: BTreeMap<u64, u64>,
}

impl DwellHistogram {
    fn mean(h: &BTreeMap<u64, u64>) -> Option<f64> {
        let runs: u64 = h.values().sum();
        (runs > 0).then(|| h.iter().map(|(l, c)| l * c).sum::<u64>() as f64 / runs as f64)
    }

    pub fn mean_heavy(&self) -> Option<f64> {
        Self::mean(&self.heavy)
    }

    pub fn mean_light(&self) -> Option<f64> {
        Self::mean(&self.light)
    }

    pub fn heavy_runs(&self) -> u64 {
        self.heavy.values().sum()
    }
}

pub fn dwell_distribution(trace: &Trace, dataset: &Dataset) -> Result<DwellHistogram> {
    dwell_distribution_with(trace, dataset, DEFAULT_HEAVY_FACTOR)
}

pub fn dwell_distribution_with(trace: &Trace, dataset: &Dataset, heavy_factor: f64) -> Result<DwellHistogram> {
    let nodes: Vec<usize> = trace.records.iter().map(|r| r.node).collect();
    dwell_of_nodes(&nodes, dataset, heavy_factor)
}

pub fn dwell_of_nodes(nodes: &[usize], dataset: &Dataset, heavy_factor: f64) -> Result<DwellHistogram> {
    if nodes.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let heavy = heavy_nodes(dataset, heavy_factor);
    let mut hist = DwellHistogram::default();
    for (node, len) in runs(nodes) {
        let is_heavy = *heavy.get(node).ok_or(Error::DimensionMismatch {
            expected: dataset.n(),
            got: node + 1,
        })?;
        let bucket = if is_heavy { &mut hist.heavy } else { &mut hist.light };
        *bucket.entry(len).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Mean geometric holding time `1 / (1 - P(v, v))` of a kernel at `v`.
pub fn expected_holding_time(p: &RowStochasticMatrix, v: usize) -> f64 {
    1.0 / (1.0 - p.get(v, v))
}
