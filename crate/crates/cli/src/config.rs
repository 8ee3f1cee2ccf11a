//! Experiment configuration files (JSON).

use std::fmt;

use rwalk::graph::Graph;
use rwalk::model::{generate_heterogeneous, DataSpec, Dataset};
use rwalk::sgd::SamplerKind;
use rwalk::walker::JumpParams;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{config_err, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    pub data: DataSection,
    pub algo: AlgoSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `ring`, `path`, `complete`, `star`, `grid`, `er` or `ws`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub d: usize,
    /// Feature variance of the light class (the only class when homogeneous).
    pub sigma_l_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_h_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_high: Option<f64>,
    #[serde(default)]
    pub min_heavy: usize,
    #[serde(default = "one")]
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default)]
    pub homogeneous: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSection {
    #[serde(deserialize_with = "one_or_many", serialize_with = "as_list")]
    pub sampler_kind: Vec<SamplerKind>,
    pub gamma: Gamma,
    #[serde(rename = "T")]
    pub total_updates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_switch: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_every: Option<u64>,
}

fn default_csv() -> String {
    "trace.csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            csv: default_csv(),
            log_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Strong-convexity constant for the step-size cap; omitted means no cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
}

fn default_eps() -> f64 {
    rwalk::transition::DEFAULT_MIXING_EPS
}

fn default_t_max() -> usize {
    rwalk::transition::DEFAULT_MAX_ITER
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            mu: None,
            eps: default_eps(),
            t_max: default_t_max(),
        }
    }
}

/// A fixed step size or the grid search `"auto-grid"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Value(f64),
    AutoGrid,
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Value(g) => write!(f, "{g}"),
            Gamma::AutoGrid => f.write_str("auto-grid"),
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Value(g) => s.serialize_f64(*g),
            Gamma::AutoGrid => s.serialize_str("auto-grid"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(Gamma::Value(g)),
            Raw::Str(s) if s == "auto-grid" => Ok(Gamma::AutoGrid),
            Raw::Str(s) => Err(de::Error::custom(format!(
                "gamma must be a number or \"auto-grid\", got \"{s}\""
            ))),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SamplerKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(SamplerKind),
        Many(Vec<SamplerKind>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::One(k) => vec![k],
        Raw::Many(v) => v,
    })
}

fn as_list<S: Serializer>(v: &[SamplerKind], s: S) -> Result<S::Ok, S::Error> {
    v.serialize(s)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One-line JSON echo embedded in every output file.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.graph_size()?;
        let g = &self.graph;
        if matches!(g.kind.as_str(), "er" | "ws") && g.seed.is_none() {
            return Err(config_err(format!("graph type '{}' needs a seed", g.kind)));
        }
        let d = &self.data;
        if !d.homogeneous && (d.sigma_h_sq.is_none() || d.p_high.is_none()) {
            return Err(config_err("heterogeneous data needs sigma_h_sq and p_high"));
        }
        let a = &self.algo;
        if a.sampler_kind.is_empty() {
            return Err(config_err("sampler_kind lists no sampler"));
        }
        if let Gamma::Value(g) = a.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(config_err(format!("gamma must be a nonnegative number, got {g}")));
            }
        }
        if a.total_updates == 0 {
            return Err(config_err("T must be at least 1"));
        }
        if a.sampler_kind.contains(&SamplerKind::Mhlj) {
            self.jump()?;
        }
        if self.output.log_every == Some(0) {
            return Err(config_err("log_every must be at least 1"));
        }
        Ok(())
    }

    fn graph_size(&self) -> Result<usize, CliError> {
        let g = &self.graph;
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| config_err(format!("graph type '{}' needs {name}", g.kind)))
        };
        match g.kind.as_str() {
            "grid" => Ok(need(g.rows, "rows")? * need(g.cols, "cols")?),
            "ring" | "path" | "complete" | "star" | "er" | "ws" => need(g.n, "n"),
            other => Err(config_err(format!("unknown graph type '{other}'"))),
        }
    }

    /// Jump parameters; all three of `p_j`, `p_d`, `r` must be present.
    pub fn jump(&self) -> Result<JumpParams, CliError> {
        let a = &self.algo;
        let (Some(p_j), Some(p_d), Some(r)) = (a.p_j, a.p_d, a.r) else {
            return Err(config_err("mhlj needs p_j, p_d and r"));
        };
        let mut jp = JumpParams::new(p_j, p_d, r).map_err(|e| config_err(e.to_string()))?;
        if let Some(s) = a.t_switch {
            if s > a.total_updates {
                return Err(config_err(format!("t_switch = {s} exceeds T = {}", a.total_updates)));
            }
            jp = jp.with_switch(s);
        }
        Ok(jp)
    }

    pub fn build_graph(&self) -> Result<Graph, CliError> {
        let g = &self.graph;
        let n = self.graph_size()?;
        let need_f = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| config_err(format!("graph type '{}' needs {name}", g.kind)))
        };
        let graph = match g.kind.as_str() {
            "ring" => Graph::ring(n),
            "path" => Graph::path(n),
            "complete" => Graph::complete(n),
            "star" => Graph::star(n.saturating_sub(1)),
            "grid" => Graph::grid2d(g.rows.unwrap_or(0), g.cols.unwrap_or(0)),
            "er" => Graph::erdos_renyi(n, need_f(g.p, "p")?, g.seed.unwrap_or(0)),
            "ws" => {
                let k = g.k.ok_or_else(|| config_err("graph type 'ws' needs k"))?;
                Graph::watts_strogatz(n, k, need_f(g.beta, "beta")?, g.seed.unwrap_or(0))
            }
            other => return Err(config_err(format!("unknown graph type '{other}'"))),
        };
        graph.map_err(CliError::from_setup)
    }

    pub fn data_spec(&self, n: usize) -> DataSpec {
        let d = &self.data;
        let mut spec = if d.homogeneous {
            DataSpec::homogeneous(n, d.d, d.sigma_l_sq, d.seed)
        } else {
            DataSpec::heterogeneous(
                n,
                d.d,
                d.sigma_l_sq,
                d.sigma_h_sq.unwrap_or(d.sigma_l_sq),
                d.p_high.unwrap_or(0.0),
                d.seed,
                d.min_heavy,
            )
        };
        spec.noise_sd = d.noise_sd;
        spec
    }

    pub fn build_dataset(&self, n: usize) -> Result<Dataset, CliError> {
        generate_heterogeneous(&self.data_spec(n)).map_err(CliError::from_setup)
    }

    pub fn diagnostics_or_default(&self) -> DiagnosticsSection {
        self.diagnostics.clone().unwrap_or_default()
    }

    /// Copy with every seed shifted by `replica`.
    pub fn replica(&self, replica: u64) -> Self {
        let mut c = self.clone();
        c.graph.seed = c.graph.seed.map(|s| s.wrapping_add(replica));
        c.data.seed = c.data.seed.wrapping_add(replica);
        c.algo.seed = c.algo.seed.wrapping_add(replica);
        c
    }

    /// Sets one numeric field by name, as used by sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), CliError> {
        let as_count = |v: f64| -> Result<u64, CliError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(config_err(format!("{name} needs a nonnegative integer, got {v}")))
            }
        };
        match name {
            "gamma" => self.algo.gamma = Gamma::Value(value),
            "T" => self.algo.total_updates = as_count(value)?,
            "p_j" => self.algo.p_j = Some(value),
            "p_d" => self.algo.p_d = Some(value),
            "r" => self.algo.r = Some(as_count(value)? as usize),
            "t_switch" => self.algo.t_switch = Some(as_count(value)?),
            "log_every" => self.output.log_every = Some(as_count(value)?),
            "n" => self.graph.n = Some(as_count(value)? as usize),
            "p" => self.graph.p = Some(value),
            "beta" => self.graph.beta = Some(value),
            "d" => self.data.d = as_count(value)? as usize,
            "sigma_l_sq" => self.data.sigma_l_sq = value,
            "sigma_h_sq" => self.data.sigma_h_sq = Some(value),
            "p_high" => self.data.p_high = Some(value),
            other => return Err(config_err(format!("parameter '{other}' cannot be swept"))),
        }
        self.validate()
    }
}

/// Parses `name=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("sweep must look like name=v1,v2,..., got '{spec}'")))?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| config_err(format!("sweep value '{s}' is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(config_err(format!("sweep over '{name}' has no values")));
    }
    Ok((name.trim().to_string(), values))
}
