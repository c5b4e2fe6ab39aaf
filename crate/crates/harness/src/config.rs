use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sba_core::{
    FamilyKind, InventoryModel64, ParametricFamily, Partition, Problem, Procedure, QuadraticModel64, RateBalance,
    RunSettings64, SimulationModel, StreamLayout64,
};

use crate::error::{HarnessError, Result};

pub type DynModel = Box<dyn SimulationModel<f64>>;
pub type DynProblem = Problem<f64, DynModel>;

/// One experiment: model, stream layout, procedure and replication plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub procedure: Procedure,
    /// Number of stages.
    #[serde(rename = "T")]
    pub stages: usize,
    pub n0: u64,
    pub m0: u64,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub oracle_mode: bool,
    #[serde(default)]
    pub rate_balance: RateBalance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelSpec,
    pub streams: StreamSpec,
    pub partitions: Vec<PartitionSpec>,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `designs` points centered at the true total mean, or explicit `points`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        designs: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<f64>>,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    Inventory {
        levels: Vec<f64>,
        periods: usize,
        holding_cost: f64,
        backlog_cost: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_production: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// A stream parameter written either as a number or as a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Param {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Param::Scalar(x) => vec![*x],
            Param::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub families: Vec<FamilyKind>,
    /// True parameters, one entry per stream.
    pub theta: Vec<Param>,
    /// Cost per input draw.
    pub costs: Vec<f64>,
}

/// Either an actively collected group (`budget` per stage) or a single given
/// stream arriving `batch` draws per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub streams: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Simulation budget per stage.
    pub budget: f64,
    /// Cost per replication of each design; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

/// Ground-truth settings for models without closed-form means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_oracle_reps")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
}

fn default_oracle_reps() -> u64 {
    1_000_000
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("oracle-cache")
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { replications: default_oracle_reps(), seed: 0, cache_dir: default_cache_dir() }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| HarnessError::Config(e.to_string()))
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn positive(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        Some(i) => Err(bad(format!("{name}[{i}] must be positive and finite, got {}", xs[i]))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn stream_count(&self) -> usize {
        self.streams.families.len()
    }

    pub fn design_count(&self) -> usize {
        match &self.model {
            ModelSpec::Quadratic { points: Some(p), .. } => p.len(),
            ModelSpec::Quadratic { designs, .. } => designs.unwrap_or(0),
            ModelSpec::Inventory { levels, .. } => levels.len(),
        }
    }

    pub fn theta(&self) -> Vec<Vec<f64>> {
        self.streams.theta.iter().map(Param::to_vec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(bad("reps must be at least 1"));
        }
        let s = self.stream_count();
        if s == 0 {
            return Err(bad("streams.families is empty"));
        }
        if self.streams.theta.len() != s || self.streams.costs.len() != s {
            return Err(bad(format!(
                "streams: {s} families but {} theta entries and {} costs",
                self.streams.theta.len(),
                self.streams.costs.len()
            )));
        }
        positive("streams.costs", &self.streams.costs)?;
        match &self.model {
            ModelSpec::Quadratic { designs, points, .. } => match (designs, points) {
                (Some(_), Some(_)) => return Err(bad("model: give either designs or points, not both")),
                (None, None) => return Err(bad("model: quadratic needs designs or points")),
                _ => {}
            },
            ModelSpec::Inventory { holding_cost, backlog_cost, .. } => {
                positive("model.holding_cost", &[*holding_cost])?;
                positive("model.backlog_cost", &[*backlog_cost])?;
            }
        }
        let k = self.design_count();
        if k == 0 {
            return Err(bad("model: design grid is empty"));
        }
        positive("simulation.budget", &[self.simulation.budget])?;
        if let Some(c) = &self.simulation.costs {
            if c.len() != k {
                return Err(bad(format!("simulation.costs has {} entries for {k} designs", c.len())));
            }
            positive("simulation.costs", c)?;
        }
        for (j, p) in self.partitions.iter().enumerate() {
            match (p.budget, p.batch) {
                (Some(b), None) => positive(&format!("partitions[{j}].budget"), &[b])?,
                (None, Some(0)) => return Err(bad(format!("partitions[{j}].batch must be positive"))),
                (None, Some(_)) if p.streams.len() != 1 => {
                    return Err(bad(format!("partitions[{j}]: a batch partition holds exactly one stream")))
                }
                (None, Some(_)) => {}
                _ => return Err(bad(format!("partitions[{j}]: give exactly one of budget or batch"))),
            }
        }
        if self.oracle.replications == 0 {
            return Err(bad("oracle.replications must be positive"));
        }
        self.problem().map(|_| ()).map_err(|e| bad(e.to_string()))?;
        self.settings(0).validate().map_err(|e| bad(e.to_string()))
    }

    pub fn layout(&self) -> Result<StreamLayout64> {
        let partitions = self
            .partitions
            .iter()
            .map(|p| match (p.budget, p.batch) {
                (Some(b), _) => Partition::new(p.streams.clone(), b),
                (None, Some(n)) => {
                    let s = p.streams[0];
                    let cost = self.streams.costs.get(s).copied().unwrap_or(1.0);
                    Partition::given_stream(s, n as f64 * cost)
                }
                (None, None) => Partition::new(p.streams.clone(), 0.0),
            })
            .collect();
        let k = self.design_count();
        Ok(StreamLayout64 {
            families: self.streams.families.iter().map(|&f| ParametricFamily::new(f)).collect(),
            costs: self.streams.costs.clone(),
            partitions,
            sim_costs: self.simulation.costs.clone().unwrap_or_else(|| vec![1.0; k]),
            sim_budget: self.simulation.budget,
        })
    }

    pub fn model(&self) -> Result<DynModel> {
        let s = self.stream_count();
        Ok(match &self.model {
            ModelSpec::Quadratic { designs, points, noise_sd } => {
                let m = match (designs, points) {
                    (_, Some(p)) => QuadraticModel64::new(p.clone(), s, *noise_sd)?,
                    (Some(k), None) => {
                        let total: f64 = self.theta().iter().map(|t| t.first().copied().unwrap_or(0.0)).sum();
                        QuadraticModel64::centered(total, *k, s, *noise_sd)?
                    }
                    (None, None) => return Err(bad("model: quadratic needs designs or points")),
                };
                Box::new(m)
            }
            ModelSpec::Inventory { levels, periods, holding_cost, backlog_cost, max_production } => Box::new(
                InventoryModel64::new(levels.clone(), *periods, s, *holding_cost, *backlog_cost, *max_production)?,
            ),
        })
    }

    pub fn problem(&self) -> Result<DynProblem> {
        Ok(Problem::new(self.model()?, self.layout()?, self.theta())?)
    }

    pub fn settings(&self, replication: u64) -> RunSettings64 {
        RunSettings64 {
            stages: self.stages,
            n0: self.n0,
            m0: self.m0,
            seed: self.seed,
            replication,
            oracle_mode: self.oracle_mode,
            rate_balance: self.rate_balance,
            ..Default::default()
        }
    }
}
