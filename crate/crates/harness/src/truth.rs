use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sba_core::models::{OracleEstimate, OracleMoments, MIN_ORACLE_REPLICATIONS, ORACLE_CHUNK};
use sba_core::InventoryModel64;

use crate::config::{ExperimentConfig, ModelSpec};
use crate::error::{HarnessError, Result};

/// Where the true best design came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub best: usize,
    pub means: Vec<f64>,
    /// `analytic` or the path of the Monte Carlo cache file.
    pub source: String,
}

/// Cached Monte Carlo ground truth for one inventory instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCache {
    pub key: String,
    pub model: ModelSpec,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub estimate: OracleEstimate,
}

/// Lowest index among the maximizers.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn inventory_theta(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.theta().iter().map(|t| t[0]).collect()
}

/// Identifies the instance, not the replication count, so a refresh with a
/// different count replaces the file.
pub fn cache_key(cfg: &ExperimentConfig) -> Result<String> {
    let doc = serde_json::json!({
        "model": cfg.model,
        "theta": inventory_theta(cfg),
        "seed": cfg.oracle.seed,
    });
    let bytes = serde_json::to_vec(&doc).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(12).map(|b| format!("{b:02x}")).collect())
}

pub fn cache_path(cfg: &ExperimentConfig) -> Result<PathBuf> {
    Ok(cfg.oracle.cache_dir.join(format!("inventory-{}.json", cache_key(cfg)?)))
}

fn inventory_model(cfg: &ExperimentConfig) -> Result<InventoryModel64> {
    match &cfg.model {
        ModelSpec::Inventory { levels, periods, holding_cost, backlog_cost, max_production } => Ok(
            InventoryModel64::new(
                levels.clone(),
                *periods,
                cfg.stream_count(),
                *holding_cost,
                *backlog_cost,
                *max_production,
            )?,
        ),
        ModelSpec::Quadratic { .. } => Err(HarnessError::Config("oracle cache applies to inventory models".into())),
    }
}

/// Runs the common-random-numbers oracle in parallel chunks and writes the
/// cache. Chunks are merged in order, so the result does not depend on the
/// thread count.
pub fn build_oracle(cfg: &ExperimentConfig) -> Result<(PathBuf, OracleCache)> {
    let model = inventory_model(cfg)?;
    let theta = inventory_theta(cfg);
    let total = cfg.oracle.replications;
    if total < MIN_ORACLE_REPLICATIONS {
        return Err(HarnessError::Config(format!(
            "oracle.replications must be at least {MIN_ORACLE_REPLICATIONS}, got {total}"
        )));
    }
    let chunks: Vec<(u64, u64)> = (0..total.div_ceil(ORACLE_CHUNK))
        .map(|c| (c, ORACLE_CHUNK.min(total - c * ORACLE_CHUNK)))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(c, size)| model.oracle_chunk(&theta, cfg.oracle.seed, c, size))
        .collect::<sba_core::Result<Vec<_>>>()?;
    let mut acc = OracleMoments::new(model.levels.len());
    for p in &parts {
        acc.merge(p);
    }
    let cache = OracleCache {
        key: cache_key(cfg)?,
        model: cfg.model.clone(),
        theta,
        seed: cfg.oracle.seed,
        estimate: acc.estimate(),
    };
    let path = cache_path(cfg)?;
    let dir = &cfg.oracle.cache_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.clone(), e))?;
    let text = serde_json::to_string_pretty(&cache).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| HarnessError::Io(path.clone(), e))?;
    Ok((path, cache))
}

pub fn load_oracle(path: &Path) -> Result<OracleCache> {
    if !path.exists() {
        return Err(HarnessError::OracleMissing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

/// The true best design: closed form for the quadratic model, the cached
/// oracle for the inventory model.
pub fn ground_truth(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    match &cfg.model {
        ModelSpec::Quadratic { .. } => {
            let theta = cfg.theta();
            let model = cfg.model()?;
            let means = (0..cfg.design_count())
                .map(|i| match model.true_moments(i, &theta) {
                    Some(m) => Ok(m?.mean),
                    None => Err(HarnessError::Runtime("quadratic model lost its closed form".into())),
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(GroundTruth { best: argmax(&means), means, source: "analytic".into() })
        }
        ModelSpec::Inventory { .. } => {
            let path = cache_path(cfg)?;
            let cache = load_oracle(&path)?;
            let means = cache.estimate.means.clone();
            Ok(GroundTruth { best: argmax(&means), means, source: path.display().to_string() })
        }
    }
}
