use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sba_core::{AllocationState, JbaPlan};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::ExperimentResult;

pub const TIE_BREAK_NOTE: &str =
    "ties in the selected design and in all allocation argmin/argmax choices go to the lowest index";

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    git_describe: String,
    seed: u64,
    replications: u64,
    wall_time_s: f64,
    true_best: usize,
    truth_source: &'a str,
    final_pcs: f64,
    tie_break: &'static str,
}

#[derive(Serialize)]
struct HistoryLine<'a> {
    replication: u64,
    selections: Vec<usize>,
    final_state: &'a AllocationState,
    final_digest: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    jba: Option<&'a JbaPlan<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_rates: Option<&'a Vec<f64>>,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.to_path_buf(), e)
}

fn json_line<T: Serialize>(out: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    out.write_all(b"\n").map_err(io(path))
}

/// Writes `pcs.csv`, `manifest.json`, `histories.jsonl` and, when snapshots
/// were kept, `stage_state.jsonl` into `dir`. Returns the CSV path.
pub fn write_results(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join("pcs.csv");
    std::fs::write(&csv, result.curve.to_csv()).map_err(io(&csv))?;

    let manifest = Manifest {
        config: cfg,
        git_describe: git_describe(),
        seed: cfg.seed,
        replications: cfg.reps,
        wall_time_s: result.elapsed.as_secs_f64(),
        true_best: result.truth.best,
        truth_source: &result.truth.source,
        final_pcs: result.curve.final_pcs(),
        tie_break: TIE_BREAK_NOTE,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    std::fs::write(&path, text).map_err(io(&path))?;

    let path = dir.join("histories.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io(&path))?);
    for (r, h) in result.histories.iter().enumerate() {
        let line = HistoryLine {
            replication: r as u64,
            selections: h.selections(),
            final_state: &h.final_state,
            final_digest: h.records.last().map_or(0, |rec| rec.digest),
            jba: h.jba.as_ref(),
            oracle_rates: h.oracle_rates.as_ref(),
        };
        json_line(&mut out, &line, &path)?;
    }
    out.flush().map_err(io(&path))?;

    if result.histories.iter().any(|h| !h.snapshots.is_empty()) {
        let path = dir.join("stage_state.jsonl");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io(&path))?);
        for (r, h) in result.histories.iter().enumerate() {
            for snap in &h.snapshots {
                json_line(&mut out, &serde_json::json!({ "replication": r, "snapshot": snap }), &path)?;
            }
        }
        out.flush().map_err(io(&path))?;
    }
    Ok(csv)
}
