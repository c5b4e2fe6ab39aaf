use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcsPoint {
    pub stage: usize,
    pub pcs: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsCurve {
    pub replications: u64,
    pub points: Vec<PcsPoint>,
}

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // clamp guards the endpoints against rounding past p at 0 and 1
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Fraction of replications selecting `true_best` at each stage.
///
/// `selections[r][t]` is the design replication `r` picks after stage `t`.
pub fn empirical_pcs(selections: &[Vec<usize>], true_best: usize) -> Result<PcsCurve> {
    let first = selections.first().ok_or_else(|| HarnessError::Runtime("no replications to score".into()))?;
    let stages = first.len();
    if stages == 0 {
        return Err(HarnessError::Runtime("replications hold no stages".into()));
    }
    if let Some(r) = selections.iter().position(|s| s.len() != stages) {
        return Err(HarnessError::Runtime(format!(
            "replication {r} has {} stages, expected {stages}",
            selections[r].len()
        )));
    }
    let n = selections.len() as u64;
    let points = (0..stages)
        .map(|t| {
            let hits = selections.iter().filter(|s| s[t] == true_best).count() as u64;
            let (ci_lo, ci_hi) = wilson(hits, n, Z95);
            PcsPoint { stage: t, pcs: hits as f64 / n as f64, ci_lo, ci_hi }
        })
        .collect();
    Ok(PcsCurve { replications: n, points })
}

impl PcsCurve {
    pub fn final_pcs(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.pcs)
    }

    pub fn at(&self, stage: usize) -> Option<&PcsPoint> {
        self.points.get(stage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,pcs,ci_lo,ci_hi\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", p.stage, p.pcs, p.ci_lo, p.ci_hi));
        }
        out
    }
}
