//! OSPA miss distance and per-run evaluation tables.

use crate::assignment::{solve_optimal, CostMatrix};
use crate::gaussian::Vector;
use crate::glmb::{Label, MultiTargetEstimate};
use crate::simulator::TruthTrajectory;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid OSPA parameters: {0}")]
pub struct OspaParamError(String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OspaParams {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self {
            cutoff: 200.0,
            order: 2.0,
        }
    }
}

impl OspaParams {
    pub fn new(cutoff: f64, order: f64) -> Result<Self, OspaParamError> {
        let p = Self { cutoff, order };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OspaParamError> {
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(OspaParamError(format!("cutoff {} must be positive", self.cutoff)));
        }
        if !(self.order >= 1.0) || !self.order.is_finite() {
            return Err(OspaParamError(format!("order {} must be at least 1", self.order)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaResult {
    pub total: f64,
    pub localization: f64,
    pub cardinality: f64,
}

/// OSPA distance between two point sets. The components satisfy
/// `total^p = localization^p + cardinality^p`.
pub fn ospa(x: &[Vector], y: &[Vector], params: &OspaParams) -> OspaResult {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return OspaResult {
            total: 0.0,
            localization: 0.0,
            cardinality: 0.0,
        };
    }
    let (c, p) = (params.cutoff, params.order);
    let costs = CostMatrix::from_fn(m, n, |i, j| (&small[i] - &large[j]).norm().min(c).powf(p));
    let assigned = solve_optimal(&costs).expect("finite costs always admit an assignment");
    let loc = assigned.cost.max(0.0) / n as f64;
    let card = c.powf(p) * (n - m) as f64 / n as f64;
    OspaResult {
        total: (loc + card).powf(1.0 / p),
        localization: loc.powf(1.0 / p),
        cardinality: card.powf(1.0 / p),
    }
}

/// `(x, y)` of a `[x, vx, y, vy, ..]` state.
pub fn position(state: &Vector) -> Vector {
    Vector::from_vec(vec![state[0], state[2]])
}

/// One line of the per-step OSPA table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaRow {
    pub step: u32,
    pub ospa_total: f64,
    pub ospa_loc: f64,
    pub ospa_card: f64,
    pub card_truth: usize,
    pub card_est: usize,
}

/// Position-only OSPA between the truth and each step's estimate.
pub fn ospa_trace(estimates: &[MultiTargetEstimate], truths: &[TruthTrajectory], params: &OspaParams) -> Vec<OspaRow> {
    estimates
        .iter()
        .map(|est| {
            let truth: Vec<Vector> = truths.iter().filter_map(|t| t.state_at(est.time)).map(position).collect();
            let estimated: Vec<Vector> = est.targets.iter().map(|t| position(&t.mean)).collect();
            let d = ospa(&truth, &estimated, params);
            OspaRow {
                step: est.time,
                ospa_total: d.total,
                ospa_loc: d.localization,
                ospa_card: d.cardinality,
                card_truth: truth.len(),
                card_est: estimated.len(),
            }
        })
        .collect()
}

/// Estimated label whose positions are, averaged over the steps both
/// exist, closest to `truth`. Ties go to the smaller label.
pub fn match_track(estimates: &[MultiTargetEstimate], truth: &TruthTrajectory) -> Option<Label> {
    let mut sums: Vec<(Label, f64, usize)> = Vec::new();
    for est in estimates {
        let Some(x) = truth.state_at(est.time) else {
            continue;
        };
        for t in &est.targets {
            let d = (position(&t.mean) - position(x)).norm();
            match sums.iter_mut().find(|(l, _, _)| *l == t.label) {
                Some(entry) => {
                    entry.1 += d;
                    entry.2 += 1;
                }
                None => sums.push((t.label, d, 1)),
            }
        }
    }
    sums.sort_by_key(|s| s.0);
    sums.iter()
        .map(|(l, s, n)| (*l, s / *n as f64))
        .fold(None, |best: Option<(Label, f64)>, (l, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((l, d)),
        })
        .map(|(l, _)| l)
}

/// Per-step model probabilities of the track matched to `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrace {
    pub label: Option<Label>,
    /// `(step, probabilities)` for the steps the matched track is reported.
    pub rows: Vec<(u32, Vec<f64>)>,
}

pub fn mode_probability_trace(estimates: &[MultiTargetEstimate], truth: &TruthTrajectory) -> ModeTrace {
    let label = match_track(estimates, truth);
    let rows = label
        .map(|label| {
            estimates
                .iter()
                .filter_map(|est| {
                    let t = est.targets.iter().find(|t| t.label == label)?;
                    Some((est.time, t.mode_probs.clone()))
                })
                .collect()
        })
        .unwrap_or_default();
    ModeTrace { label, rows }
}
