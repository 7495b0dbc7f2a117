use super::{GlmbDensity, Label};
use crate::gaussian::{moment_match, Matrix, Vector};
use serde::Serialize;

/// `ρ(n)`: total weight of hypotheses with `n` labels, normalized.
pub fn cardinality_distribution(density: &GlmbDensity) -> Vec<f64> {
    let total = density.log_total_weight();
    let max_n = density.hypotheses.iter().map(|h| h.cardinality()).max().unwrap_or(0);
    let mut rho = vec![0.0; max_n + 1];
    if !total.is_finite() {
        rho[0] = 1.0;
        return rho;
    }
    for h in &density.hypotheses {
        rho[h.cardinality()] += (h.log_weight - total).exp();
    }
    rho
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetEstimate {
    pub label: Label,
    /// Most probable motion model.
    pub mode: usize,
    pub mode_probs: Vec<f64>,
    /// Moments of the density summed over all models.
    pub mean: Vector,
    pub cov: Matrix,
    /// Mean conditioned on `mode`.
    pub mode_mean: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiTargetEstimate {
    pub time: u32,
    pub cardinality: usize,
    pub targets: Vec<TargetEstimate>,
    /// History key of the hypothesis the estimate was read from.
    pub hypothesis_history: Option<u64>,
}

/// MAP cardinality `n*` (smallest on ties), then the heaviest hypothesis
/// with `n*` labels (canonical order on ties), one estimate per track.
pub fn extract(density: &GlmbDensity) -> MultiTargetEstimate {
    let rho = cardinality_distribution(density);
    let n_star = rho
        .iter()
        .enumerate()
        .fold(0, |best, (n, p)| if *p > rho[best] { n } else { best });
    let mut candidates: Vec<_> = density.hypotheses.iter().filter(|h| h.cardinality() == n_star).collect();
    candidates.sort_by(|a, b| {
        b.log_weight
            .total_cmp(&a.log_weight)
            .then_with(|| a.labels().cmp(b.labels()))
            .then_with(|| a.history.cmp(&b.history))
    });
    let Some(best) = candidates.first() else {
        return MultiTargetEstimate {
            time: density.time,
            cardinality: 0,
            targets: Vec::new(),
            hypothesis_history: None,
        };
    };
    let targets = best
        .tracks
        .iter()
        .filter_map(|t| {
            let (mean, cov) = t.density.moments()?;
            let mode = t.density.mode_estimate();
            let mode_mean = moment_match(&t.density.per_mode[mode].components).map_or_else(|| mean.clone(), |(_, m, _)| m);
            Some(TargetEstimate {
                label: t.label,
                mode,
                mode_probs: t.density.mode_probabilities(),
                mean,
                cov,
                mode_mean,
            })
        })
        .collect();
    MultiTargetEstimate {
        time: density.time,
        cardinality: n_star,
        targets,
        hypothesis_history: Some(best.history),
    }
}
