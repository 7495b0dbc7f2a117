//! The GLMB multi-target density for jump Markov targets and its
//! prediction, update, truncation and estimate extraction.
//!
//! A [`GlmbDensity`] is a weighted list of hypotheses. Each hypothesis pairs
//! a label set with one density per label and an association-history key.
//! Track densities are mode-indexed Gaussian mixtures ([`ModeMixture`]):
//! one mixture over the kinematic state per motion model, with total mass
//! one across all modes. Tracks are shared between hypotheses through
//! `Arc`, because many hypotheses carry the same track with the same
//! measurement history.

mod extract;
mod predict;
mod update;

pub use extract::{cardinality_distribution, extract, MultiTargetEstimate, TargetEstimate};
pub use predict::{predict, predict_bounded};
pub use update::{update, UpdateDiagnostics};

use crate::gaussian::{self, log_sum_exp, reduce_components, GaussianError, Matrix, Mixture, MixtureReduction, Vector};
use crate::jms::ModelError;
use crate::assignment::AssignmentError;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GlmbError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] GaussianError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

pub type Result<T> = std::result::Result<T, GlmbError>;

/// Track identity: birth time and index among the targets born then.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub birth_time: u32,
    pub birth_index: u32,
}

impl Label {
    pub fn new(birth_time: u32, birth_index: u32) -> Self {
        Self {
            birth_time,
            birth_index,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.birth_time, self.birth_index)
    }
}

/// Joint density over kinematic state and motion model: one Gaussian
/// mixture per model, indexed by model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMixture {
    pub per_mode: Vec<Mixture>,
}

impl ModeMixture {
    pub fn empty(modes: usize) -> Self {
        Self {
            per_mode: vec![Mixture::default(); modes],
        }
    }

    pub fn mode_count(&self) -> usize {
        self.per_mode.len()
    }

    pub fn component_count(&self) -> usize {
        self.per_mode.iter().map(Mixture::len).sum()
    }

    /// Log of the integral over the state, per model.
    pub fn log_mode_masses(&self) -> Vec<f64> {
        self.per_mode.iter().map(Mixture::log_mass).collect()
    }

    pub fn log_mass(&self) -> f64 {
        log_sum_exp(self.log_mode_masses())
    }

    /// Marginal probability of each model, normalized to sum to one.
    pub fn mode_probabilities(&self) -> Vec<f64> {
        let masses = self.log_mode_masses();
        let total = log_sum_exp(masses.iter().copied());
        masses.iter().map(|m| (m - total).exp()).collect()
    }

    /// Model with the largest marginal mass; the lowest index wins ties.
    pub fn mode_estimate(&self) -> usize {
        let masses = self.log_mode_masses();
        masses
            .iter()
            .enumerate()
            .fold(0, |best, (i, m)| if *m > masses[best] { i } else { best })
    }

    /// Rescales to unit total mass; returns the log of the previous mass.
    pub fn normalize(&mut self) -> f64 {
        let total = self.log_mass();
        if total.is_finite() {
            for mix in &mut self.per_mode {
                mix.scale_log(-total);
            }
        }
        total
    }

    /// Moment-matched mean and covariance over all models.
    pub fn moments(&self) -> Option<(Vector, Matrix)> {
        let all: Vec<_> = self.per_mode.iter().flat_map(|m| m.components.iter().cloned()).collect();
        gaussian::moment_match(&all).map(|(_, mean, cov)| (mean, cov))
    }

    /// Prunes against the whole track's mass, merges and caps within each
    /// model, then renormalizes to unit mass.
    pub fn reduce(&mut self, reduction: &MixtureReduction) {
        let total = self.log_mass();
        if !total.is_finite() {
            return;
        }
        for mix in &mut self.per_mode {
            mix.components = reduce_components(&mix.components, total, reduction);
        }
        self.normalize();
    }
}

/// One labeled track: its density and the measurement indices it was
/// assigned at each update (`None` for a missed detection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub label: Label,
    pub density: ModeMixture,
    pub history: Vec<Option<u32>>,
    /// Hash of `(label, history)`; identifies the track density.
    pub key: u64,
}

impl Track {
    pub fn born(label: Label, density: ModeMixture) -> Self {
        let key = hash_of(&label);
        Self {
            label,
            density,
            history: Vec::new(),
            key,
        }
    }

    pub(crate) fn successor(&self, density: ModeMixture, assigned: Option<u32>) -> Self {
        let mut history = self.history.clone();
        history.push(assigned);
        Self {
            label: self.label,
            density,
            history,
            key: hash_of(&(self.key, assigned)),
        }
    }
}

pub(crate) fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// One GLMB term: a label set (tracks sorted by label), its weight, and an
/// association-history key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmbHypothesis {
    pub tracks: Vec<Arc<Track>>,
    pub log_weight: f64,
    pub history: u64,
}

impl GlmbHypothesis {
    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.tracks.iter().map(|t| t.label)
    }

    pub fn cardinality(&self) -> usize {
        self.tracks.len()
    }

    pub fn track(&self, label: Label) -> Option<&Track> {
        self.tracks
            .binary_search_by(|t| t.label.cmp(&label))
            .ok()
            .map(|i| self.tracks[i].as_ref())
    }

    /// Deterministic tie-break key: label set, then history.
    pub fn tie_key(&self) -> (Vec<Label>, u64) {
        (self.labels().collect(), self.history)
    }
}

/// Weighted set of hypotheses at one time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmbDensity {
    pub hypotheses: Vec<GlmbHypothesis>,
    pub time: u32,
}

impl Default for GlmbDensity {
    fn default() -> Self {
        Self::empty_set()
    }
}

impl GlmbDensity {
    /// Certainty that no targets exist.
    pub fn empty_set() -> Self {
        Self {
            hypotheses: vec![GlmbHypothesis {
                tracks: Vec::new(),
                log_weight: 0.0,
                history: 0,
            }],
            time: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn log_total_weight(&self) -> f64 {
        log_sum_exp(self.hypotheses.iter().map(|h| h.log_weight))
    }

    /// Renormalizes weights to sum to one and sorts hypotheses by
    /// decreasing weight, ties broken by [`GlmbHypothesis::tie_key`].
    pub fn normalize(&mut self) {
        let total = self.log_total_weight();
        if total.is_finite() {
            for h in &mut self.hypotheses {
                h.log_weight -= total;
            }
        }
        self.sort();
    }

    pub(crate) fn sort(&mut self) {
        self.hypotheses.sort_by(|a, b| {
            b.log_weight
                .total_cmp(&a.log_weight)
                .then_with(|| a.labels().cmp(b.labels()))
                .then_with(|| a.history.cmp(&b.history))
        });
    }

    /// `exp(entropy)` of the hypothesis weights.
    pub fn effective_hypotheses(&self) -> f64 {
        let total = self.log_total_weight();
        let entropy: f64 = self
            .hypotheses
            .iter()
            .map(|h| {
                let lw = h.log_weight - total;
                if lw.is_finite() {
                    -lw.exp() * lw
                } else {
                    0.0
                }
            })
            .sum();
        entropy.exp()
    }

    /// Number of distinct track densities referenced by the hypotheses.
    pub fn distinct_tracks(&self) -> usize {
        let mut keys: Vec<(Label, u64)> = self
            .hypotheses
            .iter()
            .flat_map(|h| h.tracks.iter().map(|t| (t.label, t.key)))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }

    /// JSON snapshot of the full density: hypotheses with labels,
    /// log-weights and per-mode mixture parameters.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("density serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Hypothesis-count and mixture-size controls applied after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Upper bound on retained hypotheses; also scales the per-hypothesis
    /// number of ranked assignments, `ceil(max_hypotheses * weight)`.
    pub max_hypotheses: usize,
    /// Hypotheses whose log-weight falls this far below the best are dropped.
    pub min_log_weight: f64,
    pub mixture: MixtureReduction,
    /// Optional per-mode Mahalanobis gate, in standard deviations.
    pub gate_sigma: Option<f64>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            max_hypotheses: 1000,
            min_log_weight: -15.0,
            mixture: MixtureReduction::default(),
            gate_sigma: None,
        }
    }
}

impl TruncationPolicy {
    /// Keeps every hypothesis and every mixture component.
    pub fn unbounded() -> Self {
        Self {
            max_hypotheses: usize::MAX,
            min_log_weight: f64::NEG_INFINITY,
            mixture: MixtureReduction::exact(),
            gate_sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_hypotheses == 0 {
            return Err(GlmbError::Config("max_hypotheses must be at least 1".into()));
        }
        if self.min_log_weight.is_nan() || self.min_log_weight > 0.0 {
            return Err(GlmbError::Config("min_log_weight must be <= 0".into()));
        }
        let m = &self.mixture;
        if !(m.prune_thresh >= 0.0) || !(m.merge_thresh >= 0.0) || m.max_components == 0 {
            return Err(GlmbError::Config(
                "mixture thresholds must be nonnegative and max_components >= 1".into(),
            ));
        }
        if let Some(g) = self.gate_sigma {
            if !(g > 0.0) {
                return Err(GlmbError::Config("gate_sigma must be positive".into()));
            }
        }
        Ok(())
    }

    /// Number of ranked assignments to request for a hypothesis of
    /// normalized weight `exp(log_weight)`.
    pub fn assignments_for(&self, log_weight: f64) -> usize {
        if self.max_hypotheses == usize::MAX {
            return usize::MAX;
        }
        let k = (self.max_hypotheses as f64 * log_weight.exp()).ceil();
        (k as usize).max(1)
    }
}

/// Keeps at most `max_hypotheses` of the heaviest hypotheses, drops those
/// more than `-min_log_weight` below the best, and renormalizes.
pub fn truncate(density: &GlmbDensity, policy: &TruncationPolicy) -> GlmbDensity {
    let mut out = density.clone();
    out.normalize();
    if let Some(best) = out.hypotheses.first().map(|h| h.log_weight) {
        let floor = best + policy.min_log_weight;
        out.hypotheses.retain(|h| h.log_weight.is_finite() && h.log_weight >= floor);
    }
    out.hypotheses.truncate(policy.max_hypotheses);
    out.normalize();
    out
}

/// Measurements collected at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    #[serde(rename = "k")]
    pub time: u32,
    #[serde(with = "crate::serde_mat::vector_list")]
    pub measurements: Vec<Vector>,
}

/// Per-step bookkeeping reported by [`filter_step`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub predicted_hypotheses: usize,
    pub hypotheses: usize,
    pub distinct_tracks: usize,
    /// `(label, component count)` for every distinct track.
    pub track_components: Vec<(Label, usize)>,
    pub effective_hypotheses: f64,
    pub ignored_measurements: usize,
}

/// Output of one predict/update/truncate/extract cycle.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub density: GlmbDensity,
    pub estimate: MultiTargetEstimate,
    pub diagnostics: StepDiagnostics,
}

/// Runs one full recursion: predict to time `k`, update with `scan`,
/// truncate, and extract the estimate. Predicted hypotheses more than
/// `-min_log_weight` below the best predicted one are not generated.
pub fn filter_step(
    prior: &GlmbDensity,
    scan: &Scan,
    model: &crate::jms::JmsModel,
    policy: &TruncationPolicy,
    k: u32,
) -> Result<StepOutput> {
    policy.validate()?;
    let predicted = predict_bounded(prior, model, k, -policy.min_log_weight)?;
    let predicted_hypotheses = predicted.len();
    let (updated, diag) = update(&predicted, scan, model, policy)?;
    let density = truncate(&updated, policy);
    let estimate = extract(&density);
    let mut track_components: Vec<(Label, usize)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for h in &density.hypotheses {
        for t in &h.tracks {
            if seen.insert((t.label, t.key)) {
                track_components.push((t.label, t.density.component_count()));
            }
        }
    }
    track_components.sort();
    let diagnostics = StepDiagnostics {
        predicted_hypotheses,
        hypotheses: density.len(),
        distinct_tracks: seen.len(),
        track_components,
        effective_hypotheses: density.effective_hypotheses(),
        ignored_measurements: diag.ignored_measurements,
    };
    log::debug!(
        "k={k} predicted={} hypotheses={} tracks={} n*={}",
        predicted_hypotheses,
        diagnostics.hypotheses,
        diagnostics.distinct_tracks,
        estimate.cardinality
    );
    Ok(StepOutput {
        density,
        estimate,
        diagnostics,
    })
}

/// Convenience wrapper that owns the model, the policy and the current
/// density.
#[derive(Debug, Clone)]
pub struct GlmbFilter {
    pub model: crate::jms::JmsModel,
    pub policy: TruncationPolicy,
    pub density: GlmbDensity,
}

impl GlmbFilter {
    pub fn new(model: crate::jms::JmsModel, policy: TruncationPolicy) -> Result<Self> {
        model.validate()?;
        policy.validate()?;
        Ok(Self {
            model,
            policy,
            density: GlmbDensity::empty_set(),
        })
    }

    /// Processes the scan for time `scan.time`.
    pub fn step(&mut self, scan: &Scan) -> Result<(MultiTargetEstimate, StepDiagnostics)> {
        let out = filter_step(&self.density, scan, &self.model, &self.policy, scan.time)?;
        self.density = out.density;
        Ok((out.estimate, out.diagnostics))
    }
}
