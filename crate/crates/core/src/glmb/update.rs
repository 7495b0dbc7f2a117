use super::{hash_of, GlmbDensity, GlmbError, GlmbHypothesis, ModeMixture, Result, Scan, Track, TruncationPolicy};
use crate::assignment::{k_best_within, AssignmentError, CostMatrix};
use crate::gaussian::{log_sum_exp_ordered, Mixture, UpdatePlan, Vector};
use crate::jms::JmsModel;
use std::collections::HashMap;
use std::sync::Arc;

/// Stand-in for `ln κ` when the clutter intensity is zero. Any hypothesis
/// that leaves a measurement unexplained is then about `e^-700` lighter
/// than one that explains it, which the truncation floor removes.
const LOG_CLUTTER_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateDiagnostics {
    /// Measurements outside the observation region.
    pub ignored_measurements: usize,
    /// Predicted hypotheses with no feasible association map.
    pub infeasible_hypotheses: usize,
    /// Predicted hypotheses skipped because none of their children could
    /// survive truncation.
    pub skipped_hypotheses: usize,
}

/// Per-component update plans of one predicted track and its association
/// scores against the scan.
struct TrackScores {
    plans: Vec<Vec<UpdatePlan>>,
    /// `ln Ψ̄` for detection by each measurement.
    log_detect: Vec<f64>,
    /// Cheapest entry of the track's cost-matrix row.
    min_cost: f64,
}

fn score_track(
    track: &Track,
    measurements: &[Vector],
    model: &JmsModel,
    policy: &TruncationPolicy,
    log_kappa: f64,
    miss_cost: f64,
) -> Result<TrackScores> {
    let params = model.unscented_params();
    let ln_pd = model.sensor.detection_prob.ln();
    let gate = policy.gate_sigma.map(|g| g * g);
    let mut plans = Vec::with_capacity(track.density.mode_count());
    for (r, mix) in track.density.per_mode.iter().enumerate() {
        let likelihood = model.sensor.likelihood_for(r);
        let mode_plans = mix
            .components
            .iter()
            .map(|c| likelihood.update_plan(c, &params))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        plans.push(mode_plans);
    }
    let mut innov = vec![0.0; model.sensor.measurement_dim()];
    let mut terms = Vec::new();
    let log_detect: Vec<f64> = measurements
        .iter()
        .map(|z| {
            terms.clear();
            for (r, mode_plans) in plans.iter().enumerate() {
                let likelihood = model.sensor.likelihood_for(r);
                for (plan, comp) in mode_plans.iter().zip(&track.density.per_mode[r].components) {
                    likelihood.residual_into(z, plan.predicted_measurement(), &mut innov);
                    let d2 = plan.distance_sq_of(&innov);
                    if gate.is_some_and(|g| d2 > g) {
                        continue;
                    }
                    terms.push(comp.log_weight + plan.log_likelihood_of(&innov));
                }
            }
            ln_pd + log_sum_exp_ordered(&terms) - log_kappa
        })
        .collect();
    let min_cost = log_detect.iter().map(|l| -l).fold(miss_cost, f64::min);
    Ok(TrackScores {
        plans,
        log_detect,
        min_cost,
    })
}

fn detected_density(track: &Track, scores: &TrackScores, z: &Vector, model: &JmsModel, policy: &TruncationPolicy) -> ModeMixture {
    let gate = policy.gate_sigma.map(|g| g * g);
    let per_mode = track
        .density
        .per_mode
        .iter()
        .enumerate()
        .map(|(r, mix)| {
            let likelihood = model.sensor.likelihood_for(r);
            let components = mix
                .components
                .iter()
                .zip(&scores.plans[r])
                .filter_map(|(comp, plan)| {
                    let innov = likelihood.residual(z, plan.predicted_measurement());
                    if gate.is_some_and(|g| plan.innovation_distance_sq(&innov) > g) {
                        return None;
                    }
                    let mut post = plan.posterior(comp, &innov);
                    post.log_weight += plan.log_likelihood(&innov);
                    Some(post)
                })
                .collect();
            Mixture::new(components)
        })
        .collect();
    ModeMixture { per_mode }
}

/// GLMB measurement update. Every predicted hypothesis spawns one child
/// per ranked association map, up to `policy.assignments_for(weight)` of
/// them; children that truncation would discard anyway are not generated.
/// Track posteriors are mixture-reduced with `policy.mixture`.
pub fn update(pred: &GlmbDensity, scan: &Scan, model: &JmsModel, policy: &TruncationPolicy) -> Result<(GlmbDensity, UpdateDiagnostics)> {
    policy.validate()?;
    let mut diag = UpdateDiagnostics::default();
    let measurements: Vec<Vector> = scan
        .measurements
        .iter()
        .filter(|z| {
            let inside = model.sensor.region.contains(z);
            diag.ignored_measurements += usize::from(!inside);
            inside
        })
        .cloned()
        .collect();
    if diag.ignored_measurements > 0 {
        log::warn!("k={}: ignored {} measurements outside the region", scan.time, diag.ignored_measurements);
    }
    let m = measurements.len();
    let log_kappa = model.sensor.log_clutter_intensity().max(LOG_CLUTTER_FLOOR);
    let ln_miss = (1.0 - model.sensor.detection_prob).ln();

    // distinct predicted tracks, in order of first appearance
    let mut index: HashMap<*const Track, usize> = HashMap::new();
    let mut tracks: Vec<&Arc<Track>> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(pred.len());
    for h in &pred.hypotheses {
        rows.push(
            h.tracks
                .iter()
                .map(|t| {
                    *index.entry(Arc::as_ptr(t)).or_insert_with(|| {
                        tracks.push(t);
                        tracks.len() - 1
                    })
                })
                .collect(),
        );
    }
    let miss_cost = -ln_miss;
    let scores = tracks
        .iter()
        .map(|t| score_track(t, &measurements, model, policy, log_kappa, miss_cost))
        .collect::<Result<Vec<_>>>()?;

    let costs_of = |row: &[usize]| {
        let n = row.len();
        let mut c = CostMatrix::from_element(n, m + n, f64::INFINITY);
        for (i, &t) in row.iter().enumerate() {
            for j in 0..m {
                c[(i, j)] = -scores[t].log_detect[j];
            }
            c[(i, m + i)] = miss_cost;
        }
        c
    };
    // upper bound on any child's log-weight: every track takes its best entry
    let mut order: Vec<(f64, usize)> = pred
        .hypotheses
        .iter()
        .zip(&rows)
        .enumerate()
        .map(|(i, (h, row))| (h.log_weight - row.iter().map(|&t| scores[t].min_cost).sum::<f64>(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut posterior: HashMap<(usize, Option<usize>), Arc<Track>> = HashMap::new();
    let mut children = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (upper, i) in order {
        let parent = &pred.hypotheses[i];
        let floor = best + policy.min_log_weight;
        if !(upper > f64::NEG_INFINITY) || upper < floor {
            diag.skipped_hypotheses += 1;
            continue;
        }
        let maps = match k_best_within(
            &costs_of(&rows[i]),
            policy.assignments_for(parent.log_weight),
            parent.log_weight - floor,
            -policy.min_log_weight,
        ) {
            Ok(maps) => maps,
            Err(AssignmentError::Infeasible) => {
                diag.infeasible_hypotheses += 1;
                continue;
            }
            Err(e) => return Err(GlmbError::Assignment(e)),
        };
        for map in maps {
            let log_weight = parent.log_weight - map.cost;
            best = best.max(log_weight);
            let assoc: Vec<Option<u32>> = map.columns.iter().map(|&j| (j < m).then_some(j as u32)).collect();
            let mut child_tracks = Vec::with_capacity(assoc.len());
            for (&t, a) in rows[i].iter().zip(&assoc) {
                let a = a.map(|j| j as usize);
                let track = posterior.entry((t, a)).or_insert_with(|| {
                    let source = tracks[t];
                    let mut density = match a {
                        Some(j) => detected_density(source, &scores[t], &measurements[j], model, policy),
                        None => source.density.clone(),
                    };
                    density.normalize();
                    density.reduce(&policy.mixture);
                    Arc::new(source.successor(density, a.map(|j| j as u32)))
                });
                child_tracks.push(track.clone());
            }
            let labels: Vec<_> = parent.labels().collect();
            children.push(GlmbHypothesis {
                tracks: child_tracks,
                log_weight,
                history: hash_of(&(parent.history, labels, assoc)),
            });
        }
    }
    let mut density = GlmbDensity {
        hypotheses: children,
        time: pred.time,
    };
    density.normalize();
    Ok((density, diag))
}
