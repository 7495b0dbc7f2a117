use super::{GlmbDensity, GlmbError, GlmbHypothesis, Label, ModeMixture, Result, Track};
use crate::gaussian::{GaussianComponent, Mixture};
use crate::jms::JmsModel;
use std::collections::HashMap;
use std::sync::Arc;

/// Chapman-Kolmogorov prediction of one track under the jump Markov
/// transition: every component of every source model is propagated through
/// every target model, weighted by the switching probability.
pub(crate) fn predict_track(density: &ModeMixture, model: &JmsModel) -> Result<ModeMixture> {
    let modes = model.mode_count();
    if density.mode_count() != modes {
        return Err(GlmbError::Config(format!(
            "track has {} modes, model has {modes}",
            density.mode_count()
        )));
    }
    let params = model.unscented_params();
    let mut out = ModeMixture::empty(modes);
    for (to, target) in out.per_mode.iter_mut().enumerate() {
        let motion = &model.models[to];
        for (from, source) in density.per_mode.iter().enumerate() {
            let switch = model.switching.prob(to, from);
            if switch <= 0.0 {
                continue;
            }
            let log_switch = switch.ln();
            for comp in &source.components {
                let mut predicted = motion.predict(comp, &params)?;
                predicted.log_weight += log_switch;
                target.components.push(predicted);
            }
        }
    }
    Ok(out)
}

/// Density of a target born at `site`: the birth Gaussian in every model,
/// weighted by the site's model prior.
pub(crate) fn birth_density(model: &JmsModel, site: usize) -> ModeMixture {
    let s = &model.birth.sites[site];
    ModeMixture {
        per_mode: s
            .mode_prior
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    Mixture::new(vec![GaussianComponent::new(p.ln(), s.mean.clone(), s.cov.clone())])
                } else {
                    Mixture::default()
                }
            })
            .collect(),
    }
}

/// Every subset of birth sites with its labeled multi-Bernoulli log-weight,
/// heaviest first.
fn birth_subsets(model: &JmsModel) -> Vec<(f64, Vec<usize>)> {
    let sites = &model.birth.sites;
    let mut subsets = vec![(0.0, Vec::new())];
    for (i, site) in sites.iter().enumerate() {
        let (born, absent) = (site.existence_prob.ln(), (1.0 - site.existence_prob).ln());
        let mut next = Vec::with_capacity(subsets.len() * 2);
        for (w, members) in subsets {
            if absent > f64::NEG_INFINITY {
                next.push((w + absent, members.clone()));
            }
            if born > f64::NEG_INFINITY {
                let mut with = members;
                with.push(i);
                next.push((w + born, with));
            }
        }
        subsets = next;
    }
    subsets.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    subsets
}

/// Exact GLMB prediction to time `k` with constant survival probability
/// and independent Bernoulli birth sites. Birth labels are `(k, i)` with
/// `i` the 1-based site index.
pub fn predict(prior: &GlmbDensity, model: &JmsModel, k: u32) -> Result<GlmbDensity> {
    predict_bounded(prior, model, k, f64::INFINITY)
}

/// Prediction that skips hypotheses whose log-weight would fall more than
/// `max_log_ratio` below the heaviest predicted hypothesis.
pub fn predict_bounded(prior: &GlmbDensity, model: &JmsModel, k: u32, max_log_ratio: f64) -> Result<GlmbDensity> {
    if prior.hypotheses.iter().flat_map(|h| h.tracks.iter()).any(|t| t.label.birth_time >= k) {
        return Err(GlmbError::Config(format!("prior contains labels born at or after time {k}")));
    }
    let ln_survive = model.survival_prob.ln();
    let ln_die = (1.0 - model.survival_prob).ln();
    let best_fate = ln_survive.max(ln_die);
    let births = birth_subsets(model);
    let best_birth = births.first().map_or(f64::NEG_INFINITY, |b| b.0);

    let global_best = prior
        .hypotheses
        .iter()
        .map(|h| h.log_weight + h.cardinality() as f64 * best_fate)
        .fold(f64::NEG_INFINITY, f64::max)
        + best_birth;
    let floor = global_best - max_log_ratio;

    let birth_tracks: Vec<Arc<Track>> = (0..model.birth.sites.len())
        .map(|i| Arc::new(Track::born(Label::new(k, i as u32 + 1), birth_density(model, i))))
        .collect();

    let mut predicted_tracks: HashMap<*const Track, Arc<Track>> = HashMap::new();
    let mut out = Vec::new();
    for hyp in &prior.hypotheses {
        if !hyp.log_weight.is_finite() {
            continue;
        }
        let n = hyp.cardinality();
        // depth-first over survive/die decisions, bounded by the best completion
        let mut stack: Vec<(usize, f64, Vec<usize>)> = vec![(0, hyp.log_weight, Vec::new())];
        let mut survivor_sets = Vec::new();
        while let Some((depth, w, survivors)) = stack.pop() {
            if !(w > f64::NEG_INFINITY) || w + (n - depth) as f64 * best_fate + best_birth < floor {
                continue;
            }
            if depth == n {
                survivor_sets.push((w, survivors));
                continue;
            }
            stack.push((depth + 1, w + ln_die, survivors.clone()));
            let mut with = survivors;
            with.push(depth);
            stack.push((depth + 1, w + ln_survive, with));
        }
        survivor_sets.sort_by(|a, b| a.1.cmp(&b.1));
        for (w, survivors) in survivor_sets {
            let mut tracks = Vec::with_capacity(survivors.len() + birth_tracks.len());
            for &i in &survivors {
                let source = &hyp.tracks[i];
                let key = Arc::as_ptr(source);
                let predicted = match predicted_tracks.get(&key) {
                    Some(t) => t.clone(),
                    None => {
                        let t = Arc::new(Track {
                            density: predict_track(&source.density, model)?,
                            ..source.as_ref().clone()
                        });
                        predicted_tracks.insert(key, t.clone());
                        t
                    }
                };
                tracks.push(predicted);
            }
            for (bw, sites) in &births {
                let total = w + bw;
                if total < floor {
                    break;
                }
                let mut all = tracks.clone();
                all.extend(sites.iter().map(|&i| birth_tracks[i].clone()));
                all.sort_by(|a, b| a.label.cmp(&b.label));
                out.push(GlmbHypothesis {
                    tracks: all,
                    log_weight: total,
                    history: hyp.history,
                });
            }
        }
    }
    let mut density = GlmbDensity {
        hypotheses: out,
        time: k,
    };
    density.normalize();
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jms::linear_scenario;

    #[test]
    fn empty_prior_single_birth_site() {
        let mut model = linear_scenario();
        model.birth.sites.truncate(1);
        let pred = predict(&GlmbDensity::empty_set(), &model, 1).unwrap();
        assert_eq!(pred.len(), 2);
        let empty = pred.hypotheses.iter().find(|h| h.cardinality() == 0).unwrap();
        let born = pred.hypotheses.iter().find(|h| h.cardinality() == 1).unwrap();
        assert!((empty.log_weight.exp() - 0.8).abs() < 1e-12);
        assert!((born.log_weight.exp() - 0.2).abs() < 1e-12);
        assert_eq!(born.tracks[0].label, Label::new(1, 1));
    }

    #[test]
    fn component_count_multiplies_by_modes() {
        let model = linear_scenario();
        let mut density = ModeMixture::empty(3);
        for (r, mix) in density.per_mode.iter_mut().enumerate() {
            let site = &model.birth.sites[0];
            mix.components.push(GaussianComponent::new((1.0f64 / 3.0).ln(), site.mean.clone() * (r as f64 + 1.0), site.cov.clone()));
        }
        let predicted = predict_track(&density, &model).unwrap();
        // the forbidden right/left switches drop 2 of the 9 propagations
        let total: usize = predicted.component_count();
        assert_eq!(total, 7);
        let mut full = model.clone();
        full.switching = crate::jms::SwitchingMatrix::from_rows(&[
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap();
        let predicted = predict_track(&density, &full).unwrap();
        assert!(predicted.per_mode.iter().all(|m| m.len() == 3));
        assert_eq!(predicted.component_count(), 9);
        assert!(predicted.log_mass().abs() < 1e-12);
    }

    #[test]
    fn certain_survival_without_births_keeps_weights() {
        let mut model = linear_scenario();
        model.survival_prob = 1.0;
        let born = predict(&GlmbDensity::empty_set(), &model, 1).unwrap();
        model.birth.sites.clear();
        let pred = predict(&born, &model, 2).unwrap();
        assert_eq!(pred.len(), born.len());
        for (a, b) in pred.hypotheses.iter().zip(&born.hypotheses) {
            assert_eq!(a.tie_key(), b.tie_key());
            assert!((a.log_weight - b.log_weight).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_stale_time_index() {
        let model = linear_scenario();
        let born = predict(&GlmbDensity::empty_set(), &model, 3).unwrap();
        assert!(predict(&born, &model, 3).is_err());
    }
}
