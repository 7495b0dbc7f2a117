use jmsglmb::gaussian::{log_gaussian_density, GaussianComponent, Matrix, Mixture, Vector};
use jmsglmb::glmb::{
    cardinality_distribution, extract, filter_step, predict, truncate, update, GlmbDensity, GlmbHypothesis, Label,
    ModeMixture, Scan, Track, TruncationPolicy,
};
use jmsglmb::jms::{
    cv_matrix, cv_process_noise, linear_scenario, BirthModel, BirthSite, JmsModel, Likelihood, LikelihoodSet,
    MotionModel, ObservationRegion, SensorModel, SwitchingMatrix,
};
use std::collections::HashMap;
use std::sync::Arc;

fn track(label: Label, modes: usize, masses: &[f64], mean: [f64; 4]) -> Arc<Track> {
    let mut density = ModeMixture::empty(modes);
    for (mix, &p) in density.per_mode.iter_mut().zip(masses) {
        if p > 0.0 {
            *mix = Mixture::new(vec![GaussianComponent::new(
                p.ln(),
                Vector::from_row_slice(&mean),
                Matrix::from_diagonal(&Vector::from_row_slice(&[100.0, 10.0, 100.0, 10.0])),
            )]);
        }
    }
    Arc::new(Track::born(label, density))
}

fn hypothesis(tracks: Vec<Arc<Track>>, weight: f64, history: u64) -> GlmbHypothesis {
    GlmbHypothesis {
        tracks,
        log_weight: weight.ln(),
        history,
    }
}

fn density(hypotheses: Vec<GlmbHypothesis>) -> GlmbDensity {
    GlmbDensity { hypotheses, time: 0 }
}

fn weights(d: &GlmbDensity) -> Vec<f64> {
    d.hypotheses.iter().map(|h| h.log_weight.exp()).collect()
}

/// One constant-velocity model, position measurements, one birth site at
/// the origin.
fn single_model(detection_prob: f64, clutter_rate: f64, existence_prob: f64) -> JmsModel {
    let mut h = Matrix::zeros(2, 4);
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    JmsModel {
        models: vec![MotionModel::linear("cv", cv_matrix(1.0), cv_process_noise(0.5, 1.0))],
        switching: SwitchingMatrix::identity(1),
        sensor: SensorModel {
            likelihood: LikelihoodSet::Shared(Likelihood::Linear {
                matrix: h,
                noise: Matrix::identity(2, 2) * 0.25,
            }),
            detection_prob,
            clutter_rate,
            region: ObservationRegion {
                bounds: vec![[-100.0, 100.0], [-100.0, 100.0]],
            },
        },
        birth: BirthModel {
            sites: vec![BirthSite {
                existence_prob,
                mean: Vector::zeros(4),
                cov: Matrix::from_diagonal(&Vector::from_row_slice(&[4.0, 1.0, 4.0, 1.0])),
                mode_prior: vec![1.0],
            }],
        },
        survival_prob: 1.0,
        sampling_interval: 1.0,
        unscented: None,
    }
}

fn scan(time: u32, zs: &[[f64; 2]]) -> Scan {
    Scan {
        time,
        measurements: zs.iter().map(|z| Vector::from_row_slice(z)).collect(),
    }
}

#[test]
fn truncate_is_identity_when_under_the_cap() {
    let d = density(vec![
        hypothesis(vec![], 0.5, 0),
        hypothesis(vec![track(Label::new(1, 1), 1, &[1.0], [0.0; 4])], 0.3, 1),
        hypothesis(vec![track(Label::new(1, 2), 1, &[1.0], [0.0; 4])], 0.2, 2),
    ]);
    let t = truncate(&d, &TruncationPolicy::default());
    assert_eq!(t.len(), 3);
    for (a, b) in weights(&t).iter().zip(weights(&d)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn truncate_keeps_heaviest_and_renormalizes() {
    let d = density(vec![
        hypothesis(vec![], 0.1, 0),
        hypothesis(vec![track(Label::new(1, 1), 1, &[1.0], [0.0; 4])], 0.6, 1),
        hypothesis(vec![track(Label::new(1, 2), 1, &[1.0], [0.0; 4])], 0.3, 2),
    ]);
    let policy = TruncationPolicy {
        max_hypotheses: 2,
        ..Default::default()
    };
    let w = weights(&truncate(&d, &policy));
    assert_eq!(w.len(), 2);
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn truncate_breaks_ties_by_labels_then_history() {
    let labels = [Label::new(2, 1), Label::new(1, 2), Label::new(1, 1)];
    let mut hyps: Vec<_> = labels
        .iter()
        .map(|&l| hypothesis(vec![track(l, 1, &[1.0], [0.0; 4])], 0.25, 0))
        .collect();
    hyps.push(hypothesis(vec![track(Label::new(1, 1), 1, &[1.0], [0.0; 4])], 0.25, 7));
    let policy = TruncationPolicy {
        max_hypotheses: 3,
        ..Default::default()
    };
    let t = truncate(&density(hyps), &policy);
    let kept: Vec<_> = t.hypotheses.iter().map(|h| h.tie_key()).collect();
    assert_eq!(
        kept,
        vec![
            (vec![Label::new(1, 1)], 0),
            (vec![Label::new(1, 1)], 7),
            (vec![Label::new(1, 2)], 0)
        ]
    );
}

#[test]
fn truncate_drops_relatively_light_hypotheses() {
    let d = density(vec![
        hypothesis(vec![], 1.0 - 1e-8, 0),
        hypothesis(vec![track(Label::new(1, 1), 1, &[1.0], [0.0; 4])], 1e-8, 1),
    ]);
    let t = truncate(&d, &TruncationPolicy::default());
    assert_eq!(t.len(), 1);
    assert_eq!(t.hypotheses[0].log_weight, 0.0);
}

#[test]
fn cardinality_examples() {
    let l1 = track(Label::new(1, 1), 1, &[1.0], [0.0; 4]);
    let l2 = track(Label::new(1, 2), 1, &[1.0], [0.0; 4]);
    let single = density(vec![hypothesis(vec![l1.clone(), l2], 1.0, 0)]);
    assert_eq!(cardinality_distribution(&single), vec![0.0, 0.0, 1.0]);

    let two = density(vec![hypothesis(vec![], 0.8, 0), hypothesis(vec![l1], 0.2, 1)]);
    let rho = cardinality_distribution(&two);
    assert!((rho[0] - 0.8).abs() < 1e-12 && (rho[1] - 0.2).abs() < 1e-12);
    assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn extract_picks_dominant_mode() {
    let t = track(Label::new(1, 1), 3, &[0.7, 0.2, 0.1], [1.0, 2.0, 3.0, 4.0]);
    let est = extract(&density(vec![hypothesis(vec![t], 1.0, 0)]));
    assert_eq!(est.cardinality, 1);
    assert_eq!(est.targets[0].mode, 0);
    let probs = &est.targets[0].mode_probs;
    assert!((probs[0] - 0.7).abs() < 1e-12 && (probs[2] - 0.1).abs() < 1e-12);
    assert!((est.targets[0].mean[2] - 3.0).abs() < 1e-12);
}

#[test]
fn extract_prefers_smaller_cardinality_on_ties() {
    let t = track(Label::new(1, 1), 1, &[1.0], [0.0; 4]);
    let est = extract(&density(vec![hypothesis(vec![], 0.5, 0), hypothesis(vec![t], 0.5, 1)]));
    assert_eq!(est.cardinality, 0);
    assert!(est.targets.is_empty());
}

#[test]
fn extract_uses_heaviest_hypothesis_of_map_cardinality() {
    let a = track(Label::new(1, 1), 1, &[1.0], [0.0; 4]);
    let b = track(Label::new(1, 2), 1, &[1.0], [50.0, 0.0, 50.0, 0.0]);
    let est = extract(&density(vec![hypothesis(vec![a], 0.4, 0), hypothesis(vec![b], 0.6, 1)]));
    assert_eq!(est.targets[0].label, Label::new(1, 2));
    assert_eq!(est.hypothesis_history, Some(1));
}

#[test]
fn extract_of_empty_density_has_no_targets() {
    let est = extract(&density(vec![]));
    assert_eq!(est.cardinality, 0);
    assert!(est.targets.is_empty());
}

#[test]
fn zero_detection_probability_leaves_density_unchanged() {
    let mut model = linear_scenario();
    model.sensor.detection_prob = 0.0;
    let pred = predict(&GlmbDensity::empty_set(), &model, 1).unwrap();
    let z = scan(1, &[[40_000.0, -50_000.0], [0.0, 0.0]]);
    let (post, _) = update(&pred, &z, &model, &TruncationPolicy::unbounded()).unwrap();
    assert_eq!(post.len(), pred.len());
    for (a, b) in post.hypotheses.iter().zip(&pred.hypotheses) {
        assert!((a.log_weight - b.log_weight).abs() < 1e-12);
        assert_eq!(a.labels().collect::<Vec<_>>(), b.labels().collect::<Vec<_>>());
        for (ta, tb) in a.tracks.iter().zip(&b.tracks) {
            assert_eq!(ta.density, tb.density);
            assert_eq!(ta.history, vec![None]);
        }
    }
}

/// `ln Ψ̄` for detection, computed directly from the predicted mixture.
fn oracle_log_detect(t: &Track, z: &Vector, model: &JmsModel) -> f64 {
    let (h, r) = match model.sensor.likelihood_for(0) {
        Likelihood::Linear { matrix, noise } => (matrix.clone(), noise.clone()),
        _ => unreachable!(),
    };
    let mut total = 0.0;
    for mix in &t.density.per_mode {
        for c in &mix.components {
            let s = &h * &c.cov * h.transpose() + &r;
            total += c.log_weight.exp() * log_gaussian_density(z, &(&h * &c.mean), &s).unwrap().exp();
        }
    }
    let kappa = model.sensor.clutter_rate / model.sensor.region.volume();
    (model.sensor.detection_prob * total / kappa).ln()
}

fn all_maps(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    let mut maps = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for map in &maps {
            for choice in std::iter::once(None).chain((0..m).map(Some)) {
                if choice.is_some() && map.contains(&choice) {
                    continue;
                }
                let mut extended = map.clone();
                extended.push(choice);
                next.push(extended);
            }
        }
        maps = next;
    }
    maps
}

#[test]
fn update_matches_brute_force_enumeration() {
    let mut model = linear_scenario();
    model.birth.sites.truncate(2);
    model.sensor.clutter_rate = 5e-6 * model.sensor.region.volume();
    let pred = predict(&GlmbDensity::empty_set(), &model, 1).unwrap();
    for zs in [
        vec![],
        vec![[40_010.0, -49_990.0]],
        vec![[40_010.0, -49_990.0], [-50_030.0, 40_020.0]],
        vec![[40_010.0, -49_990.0], [39_980.0, -50_050.0], [-50_030.0, 40_020.0]],
    ] {
        let z = scan(1, &zs);
        let (post, _) = update(&pred, &z, &model, &TruncationPolicy::unbounded()).unwrap();

        let mut expected: HashMap<(Vec<Label>, Vec<Option<usize>>), f64> = HashMap::new();
        for h in &pred.hypotheses {
            for map in all_maps(h.cardinality(), zs.len()) {
                let mut lw = h.log_weight;
                for (t, a) in h.tracks.iter().zip(&map) {
                    lw += match a {
                        Some(j) => oracle_log_detect(t, &z.measurements[*j], &model),
                        None => (1.0 - model.sensor.detection_prob).ln(),
                    };
                }
                expected.insert((h.labels().collect(), map), lw);
            }
        }
        let total = jmsglmb::gaussian::log_sum_exp(expected.values().copied());
        assert_eq!(post.len(), expected.len());
        let sum: f64 = post.hypotheses.iter().map(|h| h.log_weight.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for h in &post.hypotheses {
            let map: Vec<Option<usize>> = h.tracks.iter().map(|t| t.history[0].map(|j| j as usize)).collect();
            let want = (expected[&(h.labels().collect(), map)] - total).exp();
            assert!((h.log_weight.exp() - want).abs() < 1e-9, "{} vs {want}", h.log_weight.exp());
            for t in &h.tracks {
                assert!(t.density.log_mass().abs() < 1e-9);
            }
        }
    }
}

#[test]
fn detect_to_miss_ratio_for_one_track() {
    let model = single_model(0.97, 5.0, 0.5);
    let prior = density(vec![hypothesis(
        vec![track(Label::new(0, 1), 1, &[1.0], [1.0, 0.5, -1.0, 0.0])],
        1.0,
        0,
    )]);
    let mut no_birth = model.clone();
    no_birth.birth.sites.clear();
    let pred = predict(&prior, &no_birth, 1).unwrap();
    let z = scan(1, &[[1.7, -0.8]]);
    let (post, _) = update(&pred, &z, &no_birth, &TruncationPolicy::unbounded()).unwrap();
    assert_eq!(post.len(), 2);
    let detect = post.hypotheses.iter().find(|h| h.tracks[0].history == vec![Some(0)]).unwrap();
    let miss = post.hypotheses.iter().find(|h| h.tracks[0].history == vec![None]).unwrap();
    let expected = oracle_log_detect(&pred.hypotheses[0].tracks[0], &z.measurements[0], &no_birth) - 0.03f64.ln();
    assert!((detect.log_weight - miss.log_weight - expected).abs() < 1e-9);
}

#[test]
fn missed_detections_shift_cardinality_to_zero() {
    let mut model = single_model(0.9, 1.0, 0.5);
    model.birth.sites.clear();
    let t = track(Label::new(0, 1), 1, &[1.0], [0.0; 4]);
    let mut d = density(vec![hypothesis(vec![], 0.5, 0), hypothesis(vec![t], 0.5, 1)]);
    for k in 1..=4u32 {
        let out = filter_step(&d, &scan(k, &[]), &model, &TruncationPolicy::default(), k).unwrap();
        d = out.density;
        let rho = cardinality_distribution(&d);
        let ratio = rho[1] / rho[0];
        assert!((ratio - 0.1f64.powi(k as i32)).abs() < 1e-12 * ratio.max(1.0));
        assert_eq!(out.estimate.cardinality, 0);
    }
}

#[test]
fn single_model_track_matches_kalman_filter() {
    let model = single_model(1.0, 0.0, 0.5);
    let zs = [[0.3, -0.2], [1.1, 0.4], [2.2, 0.9], [2.9, 1.7], [4.2, 2.1], [5.0, 3.2]];
    let (f, q) = (cv_matrix(1.0), cv_process_noise(0.5, 1.0));
    let mut h = Matrix::zeros(2, 4);
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    let r = Matrix::identity(2, 2) * 0.25;
    let mut x = Vector::zeros(4);
    let mut p = model.birth.sites[0].cov.clone();

    let mut d = GlmbDensity::empty_set();
    for (k, z) in zs.iter().enumerate() {
        let k = k as u32 + 1;
        if k > 1 {
            x = &f * &x;
            p = &f * &p * f.transpose() + &q;
        }
        let zv = Vector::from_row_slice(z);
        let s = &h * &p * h.transpose() + &r;
        let gain = &p * h.transpose() * s.try_inverse().unwrap();
        x = &x + &gain * (&zv - &h * &x);
        p = (Matrix::identity(4, 4) - &gain * &h) * &p;

        let out = filter_step(&d, &scan(k, &[*z]), &model, &TruncationPolicy::default(), k).unwrap();
        d = out.density;
        assert_eq!(out.estimate.cardinality, 1);
        let est = &out.estimate.targets[0];
        assert_eq!(est.label, Label::new(1, 1));
        assert!((&est.mean - &x).amax() < 1e-9, "k={k}: {} vs {}", est.mean, x);
        assert!((&est.cov - &p).amax() < 1e-9);
    }
}

#[test]
fn filter_is_deterministic() {
    let model = linear_scenario();
    let scans: Vec<Scan> = (1..=4)
        .map(|k| {
            scan(
                k,
                &[
                    [40_000.0 + 10.0 * k as f64, -50_000.0],
                    [-10_000.0, 20.0 * k as f64],
                    [1234.0 * k as f64, -4321.0],
                ],
            )
        })
        .collect();
    let run = || {
        let mut d = GlmbDensity::empty_set();
        let mut out = Vec::new();
        for s in &scans {
            let step = filter_step(&d, s, &model, &TruncationPolicy::default(), s.time).unwrap();
            d = step.density;
            out.push(format!("{:?}", step.estimate));
        }
        (out, d.to_json())
    };
    assert_eq!(run(), run());
}

#[test]
fn density_json_round_trip() {
    let model = linear_scenario();
    let pred = predict(&GlmbDensity::empty_set(), &model, 1).unwrap();
    let back = GlmbDensity::from_json(&pred.to_json()).unwrap();
    assert_eq!(back, pred);
}

#[test]
fn zero_max_hypotheses_is_a_configuration_error() {
    let model = linear_scenario();
    let policy = TruncationPolicy {
        max_hypotheses: 0,
        ..Default::default()
    };
    assert!(update(&GlmbDensity::empty_set(), &scan(1, &[]), &model, &policy).is_err());
}

#[test]
fn empty_prediction_gives_empty_posterior() {
    let model = linear_scenario();
    let empty = density(vec![]);
    let (post, _) = update(&empty, &scan(1, &[[0.0, 0.0]]), &model, &TruncationPolicy::default()).unwrap();
    assert!(post.is_empty());
}
