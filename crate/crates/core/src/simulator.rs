//! Ground truth and sensor scans for scripted or randomly born targets.
//!
//! Truth and scans draw from separate ChaCha streams of the same seed, so
//! changing the sensor settings does not perturb the trajectories.

use crate::gaussian::{Matrix, Vector};
use crate::glmb::{Label, Scan};
use crate::jms::{psd_factor, wrap_angle, JmsModel, Likelihood, ModelError, Transition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid script: {0}")]
    Script(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {record}: {message}")]
    Record { record: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

const TRUTH_STREAM: u64 = 0;
const SCAN_STREAM: u64 = 1;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn standard_normal(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrajectory {
    pub label: Label,
    pub birth_step: u32,
    /// Last step at which the target exists.
    pub death_step: u32,
    #[serde(with = "crate::serde_mat::vector_list")]
    pub states: Vec<Vector>,
    pub modes: Vec<usize>,
}

impl TruthTrajectory {
    pub fn is_alive(&self, step: u32) -> bool {
        (self.birth_step..=self.death_step).contains(&step)
    }

    pub fn state_at(&self, step: u32) -> Option<&Vector> {
        self.is_alive(step).then(|| &self.states[(step - self.birth_step) as usize])
    }

    pub fn mode_at(&self, step: u32) -> Option<usize> {
        self.is_alive(step).then(|| self.modes[(step - self.birth_step) as usize])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Drawn from the birth site's Gaussian.
    Site(usize),
    Explicit(#[serde(with = "crate::serde_mat::vector")] Vector),
}

/// Forces a model from `start` onwards. For models that carry the turn rate
/// in the state, `turn_rate` overwrites it when the segment begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSegment {
    pub start: u32,
    pub mode: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBirth {
    pub label: Label,
    pub step: u32,
    pub initial: InitialState,
    /// Last step alive; `None` survives to the end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_step: Option<u32>,
    /// Model sequence; when absent the model is sampled from the switching
    /// matrix starting in model 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_schedule: Option<Vec<ModeSegment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub steps: u32,
    pub births: Vec<ScriptedBirth>,
    pub rng_seed: u64,
    /// Multiplies the sampled process noise; 0 gives noiseless trajectories.
    #[serde(default = "one")]
    pub process_noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ScenarioScript {
    pub fn validate(&self, model: &JmsModel) -> Result<()> {
        let dim = model.state_dim();
        for b in &self.births {
            if b.step < 1 || b.step > self.steps {
                return Err(SimError::Script(format!("birth of {} at step {} outside [1, {}]", b.label, b.step, self.steps)));
            }
            if let Some(d) = b.death_step {
                if d < b.step {
                    return Err(SimError::Script(format!("{} dies before it is born", b.label)));
                }
            }
            match &b.initial {
                InitialState::Site(i) if *i >= model.birth.sites.len() => {
                    return Err(SimError::Script(format!("{} uses unknown birth site {i}", b.label)))
                }
                InitialState::Explicit(x) if x.len() != dim => {
                    return Err(SimError::Script(format!("{} initial state has dimension {}", b.label, x.len())))
                }
                _ => {}
            }
            for seg in b.mode_schedule.iter().flatten() {
                if seg.mode >= model.mode_count() {
                    return Err(SimError::Script(format!("{} scheduled into unknown model {}", b.label, seg.mode)));
                }
            }
        }
        let mut labels: Vec<_> = self.births.iter().map(|b| b.label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Script("duplicate labels".into()));
        }
        if !(self.process_noise_scale >= 0.0) {
            return Err(SimError::Script("process_noise_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

fn scheduled(schedule: &[ModeSegment], step: u32) -> Option<&ModeSegment> {
    schedule.iter().filter(|s| s.start <= step).max_by_key(|s| s.start)
}

fn sample_mode(model: &JmsModel, from: usize, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for to in 0..model.mode_count() {
        acc += model.switching.prob(to, from);
        if u < acc {
            return to;
        }
    }
    // rounding left a sliver at the top of the row
    (0..model.mode_count()).rev().find(|&to| model.switching.prob(to, from) > 0.0).unwrap_or(from)
}

fn carries_turn_rate(model: &JmsModel) -> bool {
    model.models.iter().any(|m| matches!(m.transition, Transition::CoordinatedTurn { .. }))
}

/// Samples every scripted trajectory, in script order.
pub fn simulate_truth(model: &JmsModel, script: &ScenarioScript) -> Result<Vec<TruthTrajectory>> {
    model.validate()?;
    script.validate(model)?;
    let mut rng = rng(script.rng_seed, TRUTH_STREAM);
    let factors: Vec<Matrix> = model.models.iter().map(|m| m.noise_factor() * script.process_noise_scale).collect();
    let dim = model.state_dim();
    let mut out = Vec::with_capacity(script.births.len());
    for b in &script.births {
        let last = b.death_step.unwrap_or(script.steps).min(script.steps);
        let schedule = b.mode_schedule.as_deref().unwrap_or(&[]);
        let mut x = match &b.initial {
            InitialState::Explicit(x) => x.clone(),
            InitialState::Site(i) => {
                let site = &model.birth.sites[*i];
                &site.mean + psd_factor(&site.cov) * standard_normal(&mut rng, dim)
            }
        };
        let mut mode = scheduled(schedule, b.step).map_or(0, |s| s.mode);
        if let Some(w) = scheduled(schedule, b.step).and_then(|s| s.turn_rate) {
            if carries_turn_rate(model) {
                x[4] = w;
            }
        }
        let mut states = vec![x.clone()];
        let mut modes = vec![mode];
        for step in b.step + 1..=last {
            match scheduled(schedule, step) {
                Some(seg) => {
                    mode = seg.mode;
                    if seg.start == step {
                        if let Some(w) = seg.turn_rate.filter(|_| carries_turn_rate(model)) {
                            x[4] = w;
                        }
                    }
                }
                None => mode = sample_mode(model, mode, &mut rng),
            }
            let noise = &factors[mode] * standard_normal(&mut rng, dim);
            x = model.models[mode].propagate(&x) + noise;
            states.push(x.clone());
            modes.push(mode);
        }
        out.push(TruthTrajectory {
            label: b.label,
            birth_step: b.step,
            death_step: last,
            states,
            modes,
        });
    }
    Ok(out)
}

/// A scan with the simulation-only record of which target produced each
/// measurement (`None` for clutter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedScan {
    pub scan: Scan,
    pub truth_assoc: Vec<Option<Label>>,
}

fn noisy_measurement(likelihood: &Likelihood, x: &Vector, noise_factor: &Matrix, rng: &mut impl Rng) -> Vector {
    let mut z = likelihood.measure(x) + noise_factor * standard_normal(rng, noise_factor.nrows());
    if let Likelihood::BearingRange { .. } = likelihood {
        z[0] = wrap_angle(z[0]);
        z[1] = z[1].abs();
    }
    z
}

/// Scans for steps `1..=steps`: detections thinned by `P_D`, Poisson
/// clutter uniform over the region, shuffled. Detections that fall outside
/// the region are dropped.
pub fn simulate_scans(truths: &[TruthTrajectory], model: &JmsModel, steps: u32, seed: u64) -> Result<Vec<SimulatedScan>> {
    model.validate()?;
    let mut rng = rng(seed, SCAN_STREAM);
    let sensor = &model.sensor;
    let noise_factors: Vec<Matrix> = (0..model.mode_count())
        .map(|r| psd_factor(sensor.likelihood_for(r).noise()))
        .collect();
    let clutter = (sensor.clutter_rate > 0.0).then(|| Poisson::new(sensor.clutter_rate).expect("positive rate"));
    let mut out = Vec::with_capacity(steps as usize);
    for step in 1..=steps {
        let mut records: Vec<(Vector, Option<Label>)> = Vec::new();
        for t in truths {
            let (Some(x), Some(mode)) = (t.state_at(step), t.mode_at(step)) else {
                continue;
            };
            if rng.gen::<f64>() >= sensor.detection_prob {
                continue;
            }
            let z = noisy_measurement(sensor.likelihood_for(mode), x, &noise_factors[mode], &mut rng);
            if sensor.region.contains(&z) {
                records.push((z, Some(t.label)));
            }
        }
        let count = clutter.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..count {
            let z = Vector::from_iterator(
                sensor.region.bounds.len(),
                sensor.region.bounds.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)),
            );
            records.push((z, None));
        }
        records.shuffle(&mut rng);
        let (measurements, truth_assoc) = records.into_iter().unzip();
        out.push(SimulatedScan {
            scan: Scan { time: step, measurements },
            truth_assoc,
        });
    }
    Ok(out)
}

/// True targets alive at `step`, in trajectory order.
pub fn truth_at(truths: &[TruthTrajectory], step: u32) -> Vec<(Label, &Vector, usize)> {
    truths
        .iter()
        .filter_map(|t| Some((t.label, t.state_at(step)?, t.mode_at(step)?)))
        .collect()
}

fn segment(start: u32, mode: usize, turn_rate: Option<f64>) -> ModeSegment {
    ModeSegment { start, mode, turn_rate }
}

/// Three targets born at steps 1, 10 and 20 from sites 1 to 3 at 100 m/s,
/// each flying one right and one left turn of 8 steps (200 degrees),
/// noiseless motion, 100 steps.
pub fn default_linear_script() -> ScenarioScript {
    let v = |x: f64, vx: f64, y: f64, vy: f64| Vector::from_vec(vec![x, vx, y, vy]);
    ScenarioScript {
        steps: 100,
        births: vec![
            ScriptedBirth {
                label: Label::new(1, 1),
                step: 1,
                initial: InitialState::Explicit(v(40_000.0, -60.0, -50_000.0, 80.0)),
                death_step: None,
                mode_schedule: Some(vec![segment(1, 0, None), segment(31, 1, None), segment(39, 0, None), segment(56, 2, None), segment(64, 0, None)]),
            },
            ScriptedBirth {
                label: Label::new(10, 2),
                step: 10,
                initial: InitialState::Explicit(v(-50_000.0, 80.0, 40_000.0, -60.0)),
                death_step: None,
                mode_schedule: Some(vec![segment(10, 0, None), segment(36, 2, None), segment(44, 0, None), segment(61, 1, None), segment(69, 0, None)]),
            },
            ScriptedBirth {
                label: Label::new(20, 3),
                step: 20,
                initial: InitialState::Explicit(v(-10_000.0, 0.0, 0.0, 100.0)),
                death_step: None,
                mode_schedule: Some(vec![segment(20, 0, None), segment(45, 1, None), segment(53, 0, None), segment(70, 2, None), segment(78, 0, None)]),
            },
        ],
        rng_seed: 0,
        process_noise_scale: 0.0,
    }
}

/// The nonlinear counterpart of [`default_linear_script`]: the same births
/// with the turn rate set at each segment start.
pub fn default_nonlinear_script() -> ScenarioScript {
    let turn = 5.0 * PI / 180.0;
    let mut script = default_linear_script();
    for b in &mut script.births {
        if let InitialState::Explicit(x) = &mut b.initial {
            *x = Vector::from_vec(vec![x[0], x[1], x[2], x[3], 0.0]);
        }
        for seg in b.mode_schedule.iter_mut().flatten() {
            let (mode, rate) = match seg.mode {
                0 => (0, 0.0),
                1 => (1, turn),
                _ => (1, -turn),
            };
            seg.mode = mode;
            seg.turn_rate = Some(rate);
        }
    }
    script
}

/// Births at every site and step with the site's existence probability,
/// deaths with probability `1 - P_S` per step, models sampled.
pub fn random_birth_script(model: &JmsModel, steps: u32, seed: u64) -> ScenarioScript {
    let mut rng = rng(seed, TRUTH_STREAM);
    let mut births = Vec::new();
    for step in 1..=steps {
        for (i, site) in model.birth.sites.iter().enumerate() {
            if rng.gen::<f64>() >= site.existence_prob {
                continue;
            }
            let mut last = step;
            while last < steps && rng.gen::<f64>() < model.survival_prob {
                last += 1;
            }
            births.push(ScriptedBirth {
                label: Label::new(step, i as u32 + 1),
                step,
                initial: InitialState::Site(i),
                death_step: Some(last),
                mode_schedule: None,
            });
        }
    }
    ScenarioScript {
        steps,
        births,
        rng_seed: seed,
        process_noise_scale: 1.0,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRecord {
    label_birth: u32,
    label_idx: u32,
    step: u32,
    mode: usize,
    state: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanRecord {
    step: u32,
    index: usize,
    z1: f64,
    z2: f64,
    truth_birth: Option<u32>,
    truth_idx: Option<u32>,
}

fn join(v: &Vector) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Truth as CSV: `label_birth,label_idx,step,mode,state` with the state
/// components separated by `;`.
pub fn write_truth_csv<W: Write>(truths: &[TruthTrajectory], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in truths {
        for (i, (x, mode)) in t.states.iter().zip(&t.modes).enumerate() {
            out.serialize(TruthRecord {
                label_birth: t.label.birth_time,
                label_idx: t.label.birth_index,
                step: t.birth_step + i as u32,
                mode: *mode,
                state: join(x),
            })?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(r: R) -> Result<Vec<TruthTrajectory>> {
    let mut truths: Vec<TruthTrajectory> = Vec::new();
    for (i, rec) in csv::Reader::from_reader(r).deserialize::<TruthRecord>().enumerate() {
        let rec = rec?;
        let state = rec
            .state
            .split(';')
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| SimError::Record { record: i + 1, message: e.to_string() })?;
        let label = Label::new(rec.label_birth, rec.label_idx);
        match truths.last_mut().filter(|t| t.label == label) {
            Some(t) if rec.step == t.death_step + 1 => {
                t.death_step = rec.step;
                t.states.push(Vector::from_vec(state));
                t.modes.push(rec.mode);
            }
            Some(_) => return Err(SimError::Record { record: i + 1, message: "steps are not consecutive".into() }),
            None => truths.push(TruthTrajectory {
                label,
                birth_step: rec.step,
                death_step: rec.step,
                states: vec![Vector::from_vec(state)],
                modes: vec![rec.mode],
            }),
        }
    }
    Ok(truths)
}

/// Scans as CSV: `step,index,z1,z2,truth_birth,truth_idx`, truth columns
/// empty for clutter. Steps without measurements produce no rows.
pub fn write_scans_csv<W: Write>(scans: &[SimulatedScan], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in scans {
        for (index, (z, truth)) in s.scan.measurements.iter().zip(&s.truth_assoc).enumerate() {
            out.serialize(ScanRecord {
                step: s.scan.time,
                index,
                z1: z[0],
                z2: z[1],
                truth_birth: truth.map(|l| l.birth_time),
                truth_idx: truth.map(|l| l.birth_index),
            })?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads scans written by [`write_scans_csv`]; steps `1..=steps` absent
/// from the file come back empty.
pub fn read_scans_csv<R: Read>(r: R, steps: u32) -> Result<Vec<SimulatedScan>> {
    let mut scans: Vec<SimulatedScan> = (1..=steps)
        .map(|k| SimulatedScan {
            scan: Scan { time: k, measurements: Vec::new() },
            truth_assoc: Vec::new(),
        })
        .collect();
    for (i, rec) in csv::Reader::from_reader(r).deserialize::<ScanRecord>().enumerate() {
        let rec = rec?;
        let Some(s) = scans.get_mut((rec.step as usize).wrapping_sub(1)) else {
            return Err(SimError::Record { record: i + 1, message: format!("step {} outside 1..={steps}", rec.step) });
        };
        s.scan.measurements.push(Vector::from_vec(vec![rec.z1, rec.z2]));
        s.truth_assoc.push(match (rec.truth_birth, rec.truth_idx) {
            (Some(b), Some(i)) => Some(Label::new(b, i)),
            _ => None,
        });
    }
    Ok(scans)
}

/// Scan log in the interchange JSON form `[{k, measurements}]`.
pub fn scans_to_json(scans: &[SimulatedScan]) -> String {
    let plain: Vec<&Scan> = scans.iter().map(|s| &s.scan).collect();
    serde_json::to_string_pretty(&plain).expect("scans serialize")
}

pub fn scans_from_json(text: &str) -> Result<Vec<Scan>> {
    Ok(serde_json::from_str(text)?)
}
