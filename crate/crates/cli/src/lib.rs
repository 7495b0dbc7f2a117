//! Monte Carlo harness for the JMS-GLMB tracker: configuration, scenario
//! presets, batch runs, scan replay and CSV output.

pub mod config;
pub mod output;

pub use config::{EmitFlags, RunConfig, Scenario, ScenarioFile, TruthSource};

use jmsglmb::glmb::{filter_step, GlmbDensity, MultiTargetEstimate, Scan};
use jmsglmb::jms::JmsModel;
use jmsglmb::metrics::{mode_probability_trace, ospa_trace, ModeTrace, OspaRow};
use jmsglmb::simulator::{
    scans_to_json, simulate_scans, simulate_truth, write_scans_csv, write_truth_csv, SimError, SimulatedScan,
    TruthTrajectory,
};
use output::num;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numerical failure in run {run} at step {step}: {message}")]
    Numerical { run: usize, step: u32, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

fn sim_error(run: usize, e: SimError) -> CliError {
    match e {
        SimError::Script(_) | SimError::Model(_) => CliError::Config(format!("scenario: {e}")),
        other => CliError::Numerical {
            run,
            step: 0,
            message: other.to_string(),
        },
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Everything one Monte Carlo run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub truths: Vec<TruthTrajectory>,
    pub estimates: Vec<MultiTargetEstimate>,
    pub ospa: Vec<OspaRow>,
    /// Model probabilities of the track matched to the first truth target.
    pub target_modes: ModeTrace,
    pub ignored_measurements: Vec<usize>,
    pub seconds: f64,
}

/// Per-step means over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: u32,
    pub runs: usize,
    pub ospa_total: f64,
    pub ospa_loc: f64,
    pub ospa_card: f64,
    pub card_truth: f64,
    pub card_est: f64,
    pub ignored_measurements: usize,
    /// Runs in which the track matched to the first truth target is reported.
    pub target_runs: usize,
    pub mode_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub results: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
    pub output_dir: PathBuf,
}

struct Simulated {
    truths: Vec<TruthTrajectory>,
    scans: Vec<SimulatedScan>,
}

fn simulate(config: &RunConfig, scenario: &Scenario, run: usize) -> Result<Simulated, CliError> {
    let seed = config.seed.wrapping_add(run as u64);
    let script = scenario.script_for(config.truth, seed);
    let truths = simulate_truth(&scenario.model, &script).map_err(|e| sim_error(run, e))?;
    let scans = simulate_scans(&truths, &scenario.model, scenario.steps, seed).map_err(|e| sim_error(run, e))?;
    Ok(Simulated { truths, scans })
}

/// Result of filtering a scan sequence from the empty set.
struct Filtered {
    estimates: Vec<MultiTargetEstimate>,
    ignored: Vec<usize>,
    hypotheses: Vec<usize>,
}

fn filter_scans<'a>(
    scans: impl Iterator<Item = &'a Scan>,
    model: &JmsModel,
    config: &RunConfig,
    run: usize,
    snapshot_dir: Option<&Path>,
) -> Result<Filtered, CliError> {
    let mut density = GlmbDensity::empty_set();
    let mut out = Filtered {
        estimates: Vec::new(),
        ignored: Vec::new(),
        hypotheses: Vec::new(),
    };
    for scan in scans {
        let step = filter_step(&density, scan, model, &config.policy, scan.time).map_err(|e| CliError::Numerical {
            run,
            step: scan.time,
            message: e.to_string(),
        })?;
        density = step.density;
        if let Some(dir) = snapshot_dir {
            write_text(&dir.join(format!("density_{:04}.json", scan.time)), &density.to_json())?;
        }
        out.ignored.push(step.diagnostics.ignored_measurements);
        out.hypotheses.push(step.diagnostics.hypotheses);
        out.estimates.push(step.estimate);
    }
    Ok(out)
}

fn run_one(config: &RunConfig, scenario: &Scenario, run: usize) -> Result<RunResult, CliError> {
    let started = Instant::now();
    let sim = simulate(config, scenario, run)?;
    let dir = config.output_dir.join(format!("run_{run}"));
    create_dir(&dir)?;
    let snapshots = config.emit.density_snapshots.then_some(dir.as_path());
    let filtered = filter_scans(sim.scans.iter().map(|s| &s.scan), &scenario.model, config, run, snapshots)?;
    let ospa = ospa_trace(&filtered.estimates, &sim.truths, &config.ospa);
    let target_modes = match sim.truths.first() {
        Some(t) => mode_probability_trace(&filtered.estimates, t),
        None => ModeTrace {
            label: None,
            rows: Vec::new(),
        },
    };
    let model = &scenario.model;
    if config.emit.estimates {
        output::write_estimates(&dir.join("estimates.csv"), run, &filtered.estimates, model.state_dim())?;
    }
    if config.emit.ospa {
        output::write_ospa(&dir.join("ospa.csv"), &ospa)?;
    }
    if config.emit.modes {
        output::write_modes(&dir.join("modes.csv"), run, &filtered.estimates, model.mode_count())?;
    }
    let seconds = started.elapsed().as_secs_f64();
    log::info!("run {run} finished in {seconds:.2} s");
    Ok(RunResult {
        run,
        seed: config.seed.wrapping_add(run as u64),
        truths: sim.truths,
        estimates: filtered.estimates,
        ospa,
        target_modes,
        ignored_measurements: filtered.ignored,
        seconds,
    })
}

/// Means over runs, accumulated in run order.
pub fn summarize(results: &[RunResult], steps: u32, modes: usize) -> Vec<SummaryRow> {
    let runs = results.len();
    (1..=steps)
        .map(|step| {
            let mut row = SummaryRow {
                step,
                runs,
                ospa_total: 0.0,
                ospa_loc: 0.0,
                ospa_card: 0.0,
                card_truth: 0.0,
                card_est: 0.0,
                ignored_measurements: 0,
                target_runs: 0,
                mode_probs: vec![0.0; modes],
            };
            let i = step as usize - 1;
            for r in results {
                if let Some(o) = r.ospa.get(i) {
                    row.ospa_total += o.ospa_total;
                    row.ospa_loc += o.ospa_loc;
                    row.ospa_card += o.ospa_card;
                    row.card_truth += o.card_truth as f64;
                    row.card_est += o.card_est as f64;
                }
                row.ignored_measurements += r.ignored_measurements.get(i).copied().unwrap_or(0);
                if let Some((_, p)) = r.target_modes.rows.iter().find(|(k, _)| *k == step) {
                    row.target_runs += 1;
                    for (acc, v) in row.mode_probs.iter_mut().zip(p) {
                        *acc += v;
                    }
                }
            }
            let n = runs.max(1) as f64;
            row.ospa_total /= n;
            row.ospa_loc /= n;
            row.ospa_card /= n;
            row.card_truth /= n;
            row.card_est /= n;
            if row.target_runs > 0 {
                for p in &mut row.mode_probs {
                    *p /= row.target_runs as f64;
                }
            }
            row
        })
        .collect()
}

fn write_summary(path: &Path, rows: &[SummaryRow], modes: usize) -> Result<(), CliError> {
    let mut header: Vec<String> = [
        "step",
        "runs",
        "ospa_total",
        "ospa_loc",
        "ospa_card",
        "card_truth",
        "card_est",
        "ignored_measurements",
        "target_runs",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=modes).map(|r| format!("p_mode_{r}")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.step.to_string(),
                r.runs.to_string(),
                num(r.ospa_total),
                num(r.ospa_loc),
                num(r.ospa_card),
                num(r.card_truth),
                num(r.card_est),
                r.ignored_measurements.to_string(),
                r.target_runs.to_string(),
            ];
            row.extend(r.mode_probs.iter().map(|&p| num(p)));
            row
        })
        .collect();
    output::write_table(path, &header, &body)
}

fn write_timing(path: &Path, results: &[RunResult]) -> Result<(), CliError> {
    let secs: Vec<f64> = results.iter().map(|r| r.seconds).collect();
    let n = secs.len().max(1) as f64;
    let mean = secs.iter().sum::<f64>() / n;
    let min = secs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = secs.iter().copied().fold(0.0, f64::max);
    let header: Vec<String> = ["run", "seconds"].map(String::from).to_vec();
    let mut rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| vec![r.run.to_string(), num(r.seconds)])
        .collect();
    rows.push(vec!["mean".into(), num(mean)]);
    rows.push(vec!["min".into(), num(min)]);
    rows.push(vec!["max".into(), num(max)]);
    output::write_table(path, &header, &rows)
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))
}

/// Simulates and filters `config.runs` Monte Carlo runs, writing per-run
/// files under `output_dir/run_r`, then `summary.csv` and `timing.csv`.
/// Wall-clock times go only to `timing.csv`, so every other file depends
/// on the seed alone.
pub fn run(config: &RunConfig) -> Result<RunReport, CliError> {
    let scenario = config.validate()?;
    create_dir(&config.output_dir)?;
    let pool = thread_pool(config.threads)?;
    let results: Vec<RunResult> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_one(config, &scenario, r))
            .collect::<Result<_, _>>()
    })?;
    let modes = scenario.model.mode_count();
    let summary = summarize(&results, scenario.steps, modes);
    write_summary(&config.output_dir.join("summary.csv"), &summary, modes)?;
    write_timing(&config.output_dir.join("timing.csv"), &results)?;
    Ok(RunReport {
        results,
        summary,
        output_dir: config.output_dir.clone(),
    })
}

/// Parses a scan log, reporting the first record that breaks the schema.
pub fn parse_scans(text: &str, model: &JmsModel) -> Result<Vec<Scan>, CliError> {
    let records: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| CliError::Schema(format!("scan log is not a JSON array: {e}")))?;
    let dim = model.sensor.measurement_dim();
    let mut scans: Vec<Scan> = Vec::with_capacity(records.len());
    for (i, record) in records.into_iter().enumerate() {
        let scan: Scan = serde_json::from_value(record).map_err(|e| CliError::Schema(format!("record {i}: {e}")))?;
        if scan.time == 0 {
            return Err(CliError::Schema(format!("record {i}: k must be at least 1")));
        }
        if let Some(prev) = scans.last() {
            if scan.time <= prev.time {
                return Err(CliError::Schema(format!(
                    "record {i}: k = {} does not follow k = {}",
                    scan.time, prev.time
                )));
            }
        }
        for (j, z) in scan.measurements.iter().enumerate() {
            if z.len() != dim {
                return Err(CliError::Schema(format!(
                    "record {i}: measurement {j} has {} values, expected {dim}",
                    z.len()
                )));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Schema(format!("record {i}: measurement {j} is not finite")));
            }
        }
        scans.push(scan);
    }
    Ok(scans)
}

/// Per-step record of a replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub step: u32,
    pub measurements: usize,
    pub ignored_measurements: usize,
    pub hypotheses: usize,
    pub cardinality: usize,
}

/// Filters a recorded scan log and writes `estimates.csv`, `modes.csv`
/// and `summary.csv` to `config.output_dir`.
pub fn replay(config: &RunConfig, scan_file: &Path) -> Result<Vec<ReplayRow>, CliError> {
    let scenario = config.validate()?;
    let text = std::fs::read_to_string(scan_file).map_err(|e| CliError::io(scan_file, e))?;
    let scans = parse_scans(&text, &scenario.model)?;
    create_dir(&config.output_dir)?;
    let snapshots = config.emit.density_snapshots.then_some(config.output_dir.as_path());
    let filtered = filter_scans(scans.iter(), &scenario.model, config, 0, snapshots)?;
    let model = &scenario.model;
    if config.emit.estimates {
        output::write_estimates(
            &config.output_dir.join("estimates.csv"),
            0,
            &filtered.estimates,
            model.state_dim(),
        )?;
    }
    if config.emit.modes {
        output::write_modes(&config.output_dir.join("modes.csv"), 0, &filtered.estimates, model.mode_count())?;
    }
    let rows: Vec<ReplayRow> = scans
        .iter()
        .zip(&filtered.estimates)
        .enumerate()
        .map(|(i, (scan, est))| ReplayRow {
            step: scan.time,
            measurements: scan.measurements.len(),
            ignored_measurements: filtered.ignored[i],
            hypotheses: filtered.hypotheses[i],
            cardinality: est.cardinality,
        })
        .collect();
    let total_ignored: usize = rows.iter().map(|r| r.ignored_measurements).sum();
    if total_ignored > 0 {
        log::warn!("{total_ignored} measurements outside the observation region were ignored");
    }
    let header: Vec<String> = ["step", "measurements", "ignored_measurements", "hypotheses", "cardinality"]
        .map(String::from)
        .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                r.measurements.to_string(),
                r.ignored_measurements.to_string(),
                r.hypotheses.to_string(),
                r.cardinality.to_string(),
            ]
        })
        .collect();
    output::write_table(&config.output_dir.join("summary.csv"), &header, &body)?;
    Ok(rows)
}

/// Writes the model and script (`scenario.toml`), the truth and the scans
/// that run `run` of `config` would use.
pub fn export_scenario(config: &RunConfig, run: usize) -> Result<(), CliError> {
    let scenario = config.validate()?;
    let sim = simulate(config, &scenario, run)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let file = ScenarioFile {
        model: scenario.model.clone(),
        script: Some(scenario.script_for(config.truth, config.seed.wrapping_add(run as u64))),
    };
    write_text(&dir.join("scenario.toml"), &file.to_toml())?;
    let truth_path = dir.join("truth.csv");
    let f = std::fs::File::create(&truth_path).map_err(|e| CliError::io(&truth_path, e))?;
    write_truth_csv(&sim.truths, f).map_err(|e| CliError::io(&truth_path, e))?;
    let scans_path = dir.join("scans.csv");
    let f = std::fs::File::create(&scans_path).map_err(|e| CliError::io(&scans_path, e))?;
    write_scans_csv(&sim.scans, f).map_err(|e| CliError::io(&scans_path, e))?;
    write_text(&dir.join("scans.json"), &scans_to_json(&sim.scans))
}
