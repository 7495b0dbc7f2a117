//! Run configuration and scenario resolution.

use crate::CliError;
use jmsglmb::glmb::TruncationPolicy;
use jmsglmb::jms::{JmsModel, LinearScenarioParams, NonlinearScenarioParams};
use jmsglmb::metrics::OspaParams;
use jmsglmb::simulator::{default_linear_script, default_nonlinear_script, random_birth_script, ScenarioScript};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitFlags {
    pub estimates: bool,
    pub ospa: bool,
    pub modes: bool,
    pub density_snapshots: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            estimates: true,
            ospa: true,
            modes: true,
            density_snapshots: false,
        }
    }
}

/// Where ground truth comes from: the scenario's fixed script, or random
/// births drawn per run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    #[default]
    Scripted,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `linear`, `nonlinear`, or a path to a scenario file.
    pub scenario: String,
    pub runs: usize,
    pub seed: u64,
    /// Overrides the script length.
    pub steps: Option<u32>,
    pub truth: TruthSource,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub policy: TruncationPolicy,
    pub ospa: OspaParams,
    pub emit: EmitFlags,
    pub linear: LinearScenarioParams,
    pub nonlinear: NonlinearScenarioParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "linear".to_string(),
            runs: 1,
            seed: 0,
            steps: None,
            truth: TruthSource::Scripted,
            threads: 0,
            output_dir: PathBuf::from("output"),
            policy: TruncationPolicy::default(),
            ospa: OspaParams::default(),
            emit: EmitFlags::default(),
            linear: LinearScenarioParams::default(),
            nonlinear: NonlinearScenarioParams::default(),
        }
    }
}

/// A model with an optional script. Without a script, truth is drawn with
/// random births.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub model: JmsModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScenarioScript>,
}

impl ScenarioFile {
    pub fn parse(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("scenario: cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("scenario file {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// A model plus the script each run starts from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: JmsModel,
    pub script: Option<ScenarioScript>,
    pub steps: u32,
}

impl Scenario {
    /// Script with the given seed. A shortened scripted scenario keeps
    /// only the births inside the horizon.
    pub fn script_for(&self, truth: TruthSource, seed: u64) -> ScenarioScript {
        match (&self.script, truth) {
            (Some(script), TruthSource::Scripted) => ScenarioScript {
                steps: self.steps,
                rng_seed: seed,
                births: script.births.iter().filter(|b| b.step <= self.steps).cloned().collect(),
                ..script.clone()
            },
            _ => random_birth_script(&self.model, self.steps, seed),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every constraint that parsing alone does not enforce.
    pub fn validate(&self) -> Result<Scenario, CliError> {
        if self.runs < 1 {
            return Err(CliError::Config("runs: must be at least 1".into()));
        }
        if self.steps == Some(0) {
            return Err(CliError::Config("steps: must be at least 1".into()));
        }
        self.policy
            .validate()
            .map_err(|e| CliError::Config(format!("policy: {e}")))?;
        self.ospa
            .validate()
            .map_err(|e| CliError::Config(format!("ospa: {e}")))?;
        let scenario = self.scenario()?;
        if self.truth == TruthSource::Scripted && scenario.script.is_some() {
            scenario
                .script_for(self.truth, self.seed)
                .validate(&scenario.model)
                .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        }
        Ok(scenario)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let (model, script) = match self.scenario.as_str() {
            "linear" => (
                self.linear
                    .build()
                    .map_err(|e| CliError::Config(format!("linear: {e}")))?,
                Some(default_linear_script()),
            ),
            "nonlinear" => (
                self.nonlinear
                    .build()
                    .map_err(|e| CliError::Config(format!("nonlinear: {e}")))?,
                Some(default_nonlinear_script()),
            ),
            path => {
                let path = Path::new(path);
                if !path.exists() {
                    return Err(CliError::Config(format!(
                        "scenario: `{}` is neither a preset nor an existing file",
                        path.display()
                    )));
                }
                let file = ScenarioFile::parse(path)?;
                file.model
                    .validate()
                    .map_err(|e| CliError::Config(format!("scenario: model: {e}")))?;
                (file.model, file.script)
            }
        };
        let steps = self
            .steps
            .or(script.as_ref().map(|s| s.steps))
            .unwrap_or(100);
        Ok(Scenario { model, script, steps })
    }
}
