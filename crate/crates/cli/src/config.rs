//! Experiment documents.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use mhscale_core::cylinder;
use mhscale_core::lattice::{BoundaryMode, Window, WindowSpec};
use mhscale_core::model::{Configuration, InteractionModel, ModelSpec};
use mhscale_core::sampler::{IncrementFamily, InitMode};
use mhscale_core::scaling::RunPlan;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_REPLICAS: usize = 8;
pub const DEFAULT_THINNING: usize = 10;

fn default_replicas() -> usize {
    DEFAULT_REPLICAS
}

fn default_thinning() -> usize {
    DEFAULT_THINNING
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One experiment: model, window, run settings, seed and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub graph: WindowSpec,
    pub run: RunBlock,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    pub steps: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Defaults to an exact draw for quadratic models and burn-in otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub increments: IncrementFamily,
    /// Known value of `s`; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<Vec<String>>,
    /// Negative control for the determinism check of `oracle-check`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub inject_seed_corruption: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    ExactGaussian,
    BurnIn {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    Given(Vec<f64>),
}

/// Subcommands, used to check which run fields are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Sample,
    SweepTau,
    SweepN,
    EstimateS,
    DirichletCheck,
    CltCheck,
    OracleCheck,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Sample => "sample",
            CommandKind::SweepTau => "sweep-tau",
            CommandKind::SweepN => "sweep-n",
            CommandKind::EstimateS => "estimate-s",
            CommandKind::DirichletCheck => "dirichlet-check",
            CommandKind::CltCheck => "clt-check",
            CommandKind::OracleCheck => "oracle-check",
        }
    }
}

/// Checks in `oracle-check`, in the order they run.
pub const BATTERY: [&str; 5] = [
    "c_identity",
    "acceptance_quadrature",
    "detailed_balance",
    "s2_gaussian",
    "determinism",
];

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_tau(field: &str, tau: f64) -> Result<(), CliError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(bad(field, format!("must be finite and >= 0, got {tau}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization with the output directory
    /// left out, so that moving the outputs keeps the hash.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn tau(&self) -> Result<f64, CliError> {
        self.run.tau.ok_or_else(|| bad("run.tau", "required by this command"))
    }

    pub fn n_list(&self) -> Result<&[usize], CliError> {
        self.run
            .n_list
            .as_deref()
            .ok_or_else(|| bad("run.n_list", "required by this command"))
    }

    pub fn boundary(&self) -> Result<BoundaryMode, CliError> {
        self.graph.boundary().map_err(|e| bad("graph.boundary_mode", e))
    }

    pub fn build_model(&self) -> Result<InteractionModel, CliError> {
        InteractionModel::from_spec(&self.model, self.graph.d).map_err(|e| bad("model", e))
    }

    pub fn build_window(&self, model: &InteractionModel) -> Result<Arc<Window>, CliError> {
        Window::from_spec(&self.graph, Some(model.neighborhood()))
            .map(Arc::new)
            .map_err(|e| bad("graph", e))
    }

    /// Initial-state rule for chains on `window`.
    pub fn init_mode(&self, model: &InteractionModel, window: &Arc<Window>) -> Result<InitMode, CliError> {
        match &self.run.init {
            None if model.is_quadratic() => Ok(InitMode::ExactGaussian),
            None => Ok(InitMode::BurnIn { steps: None, tau: None }),
            Some(InitSpec::ExactGaussian) => Ok(InitMode::ExactGaussian),
            Some(InitSpec::BurnIn { steps, tau }) => Ok(InitMode::BurnIn {
                steps: *steps,
                tau: *tau,
            }),
            Some(InitSpec::Given(values)) => Configuration::new(window.clone(), values.clone())
                .map(InitMode::Given)
                .map_err(|e| bad("run.init.given", e)),
        }
    }

    pub fn plan(&self, init: InitMode) -> RunPlan {
        RunPlan {
            steps: self.run.steps,
            replicas: self.run.replicas,
            seed: self.seed,
            init,
            increments: self.run.increments,
            thinning: self.run.thinning,
        }
    }

    /// Range checks shared by every command, then the fields `command`
    /// needs.
    pub fn validate_for(&self, command: CommandKind) -> Result<(), CliError> {
        let run = &self.run;
        if run.steps == 0 {
            return Err(bad("run.steps", "must be >= 1"));
        }
        if run.replicas == 0 {
            return Err(bad("run.replicas", "must be >= 1"));
        }
        if run.thinning == 0 {
            return Err(bad("run.thinning", "must be >= 1"));
        }
        if let Some(t) = run.tau {
            check_tau("run.tau", t)?;
        }
        if let Some(grid) = &run.tau_grid {
            if grid.is_empty() {
                return Err(bad("run.tau_grid", "must not be empty"));
            }
            for (i, &t) in grid.iter().enumerate() {
                check_tau(&format!("run.tau_grid[{i}]"), t)?;
            }
        }
        if let Some(list) = &run.n_list {
            if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("run.n_list", "must be positive and strictly increasing"));
            }
        }
        if let Some(s) = run.s_hat {
            if !(s.is_finite() && s > 0.0) {
                return Err(bad("run.s_hat", format!("must be finite and > 0, got {s}")));
            }
        }
        if let Some(InitSpec::BurnIn { tau: Some(t), .. }) = &run.init {
            check_tau("run.init.burn_in.tau", *t)?;
        }
        if let Some(name) = &run.cylinder {
            cylinder::builtin(name).map_err(|e| bad("run.cylinder", e))?;
        }
        if let Some(battery) = &run.battery {
            if battery.is_empty() {
                return Err(bad("run.battery", "must name at least one check"));
            }
            if let Some(b) = battery.iter().find(|b| !BATTERY.contains(&b.as_str())) {
                return Err(bad(
                    "run.battery",
                    format!("unknown check {b:?}; expected one of {}", BATTERY.join(", ")),
                ));
            }
        }
        self.boundary()?;
        let model = self.build_model()?;
        let uses_window = !matches!(command, CommandKind::SweepN | CommandKind::DirichletCheck);
        if uses_window {
            let window = self.build_window(&model)?;
            self.init_mode(&model, &window)?;
        } else if matches!(run.init, Some(InitSpec::Given(_))) {
            return Err(bad("run.init", "a given state cannot be used across window sizes"));
        }
        match command {
            CommandKind::Sample | CommandKind::CltCheck => {
                self.tau()?;
            }
            CommandKind::SweepTau => {
                if run.tau_grid.is_none() {
                    return Err(bad("run.tau_grid", "required by this command"));
                }
            }
            CommandKind::SweepN => {
                self.tau()?;
                self.n_list()?;
            }
            CommandKind::DirichletCheck => {
                self.tau()?;
                self.n_list()?;
                if run.cylinder.is_none() {
                    return Err(bad("run.cylinder", "required by this command"));
                }
            }
            CommandKind::EstimateS | CommandKind::OracleCheck => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"family": "gaussian_product", "parameters": {"variance": 1.0}},
        "graph": {"d": 1, "n": 10},
        "run": {"tau": 1.0, "steps": 100},
        "seed": 3
    }"#;

    #[test]
    fn defaults_and_round_trip() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.run.replicas, 8);
        assert_eq!(c.run.thinning, 10);
        assert_eq!(c.output_dir, PathBuf::from("out"));
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        c.validate_for(CommandKind::Sample).unwrap();
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = BASE.replace("\"steps\": 100", "\"steps\": 100, \"stpes\": 1");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("stpes") && err.contains("line 4"), "{err}");
    }

    #[test]
    fn range_errors_name_the_field() {
        let mut c = ExperimentConfig::from_json(BASE).unwrap();
        c.run.tau = Some(-1.0);
        let err = c.validate_for(CommandKind::Sample).unwrap_err().to_string();
        assert!(err.contains("run.tau"), "{err}");
        c.run.tau = Some(1.0);
        c.run.steps = 0;
        assert!(c
            .validate_for(CommandKind::Sample)
            .unwrap_err()
            .to_string()
            .contains("run.steps"));
    }

    #[test]
    fn command_requirements() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert!(c.validate_for(CommandKind::SweepTau).is_err());
        assert!(c.validate_for(CommandKind::SweepN).is_err());
        let mut d = c.clone();
        d.run.n_list = Some(vec![5, 10]);
        d.run.cylinder = Some("constant".into());
        assert!(d.validate_for(CommandKind::DirichletCheck).is_err());
        d.run.cylinder = Some("sin_x1".into());
        d.validate_for(CommandKind::DirichletCheck).unwrap();
        let mut e = c.clone();
        e.run.battery = Some(vec![]);
        assert!(e.validate_for(CommandKind::OracleCheck).is_err());
    }

    #[test]
    fn hash_tracks_content_only() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let reformatted = ExperimentConfig::from_json(&BASE.replace('\n', " ")).unwrap();
        assert_eq!(a.content_hash(), reformatted.content_hash());
        let mut moved = a.clone();
        moved.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.content_hash(), moved.content_hash());
        let mut b = a.clone();
        b.seed = 4;
        assert_ne!(a.content_hash(), b.content_hash());
        let mut c = a.clone();
        c.run.tau = Some(1.0 + 1e-15);
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn init_specs_parse() {
        let text = BASE.replace(
            "\"steps\": 100",
            "\"steps\": 100, \"init\": {\"burn_in\": {\"steps\": 5}}",
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(
            c.run.init,
            Some(InitSpec::BurnIn {
                steps: Some(5),
                tau: None
            })
        );
        let text = BASE.replace("\"steps\": 100", "\"steps\": 100, \"init\": {\"given\": [0.0]}");
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert!(c.validate_for(CommandKind::Sample).is_err());
    }
}
