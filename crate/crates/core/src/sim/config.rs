//! Scenario configuration and the built-in scenarios.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, DeciderConfig, DeciderKind, FeedbackMode};
use crate::equilibrium::LinearCost;
use crate::llm::{LlmClientConfig, LlmError};
use crate::network::{Link, Network, NetworkError, NodeId, Od};
use crate::routesets::RouteSetError;

const OW_NETWORK: &str = include_str!("../../assets/ow.net");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}` (expected scenario1..scenario5 or ow)")]
    UnknownScenario(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Routes(#[from] RouteSetError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinNetwork {
    Scenario1,
    Scenario2,
    Scenario3,
    Scenario4,
    Scenario5,
    Ow,
}

impl BuiltinNetwork {
    pub const ALL: [BuiltinNetwork; 6] = [
        BuiltinNetwork::Scenario1,
        BuiltinNetwork::Scenario2,
        BuiltinNetwork::Scenario3,
        BuiltinNetwork::Scenario4,
        BuiltinNetwork::Scenario5,
        BuiltinNetwork::Ow,
    ];

    /// Cost functions of the two parallel routes, for the single-OD scenarios.
    pub fn two_route_costs(self) -> Option<(LinearCost<f64>, LinearCost<f64>)> {
        let (a, b) = match self {
            BuiltinNetwork::Scenario1 => ((6.0, 2.0), (6.0, 2.0)),
            BuiltinNetwork::Scenario2 => ((10.0, 4.0), (24.0, 6.0)),
            BuiltinNetwork::Scenario3 => ((5.0, 2.0), (12.0, 3.0)),
            BuiltinNetwork::Scenario4 => ((12.0, 4.0), (24.0, 6.0)),
            BuiltinNetwork::Scenario5 => ((6.0, 2.0), (12.0, 3.0)),
            BuiltinNetwork::Ow => return None,
        };
        Some((LinearCost::new(a.0, a.1), LinearCost::new(b.0, b.1)))
    }

    pub fn network(self) -> Result<Network<f64>, NetworkError> {
        match self.two_route_costs() {
            Some((c1, c2)) => Network::new(
                [NodeId(1), NodeId(2)],
                vec![
                    Link::new(1, 1, 2, c1.free_flow, c1.slope)?,
                    Link::new(2, 1, 2, c2.free_flow, c2.slope)?,
                ],
            ),
            None => Network::from_text(OW_NETWORK),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinNetwork::Scenario1 => "scenario1",
            BuiltinNetwork::Scenario2 => "scenario2",
            BuiltinNetwork::Scenario3 => "scenario3",
            BuiltinNetwork::Scenario4 => "scenario4",
            BuiltinNetwork::Scenario5 => "scenario5",
            BuiltinNetwork::Ow => "ow",
        }
    }
}

impl fmt::Display for BuiltinNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinNetwork {
    type Err = ConfigError;

    /// Accepts `scenario3`, `3` and `ow`, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let key = lower.strip_prefix("scenario").unwrap_or(&lower);
        match key {
            "1" => Ok(BuiltinNetwork::Scenario1),
            "2" => Ok(BuiltinNetwork::Scenario2),
            "3" => Ok(BuiltinNetwork::Scenario3),
            "4" => Ok(BuiltinNetwork::Scenario4),
            "5" => Ok(BuiltinNetwork::Scenario5),
            "ow" => Ok(BuiltinNetwork::Ow),
            _ => Err(ConfigError::UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkSource {
    Builtin(BuiltinNetwork),
    /// Network text file; relative paths are resolved against the config file's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    pub origin: u32,
    pub destination: u32,
    pub travelers: u32,
}

impl Demand {
    pub fn od(&self) -> Od {
        Od::new(self.origin, self.destination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonusConfig {
    pub enabled: bool,
    /// Currency per minute saved below the reference time.
    pub rate: f64,
    pub reference_time: f64,
    #[serde(default = "default_currency")]
    pub currency: String,
}

fn default_currency() -> String {
    "RMB".to_string()
}

impl BonusConfig {
    pub fn disabled() -> Self {
        BonusConfig {
            enabled: false,
            ..Self::default()
        }
    }
}

impl Default for BonusConfig {
    fn default() -> Self {
        BonusConfig {
            enabled: true,
            rate: 0.02,
            reference_time: 40.0,
            currency: default_currency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub days: u32,
    pub runs: u32,
    pub seed: u64,
    pub travelers_per_agent: u32,
    pub k_routes: usize,
    /// Adds "You are selfish." to every profile.
    #[serde(default)]
    pub selfish: bool,
    /// Extra sentence(s) for the task section of the prompt.
    #[serde(default)]
    pub scenario_text: String,
    pub network: NetworkSource,
    pub demands: Vec<Demand>,
    pub decider: DeciderConfig,
    pub bonus: BonusConfig,
    #[serde(default)]
    pub llm: LlmClientConfig,
}

impl ScenarioConfig {
    /// Built-in settings: the five two-route scenarios (16 travelers, both routes' times
    /// perceived, bonus on, temperature 0) and the OW network (one agent per 20 travelers,
    /// five routes per OD, chosen route only, selfish profiles, no bonus, temperature 0.5).
    pub fn builtin(which: BuiltinNetwork) -> Self {
        match which {
            BuiltinNetwork::Ow => ScenarioConfig {
                name: which.name().to_string(),
                days: 100,
                runs: 3,
                seed: 42,
                travelers_per_agent: 20,
                k_routes: 5,
                selfish: true,
                scenario_text: "Every day you travel from your origin to your destination through a city road network."
                    .to_string(),
                network: NetworkSource::Builtin(which),
                demands: vec![
                    Demand {
                        origin: 1,
                        destination: 12,
                        travelers: 600,
                    },
                    Demand {
                        origin: 1,
                        destination: 13,
                        travelers: 400,
                    },
                    Demand {
                        origin: 2,
                        destination: 12,
                        travelers: 300,
                    },
                    Demand {
                        origin: 2,
                        destination: 13,
                        travelers: 400,
                    },
                ],
                decider: DeciderConfig::new(DeciderKind::Llm, FeedbackMode::ChosenOnly),
                bonus: BonusConfig::disabled(),
                llm: LlmClientConfig {
                    temperature: 0.5,
                    ..LlmClientConfig::default()
                },
            },
            _ => ScenarioConfig {
                name: which.name().to_string(),
                days: 100,
                runs: 3,
                seed: 42,
                travelers_per_agent: 1,
                k_routes: 2,
                selfish: false,
                scenario_text: "Every day you travel from the same origin to the same destination, together with \
                                15 other travelers."
                    .to_string(),
                network: NetworkSource::Builtin(which),
                demands: vec![Demand {
                    origin: 1,
                    destination: 2,
                    travelers: 16,
                }],
                decider: DeciderConfig::new(DeciderKind::Llm, FeedbackMode::AllRoutes),
                bonus: BonusConfig::default(),
                llm: LlmClientConfig::default(),
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Reads a TOML config; a relative network file path is made relative to the file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text)?;
        if let NetworkSource::File(p) = &mut config.network {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn load_network(&self) -> Result<Network<f64>, ConfigError> {
        match &self.network {
            NetworkSource::Builtin(b) => Ok(b.network()?),
            NetworkSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Ok(Network::from_text(&text)?)
            }
        }
    }

    /// Checks field ranges. Does not touch the network or the environment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.days < 1 {
            return invalid("days must be at least 1".into());
        }
        if self.runs < 1 {
            return invalid("runs must be at least 1".into());
        }
        if self.k_routes < 1 {
            return invalid("k_routes must be at least 1".into());
        }
        if self.travelers_per_agent < 1 {
            return invalid("travelers_per_agent must be at least 1".into());
        }
        if self.demands.is_empty() {
            return invalid("at least one demand is required".into());
        }
        let mut seen = BTreeSet::new();
        for d in &self.demands {
            if d.travelers == 0 {
                return invalid(format!("demand {} has no travelers", d.od()));
            }
            if !seen.insert(d.od()) {
                return invalid(format!("demand {} listed twice", d.od()));
            }
        }
        let b = &self.bonus;
        if !(b.rate >= 0.0 && b.rate.is_finite() && b.reference_time >= 0.0 && b.reference_time.is_finite()) {
            return invalid("bonus rate and reference_time must be finite and non-negative".into());
        }
        self.decider.validate()?;
        self.decider.mock_policy.validate().map_err(ConfigError::Invalid)?;
        if self.decider.kind == DeciderKind::Llm {
            self.llm.validate()?;
        }
        Ok(())
    }
}
