//! Traveler agents: profiles, experience memory and the rule-based choice models.

mod choice;
mod memory;
mod profile;

pub use choice::{
    argmin_index, mnl_choose, mnl_probabilities, prc_choose, prc_choose_from, sample_index, uniform_choose,
};
pub use memory::{ewmatt_update, RouteMemory};
pub use profile::{sample_profile, Profile, Vocabulary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::MockPolicy;
use crate::network::Od;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidOmega(f64),
    #[error("MNL scale alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("observed travel time must be non-negative, got {0}")]
    NegativeObservation(f64),
    #[error("route index {index} out of range for {count} routes")]
    ChoiceOutOfRange { index: usize, count: usize },
    #[error("no observation for the chosen route {0}")]
    MissingChosenObservation(usize),
    #[error("expected {expected} route observations, got {got}")]
    ObservationLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeciderKind {
    Llm,
    Mnl,
    Prc,
    Random,
    Mock,
}

impl std::str::FromStr for DeciderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(DeciderKind::Llm),
            "mnl" => Ok(DeciderKind::Mnl),
            "prc" => Ok(DeciderKind::Prc),
            "random" => Ok(DeciderKind::Random),
            "mock" => Ok(DeciderKind::Mock),
            other => Err(format!(
                "unknown decider `{other}` (expected llm, mnl, prc, random or mock)"
            )),
        }
    }
}

/// Which travel times an agent perceives at the end of each day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    ChosenOnly,
    AllRoutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeciderConfig {
    pub kind: DeciderKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub feedback: FeedbackMode,
    #[serde(default)]
    pub mock_policy: MockPolicy,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_omega() -> f64 {
    0.2
}

impl DeciderConfig {
    pub fn new(kind: DeciderKind, feedback: FeedbackMode) -> Self {
        DeciderConfig {
            kind,
            alpha: default_alpha(),
            omega: default_omega(),
            feedback,
            mock_policy: MockPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(AgentError::InvalidOmega(self.omega));
        }
        if self.kind == DeciderKind::Mnl && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(AgentError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

/// What the agent remembers about the previous day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Yesterday {
    pub chosen: usize,
    /// Per route; `None` for routes whose time was not perceived.
    pub observed: Vec<Option<f64>>,
    pub bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub od: Od,
    pub profile: Profile,
    /// Number of travelers this agent stands for.
    pub travelers: u32,
    pub memories: Vec<RouteMemory>,
    /// Free-flow time per route; stands in for EWMATT before a route has been observed.
    pub free_flow_times: Vec<f64>,
    pub yesterday: Option<Yesterday>,
    pub cumulative_bonus: f64,
    pub days_experienced: u32,
    pub rng_seed: u64,
}

impl AgentState {
    pub fn new(id: usize, od: Od, profile: Profile, travelers: u32, free_flow_times: Vec<f64>, rng_seed: u64) -> Self {
        AgentState {
            id,
            od,
            profile,
            travelers,
            memories: vec![RouteMemory::default(); free_flow_times.len()],
            free_flow_times,
            yesterday: None,
            cumulative_bonus: 0.0,
            days_experienced: 0,
            rng_seed,
        }
    }

    pub fn route_count(&self) -> usize {
        self.memories.len()
    }

    /// EWMATT per route, with the free-flow time for routes never observed.
    pub fn effective_ewmatt(&self) -> Vec<f64> {
        self.memories
            .iter()
            .zip(&self.free_flow_times)
            .map(|(m, ff)| m.ewmatt.unwrap_or(*ff))
            .collect()
    }

    /// Applies one day's experience: the chosen route's count, EWMATT updates for every
    /// observed route, yesterday's record and the bonus account.
    pub fn update_memory(
        &mut self,
        chosen: usize,
        observed: &[Option<f64>],
        bonus: f64,
        omega: f64,
    ) -> Result<(), AgentError> {
        let count = self.route_count();
        if chosen >= count {
            return Err(AgentError::ChoiceOutOfRange { index: chosen, count });
        }
        if observed.len() != count {
            return Err(AgentError::ObservationLength {
                expected: count,
                got: observed.len(),
            });
        }
        if observed[chosen].is_none() {
            return Err(AgentError::MissingChosenObservation(chosen));
        }
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(AgentError::InvalidOmega(omega));
        }
        if let Some(bad) = observed.iter().flatten().find(|t| !(**t >= 0.0)) {
            return Err(AgentError::NegativeObservation(*bad));
        }
        for (memory, time) in self.memories.iter_mut().zip(observed) {
            if let Some(t) = time {
                memory.observe(*t, omega)?;
            }
        }
        self.memories[chosen].chosen_count += 1;
        self.cumulative_bonus = round_cents(self.cumulative_bonus + bonus);
        self.days_experienced += 1;
        self.yesterday = Some(Yesterday {
            chosen,
            observed: observed.to_vec(),
            bonus,
        });
        Ok(())
    }
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Daily bonus `rate * max(0, reference_time - travel_time)`, rounded to cents.
pub fn compute_bonus(travel_time: f64, bonus_rate: f64, reference_time: f64) -> f64 {
    round_cents(bonus_rate * (reference_time - travel_time).max(0.0))
}
