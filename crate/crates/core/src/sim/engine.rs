//! Agents, deciders and the single-day loop: choose, load, perceive, update.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{BonusConfig, ConfigError, ScenarioConfig};
use crate::agent::{
    compute_bonus, mnl_choose, prc_choose, sample_profile, uniform_choose, AgentError, AgentState, DeciderConfig,
    DeciderKind, FeedbackMode,
};
use crate::llm::{build_prompt, mock_choose, Exchange, LlmClient, PromptContext};
use crate::network::{load_network, LinkId, Network, NetworkError, Od};
use crate::routesets::{k_shortest_routes, RouteSet};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("day {day}: OD {od} carries {got} travelers, expected {expected}")]
    Conservation { day: u32, od: Od, expected: u64, got: u64 },
    #[error("day {day}: logged route times differ from a reload of the logged flows")]
    Replay { day: u32 },
    #[error("day {day}: agent {agent} chose route {choice} of {count}")]
    BadChoice {
        day: u32,
        agent: usize,
        choice: usize,
        count: usize,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}:{line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
}

/// Network, route sets, agents and demand of one replication.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: Network<f64>,
    pub route_sets: Vec<RouteSet<f64>>,
    pub agents: Vec<AgentState>,
    pub demands: BTreeMap<Od, f64>,
}

impl Scenario {
    pub fn route_set(&self, od: Od) -> &RouteSet<f64> {
        self.route_sets
            .iter()
            .find(|s| s.od == od)
            .expect("route set exists for every demand")
    }
}

/// Generator for agent `agent`'s random stream on `day`; day 0 is reserved for set-up.
/// Streams do not depend on the order agents are processed in.
pub fn agent_rng(seed: u64, agent: usize, day: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng.set_word_pos(u128::from(day) << 32);
    rng
}

/// Builds the network, the k-route sets and the agents for replication seed `seed`.
///
/// Each OD's demand is split into agents of `travelers_per_agent` travelers; a remainder
/// forms one smaller agent.
pub fn build_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ConfigError> {
    config.validate()?;
    let network = config.load_network()?;
    let mut route_sets = Vec::new();
    let mut agents = Vec::new();
    let mut demands = BTreeMap::new();
    let n = config.travelers_per_agent;
    for d in &config.demands {
        let od = d.od();
        let set = k_shortest_routes(&network, od.origin, od.destination, config.k_routes)?;
        if let crate::llm::MockPolicy::Fixed { route } = config.decider.mock_policy {
            if config.decider.kind == DeciderKind::Mock && route >= set.len() {
                return Err(ConfigError::Invalid(format!(
                    "fixed mock route {route} outside the {} routes of {od}",
                    set.len()
                )));
            }
        }
        let mut left = d.travelers;
        while left > 0 {
            let travelers = left.min(n);
            left -= travelers;
            let id = agents.len();
            let mut profile = sample_profile(agent_rng(seed, id, 0).next_u64());
            profile.selfish = config.selfish;
            agents.push(AgentState::new(
                id,
                od,
                profile,
                travelers,
                set.free_flow_times.clone(),
                seed,
            ));
        }
        demands.insert(od, f64::from(d.travelers));
        route_sets.push(set);
    }
    Ok(Scenario {
        network,
        route_sets,
        agents,
        demands,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub choice: usize,
    pub reason: Option<String>,
    pub fallback: bool,
    pub exchanges: Vec<Exchange>,
}

impl Decision {
    pub fn route(choice: usize) -> Self {
        Decision {
            choice,
            ..Decision::default()
        }
    }
}

/// A route-choice strategy. Implementations must be pure in `(state, day, rng)` so that runs
/// are reproducible regardless of evaluation order.
pub trait Decide: Sync {
    fn decide(&self, state: &AgentState, day: u32, rng: &mut ChaCha8Rng) -> Decision;

    /// Number of agents that may be decided concurrently.
    fn parallelism(&self) -> usize {
        1
    }
}

/// MNL, PRC, uniform random and scripted mock deciders. All but the mock draw uniformly on
/// day 1; mock policies apply from day 1.
#[derive(Debug, Clone)]
pub struct RuleDecider {
    pub config: DeciderConfig,
}

impl Decide for RuleDecider {
    fn decide(&self, state: &AgentState, day: u32, rng: &mut ChaCha8Rng) -> Decision {
        let n = state.route_count();
        let choice = match self.config.kind {
            DeciderKind::Mock => mock_choose(state, &self.config.mock_policy, day, rng),
            _ if day <= 1 => uniform_choose(n, rng),
            DeciderKind::Mnl => mnl_choose(state, self.config.alpha, rng),
            DeciderKind::Prc => prc_choose(state),
            DeciderKind::Random | DeciderKind::Llm => uniform_choose(n, rng),
        };
        Decision::route(choice)
    }
}

pub struct LlmDecider {
    pub client: LlmClient,
    pub context: PromptContext,
}

impl Decide for LlmDecider {
    fn decide(&self, state: &AgentState, day: u32, rng: &mut ChaCha8Rng) -> Decision {
        if day <= 1 {
            return Decision::route(uniform_choose(state.route_count(), rng));
        }
        let prompt = build_prompt(state, state.route_count(), &self.context);
        let d = self.client.choose(state, &prompt, rng);
        Decision {
            choice: d.choice,
            reason: d.reason,
            fallback: d.fallback,
            exchanges: d.exchanges,
        }
    }

    fn parallelism(&self) -> usize {
        self.client.config().max_concurrent_requests
    }
}

pub fn prompt_context(config: &ScenarioConfig) -> PromptContext {
    PromptContext {
        scenario_text: config.scenario_text.clone(),
        bonus: config.bonus.enabled,
        currency: config.bonus.currency.clone(),
    }
}

/// Decider for `config`; the LLM decider talks HTTP and needs its API key.
pub fn make_decider(config: &ScenarioConfig) -> Result<Box<dyn Decide>, ConfigError> {
    Ok(match config.decider.kind {
        DeciderKind::Llm => Box::new(LlmDecider {
            client: LlmClient::http(config.llm.clone())?,
            context: prompt_context(config),
        }),
        _ => Box::new(RuleDecider {
            config: config.decider.clone(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent: usize,
    pub od: Od,
    /// 0-based route index.
    pub choice: usize,
    /// Travelers represented by the agent.
    pub weight: u32,
    pub travel_time: f64,
    pub bonus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdDay {
    pub od: Od,
    pub route_flows: Vec<f64>,
    pub route_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLog {
    pub day: u32,
    pub records: Vec<AgentRecord>,
    pub ods: Vec<OdDay>,
    pub link_flows: BTreeMap<LinkId, f64>,
}

impl DayLog {
    pub fn od_day(&self, od: Od) -> Option<&OdDay> {
        self.ods.iter().find(|o| o.od == od)
    }

    pub fn od_times(&self, od: Od) -> Option<&Vec<f64>> {
        self.od_day(od).map(|o| &o.route_times)
    }

    pub fn record(&self, agent: usize) -> Option<&AgentRecord> {
        match self.records.get(agent) {
            Some(r) if r.agent == agent => Some(r),
            _ => self.records.iter().find(|r| r.agent == agent),
        }
    }

    pub fn total_travelers(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.weight)).sum()
    }

    /// Per-OD flows equal demand exactly.
    pub fn check_conservation(&self, demands: &BTreeMap<Od, f64>) -> Result<(), SimError> {
        for (od, demand) in demands {
            let expected = *demand as u64;
            let got = self
                .od_day(*od)
                .map(|o| o.route_flows.iter().map(|f| *f as u64).sum())
                .unwrap_or(0);
            let from_records: u64 = self
                .records
                .iter()
                .filter(|r| r.od == *od)
                .map(|r| u64::from(r.weight))
                .sum();
            if got != expected || from_records != expected {
                return Err(SimError::Conservation {
                    day: self.day,
                    od: *od,
                    expected,
                    got: if got != expected { got } else { from_records },
                });
            }
        }
        Ok(())
    }

    /// Reloads the logged route flows and compares times bit for bit.
    pub fn check_replay(&self, network: &Network<f64>, route_sets: &[RouteSet<f64>]) -> Result<(), SimError> {
        let flows: BTreeMap<Od, Vec<f64>> = self.ods.iter().map(|o| (o.od, o.route_flows.clone())).collect();
        let load = load_network(network, &flows, route_sets)?;
        for o in &self.ods {
            if load.route_times.get(&o.od) != Some(&o.route_times) {
                return Err(SimError::Replay { day: self.day });
            }
        }
        if load.link_flows != self.link_flows {
            return Err(SimError::Replay { day: self.day });
        }
        Ok(())
    }
}

/// Shared per-run settings of the day loop.
#[derive(Debug, Clone)]
pub struct DaySettings {
    pub seed: u64,
    pub omega: f64,
    pub feedback: FeedbackMode,
    pub bonus: BonusConfig,
}

impl DaySettings {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Self {
        DaySettings {
            seed,
            omega: config.decider.omega,
            feedback: config.decider.feedback,
            bonus: config.bonus.clone(),
        }
    }
}

/// Runs every agent's decision for `day` against the same (yesterday's) states.
pub fn decide_all(agents: &[AgentState], decider: &dyn Decide, day: u32, seed: u64) -> Vec<Decision> {
    let decide_one = |a: &AgentState| decider.decide(a, day, &mut agent_rng(seed, a.id, day));
    let workers = decider.parallelism().clamp(1, agents.len().max(1));
    if workers == 1 {
        return agents.iter().map(decide_one).collect();
    }
    let chunk = agents.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = agents
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(decide_one).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("decider thread panicked"))
            .collect()
    })
}

/// Loads the chosen routes, then applies perception, bonuses and memory updates.
/// `decisions[i]` belongs to `agents[i]`.
pub fn apply_decisions(
    day: u32,
    agents: &mut [AgentState],
    decisions: &[Decision],
    scenario_network: &Network<f64>,
    route_sets: &[RouteSet<f64>],
    demands: &BTreeMap<Od, f64>,
    settings: &DaySettings,
) -> Result<DayLog, SimError> {
    let mut flows: BTreeMap<Od, Vec<f64>> = route_sets.iter().map(|s| (s.od, vec![0.0; s.len()])).collect();
    for (a, d) in agents.iter().zip(decisions) {
        let row = flows.get_mut(&a.od).expect("agent OD has a route set");
        if d.choice >= row.len() {
            return Err(SimError::BadChoice {
                day,
                agent: a.id,
                choice: d.choice,
                count: row.len(),
            });
        }
        row[d.choice] += f64::from(a.travelers);
    }
    let load = load_network(scenario_network, &flows, route_sets)?;
    let mut records = Vec::with_capacity(agents.len());
    for (a, d) in agents.iter_mut().zip(decisions) {
        let times = &load.route_times[&a.od];
        let travel_time = times[d.choice];
        let observed: Vec<Option<f64>> = match settings.feedback {
            FeedbackMode::AllRoutes => times.iter().map(|t| Some(*t)).collect(),
            FeedbackMode::ChosenOnly => (0..times.len())
                .map(|r| (r == d.choice).then_some(travel_time))
                .collect(),
        };
        let bonus = if settings.bonus.enabled {
            compute_bonus(travel_time, settings.bonus.rate, settings.bonus.reference_time)
        } else {
            0.0
        };
        a.update_memory(d.choice, &observed, bonus, settings.omega)?;
        records.push(AgentRecord {
            agent: a.id,
            od: a.od,
            choice: d.choice,
            weight: a.travelers,
            travel_time,
            bonus,
            reason: d.reason.clone(),
            fallback: d.fallback,
        });
    }
    let ods = route_sets
        .iter()
        .map(|s| OdDay {
            od: s.od,
            route_flows: flows[&s.od].clone(),
            route_times: load.route_times[&s.od].clone(),
        })
        .collect();
    let log = DayLog {
        day,
        records,
        ods,
        link_flows: load.link_flows,
    };
    log.check_conservation(demands)?;
    Ok(log)
}

/// One simulated day. Returns the log and the raw decisions (which carry LLM transcripts).
pub fn run_day(
    day: u32,
    scenario: &mut Scenario,
    decider: &dyn Decide,
    settings: &DaySettings,
) -> Result<(DayLog, Vec<Decision>), SimError> {
    let decisions = decide_all(&scenario.agents, decider, day, settings.seed);
    let log = apply_decisions(
        day,
        &mut scenario.agents,
        &decisions,
        &scenario.network,
        &scenario.route_sets,
        &scenario.demands,
        settings,
    )?;
    Ok((log, decisions))
}
