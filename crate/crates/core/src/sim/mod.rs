//! Day-to-day simulation: scenarios, the day loop and run persistence.

mod config;
mod engine;
mod run;

pub use config::{BonusConfig, BuiltinNetwork, ConfigError, Demand, NetworkSource, ScenarioConfig};
pub use engine::{
    agent_rng, apply_decisions, build_scenario, decide_all, make_decider, prompt_context, run_day, AgentRecord, DayLog,
    DaySettings, Decide, Decision, LlmDecider, OdDay, RuleDecider, Scenario, SimError,
};
pub use run::{
    load_runs, read_days, read_snapshot, run_dir, run_simulation, snapshot_text, ExistingRun, RunOptions, RunResult,
    RunSummary,
};
