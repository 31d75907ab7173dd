//! Replications, run directories and resumption.
//!
//! Layout of one replication under the output directory:
//!
//! ```text
//! run_000/config.snapshot   TOML config, prefixed with the run index and seed
//! run_000/days.jsonl        one DayLog per line, appended as days complete
//! run_000/llm/day_002.jsonl raw model exchanges per agent (LLM decider only)
//! run_000/summary.csv       day, origin, destination, route, flow, travel_time
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::engine::{apply_decisions, build_scenario, run_day, DayLog, DaySettings, Decide, Decision, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExistingRun {
    /// Refuse to touch a non-empty run directory.
    #[default]
    Fail,
    /// Replay the logged days, then continue after the last complete one.
    Resume,
    /// Delete the run directory and start over.
    Restart,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
    pub existing: ExistingRun,
    /// Replications simulated concurrently.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Traveler-weighted mean travel time over all days.
    pub mean_travel_time: f64,
    /// Traveler-weighted mean travel time on the last day.
    pub final_mean_travel_time: f64,
    pub fallback_decisions: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: u32,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub days: Vec<DayLog>,
    pub summary: RunSummary,
}

pub fn run_dir(out: &Path, run: u32) -> PathBuf {
    out.join(format!("run_{run:03}"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn snapshot_text(config: &ScenarioConfig, run: u32, seed: u64) -> String {
    format!("# run = {run}, seed = {seed}\n{}", config.to_toml())
}

/// Parses a snapshot written by [`snapshot_text`].
pub fn read_snapshot(path: &Path) -> Result<ScenarioConfig, SimError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ScenarioConfig::from_toml(&text).map_err(|e| SimError::Corrupt {
        file: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

/// Reads a `days.jsonl` file. With `tolerate_partial_tail`, a last line without a newline
/// that does not parse is dropped (an interrupted write); otherwise it is an error.
pub fn read_days(path: &Path, tolerate_partial_tail: bool) -> Result<Vec<DayLog>, SimError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DayLog>(line) {
            Ok(log) => out.push(log),
            Err(_) if tolerate_partial_tail && !complete && i + 1 == lines.len() => break,
            Err(e) => {
                return Err(SimError::Corrupt {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    for (i, log) in out.iter().enumerate() {
        if log.day != i as u32 + 1 {
            return Err(SimError::Corrupt {
                file: path.display().to_string(),
                line: i + 1,
                message: format!("expected day {}, found day {}", i + 1, log.day),
            });
        }
    }
    Ok(out)
}

/// All replications found under `out`, in run order: `(directory, config, days)`.
pub fn load_runs(out: &Path) -> Result<Vec<(PathBuf, ScenarioConfig, Vec<DayLog>)>, SimError> {
    let entries = fs::read_dir(out).map_err(|e| io_err(out, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("run_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(io_err(out, "no run_* directories"));
    }
    dirs.into_iter()
        .map(|d| {
            let config = read_snapshot(&d.join("config.snapshot"))?;
            let days = read_days(&d.join("days.jsonl"), false)?;
            Ok((d, config, days))
        })
        .collect()
}

fn summarize(days: &[DayLog], decisions_fallback: usize) -> RunSummary {
    let mean = |log: &DayLog| {
        let w: f64 = log.records.iter().map(|r| f64::from(r.weight)).sum();
        log.records
            .iter()
            .map(|r| f64::from(r.weight) * r.travel_time)
            .sum::<f64>()
            / w
    };
    let all: f64 = days.iter().map(mean).sum::<f64>() / days.len().max(1) as f64;
    RunSummary {
        mean_travel_time: all,
        final_mean_travel_time: days.last().map(mean).unwrap_or(f64::NAN),
        fallback_decisions: decisions_fallback,
    }
}

fn write_summary_csv(path: &Path, days: &[DayLog]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["day", "origin", "destination", "route", "flow", "travel_time"])
        .map_err(|e| io_err(path, e))?;
    for log in days {
        for o in &log.ods {
            for (r, (f, t)) in o.route_flows.iter().zip(&o.route_times).enumerate() {
                w.write_record([
                    log.day.to_string(),
                    o.od.origin.to_string(),
                    o.od.destination.to_string(),
                    (r + 1).to_string(),
                    f.to_string(),
                    t.to_string(),
                ])
                .map_err(|e| io_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    agent: usize,
    exchanges: &'a [crate::llm::Exchange],
}

fn write_transcripts(dir: &Path, day: u32, decisions: &[Decision], agents: &[usize]) -> Result<(), SimError> {
    if decisions.iter().all(|d| d.exchanges.is_empty()) {
        return Ok(());
    }
    let llm = dir.join("llm");
    fs::create_dir_all(&llm).map_err(|e| io_err(&llm, e))?;
    let path = llm.join(format!("day_{day:03}.jsonl"));
    let mut text = String::new();
    for (d, agent) in decisions.iter().zip(agents) {
        if d.exchanges.is_empty() {
            continue;
        }
        let line = TranscriptLine {
            agent: *agent,
            exchanges: &d.exchanges,
        };
        text.push_str(&serde_json::to_string(&line).expect("transcripts serialize"));
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn run_one(
    config: &ScenarioConfig,
    run: u32,
    decider: &dyn Decide,
    options: &RunOptions,
) -> Result<RunResult, SimError> {
    let seed = config.seed.wrapping_add(u64::from(run));
    let mut scenario = build_scenario(config, seed)?;
    let settings = DaySettings::new(config, seed);
    let mut days: Vec<DayLog> = Vec::with_capacity(config.days as usize);
    let mut fallbacks = 0;

    let mut sink = None;
    if let Some(out) = &options.out {
        let dir = run_dir(out, run);
        let snapshot = snapshot_text(config, run, seed);
        let days_path = dir.join("days.jsonl");
        if dir.exists() {
            match options.existing {
                ExistingRun::Restart => fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?,
                ExistingRun::Fail => {
                    return Err(io_err(&dir, "run directory exists (use resume or restart)"));
                }
                ExistingRun::Resume => {
                    let snap_path = dir.join("config.snapshot");
                    let existing = fs::read_to_string(&snap_path).map_err(|e| io_err(&snap_path, e))?;
                    if existing != snapshot {
                        return Err(io_err(&snap_path, "config differs from the run being resumed"));
                    }
                    if days_path.exists() {
                        let logged = read_days(&days_path, true)?;
                        for log in logged.into_iter().take(config.days as usize) {
                            let decisions: Vec<Decision> = log
                                .records
                                .iter()
                                .map(|r| Decision {
                                    choice: r.choice,
                                    reason: r.reason.clone(),
                                    fallback: r.fallback,
                                    exchanges: Vec::new(),
                                })
                                .collect();
                            let replayed = apply_decisions(
                                log.day,
                                &mut scenario.agents,
                                &decisions,
                                &scenario.network,
                                &scenario.route_sets,
                                &scenario.demands,
                                &settings,
                            )?;
                            if replayed != log {
                                return Err(SimError::Corrupt {
                                    file: days_path.display().to_string(),
                                    line: log.day as usize,
                                    message: "logged day does not replay".into(),
                                });
                            }
                            fallbacks += log.records.iter().filter(|r| r.fallback).count();
                            days.push(log);
                        }
                        // rewrite without any partial tail
                        let mut text = String::new();
                        for log in &days {
                            text.push_str(&serde_json::to_string(log).expect("day logs serialize"));
                            text.push('\n');
                        }
                        fs::write(&days_path, text).map_err(|e| io_err(&days_path, e))?;
                    }
                }
            }
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let snap_path = dir.join("config.snapshot");
        fs::write(&snap_path, &snapshot).map_err(|e| io_err(&snap_path, e))?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&days_path)
            .map_err(|e| io_err(&days_path, e))?;
        sink = Some((dir, days_path, file));
    }

    let agent_ids: Vec<usize> = scenario.agents.iter().map(|a| a.id).collect();
    for day in days.len() as u32 + 1..=config.days {
        let (log, decisions) = run_day(day, &mut scenario, decider, &settings)?;
        log.check_replay(&scenario.network, &scenario.route_sets)?;
        fallbacks += decisions.iter().filter(|d| d.fallback).count();
        if let Some((dir, path, file)) = &mut sink {
            write_transcripts(dir, day, &decisions, &agent_ids)?;
            let mut line = serde_json::to_string(&log).expect("day logs serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
            file.flush().map_err(|e| io_err(path, e))?;
        }
        log::debug!("run {run} day {day} done");
        days.push(log);
    }
    if let Some((dir, _, _)) = &sink {
        write_summary_csv(&dir.join("summary.csv"), &days)?;
    }
    let summary = summarize(&days, fallbacks);
    log::info!(
        "run {run} (seed {seed}): {} days, mean travel time {:.2}",
        days.len(),
        summary.mean_travel_time
    );
    Ok(RunResult {
        run,
        seed,
        config: config.clone(),
        days,
        summary,
    })
}

/// Simulates `config.runs` replications with seeds `seed, seed + 1, ...`, persisting each
/// day as it completes when an output directory is given.
pub fn run_simulation(
    config: &ScenarioConfig,
    decider: &dyn Decide,
    options: &RunOptions,
) -> Result<Vec<RunResult>, SimError> {
    config.validate()?;
    let jobs = options.jobs.clamp(1, config.runs as usize);
    if jobs == 1 {
        return (0..config.runs).map(|r| run_one(config, r, decider, options)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunResult, SimError>>>> = Mutex::new((0..config.runs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::SeqCst);
                if r >= config.runs as usize {
                    break;
                }
                let res = run_one(config, r as u32, decider, options);
                results.lock().unwrap_or_else(|e| e.into_inner())[r] = Some(res);
            });
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every run index was claimed"))
        .collect()
}
