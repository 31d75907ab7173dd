//! `dtd`: simulate day-to-day route choice, analyze the logs, fit switching models and
//! compute reference equilibria.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dtd_core::agent::DeciderKind;
use dtd_core::equilibrium::{msa_ue, two_route_due, DueSolution, MsaConfig};
use dtd_core::metrics::{
    average_switching_rate, day_switching_rate, descriptive_stats, switching_rates, write_average_switching,
    write_day_switching, write_stats, write_switching_rates, RouteStats,
};
use dtd_core::network::{NodeId, Od};
use dtd_core::regression::{extract_observations, fit_switching, FitResult, SwitchObservation};
use dtd_core::routesets::k_shortest_routes;
use dtd_core::sim::{
    load_runs, make_decider, run_simulation, BuiltinNetwork, ConfigError, DayLog, ExistingRun, NetworkSource,
    RunOptions, ScenarioConfig, SimError,
};

const EXIT_CODES: &str = "Exit codes:\n  0  success\n  1  runtime failure (I/O, corrupt or missing logs, failed fit)\n  2  configuration or usage error (bad flags, invalid config, missing API key)";

#[derive(Parser, Debug)]
#[command(name = "dtd", version, about = "Day-to-day route-choice simulator", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario config file (TOML); flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory holding run_XXX/ replications.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    days: Option<u32>,
    #[arg(long, global = true)]
    runs: Option<u32>,
    /// llm, mnl, prc, random or mock.
    #[arg(long, global = true, value_parser = parse_decider)]
    decider: Option<DeciderKind>,
    /// Replications simulated concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate all replications and write the run directories.
    Run {
        /// Built-in scenario: scenario1..scenario5 or ow.
        #[arg(long)]
        scenario: Option<String>,
        /// Continue existing run directories after their last complete day.
        #[arg(long, conflicts_with = "restart")]
        resume: bool,
        /// Delete existing run directories and start over.
        #[arg(long)]
        restart: bool,
    },
    /// Compute switching rates and travel-time statistics from the run directories.
    Analyze {
        /// Add the equilibrium reference to the statistics.
        #[arg(long)]
        due: bool,
        /// First day of the statistics window.
        #[arg(long, default_value_t = 1)]
        from_day: u32,
        /// Last day of the statistics window (default: last simulated day).
        #[arg(long)]
        to_day: Option<u32>,
    },
    /// Fit the logistic switching model to the pooled runs or to a CSV of observations.
    Fit {
        /// CSV with columns delta_t,switched (switched as 0/1 or true/false).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the equilibrium flows, costs and gap of a scenario.
    Due {
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Check a config and print it with all defaults filled in.
    ValidateConfig {
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn parse_decider(s: &str) -> Result<DeciderKind, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Run {
            scenario,
            resume,
            restart,
        } => cmd_run(&cli.global, scenario.as_deref(), *resume, *restart),
        Command::Analyze { due, from_day, to_day } => cmd_analyze(&cli.global, *due, *from_day, *to_day),
        Command::Fit { csv } => cmd_fit(&cli.global, csv.as_deref()),
        Command::Due { scenario } => cmd_due(&cli.global, scenario.as_deref()),
        Command::ValidateConfig { scenario } => cmd_validate(&cli.global, scenario.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Config from `--config` or `--scenario` with the global overrides applied.
fn load_config(g: &Global, scenario: Option<&str>) -> Result<ScenarioConfig, Failure> {
    let mut config = match (&g.config, scenario) {
        (Some(_), Some(_)) => {
            return Err(Failure::Config(anyhow::anyhow!(
                "give either --config or --scenario, not both"
            )))
        }
        (Some(path), None) => ScenarioConfig::from_file(path)?,
        (None, Some(name)) => ScenarioConfig::builtin(name.parse::<BuiltinNetwork>()?),
        (None, None) => {
            return Err(Failure::Config(anyhow::anyhow!(
                "no scenario: pass --config FILE or --scenario NAME"
            )))
        }
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(days) = g.days {
        config.days = days;
    }
    if let Some(runs) = g.runs {
        config.runs = runs;
    }
    if let Some(kind) = g.decider {
        config.decider.kind = kind;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(g: &Global, scenario: Option<&str>, resume: bool, restart: bool) -> CmdResult {
    let config = load_config(g, scenario)?;
    let decider = make_decider(&config)?;
    let existing = match (resume, restart) {
        (true, _) => ExistingRun::Resume,
        (_, true) => ExistingRun::Restart,
        _ => ExistingRun::Fail,
    };
    let options = RunOptions {
        out: Some(g.out.clone()),
        existing,
        jobs: g.jobs,
    };
    let results = run_simulation(&config, decider.as_ref(), &options)?;
    if !g.quiet {
        println!(
            "{:>4} {:>6} {:>6} {:>12} {:>12} {:>9}",
            "run", "seed", "days", "mean_time", "final_time", "fallback"
        );
        for r in &results {
            println!(
                "{:>4} {:>6} {:>6} {:>12.2} {:>12.2} {:>9}",
                r.run,
                r.seed,
                r.days.len(),
                r.summary.mean_travel_time,
                r.summary.final_mean_travel_time,
                r.summary.fallback_decisions
            );
        }
        println!("wrote {} run(s) under {}", results.len(), g.out.display());
    }
    Ok(())
}

/// Equilibrium of `config`: closed form for the built-in two-route scenarios, MSA over the
/// k-route sets otherwise.
fn reference_equilibrium(config: &ScenarioConfig) -> Result<DueSolution<f64>, Failure> {
    if let NetworkSource::Builtin(which) = &config.network {
        if let (Some((c1, c2)), [demand]) = (which.two_route_costs(), config.demands.as_slice()) {
            let mut sol = two_route_due(c1, c2, f64::from(demand.travelers)).map_err(|e| Failure::Config(e.into()))?;
            sol.assignments[0].od = demand.od();
            return Ok(sol);
        }
    }
    let network = config.load_network()?;
    let mut sets = Vec::new();
    let mut demands = BTreeMap::new();
    for d in &config.demands {
        let set = k_shortest_routes(&network, NodeId(d.origin), NodeId(d.destination), config.k_routes)
            .map_err(ConfigError::from)?;
        sets.push(set);
        demands.insert(d.od(), f64::from(d.travelers));
    }
    msa_ue(&network, &sets, &demands, &MsaConfig::default()).map_err(|e| Failure::Runtime(e.into()))
}

fn due_table(config: &ScenarioConfig, sol: &DueSolution<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}", config.name);
    let _ = writeln!(
        s,
        "{:>6} {:>11} {:>5} {:>12} {:>10}",
        "origin", "destination", "route", "flow", "cost"
    );
    for a in &sol.assignments {
        for (r, (f, c)) in a.route_flows.iter().zip(&a.route_costs).enumerate() {
            let _ = writeln!(
                s,
                "{:>6} {:>11} {:>5} {:>12.4} {:>10.2}",
                a.od.origin.to_string(),
                a.od.destination.to_string(),
                r + 1,
                f,
                c
            );
        }
    }
    let _ = writeln!(
        s,
        "converged {}  iterations {}  relative_gap {:.3e}  max_cost_gap {:.3e}  mean_travel_time {:.4}",
        sol.converged,
        sol.iterations,
        sol.relative_gap,
        sol.max_cost_gap,
        sol.mean_travel_time()
    );
    s
}

fn cmd_due(g: &Global, scenario: Option<&str>) -> CmdResult {
    let config = load_config(g, scenario)?;
    let sol = reference_equilibrium(&config)?;
    print!("{}", due_table(&config, &sol));
    Ok(())
}

fn cmd_validate(g: &Global, scenario: Option<&str>) -> CmdResult {
    let config = load_config(g, scenario)?;
    // building the scenario also checks the network, routes and demands against each other
    dtd_core::sim::build_scenario(&config, config.seed)?;
    if !g.quiet {
        print!("{}", config.to_toml());
    }
    eprintln!("config ok");
    Ok(())
}

fn write_csv_file(path: &Path, write: impl FnOnce(File) -> csv::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write(file).with_context(|| format!("cannot write {}", path.display()))
}

fn write_metrics(
    dir: &Path,
    runs: &[&[DayLog]],
    due: &BTreeMap<Od, Vec<f64>>,
    window: std::ops::RangeInclusive<u32>,
) -> anyhow::Result<Vec<RouteStats>> {
    let stats = descriptive_stats(runs, due, window);
    write_csv_file(&dir.join("switching_rates.csv"), |f| {
        write_switching_rates(f, &switching_rates(runs))
    })?;
    write_csv_file(&dir.join("avg_switching_by_cost.csv"), |f| {
        write_average_switching(f, &average_switching_rate(runs))
    })?;
    write_csv_file(&dir.join("dsr.csv"), |f| {
        write_day_switching(f, &day_switching_rate(runs))
    })?;
    write_csv_file(&dir.join("stats.csv"), |f| write_stats(f, &stats))?;
    Ok(stats)
}

fn cmd_analyze(g: &Global, with_due: bool, from_day: u32, to_day: Option<u32>) -> CmdResult {
    let loaded = load_runs(&g.out)?;
    let config = &loaded[0].1;
    let due = if with_due {
        reference_equilibrium(config)?
            .assignments
            .into_iter()
            .map(|a| (a.od, a.route_costs))
            .collect()
    } else {
        BTreeMap::new()
    };
    let last = to_day.unwrap_or(u32::MAX);
    for (dir, _, days) in &loaded {
        write_metrics(dir, &[days.as_slice()], &due, from_day..=last)?;
    }
    let pooled: Vec<&[DayLog]> = loaded.iter().map(|(_, _, d)| d.as_slice()).collect();
    let stats = write_metrics(&g.out, &pooled, &due, from_day..=last)?;
    if !g.quiet {
        println!(
            "{} run(s) of {}, days {from_day}..{}",
            loaded.len(),
            config.name,
            to_day.map_or("end".into(), |d| d.to_string())
        );
        println!(
            "{:>6} {:>11} {:>5} {:>8} {:>8} {:>9} {:>8}",
            "origin", "destination", "route", "due", "mean", "gap_pct", "std"
        );
        for s in &stats {
            let due = s.due.map_or("-".into(), |d| format!("{d:.2}"));
            let gap = s.relative_gap.map_or("-".into(), |r| format!("{:.2}", 100.0 * r));
            println!(
                "{:>6} {:>11} {:>5} {:>8} {:>8.2} {:>9} {:>8.2}",
                s.od.origin.to_string(),
                s.od.destination.to_string(),
                s.route + 1,
                due,
                s.mean,
                gap,
                s.std
            );
        }
        println!(
            "metrics written to each run directory and pooled to {}",
            g.out.display()
        );
    }
    Ok(())
}

fn read_observations(path: &Path) -> anyhow::Result<Vec<SwitchObservation<f64>>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing column `{name}`", path.display()))
    };
    let (dt_col, sw_col) = (col("delta_t")?, col("switched")?);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.with_context(|| format!("{}:{line}", path.display()))?;
        let delta_t: f64 = record[dt_col]
            .trim()
            .parse()
            .with_context(|| format!("{}:{line}: bad delta_t", path.display()))?;
        let switched = match record[sw_col].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => anyhow::bail!("{}:{line}: bad switched value `{other}`", path.display()),
        };
        out.push(SwitchObservation { delta_t, switched });
    }
    Ok(out)
}

fn fit_line(label: &str, n: usize, fit: &FitResult<f64>) -> String {
    let mut s = format!(
        "{label:<12} {n:>7} {:>9.4} ({:.4}, p={:.3e}) {:>9.5} ({:.5}, p={:.3e})",
        fit.theta0, fit.std_errors[0], fit.p_values[0], fit.theta1, fit.std_errors[1], fit.p_values[1]
    );
    if let Some(sep) = fit.separation {
        let _ = write!(s, "  [{sep:?} separation: MLE does not exist]");
    } else if !fit.converged {
        s.push_str("  [not converged]");
    }
    s
}

fn cmd_fit(g: &Global, csv_path: Option<&Path>) -> CmdResult {
    let mut jobs: Vec<(String, Vec<SwitchObservation<f64>>)> = Vec::new();
    if let Some(path) = csv_path {
        jobs.push((path.display().to_string(), read_observations(path)?));
    } else {
        let loaded = load_runs(&g.out)?;
        let config = &loaded[0].1;
        let logs: Vec<DayLog> = loaded.iter().flat_map(|(_, _, d)| d.iter().cloned()).collect();
        for d in &config.demands {
            let routes = logs
                .first()
                .and_then(|l| l.od_day(d.od()))
                .map_or(0, |o| o.route_flows.len());
            for from in 0..routes {
                for to in (0..routes).filter(|t| *t != from) {
                    let label = if config.demands.len() == 1 {
                        format!("p{}{}", from + 1, to + 1)
                    } else {
                        format!("{}-{} p{}{}", d.origin, d.destination, from + 1, to + 1)
                    };
                    jobs.push((label, extract_observations(&logs, d.od(), from, to)));
                }
            }
        }
    }
    println!(
        "{:<12} {:>7} {:>28} {:>28}",
        "model", "n", "theta0 (se, p)", "theta1 (se, p)"
    );
    let mut usable = 0;
    for (label, obs) in &jobs {
        match fit_switching(obs) {
            Ok(fit) => {
                if fit.separation.is_none() && fit.converged {
                    usable += 1;
                }
                println!("{}", fit_line(label, obs.len(), &fit));
            }
            Err(e) => println!("{label:<12} {:>7}  cannot fit: {e}", obs.len()),
        }
    }
    if usable == 0 {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "no model could be fitted (degenerate or separated data)"
        )));
    }
    Ok(())
}
