//! Switching rates, cost-combination averages, day switching rate and travel-time statistics.
//!
//! Every function takes a slice of replications (`&[&[DayLog]]`); a single run is a slice of
//! length one and several runs are pooled. Agents count with their traveler weight.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::network::Od;
use crate::sim::DayLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEntry {
    /// Transition from `day` to `day + 1`.
    pub day: u32,
    pub od: Od,
    /// 0-based route indices.
    pub from: usize,
    pub to: usize,
    pub switchers: f64,
    pub occupants: f64,
    pub rate: f64,
}

/// Rates `p_ij^t` for every occupied route `i` and every `j` (the stay term `i == j`
/// included); cells with no occupants are omitted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchTable {
    pub entries: Vec<SwitchEntry>,
}

/// Consecutive-day pairs within each run.
fn transitions<'a>(runs: &'a [&'a [DayLog]]) -> impl Iterator<Item = (&'a DayLog, &'a DayLog)> + 'a {
    runs.iter()
        .flat_map(|logs| logs.windows(2))
        .filter(|w| w[1].day == w[0].day + 1)
        .map(|w| (&w[0], &w[1]))
}

pub fn switching_rates(runs: &[&[DayLog]]) -> SwitchTable {
    // (day, od, from, to) -> (switchers, occupants of `from`)
    let mut moves: BTreeMap<(u32, Od, usize, usize), f64> = BTreeMap::new();
    let mut occupants: BTreeMap<(u32, Od, usize), f64> = BTreeMap::new();
    let mut routes: BTreeMap<Od, usize> = BTreeMap::new();
    for (today, tomorrow) in transitions(runs) {
        for o in &today.ods {
            routes.insert(o.od, o.route_flows.len());
        }
        for r in &today.records {
            let Some(next) = tomorrow.record(r.agent) else { continue };
            let w = f64::from(r.weight);
            *moves.entry((today.day, r.od, r.choice, next.choice)).or_default() += w;
            *occupants.entry((today.day, r.od, r.choice)).or_default() += w;
        }
    }
    let mut entries = Vec::new();
    for (&(day, od, from), &occ) in &occupants {
        for to in 0..routes[&od] {
            let switchers = moves.get(&(day, od, from, to)).copied().unwrap_or(0.0);
            entries.push(SwitchEntry {
                day,
                od,
                from,
                to,
                switchers,
                occupants: occ,
                rate: switchers / occ,
            });
        }
    }
    SwitchTable { entries }
}

/// Costs rounded to hundredths, used as an exact grouping key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CostKey(pub Vec<i64>);

impl CostKey {
    pub fn from_costs(costs: &[f64]) -> Self {
        CostKey(costs.iter().map(|c| (c * 100.0).round() as i64).collect())
    }

    /// `22.00|22.00`
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|c| format!("{}.{:02}", c / 100, (c % 100).abs()))
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSwitching {
    pub od: Od,
    pub costs: CostKey,
    pub from: usize,
    pub to: usize,
    pub mean_rate: f64,
    /// Number of (run, day) transitions averaged.
    pub days: usize,
}

/// Mean of `p_ij^t` over the days whose route-cost vector rounds to the same key. Days on
/// which route `i` is empty do not contribute to that route's averages.
pub fn average_switching_rate(runs: &[&[DayLog]]) -> Vec<AverageSwitching> {
    let mut groups: BTreeMap<(Od, CostKey, usize, usize), (f64, usize)> = BTreeMap::new();
    for logs in runs {
        let table = switching_rates(&[logs]);
        for e in &table.entries {
            let Some(day) = logs.iter().find(|l| l.day == e.day) else {
                continue;
            };
            let Some(times) = day.od_times(e.od) else { continue };
            let g = groups
                .entry((e.od, CostKey::from_costs(times), e.from, e.to))
                .or_insert((0.0, 0));
            g.0 += e.rate;
            g.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((od, costs, from, to), (sum, n))| AverageSwitching {
            od,
            costs,
            from,
            to,
            mean_rate: sum / n as f64,
            days: n,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaySwitching {
    /// Transition from `day` to `day + 1`.
    pub day: u32,
    pub switchers: f64,
    pub travelers: f64,
    pub rate: f64,
}

/// Share of all travelers changing route between consecutive days.
pub fn day_switching_rate(runs: &[&[DayLog]]) -> Vec<DaySwitching> {
    let mut per_day: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (today, tomorrow) in transitions(runs) {
        let e = per_day.entry(today.day).or_default();
        for r in &today.records {
            let w = f64::from(r.weight);
            e.1 += w;
            if tomorrow.record(r.agent).is_some_and(|n| n.choice != r.choice) {
                e.0 += w;
            }
        }
    }
    per_day
        .into_iter()
        .map(|(day, (s, n))| DaySwitching {
            day,
            switchers: s,
            travelers: n,
            rate: s / n,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub od: Od,
    pub route: usize,
    pub due: Option<f64>,
    pub mean: f64,
    /// `(mean - due) / due`.
    pub relative_gap: Option<f64>,
    /// Population standard deviation.
    pub std: f64,
    pub samples: usize,
}

/// Mean and population std of each route's daily travel time over `window` (days,
/// inclusive), with the relative gap to the reference time when given.
pub fn descriptive_stats(
    runs: &[&[DayLog]],
    due: &BTreeMap<Od, Vec<f64>>,
    window: RangeInclusive<u32>,
) -> Vec<RouteStats> {
    let mut series: BTreeMap<(Od, usize), Vec<f64>> = BTreeMap::new();
    for logs in runs {
        for log in logs.iter().filter(|l| window.contains(&l.day)) {
            for o in &log.ods {
                for (r, t) in o.route_times.iter().enumerate() {
                    series.entry((o.od, r)).or_default().push(*t);
                }
            }
        }
    }
    series
        .into_iter()
        .map(|((od, route), xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let due = due.get(&od).and_then(|v| v.get(route)).copied();
            RouteStats {
                od,
                route,
                due,
                mean,
                relative_gap: due.map(|d| (mean - d) / d),
                std: var.sqrt(),
                samples: xs.len(),
            }
        })
        .collect()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

pub fn write_switching_rates<W: Write>(w: W, table: &SwitchTable) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "day",
        "origin",
        "destination",
        "from_route",
        "to_route",
        "switchers",
        "occupants",
        "rate",
    ])?;
    for e in &table.entries {
        out.write_record([
            e.day.to_string(),
            e.od.origin.to_string(),
            e.od.destination.to_string(),
            (e.from + 1).to_string(),
            (e.to + 1).to_string(),
            e.switchers.to_string(),
            e.occupants.to_string(),
            format!("{:.6}", e.rate),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_average_switching<W: Write>(w: W, rows: &[AverageSwitching]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "origin",
        "destination",
        "costs",
        "from_route",
        "to_route",
        "mean_rate",
        "days",
    ])?;
    for r in rows {
        out.write_record([
            r.od.origin.to_string(),
            r.od.destination.to_string(),
            r.costs.label(),
            (r.from + 1).to_string(),
            (r.to + 1).to_string(),
            format!("{:.6}", r.mean_rate),
            r.days.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_day_switching<W: Write>(w: W, rows: &[DaySwitching]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["day", "switchers", "travelers", "rate"])?;
    for r in rows {
        out.write_record([
            r.day.to_string(),
            r.switchers.to_string(),
            r.travelers.to_string(),
            format!("{:.6}", r.rate),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `std_population` in the header: the deviation divides by the sample count.
pub fn write_stats<W: Write>(w: W, rows: &[RouteStats]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "origin",
        "destination",
        "route",
        "due",
        "mean",
        "relative_gap",
        "std_population",
        "samples",
    ])?;
    let opt = |x: Option<f64>, digits: usize| x.map(|v| format!("{v:.digits$}")).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.od.origin.to_string(),
            r.od.destination.to_string(),
            (r.route + 1).to_string(),
            opt(r.due, 2),
            format!("{:.2}", r.mean),
            opt(r.relative_gap, 4),
            format!("{:.2}", r.std),
            r.samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
