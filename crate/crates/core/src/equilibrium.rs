//! Reference user-equilibrium solvers: closed form for two parallel linear routes and a
//! method-of-successive-averages solver restricted to fixed route sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, Od};
use crate::routesets::RouteSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("demand given for OD {0} without a route set")]
    UnknownOd(Od),
}

/// Linear route cost `free_flow + slope * flow`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCost<T> {
    pub free_flow: T,
    pub slope: T,
}

impl<T: Scalar> LinearCost<T> {
    pub fn new(free_flow: T, slope: T) -> Self {
        LinearCost { free_flow, slope }
    }

    pub fn at(&self, flow: T) -> T {
        self.free_flow + self.slope * flow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdAssignment<T> {
    pub od: Od,
    pub demand: T,
    pub route_flows: Vec<T>,
    pub route_costs: Vec<T>,
}

impl<T: Scalar> OdAssignment<T> {
    pub fn min_cost(&self) -> T {
        self.route_costs.iter().copied().fold(T::infinity(), T::min)
    }

    /// Flow-weighted mean cost of the OD's travelers.
    pub fn mean_cost(&self) -> T {
        if self.demand <= T::zero() {
            return self.min_cost();
        }
        self.route_flows
            .iter()
            .zip(&self.route_costs)
            .map(|(f, c)| *f * *c)
            .sum::<T>()
            / self.demand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DueSolution<T> {
    pub assignments: Vec<OdAssignment<T>>,
    /// Two-route closed form: `|c1 - c2|`. MSA: largest excess of a route carrying flow
    /// over the cheapest route of its OD.
    pub max_cost_gap: T,
    pub relative_gap: T,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> DueSolution<T> {
    /// Demand-weighted mean travel time over all travelers.
    pub fn mean_travel_time(&self) -> T {
        let demand: T = self.assignments.iter().map(|a| a.demand).sum();
        if demand <= T::zero() {
            return T::zero();
        }
        self.assignments
            .iter()
            .map(|a| {
                a.route_flows
                    .iter()
                    .zip(&a.route_costs)
                    .map(|(f, c)| *f * *c)
                    .sum::<T>()
            })
            .sum::<T>()
            / demand
    }
}

/// Closed-form equilibrium of two parallel routes with linear costs sharing demand `demand`.
pub fn two_route_due<T: Scalar>(
    route1: LinearCost<T>,
    route2: LinearCost<T>,
    demand: T,
) -> Result<DueSolution<T>, EquilibriumError> {
    if !(route1.slope + route2.slope > T::zero()) {
        return Err(EquilibriumError::InvalidInput("slopes must not both be zero".into()));
    }
    if !(demand > T::zero()) {
        return Err(EquilibriumError::InvalidInput("demand must be positive".into()));
    }
    // t1 + s1 f = t2 + s2 (N - f)
    let interior = (route2.free_flow - route1.free_flow + route2.slope * demand) / (route1.slope + route2.slope);
    let f1 = interior.max(T::zero()).min(demand);
    let f2 = demand - f1;
    let c1 = route1.at(f1);
    let c2 = route2.at(f2);
    // zero at an interior solution; the idle route's cost excess at a boundary one
    let gap = (c1 - c2).abs();
    let min = c1.min(c2);
    let assignment = OdAssignment {
        od: Od::new(1, 2),
        demand,
        route_flows: vec![f1, f2],
        route_costs: vec![c1, c2],
    };
    let relative_gap = (assignment.mean_cost() - min) / min;
    Ok(DueSolution {
        assignments: vec![assignment],
        max_cost_gap: gap,
        relative_gap,
        converged: true,
        iterations: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsaConfig<T> {
    pub max_iterations: usize,
    pub relative_gap_tolerance: T,
}

impl<T: Scalar> Default for MsaConfig<T> {
    fn default() -> Self {
        MsaConfig {
            max_iterations: 2_000_000,
            relative_gap_tolerance: T::lit(1e-6),
        }
    }
}

/// Flattened route-link incidence used by the inner MSA loop.
struct Incidence<T> {
    free_flow: Vec<T>,
    slope: Vec<T>,
    /// per OD, per route: indices into the link arrays
    routes: Vec<Vec<Vec<usize>>>,
}

impl<T: Scalar> Incidence<T> {
    fn route_costs(&self, flows: &[Vec<T>], link_flow: &mut [T], out: &mut [Vec<T>]) {
        link_flow.iter_mut().for_each(|x| *x = T::zero());
        for (od_routes, od_flows) in self.routes.iter().zip(flows) {
            for (links, &f) in od_routes.iter().zip(od_flows) {
                for &l in links {
                    link_flow[l] += f;
                }
            }
        }
        for (od, od_routes) in self.routes.iter().enumerate() {
            for (r, links) in od_routes.iter().enumerate() {
                out[od][r] = links
                    .iter()
                    .map(|&l| self.free_flow[l] + self.slope[l] * link_flow[l])
                    .fold(T::zero(), |a, b| a + b);
            }
        }
    }
}

fn cheapest<T: Scalar>(costs: &[T]) -> usize {
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    best
}

fn relative_gap<T: Scalar>(demands: &[T], flows: &[Vec<T>], costs: &[Vec<T>]) -> T {
    let mut excess = T::zero();
    let mut base = T::zero();
    for ((d, f), c) in demands.iter().zip(flows).zip(costs) {
        let min = c[cheapest(c)];
        let total: T = f.iter().zip(c).map(|(x, y)| *x * *y).sum();
        excess += total - *d * min;
        base += *d * min;
    }
    if base <= T::zero() {
        T::zero()
    } else {
        excess / base
    }
}

/// Route-restricted user equilibrium by the method of successive averages (step `1/n`).
///
/// Iterates until the relative gap `sum d (avg cost - min cost) / sum d min cost` falls
/// below the tolerance or `max_iterations` is reached; in the latter case the result has
/// `converged == false` and reports the achieved gap.
pub fn msa_ue<T: Scalar>(
    network: &Network<T>,
    route_sets: &[RouteSet<T>],
    demands: &BTreeMap<Od, T>,
    config: &MsaConfig<T>,
) -> Result<DueSolution<T>, EquilibriumError> {
    if !(config.relative_gap_tolerance > T::zero()) {
        return Err(EquilibriumError::InvalidInput("tolerance must be positive".into()));
    }
    for od in demands.keys() {
        if !route_sets.iter().any(|s| s.od == *od) {
            return Err(EquilibriumError::UnknownOd(*od));
        }
    }
    if let Some(empty) = route_sets.iter().find(|s| s.routes.is_empty()) {
        return Err(EquilibriumError::InvalidInput(format!(
            "empty route set for {}",
            empty.od
        )));
    }
    let od_demand: Vec<T> = route_sets
        .iter()
        .map(|s| demands.get(&s.od).copied().unwrap_or(T::zero()))
        .collect();
    if od_demand.iter().any(|d| !(*d >= T::zero())) {
        return Err(EquilibriumError::InvalidInput("negative demand".into()));
    }

    let incidence = Incidence {
        free_flow: network.links().iter().map(|l| l.free_flow_time).collect(),
        slope: network.links().iter().map(|l| l.slope).collect(),
        routes: route_sets
            .iter()
            .map(|s| {
                s.routes
                    .iter()
                    .map(|r| {
                        r.links()
                            .iter()
                            .map(|id| network.link_index(*id).expect("route links belong to network"))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };

    let mut link_flow = vec![T::zero(); network.links().len()];
    let mut costs: Vec<Vec<T>> = route_sets.iter().map(|s| vec![T::zero(); s.routes.len()]).collect();
    let mut flows: Vec<Vec<T>> = costs.clone();

    // initial all-or-nothing at free flow
    incidence.route_costs(&flows, &mut link_flow, &mut costs);
    for ((f, c), d) in flows.iter_mut().zip(&costs).zip(&od_demand) {
        f[cheapest(c)] = *d;
    }

    let mut iterations = 1;
    let mut converged = false;
    let mut gap;
    loop {
        incidence.route_costs(&flows, &mut link_flow, &mut costs);
        gap = relative_gap(&od_demand, &flows, &costs);
        if gap < config.relative_gap_tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;
        let step = T::one() / T::from_usize(iterations).expect("iteration count fits scalar");
        for ((f, c), d) in flows.iter_mut().zip(&costs).zip(&od_demand) {
            let target = cheapest(c);
            for (r, x) in f.iter_mut().enumerate() {
                let aon = if r == target { *d } else { T::zero() };
                *x += (aon - *x) * step;
            }
        }
    }

    let assignments: Vec<OdAssignment<T>> = route_sets
        .iter()
        .zip(flows)
        .zip(costs)
        .zip(&od_demand)
        .map(|(((s, f), c), d)| OdAssignment {
            od: s.od,
            demand: *d,
            route_flows: f,
            route_costs: c,
        })
        .collect();
    let max_cost_gap = assignments
        .iter()
        .flat_map(|a| {
            let min = a.min_cost();
            a.route_flows
                .iter()
                .zip(&a.route_costs)
                .filter(|(f, _)| **f > T::zero())
                .map(move |(_, c)| *c - min)
        })
        .fold(T::zero(), T::max);
    Ok(DueSolution {
        assignments,
        max_cost_gap,
        relative_gap: gap,
        converged,
        iterations,
    })
}
