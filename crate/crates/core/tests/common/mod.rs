//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dtd_core::agent::{AgentState, RouteMemory, Yesterday};
use dtd_core::network::{Link, LinkId, Network, NodeId, Od};
use dtd_core::sim::DayLog;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random directed graph on `n` nodes with integer free-flow times in 1..=5, possibly
/// with parallel links. Node ids are 1..=n, link ids 1..=m in insertion order.
pub fn random_graph(seed: u64, max_nodes: u32) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let mut links = Vec::new();
    let mut id = 1;
    for from in 1..=n {
        for to in 1..=n {
            if from != to && rng.random_bool(0.45) {
                let t0 = rng.random_range(1..=5) as f64;
                links.push(Link::new(id, from, to, t0, 0.0).unwrap());
                id += 1;
            }
        }
    }
    Network::new((1..=n).map(NodeId), links).unwrap()
}

/// Every simple path from `origin` to `destination` by depth-first enumeration, as
/// `(free-flow cost, link ids)`, sorted by cost then link-id sequence.
pub fn brute_force_paths(net: &Network<f64>, origin: NodeId, destination: NodeId) -> Vec<(f64, Vec<LinkId>)> {
    fn walk(
        net: &Network<f64>,
        at: NodeId,
        dest: NodeId,
        visited: &mut Vec<NodeId>,
        links: &mut Vec<LinkId>,
        cost: f64,
        out: &mut Vec<(f64, Vec<LinkId>)>,
    ) {
        if at == dest {
            out.push((cost, links.clone()));
            return;
        }
        let outgoing: Vec<(LinkId, NodeId, f64)> = net.outgoing(at).map(|l| (l.id, l.to, l.free_flow_time)).collect();
        for (id, to, t) in outgoing {
            if visited.contains(&to) {
                continue;
            }
            visited.push(to);
            links.push(id);
            walk(net, to, dest, visited, links, cost + t, out);
            links.pop();
            visited.pop();
        }
    }
    let mut out = Vec::new();
    walk(
        net,
        origin,
        destination,
        &mut vec![origin],
        &mut Vec::new(),
        0.0,
        &mut out,
    );
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    out
}

/// `omega * sum_j (1 - omega)^j T_{t-j} + (1 - omega)^(t-1) T_1`, the closed form of the
/// EWMATT recursion initialised with the first observation.
pub fn ewmatt_unrolled(obs: &[f64], omega: f64) -> f64 {
    let t = obs.len();
    let mut acc = 0.0;
    for j in 0..t - 1 {
        acc += omega * (1.0 - omega).powi(j as i32) * obs[t - 1 - j];
    }
    acc + (1.0 - omega).powi(t as i32 - 1) * obs[0]
}

/// Agent in the memory state of a published two-route prompt example.
#[allow(clippy::too_many_arguments)]
pub fn table_state(
    yesterday_times: [f64; 2],
    chosen: usize,
    bonus: f64,
    cumulative: f64,
    counts: [u32; 2],
    ewmatt: [f64; 2],
) -> AgentState {
    let profile = dtd_core::agent::sample_profile(1);
    let mut s = AgentState::new(0, Od::new(1, 2), profile, 1, vec![6.0, 6.0], 0);
    s.memories = counts
        .iter()
        .zip(ewmatt)
        .zip(yesterday_times)
        .map(|((c, e), t)| RouteMemory {
            chosen_count: *c,
            ewmatt: Some(e),
            last_observed_time: Some(t),
        })
        .collect();
    s.yesterday = Some(Yesterday {
        chosen,
        observed: yesterday_times.iter().map(|t| Some(*t)).collect(),
        bonus,
    });
    s.cumulative_bonus = cumulative;
    s.days_experienced = counts.iter().sum();
    s
}

/// Per-OD flows recomputed from agent records.
pub fn flows_from_records(log: &DayLog) -> BTreeMap<Od, Vec<f64>> {
    let mut out: BTreeMap<Od, Vec<f64>> = log.ods.iter().map(|o| (o.od, vec![0.0; o.route_flows.len()])).collect();
    for r in &log.records {
        out.get_mut(&r.od).unwrap()[r.choice] += f64::from(r.weight);
    }
    out
}
