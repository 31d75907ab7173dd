//! k-shortest loop-free route sets (Yen's algorithm over free-flow times).
//!
//! Paths are totally ordered by `(free-flow cost, link-id sequence)`. The spur-path
//! subroutine returns the minimum of that order among the shortest paths of the restricted
//! graph, which keeps Yen's enumeration exact under ties.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{LinkId, Network, NodeId, Od, Route};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteSetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("origin equals destination for OD {0}")]
    DegenerateOd(Od),
    #[error("destination unreachable for OD {0}")]
    Unreachable(Od),
}

/// Fixed route choice set of one OD pair, ordered by free-flow travel time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSet<T> {
    pub od: Od,
    pub routes: Vec<Route>,
    pub free_flow_times: Vec<T>,
    pub k: usize,
}

impl<T> RouteSet<T> {
    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

struct Candidate<T> {
    cost: T,
    links: Vec<LinkId>,
}

fn path_order<T: Scalar>(a: (&T, &[LinkId]), b: (&T, &[LinkId])) -> Ordering {
    a.0.partial_cmp(b.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

fn path_cost<T: Scalar>(net: &Network<T>, links: &[LinkId]) -> T {
    links
        .iter()
        .map(|id| net.link(*id).expect("path built from network links").free_flow_time)
        .fold(T::zero(), |acc, t| acc + t)
}

/// Min-heap entry for Dijkstra.
struct Frontier<T> {
    dist: T,
    node: NodeId,
}

impl<T: Scalar> PartialEq for Frontier<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Frontier<T> {}
impl<T: Scalar> PartialOrd for Frontier<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Frontier<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Shortest `from -> to` path avoiding the banned nodes and links; among equal-cost
/// shortest paths the one with the smallest link-id sequence is returned.
fn restricted_shortest<T: Scalar>(
    net: &Network<T>,
    from: NodeId,
    to: NodeId,
    banned_nodes: &BTreeSet<NodeId>,
    banned_links: &BTreeSet<LinkId>,
) -> Option<Vec<LinkId>> {
    let allowed = |from: NodeId, to: NodeId, id: LinkId| {
        !banned_links.contains(&id) && !banned_nodes.contains(&from) && !banned_nodes.contains(&to)
    };
    let mut incoming: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, l) in net.links().iter().enumerate() {
        if allowed(l.from, l.to, l.id) {
            incoming.entry(l.to).or_default().push(i);
        }
    }

    // distances to `to` on the reversed graph
    let mut dist: BTreeMap<NodeId, T> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(to, T::zero());
    heap.push(Frontier {
        dist: T::zero(),
        node: to,
    });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if dist.get(&node).is_some_and(|best| d > *best) {
            continue;
        }
        for &i in incoming.get(&node).into_iter().flatten() {
            let l = &net.links()[i];
            let nd = l.free_flow_time + d;
            if dist.get(&l.from).is_none_or(|cur| nd < *cur) {
                dist.insert(l.from, nd);
                heap.push(Frontier { dist: nd, node: l.from });
            }
        }
    }
    dist.get(&from)?;

    // greedy walk over tight links, smallest link id first
    let mut path = Vec::new();
    let mut visited = BTreeSet::from([from]);
    let mut at = from;
    while at != to {
        let here = dist[&at];
        let step = net.outgoing(at).find(|l| {
            allowed(l.from, l.to, l.id)
                && !visited.contains(&l.to)
                && dist.get(&l.to).is_some_and(|dv| l.free_flow_time + *dv == here)
        })?;
        path.push(step.id);
        visited.insert(step.to);
        at = step.to;
    }
    Some(path)
}

fn nodes_of<T: Scalar>(net: &Network<T>, origin: NodeId, links: &[LinkId]) -> Vec<NodeId> {
    let mut nodes = vec![origin];
    nodes.extend(links.iter().map(|id| net.link(*id).expect("network link").to));
    nodes
}

/// The `k` loop-free `origin -> destination` routes with the smallest free-flow time,
/// ties broken by lexicographic link-id sequence. Fewer are returned when fewer exist.
pub fn k_shortest_routes<T: Scalar>(
    network: &Network<T>,
    origin: NodeId,
    destination: NodeId,
    k: usize,
) -> Result<RouteSet<T>, RouteSetError> {
    let od = Od { origin, destination };
    for n in [origin, destination] {
        if !network.contains_node(n) {
            return Err(RouteSetError::UnknownNode(n));
        }
    }
    if k == 0 {
        return Err(RouteSetError::ZeroK);
    }
    if origin == destination {
        return Err(RouteSetError::DegenerateOd(od));
    }

    let first = restricted_shortest(network, origin, destination, &BTreeSet::new(), &BTreeSet::new())
        .ok_or(RouteSetError::Unreachable(od))?;
    let mut found: Vec<Vec<LinkId>> = vec![first];
    let mut candidates: Vec<Candidate<T>> = Vec::new();
    let mut seen: HashSet<Vec<LinkId>> = found.iter().cloned().collect();

    while found.len() < k {
        let prev = found.last().expect("at least one path");
        let prev_nodes = nodes_of(network, origin, prev);
        for i in 0..prev.len() {
            let spur = prev_nodes[i];
            let root = &prev[..i];
            let banned_links: BTreeSet<LinkId> = found
                .iter()
                .filter(|p| p.len() > i && &p[..i] == root)
                .map(|p| p[i])
                .collect();
            let banned_nodes: BTreeSet<NodeId> = prev_nodes[..i].iter().copied().collect();
            if let Some(tail) = restricted_shortest(network, spur, destination, &banned_nodes, &banned_links) {
                let mut links = root.to_vec();
                links.extend(tail);
                if seen.insert(links.clone()) {
                    candidates.push(Candidate {
                        cost: path_cost(network, &links),
                        links,
                    });
                }
            }
        }
        let Some(best) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| path_order((&a.1.cost, &a.1.links), (&b.1.cost, &b.1.links)))
            .map(|(i, _)| i)
        else {
            break;
        };
        found.push(candidates.swap_remove(best).links);
    }

    let routes = found
        .into_iter()
        .map(|links| Route::new(network, od, links).expect("Yen produces valid loop-free routes"))
        .collect::<Vec<_>>();
    let free_flow_times = routes.iter().map(|r| r.free_flow_time(network)).collect();
    Ok(RouteSet {
        od,
        routes,
        free_flow_times,
        k,
    })
}
