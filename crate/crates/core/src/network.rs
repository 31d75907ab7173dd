//! Road network representation, linear link performance and daily network loading.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routesets::RouteSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Origin-destination pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Od {
    pub origin: NodeId,
    pub destination: NodeId,
}

impl Od {
    pub fn new(origin: u32, destination: u32) -> Self {
        Od {
            origin: NodeId(origin),
            destination: NodeId(destination),
        }
    }
}

impl fmt::Display for Od {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.origin, self.destination)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("negative flow {flow} on link {link}")]
    NegativeFlow { link: LinkId, flow: f64 },
    #[error("invalid link {id}: {reason}")]
    InvalidLink { id: LinkId, reason: String },
    #[error("duplicate link id {0}")]
    DuplicateLink(LinkId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("invalid route for {od}: {reason}")]
    InvalidRoute { od: Od, reason: String },
    #[error("no route set for OD {0}")]
    UnknownOd(Od),
    #[error("OD {od} has no route with index {index}")]
    UnknownRoute { od: Od, index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Directed link with linear cost `free_flow_time + slope * flow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link<T> {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub free_flow_time: T,
    pub slope: T,
}

impl<T: Scalar> Link<T> {
    pub fn new(id: u32, from: u32, to: u32, free_flow_time: T, slope: T) -> Result<Self, NetworkError> {
        let id = LinkId(id);
        let invalid = |reason: &str| NetworkError::InvalidLink {
            id,
            reason: reason.to_string(),
        };
        if from == to {
            return Err(invalid("self loop"));
        }
        if !(free_flow_time >= T::zero()) || !free_flow_time.is_finite() {
            return Err(invalid("free-flow time must be finite and non-negative"));
        }
        if !(slope >= T::zero()) || !slope.is_finite() {
            return Err(invalid("slope must be finite and non-negative"));
        }
        Ok(Link {
            id,
            from: NodeId(from),
            to: NodeId(to),
            free_flow_time,
            slope,
        })
    }

    pub fn cost(&self, flow: T) -> Result<T, NetworkError> {
        link_cost(self, flow)
    }
}

/// Travel time on `link` when it carries `flow`.
pub fn link_cost<T: Scalar>(link: &Link<T>, flow: T) -> Result<T, NetworkError> {
    if !(flow >= T::zero()) {
        return Err(NetworkError::NegativeFlow {
            link: link.id,
            flow: flow.as_f64(),
        });
    }
    Ok(link.free_flow_time + link.slope * flow)
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    nodes: BTreeSet<NodeId>,
    links: Vec<Link<T>>,
    by_id: HashMap<LinkId, usize>,
    outgoing: BTreeMap<NodeId, Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, links: Vec<Link<T>>) -> Result<Self, NetworkError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut by_id = HashMap::with_capacity(links.len());
        let mut outgoing: BTreeMap<NodeId, Vec<usize>> = nodes.iter().map(|n| (*n, Vec::new())).collect();
        for (idx, link) in links.iter().enumerate() {
            for end in [link.from, link.to] {
                if !nodes.contains(&end) {
                    return Err(NetworkError::UnknownNode(end));
                }
            }
            if by_id.insert(link.id, idx).is_some() {
                return Err(NetworkError::DuplicateLink(link.id));
            }
            outgoing.get_mut(&link.from).expect("checked above").push(idx);
        }
        // adjacency lists ordered by link id so every traversal is deterministic
        for list in outgoing.values_mut() {
            list.sort_by_key(|&i| links[i].id);
        }
        Ok(Network {
            nodes,
            links,
            by_id,
            outgoing,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn links(&self) -> &[Link<T>] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link<T>> {
        self.by_id.get(&id).map(|&i| &self.links[i])
    }

    /// Position of a link in [`Network::links`].
    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    /// Outgoing links of `node`, in ascending link-id order.
    pub fn outgoing(&self, node: NodeId) -> impl Iterator<Item = &Link<T>> + '_ {
        self.outgoing
            .get(&node)
            .into_iter()
            .flatten()
            .map(move |&i| &self.links[i])
    }

    /// Parses the line-oriented network format: a `nodes N` header declaring nodes
    /// `1..=N`, then one `id from to t0 slope` line per directed link. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, NetworkError> {
        let mut node_count: Option<u32> = None;
        let mut links = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parse_err = |message: String| NetworkError::Parse { line, message };
            if fields[0] == "nodes" {
                if node_count.is_some() {
                    return Err(parse_err("duplicate `nodes` header".into()));
                }
                if fields.len() != 2 {
                    return Err(parse_err("expected `nodes N`".into()));
                }
                let n = fields[1]
                    .parse::<u32>()
                    .map_err(|e| parse_err(format!("bad node count: {e}")))?;
                node_count = Some(n);
                continue;
            }
            if node_count.is_none() {
                return Err(parse_err("link line before `nodes` header".into()));
            }
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let int = |s: &str, what: &str| {
                s.parse::<u32>()
                    .map_err(|e| parse_err(format!("bad {what} `{s}`: {e}")))
            };
            let real = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| parse_err(format!("bad {what} `{s}`: {e}")))
            };
            let link = Link::new(
                int(fields[0], "link id")?,
                int(fields[1], "from node")?,
                int(fields[2], "to node")?,
                real(fields[3], "free-flow time")?,
                real(fields[4], "slope")?,
            )?;
            links.push(link);
        }
        let n = node_count.ok_or(NetworkError::Parse {
            line: 0,
            message: "missing `nodes` header".into(),
        })?;
        Network::new((1..=n).map(NodeId), links)
    }

    /// Inverse of [`Network::from_text`] for networks whose nodes are `1..=N`.
    pub fn to_text(&self) -> String {
        let n = self.nodes.iter().map(|n| n.0).max().unwrap_or(0);
        let mut out = format!("nodes {n}\n");
        for l in &self.links {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                l.id, l.from, l.to, l.free_flow_time, l.slope
            ));
        }
        out
    }
}

/// Loop-free sequence of links joining an OD pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    od: Od,
    links: Vec<LinkId>,
    nodes: Vec<NodeId>,
}

impl Route {
    pub fn new<T: Scalar>(network: &Network<T>, od: Od, links: Vec<LinkId>) -> Result<Self, NetworkError> {
        let invalid = |reason: String| NetworkError::InvalidRoute { od, reason };
        if links.is_empty() {
            return Err(invalid("empty link sequence".into()));
        }
        let mut nodes = vec![od.origin];
        let mut seen = BTreeSet::from([od.origin]);
        for id in &links {
            let link = network.link(*id).ok_or(NetworkError::UnknownLink(*id))?;
            let at = *nodes.last().expect("non-empty");
            if link.from != at {
                return Err(invalid(format!("link {id} does not start at node {at}")));
            }
            if !seen.insert(link.to) {
                return Err(invalid(format!("node {} visited twice", link.to)));
            }
            nodes.push(link.to);
        }
        if *nodes.last().expect("non-empty") != od.destination {
            return Err(invalid("route does not end at the destination".into()));
        }
        Ok(Route { od, links, nodes })
    }

    pub fn od(&self) -> Od {
        self.od
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Travel time at zero flow.
    pub fn free_flow_time<T: Scalar>(&self, network: &Network<T>) -> T {
        self.links
            .iter()
            .map(|id| {
                network
                    .link(*id)
                    .expect("route validated against network")
                    .free_flow_time
            })
            .fold(T::zero(), |acc, t| acc + t)
    }
}

/// Sum of the route's link times.
pub fn route_time<T: Scalar>(route: &Route, link_times: &BTreeMap<LinkId, T>) -> Result<T, NetworkError> {
    route.links.iter().try_fold(T::zero(), |acc, id| {
        link_times
            .get(id)
            .map(|t| acc + *t)
            .ok_or(NetworkError::UnknownLink(*id))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadResult<T> {
    pub link_flows: BTreeMap<LinkId, T>,
    pub link_times: BTreeMap<LinkId, T>,
    /// Per OD, travel time of each route in route-set order.
    pub route_times: BTreeMap<Od, Vec<T>>,
}

/// Loads route flows onto the network and evaluates link and route travel times.
///
/// Every route set is evaluated, including OD pairs absent from `route_flows` (they carry no
/// flow). Every network link appears in the result.
pub fn load_network<T: Scalar>(
    network: &Network<T>,
    route_flows: &BTreeMap<Od, Vec<T>>,
    route_sets: &[RouteSet<T>],
) -> Result<LoadResult<T>, NetworkError> {
    let mut link_flows: BTreeMap<LinkId, T> = network.links().iter().map(|l| (l.id, T::zero())).collect();
    for (od, flows) in route_flows {
        let set = route_sets
            .iter()
            .find(|s| s.od == *od)
            .ok_or(NetworkError::UnknownOd(*od))?;
        for (index, &flow) in flows.iter().enumerate() {
            let route = set
                .routes
                .get(index)
                .ok_or(NetworkError::UnknownRoute { od: *od, index })?;
            if !(flow >= T::zero()) {
                return Err(NetworkError::NegativeFlow {
                    link: route.links[0],
                    flow: flow.as_f64(),
                });
            }
            for id in route.links() {
                *link_flows.get_mut(id).ok_or(NetworkError::UnknownLink(*id))? += flow;
            }
        }
    }
    let mut link_times = BTreeMap::new();
    for link in network.links() {
        link_times.insert(link.id, link_cost(link, link_flows[&link.id])?);
    }
    let mut route_times = BTreeMap::new();
    for set in route_sets {
        let times = set
            .routes
            .iter()
            .map(|r| route_time(r, &link_times))
            .collect::<Result<Vec<_>, _>>()?;
        route_times.insert(set.od, times);
    }
    Ok(LoadResult {
        link_flows,
        link_times,
        route_times,
    })
}
