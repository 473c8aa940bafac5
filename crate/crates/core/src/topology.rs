//! Cluster-topology metrics that are graph computations: hop diameter,
//! global min-cut bandwidth, balanced bisection bandwidth and oversubscription.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Quantity, Unit, UnitError};

pub const TOPOLOGY_SCHEMA: &str = "topo-v1";
/// Largest node count for exhaustive balanced bisection.
pub const MAX_BISECTION_NODES: usize = 20;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported topology schema '{0}', expected '{TOPOLOGY_SCHEMA}'")]
    Schema(String),
    #[error("bandwidth unit: {0}")]
    Unit(#[from] UnitError),
    #[error("node '{0}' is declared more than once")]
    DuplicateNode(String),
    #[error("link {index} references undeclared node '{node}'")]
    UnknownNode { index: usize, node: String },
    #[error("link {index} connects '{node}' to itself")]
    SelfLink { index: usize, node: String },
    #[error("link {index} has bandwidth {bw}; bandwidths must be positive and finite")]
    Bandwidth { index: usize, bw: f64 },
    #[error("topology has {0} node(s); at least 2 are required")]
    TooSmall(usize),
    #[error("topology is disconnected: '{0}' is unreachable from '{1}'")]
    Disconnected(String, String),
    #[error("balanced bisection is exhaustive and limited to {MAX_BISECTION_NODES} nodes (got {0}); use the interconnect bisection bandwidth instead")]
    Scale(usize),
    #[error("missing aggregate '{0}'")]
    MissingAggregate(&'static str),
    #[error("singular input: switch uplink bandwidth is zero")]
    SingularUplink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub bw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDocument {
    schema: String,
    nodes: Vec<String>,
    links: Vec<Link>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gpu_aggregate_bw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    switch_uplink_bw: Option<f64>,
    unit: String,
}

/// An undirected cluster graph. Parallel links are merged by summing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTopology {
    nodes: Vec<String>,
    links: Vec<Link>,
    /// Nodes sorted by id; all internal indices refer to this order.
    order: Vec<String>,
    weights: Vec<Vec<f64>>,
    pub gpu_aggregate_bw: Option<f64>,
    pub switch_uplink_bw: Option<f64>,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub weight: f64,
    /// Node ids on the side that does not contain the smallest id, sorted.
    pub side: Vec<String>,
}

impl ClusterTopology {
    pub fn new(nodes: Vec<String>, links: Vec<Link>, unit: Unit) -> Result<Self, TopologyError> {
        let mut order = nodes.clone();
        order.sort();
        for w in order.windows(2) {
            if w[0] == w[1] {
                return Err(TopologyError::DuplicateNode(w[0].clone()));
            }
        }
        let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let n = order.len();
        let mut weights = vec![vec![0.0; n]; n];
        for (index, l) in links.iter().enumerate() {
            let lookup = |node: &str| {
                pos.get(node).copied().ok_or_else(|| TopologyError::UnknownNode {
                    index,
                    node: node.to_string(),
                })
            };
            let (a, b) = (lookup(&l.a)?, lookup(&l.b)?);
            if a == b {
                return Err(TopologyError::SelfLink {
                    index,
                    node: l.a.clone(),
                });
            }
            if !(l.bw > 0.0 && l.bw.is_finite()) {
                return Err(TopologyError::Bandwidth { index, bw: l.bw });
            }
            weights[a][b] += l.bw;
            weights[b][a] += l.bw;
        }
        Ok(ClusterTopology {
            nodes,
            links,
            order,
            weights,
            gpu_aggregate_bw: None,
            switch_uplink_bw: None,
            unit,
        })
    }

    pub fn with_aggregates(mut self, gpu_aggregate_bw: Option<f64>, switch_uplink_bw: Option<f64>) -> Self {
        self.gpu_aggregate_bw = gpu_aggregate_bw;
        self.switch_uplink_bw = switch_uplink_bw;
        self
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Merged bandwidth between two nodes, 0 when unlinked.
    pub fn bandwidth(&self, a: &str, b: &str) -> f64 {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.weights[i][j],
            _ => 0.0,
        }
    }

    fn index(&self, id: &str) -> Option<usize> {
        self.order.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let n = self.len();
        if n < 2 {
            return Err(TopologyError::TooSmall(n));
        }
        let dist = self.bfs(0);
        match dist.iter().position(Option::is_none) {
            Some(i) => Err(TopologyError::Disconnected(self.order[i].clone(), self.order[0].clone())),
            None => Ok(()),
        }
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let n = self.len();
        let mut dist = vec![None; n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("visited");
            for v in 0..n {
                if self.weights[u][v] > 0.0 && dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn side_ids(&self, mask: impl Fn(usize) -> bool) -> Vec<String> {
        (0..self.len()).filter(|&i| mask(i)).map(|i| self.order[i].clone()).collect()
    }

    fn cut_weight(&self, in_side: &[bool]) -> f64 {
        let n = self.len();
        let mut w = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                if in_side[i] != in_side[j] {
                    w += self.weights[i][j];
                }
            }
        }
        w
    }
}

/// Parses a `topo-v1` document.
pub fn parse_topology_document(text: &str) -> Result<ClusterTopology, TopologyError> {
    let doc: TopologyDocument = serde_json::from_str(text)?;
    if doc.schema != TOPOLOGY_SCHEMA {
        return Err(TopologyError::Schema(doc.schema));
    }
    let unit = Unit::parse(&doc.unit)?;
    Ok(ClusterTopology::new(doc.nodes, doc.links, unit)?
        .with_aggregates(doc.gpu_aggregate_bw, doc.switch_uplink_bw))
}

pub fn topology_to_document(topo: &ClusterTopology) -> String {
    let doc = TopologyDocument {
        schema: TOPOLOGY_SCHEMA.into(),
        nodes: topo.nodes.clone(),
        links: topo.links.clone(),
        gpu_aggregate_bw: topo.gpu_aggregate_bw,
        switch_uplink_bw: topo.switch_uplink_bw,
        unit: topo.unit.symbol().into(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Largest unweighted shortest-path length over node pairs.
pub fn network_diameter(topo: &ClusterTopology) -> Result<usize, TopologyError> {
    topo.check_connected()?;
    let mut best = 0;
    for s in 0..topo.len() {
        for d in topo.bfs(s).into_iter().flatten() {
            best = best.max(d);
        }
    }
    Ok(best)
}

/// Global minimum cut by Stoer–Wagner. Among equal-weight cuts the first
/// found wins; candidates are scanned in node-id order so the result is
/// reproducible.
pub fn global_min_cut(topo: &ClusterTopology) -> Result<Cut, TopologyError> {
    topo.check_connected()?;
    let n = topo.len();
    let mut w = topo.weights.clone();
    // members[v]: original nodes merged into super-node v
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;

    while active.len() > 1 {
        let mut added = vec![false; n];
        let mut key = vec![0.0; n];
        let mut prev = active[0];
        let mut last = active[0];
        for step in 0..active.len() {
            let mut pick = None;
            for &v in &active {
                if added[v] {
                    continue;
                }
                match pick {
                    None => pick = Some(v),
                    Some(p) if key[v] > key[p] => pick = Some(v),
                    _ => {}
                }
            }
            let v = pick.expect("an unadded node remains");
            added[v] = true;
            if step + 1 == active.len() {
                let phase = key[v];
                if best.as_ref().is_none_or(|(b, _)| phase < *b) {
                    best = Some((phase, members[v].clone()));
                }
                last = v;
            } else {
                prev = v;
                for &u in &active {
                    if !added[u] {
                        key[u] += w[v][u];
                    }
                }
            }
        }
        // merge `last` into `prev`
        let moved = std::mem::take(&mut members[last]);
        members[prev].extend(moved);
        for &u in &active {
            w[prev][u] += w[last][u];
            w[u][prev] = w[prev][u];
        }
        w[prev][prev] = 0.0;
        active.retain(|&u| u != last);
    }

    let (weight, group) = best.expect("at least two nodes");
    let mut in_group = vec![false; n];
    for i in group {
        in_group[i] = true;
    }
    // report the side without the smallest id
    let flip = in_group[0];
    Ok(Cut {
        weight,
        side: topo.side_ids(|i| in_group[i] != flip),
    })
}

/// Minimum bandwidth across any 2-partition of the cluster.
pub fn interconnect_bisection_bandwidth(topo: &ClusterTopology) -> Result<Quantity, TopologyError> {
    Ok(Quantity::new(global_min_cut(topo)?.weight, topo.unit.clone()))
}

/// Minimum cut over partitions of sizes ⌊n/2⌋ and ⌈n/2⌉, by enumeration.
pub fn balanced_min_cut(topo: &ClusterTopology) -> Result<Cut, TopologyError> {
    let n = topo.len();
    if n > MAX_BISECTION_NODES {
        return Err(TopologyError::Scale(n));
    }
    topo.check_connected()?;
    let k = n / 2;
    let mut best: Option<(f64, u32)> = None;
    let mut in_side = vec![false; n];
    // Gosper's hack over k-subsets; for even n fix node 0 outside the subset
    // so each partition is seen once.
    let mut mask: u32 = (1u32 << k) - 1;
    let limit: u32 = 1u32 << n;
    while mask < limit {
        if n % 2 == 1 || mask & 1 == 0 {
            for (i, s) in in_side.iter_mut().enumerate() {
                *s = mask >> i & 1 == 1;
            }
            let w = topo.cut_weight(&in_side);
            if best.is_none_or(|(b, _)| w < b) {
                best = Some((w, mask));
            }
        }
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    let (weight, mask) = best.expect("n >= 2 has a balanced partition");
    let flip = mask & 1 == 1;
    Ok(Cut {
        weight,
        side: topo.side_ids(|i| (mask >> i & 1 == 1) != flip),
    })
}

pub fn balanced_bisection_bandwidth(topo: &ClusterTopology) -> Result<Quantity, TopologyError> {
    Ok(Quantity::new(balanced_min_cut(topo)?.weight, topo.unit.clone()))
}

/// GPU aggregate bandwidth over switch uplink bandwidth.
pub fn oversubscription_ratio(topo: &ClusterTopology) -> Result<Quantity, TopologyError> {
    let gpu = topo
        .gpu_aggregate_bw
        .ok_or(TopologyError::MissingAggregate("gpu_aggregate_bw"))?;
    let up = topo
        .switch_uplink_bw
        .ok_or(TopologyError::MissingAggregate("switch_uplink_bw"))?;
    if up == 0.0 {
        return Err(TopologyError::SingularUplink);
    }
    Ok(Quantity::dimensionless(gpu / up))
}
