use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::{AggregationSpec, EdgeSpec, GraphSpec, MpgError, NodeSpec, OperatorSpec};
use crate::taxonomy::LayerId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeGain {
    pub edge: usize,
    pub src: String,
    pub dst: String,
    pub gain: f64,
    /// True when the document set the gain; false for the default.
    pub explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub nodes: usize,
    pub edges: usize,
    /// Whitelisted strongly connected groups, as sorted node ids.
    pub intra_layer_cycles: Vec<Vec<String>>,
    /// Node id → resolved aggregation name.
    pub aggregations: BTreeMap<String, String>,
    pub gains: Vec<EdgeGain>,
    pub max_delay: u32,
}

/// A validated propagation graph. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    spec: GraphSpec,
    index: BTreeMap<String, usize>,
    pub(super) edge_src: Vec<usize>,
    pub(super) edge_dst: Vec<usize>,
    pub(super) inbound: Vec<Vec<usize>>,
    pub(super) outbound: Vec<Vec<usize>>,
    pub(super) aggregation: Vec<AggregationSpec>,
    pub(super) gains: Vec<f64>,
    pub(super) max_delay: u32,
    report: ValidationReport,
}

struct Resolved {
    index: BTreeMap<String, usize>,
    edge_src: Vec<usize>,
    edge_dst: Vec<usize>,
}

fn resolve(spec: &GraphSpec) -> Result<Resolved, MpgError> {
    let mut index = BTreeMap::new();
    for (i, n) in spec.nodes.iter().enumerate() {
        check_node(n)?;
        if index.insert(n.id.clone(), i).is_some() {
            return Err(MpgError::DuplicateNode(n.id.clone()));
        }
    }
    let mut edge_src = Vec::with_capacity(spec.edges.len());
    let mut edge_dst = Vec::with_capacity(spec.edges.len());
    for (k, e) in spec.edges.iter().enumerate() {
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| MpgError::Reference {
                edge: k,
                node: id.to_string(),
            })
        };
        let (s, d) = (lookup(&e.src)?, lookup(&e.dst)?);
        if s == d {
            return Err(MpgError::SelfLoop {
                edge: k,
                node: e.src.clone(),
            });
        }
        let (sd, dd) = (spec.nodes[s].dim(), spec.nodes[d].dim());
        if sd != dd {
            return Err(MpgError::DimensionMismatch {
                edge: k,
                src: e.src.clone(),
                dst: e.dst.clone(),
                src_dim: sd,
                dst_dim: dd,
            });
        }
        e.op.validate().map_err(|msg| MpgError::Operator { edge: k, msg })?;
        if let Some(g) = e.gain {
            if !g.is_finite() {
                return Err(MpgError::Operator {
                    edge: k,
                    msg: "gain is not finite".into(),
                });
            }
        }
        edge_src.push(s);
        edge_dst.push(d);
    }
    Ok(Resolved {
        index,
        edge_src,
        edge_dst,
    })
}

fn check_node(n: &NodeSpec) -> Result<(), MpgError> {
    let bad = |msg: &str| MpgError::Node {
        id: n.id.clone(),
        msg: msg.to_string(),
    };
    if n.id.is_empty() {
        return Err(bad("empty node id"));
    }
    if n.init.is_empty() {
        return Err(bad("dimension must be at least 1"));
    }
    if n.init.iter().any(|v| !v.is_finite()) {
        return Err(bad("initial value is not finite"));
    }
    if let Some(AggregationSpec::DiscountedAdditive { rate }) = n.aggregation {
        if !(rate.is_finite() && rate > -1.0) {
            return Err(bad("discount rate must exceed -1"));
        }
    }
    Ok(())
}

/// Tarjan's algorithm, iterative. Components come out in reverse
/// topological order; members are sorted.
pub(super) fn strongly_connected(n: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("component member on stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Shortest path `from → … → to` using only nodes in `allowed`.
fn bfs_path(adj: &[Vec<usize>], from: usize, to: usize, allowed: &BTreeSet<usize>) -> Option<Vec<usize>> {
    let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[&cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &w in &adj[u] {
            if allowed.contains(&w) && seen.insert(w) {
                prev.insert(w, u);
                queue.push_back(w);
            }
        }
    }
    None
}

fn check_cycles(spec: &GraphSpec, r: &Resolved) -> Result<Vec<Vec<String>>, MpgError> {
    let n = spec.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for (&s, &d) in r.edge_src.iter().zip(&r.edge_dst) {
        if !adj[s].contains(&d) {
            adj[s].push(d);
        }
    }
    let layer = |i: usize| spec.nodes[i].cell.layer;
    let ids = |path: &[usize]| path.iter().map(|&i| spec.nodes[i].id.clone()).collect::<Vec<_>>();
    let mut whitelisted = Vec::new();
    let mut comps = strongly_connected(n, &adj);
    comps.sort();
    for comp in comps.into_iter().filter(|c| c.len() > 1) {
        let members: BTreeSet<usize> = comp.iter().copied().collect();
        let layers: BTreeSet<LayerId> = comp.iter().map(|&i| layer(i)).collect();
        if layers.len() > 1 {
            // a crossing edge inside the component closes a cross-layer cycle
            let (u, v) = r
                .edge_src
                .iter()
                .zip(&r.edge_dst)
                .map(|(&s, &d)| (s, d))
                .find(|&(s, d)| members.contains(&s) && members.contains(&d) && layer(s) != layer(d))
                .expect("multi-layer component has a crossing edge");
            let mut path = vec![u];
            path.extend(bfs_path(&adj, v, u, &members).expect("strongly connected"));
            return Err(MpgError::CrossLayerCycle { path: ids(&path) });
        }
        let l = *layers.iter().next().expect("non-empty component");
        if !spec.allow_intra_layer_cycles.contains(&l) {
            let u = comp[0];
            let v = *adj[u].iter().find(|w| members.contains(w)).expect("cycle edge");
            let mut path = vec![u];
            path.extend(bfs_path(&adj, v, u, &members).expect("strongly connected"));
            return Err(MpgError::IntraLayerCycle {
                layer: l.get(),
                path: ids(&path),
            });
        }
        let mut names = ids(&comp);
        names.sort();
        whitelisted.push(names);
    }
    Ok(whitelisted)
}

fn default_aggregation(spec: &GraphSpec, inbound: &[usize]) -> AggregationSpec {
    let multiplicative = inbound
        .iter()
        .any(|&k| matches!(spec.edges[k].op.primitive(), OperatorSpec::Multiplicative { .. }));
    if multiplicative {
        AggregationSpec::Multiplicative
    } else {
        AggregationSpec::Additive
    }
}

/// Checks references, self-loops, dimensions, operators and the cycle rules:
/// every cycle must stay inside one layer and that layer must be whitelisted.
pub fn validate_graph(spec: &GraphSpec) -> Result<ValidationReport, MpgError> {
    Graph::new(spec.clone()).map(|g| g.report)
}

impl Graph {
    pub fn new(spec: GraphSpec) -> Result<Self, MpgError> {
        let r = resolve(&spec)?;
        let intra_layer_cycles = check_cycles(&spec, &r)?;
        let n = spec.nodes.len();
        let mut inbound = vec![Vec::new(); n];
        let mut outbound = vec![Vec::new(); n];
        for (k, (&s, &d)) in r.edge_src.iter().zip(&r.edge_dst).enumerate() {
            outbound[s].push(k);
            inbound[d].push(k);
        }
        let aggregation: Vec<AggregationSpec> = (0..n)
            .map(|i| spec.nodes[i].aggregation.unwrap_or_else(|| default_aggregation(&spec, &inbound[i])))
            .collect();
        let gains: Vec<f64> = spec
            .edges
            .iter()
            .zip(&r.edge_dst)
            .map(|(e, &d)| e.gain.unwrap_or_else(|| e.op.default_gain(&spec.nodes[d].init)))
            .collect();
        let max_delay = spec.edges.iter().map(|e| e.op.delay()).max().unwrap_or(0);
        let report = ValidationReport {
            nodes: n,
            edges: spec.edges.len(),
            intra_layer_cycles,
            aggregations: spec
                .nodes
                .iter()
                .zip(&aggregation)
                .map(|(node, a)| (node.id.clone(), a.name().to_string()))
                .collect(),
            gains: spec
                .edges
                .iter()
                .enumerate()
                .map(|(k, e)| EdgeGain {
                    edge: k,
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    gain: gains[k],
                    explicit: e.gain.is_some(),
                })
                .collect(),
            max_delay,
        };
        Ok(Graph {
            spec,
            index: r.index,
            edge_src: r.edge_src,
            edge_dst: r.edge_dst,
            inbound,
            outbound,
            aggregation,
            gains,
            max_delay,
            report,
        })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.spec.nodes
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.spec.edges
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.index.get(id).map(|&i| &self.spec.nodes[i])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(super) fn require(&self, id: &str) -> Result<usize, MpgError> {
        self.node_index(id).ok_or_else(|| MpgError::UnknownNode(id.to_string()))
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Resolved gain of edge `k`.
    pub fn gain(&self, k: usize) -> f64 {
        self.gains[k]
    }

    pub fn aggregation(&self, node: usize) -> AggregationSpec {
        self.aggregation[node]
    }

    pub fn edge_endpoints(&self, k: usize) -> (usize, usize) {
        (self.edge_src[k], self.edge_dst[k])
    }

    pub fn max_delay(&self) -> u32 {
        self.max_delay
    }

    /// Sum of node dimensions.
    pub fn total_dim(&self) -> usize {
        self.spec.nodes.iter().map(NodeSpec::dim).sum()
    }
}
