use std::collections::BTreeMap;

use serde::Serialize;

use super::graph::Graph;
use super::operator::{NoiseStream, OperatorSpec};
use super::MpgError;
use crate::catalog::{Direction, Formula, MetricDef};
use crate::expr::Expr;

/// Longest path (in edges) counted by the downstream-influence score.
pub const INFLUENCE_MAX_LEN: usize = 8;
/// Path enumeration limit.
pub const MAX_PATHS: usize = 1_000_000;

/// A path named by node ids, or by edge indices when parallel edges make
/// node names ambiguous.
#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    Nodes(Vec<String>),
    Edges(Vec<usize>),
}

impl PathSpec {
    pub fn nodes<S: AsRef<str>>(ids: &[S]) -> Self {
        PathSpec::Nodes(ids.iter().map(|s| s.as_ref().to_string()).collect())
    }
}

fn resolve_path(graph: &Graph, path: &PathSpec) -> Result<Vec<usize>, MpgError> {
    match path {
        PathSpec::Nodes(ids) => {
            let idx: Vec<usize> = ids.iter().map(|id| graph.require(id)).collect::<Result<_, _>>()?;
            let mut edges = Vec::new();
            for (hop, pair) in idx.windows(2).enumerate() {
                let found: Vec<usize> = graph.outbound[pair[0]]
                    .iter()
                    .copied()
                    .filter(|&k| graph.edge_dst[k] == pair[1])
                    .collect();
                match found.as_slice() {
                    [] => {
                        return Err(MpgError::Path(format!(
                            "hop {hop}: no edge from '{}' to '{}'",
                            ids[hop],
                            ids[hop + 1]
                        )))
                    }
                    [k] => edges.push(*k),
                    many => {
                        return Err(MpgError::Path(format!(
                            "hop {hop}: {} parallel edges from '{}' to '{}' ({:?}); name the path by edge indices",
                            many.len(),
                            ids[hop],
                            ids[hop + 1],
                            many
                        )))
                    }
                }
            }
            Ok(edges)
        }
        PathSpec::Edges(ks) => {
            for (hop, &k) in ks.iter().enumerate() {
                if k >= graph.edges().len() {
                    return Err(MpgError::Path(format!("hop {hop}: no edge with index {k}")));
                }
                if hop > 0 && graph.edge_dst[ks[hop - 1]] != graph.edge_src[k] {
                    return Err(MpgError::Path(format!(
                        "hop {hop}: edge {k} does not start where edge {} ends",
                        ks[hop - 1]
                    )));
                }
            }
            Ok(ks.clone())
        }
    }
}

/// Edge operators applied in sequence. Delays are ignored: the composite is
/// the static input-output map of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeOperator {
    pub edges: Vec<usize>,
    pub ops: Vec<OperatorSpec>,
}

impl CompositeOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for (&k, op) in self.edges.iter().zip(&self.ops) {
            let stream = NoiseStream {
                edge: k as u64,
                ..NoiseStream::default()
            };
            v = op.eval(&v, stream);
        }
        v
    }

    pub fn apply_scalar(&self, x: f64) -> f64 {
        self.apply(&[x])[0]
    }

    /// Product of alphas when every hop is linear (possibly delayed).
    pub fn linear_factor(&self) -> Option<f64> {
        self.ops.iter().try_fold(1.0, |acc, op| match op {
            OperatorSpec::Linear { alpha } => Some(acc * alpha),
            OperatorSpec::Delayed { inner, .. } => match **inner {
                OperatorSpec::Linear { alpha } => Some(acc * alpha),
                _ => None,
            },
            _ => None,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }
}

pub fn compose_path(graph: &Graph, path: &PathSpec) -> Result<CompositeOperator, MpgError> {
    let edges = resolve_path(graph, path)?;
    let ops = edges.iter().map(|&k| graph.edges()[k].op.clone()).collect();
    Ok(CompositeOperator { edges, ops })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Amplification {
    pub gamma: f64,
    pub amplifying: bool,
}

/// Product of edge gains along the path; amplifying iff Γ > 1.
pub fn amplification_factor(graph: &Graph, path: &PathSpec) -> Result<Amplification, MpgError> {
    let gamma = resolve_path(graph, path)?.iter().map(|&k| graph.gain(k)).product::<f64>();
    Ok(Amplification {
        gamma,
        amplifying: gamma > 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedNode {
    pub id: String,
    pub score: f64,
}

fn rank(mut v: Vec<RankedNode>) -> Vec<RankedNode> {
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    v
}

/// Nodes by Σ|γ| over inbound edges, descending; ties by id.
pub fn find_bottlenecks(graph: &Graph) -> Vec<RankedNode> {
    rank(
        graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| RankedNode {
                id: n.id.clone(),
                score: graph.inbound[i].iter().map(|&k| graph.gain(k).abs()).sum(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeveragePoint {
    pub id: String,
    /// Σ|γ| over outbound edges.
    pub outbound: f64,
    /// Σ |Γ| over simple paths leaving the node, up to 8 edges long.
    pub influence: f64,
}

struct PathWalk<'a> {
    graph: &'a Graph,
    on_path: Vec<bool>,
    count: usize,
}

impl PathWalk<'_> {
    fn new(graph: &Graph) -> PathWalk<'_> {
        PathWalk {
            graph,
            on_path: vec![false; graph.nodes().len()],
            count: 0,
        }
    }

    fn tick(&mut self) -> Result<(), MpgError> {
        self.count += 1;
        if self.count > MAX_PATHS {
            Err(MpgError::Scale { limit: MAX_PATHS })
        } else {
            Ok(())
        }
    }

    /// Σ|Γ| of simple paths from `u` with at most `left` more edges.
    fn influence(&mut self, u: usize, gamma: f64, left: usize) -> Result<f64, MpgError> {
        if left == 0 {
            return Ok(0.0);
        }
        self.on_path[u] = true;
        let mut total = 0.0;
        for &k in &self.graph.outbound[u] {
            let v = self.graph.edge_dst[k];
            if self.on_path[v] {
                continue;
            }
            self.tick()?;
            let g = gamma * self.graph.gain(k);
            total += g.abs() + self.influence(v, g, left - 1)?;
        }
        self.on_path[u] = false;
        Ok(total)
    }

    /// (Σ Γ, path count) over simple paths `u → … → dst`.
    fn paths_to(&mut self, u: usize, dst: usize, gamma: f64) -> Result<(f64, usize), MpgError> {
        if u == dst {
            self.tick()?;
            return Ok((gamma, 1));
        }
        self.on_path[u] = true;
        let (mut sum, mut paths) = (0.0, 0);
        for &k in &self.graph.outbound[u] {
            let v = self.graph.edge_dst[k];
            if self.on_path[v] {
                continue;
            }
            let (s, p) = self.paths_to(v, dst, gamma * self.graph.gain(k))?;
            sum += s;
            paths += p;
        }
        self.on_path[u] = false;
        Ok((sum, paths))
    }
}

/// Nodes by Σ|γ| over outbound edges, descending; ties by id. Each entry
/// also carries its downstream-influence score; see [`by_influence`].
pub fn find_leverage_points(graph: &Graph) -> Result<Vec<LeveragePoint>, MpgError> {
    let mut out = Vec::with_capacity(graph.nodes().len());
    for (i, n) in graph.nodes().iter().enumerate() {
        let influence = PathWalk::new(graph).influence(i, 1.0, INFLUENCE_MAX_LEN)?;
        out.push(LeveragePoint {
            id: n.id.clone(),
            outbound: graph.outbound[i].iter().map(|&k| graph.gain(k).abs()).sum(),
            influence,
        });
    }
    out.sort_by(|a, b| b.outbound.total_cmp(&a.outbound).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

/// Re-ranks leverage points by downstream influence, descending; ties by id.
pub fn by_influence(points: &[LeveragePoint]) -> Vec<LeveragePoint> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| b.influence.total_cmp(&a.influence).then_with(|| a.id.cmp(&b.id)));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMetric {
    /// Σ over simple src → dst paths of Γ.
    pub coefficient: f64,
    pub paths: usize,
    pub metric: MetricDef,
}

/// Derived metric "dst per unit src" whose value is the summed path gain.
pub fn synthesize_composite_metric(graph: &Graph, src: &str, dst: &str) -> Result<CompositeMetric, MpgError> {
    let (s, d) = (graph.require(src)?, graph.require(dst)?);
    let (coefficient, paths) = PathWalk::new(graph).paths_to(s, d, 1.0)?;
    if paths == 0 {
        return Err(MpgError::Unreachable {
            src: src.to_string(),
            dst: dst.to_string(),
        });
    }
    let (sn, dn) = (&graph.nodes()[s], &graph.nodes()[d]);
    let unit = dn.unit.per(&sn.unit);
    let metric = MetricDef {
        id: format!("{dst}_per_{src}"),
        name: format!("{dst} per unit {src} (propagated)"),
        symbol: None,
        cell: dn.cell,
        unit: unit.clone(),
        inputs: BTreeMap::new(),
        formula: Formula::Expr(Expr::lit(coefficient, unit)),
        direction: Direction::Contextual,
        range: None,
        tags: vec!["composite".into()],
        note: Some(format!("sum of path gains over {paths} simple path(s)")),
    };
    Ok(CompositeMetric {
        coefficient,
        paths,
        metric,
    })
}
