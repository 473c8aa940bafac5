use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::graph::Graph;
use super::state::State;
use super::MpgError;

/// Row/column label of a propagation matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LegendEntry {
    Node { id: String, component: usize },
    /// Auxiliary slot holding `id[component]` from `lag` steps back.
    Lag { id: String, component: usize, lag: u32 },
}

impl fmt::Display for LegendEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LegendEntry::Node { id, component } => write!(f, "{id}[{component}]"),
            LegendEntry::Lag { id, component, lag } => write!(f, "{id}[{component}]@t-{lag}"),
        }
    }
}

/// Dense square matrix over flattened node components, plus companion
/// rows for delayed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix {
    n: usize,
    data: Vec<f64>,
    pub legend: Vec<LegendEntry>,
}

impl PropagationMatrix {
    pub fn zeros(legend: Vec<LegendEntry>) -> Self {
        let n = legend.len();
        PropagationMatrix {
            n,
            data: vec![0.0; n * n],
            legend,
        }
    }

    /// From row vectors; legend entries are `r{i}` node labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MpgError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(MpgError::Shape {
                rows: n,
                cols: bad.len(),
            });
        }
        let legend = (0..n)
            .map(|i| LegendEntry::Node {
                id: format!("r{i}"),
                component: 0,
            })
            .collect();
        Ok(PropagationMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
            legend,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).take(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PropagationMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
            legend: self.legend.clone(),
        }
    }

    /// Position of a legend entry.
    pub fn index_of(&self, entry: &LegendEntry) -> Option<usize> {
        self.legend.iter().position(|e| e == entry)
    }

    /// Position of `id[component]`.
    pub fn node_index(&self, id: &str, component: usize) -> Option<usize> {
        self.index_of(&LegendEntry::Node {
            id: id.to_string(),
            component,
        })
    }

    /// The (nodes × nodes) block, dropping companion rows and columns.
    pub fn node_block(&self) -> Vec<Vec<f64>> {
        let keep: Vec<usize> = (0..self.n)
            .filter(|&i| matches!(self.legend[i], LegendEntry::Node { .. }))
            .collect();
        keep.iter()
            .map(|&r| keep.iter().map(|&c| self.get(r, c)).collect())
            .collect()
    }
}

impl fmt::Display for PropagationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.legend.iter().map(ToString::to_string).collect();
        let width = labels.iter().map(String::len).max().unwrap_or(1).max(8);
        write!(f, "{:width$}", "")?;
        for l in &labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        for (r, l) in labels.iter().enumerate() {
            write!(f, "{l:width$}")?;
            for c in 0..self.n {
                write!(f, " {:>width$}", format_entry(self.get(r, c)))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn format_entry(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{}", (v * 1e12).round() / 1e12)
    }
}

/// Jacobian W of one update step at `state`: `W[v,u] = ∂M_v(t+1)/∂M_u(t)`.
///
/// Delayed edges get a chain of companion slots per source component, one
/// per lag step, so that W acts on the augmented state.
pub fn linearize(graph: &Graph, state: &State) -> Result<PropagationMatrix, MpgError> {
    let nodes = graph.nodes();
    let mut legend = Vec::new();
    let mut offset = Vec::with_capacity(nodes.len());
    for n in nodes {
        offset.push(legend.len());
        for c in 0..n.dim() {
            legend.push(LegendEntry::Node {
                id: n.id.clone(),
                component: c,
            });
        }
    }
    // longest lag read from each source
    let mut lags: BTreeMap<usize, u32> = BTreeMap::new();
    for (k, e) in graph.edges().iter().enumerate() {
        let d = e.op.delay();
        if d > 0 {
            let src = graph.edge_src[k];
            let entry = lags.entry(src).or_default();
            *entry = (*entry).max(d);
        }
    }
    // aux[(src, component, lag)] -> matrix index
    let mut aux: BTreeMap<(usize, usize, u32), usize> = BTreeMap::new();
    for (&src, &max_lag) in &lags {
        for c in 0..nodes[src].dim() {
            for lag in 1..=max_lag {
                aux.insert((src, c, lag), legend.len());
                legend.push(LegendEntry::Lag {
                    id: nodes[src].id.clone(),
                    component: c,
                    lag,
                });
            }
        }
    }
    let mut w = PropagationMatrix::zeros(legend);
    for (&(src, c, lag), &row) in &aux {
        let col = if lag == 1 { offset[src] + c } else { aux[&(src, c, lag - 1)] };
        w.set(row, col, 1.0);
    }

    let y = graph.contributions(state)?;
    for (k, e) in graph.edges().iter().enumerate() {
        let (src, dst) = graph.edge_endpoints(k);
        let x = graph.edge_input(state, k)?;
        let stream = graph.stream(state, k);
        let agg = graph.aggregation(dst);
        let lag = e.op.delay();
        for (c, &xc) in x.iter().enumerate() {
            let level = state.levels()[dst][c];
            let d = e.op.derivative(xc, stream, c) * agg.dy(level, y[dst][c]);
            let col = if lag == 0 { offset[src] + c } else { aux[&(src, c, lag)] };
            w.add(offset[dst] + c, col, d);
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpg::{EdgeSpec, GraphSpec, NodeSpec, OperatorSpec};
    use crate::taxonomy::validate_cell;

    fn two(op: OperatorSpec) -> Graph {
        Graph::new(GraphSpec {
            nodes: vec![
                NodeSpec::scalar("u", validate_cell(1, 1).unwrap(), 0.5),
                NodeSpec::scalar("v", validate_cell(2, 1).unwrap(), 2.0),
            ],
            edges: vec![EdgeSpec::new("u", "v", op)],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn single_linear_edge() {
        let g = two(OperatorSpec::linear(0.3));
        let w = linearize(&g, &State::new(&g)).unwrap();
        assert_eq!(w.rows(), vec![vec![0.0, 0.0], vec![0.3, 0.0]]);
    }

    #[test]
    fn multiplicative_scales_by_level() {
        let g = two(OperatorSpec::Multiplicative { beta: 0.25 });
        let w = linearize(&g, &State::new(&g)).unwrap();
        assert_eq!(w.get(1, 0), 0.5);
    }

    #[test]
    fn delayed_uses_companion_chain() {
        let g = two(OperatorSpec::Delayed {
            delta_t: 2,
            inner: Box::new(OperatorSpec::linear(0.7)),
        });
        let w = linearize(&g, &State::new(&g)).unwrap();
        assert_eq!(w.dim(), 4);
        let lag1 = w.index_of(&LegendEntry::Lag { id: "u".into(), component: 0, lag: 1 }).unwrap();
        let lag2 = w.index_of(&LegendEntry::Lag { id: "u".into(), component: 0, lag: 2 }).unwrap();
        assert_eq!(w.get(lag1, 0), 1.0);
        assert_eq!(w.get(lag2, lag1), 1.0);
        assert_eq!(w.get(1, lag2), 0.7);
        assert_eq!(w.get(1, 0), 0.0);
        assert_eq!(w.node_block(), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(matches!(
            PropagationMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(MpgError::Shape { .. })
        ));
    }
}
