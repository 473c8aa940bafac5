use std::collections::{BTreeMap, VecDeque};

use super::graph::Graph;
use super::operator::{NoiseStream, OperatorSpec};
use super::MpgError;

/// Node values at one step, the exogenous level each node relaxes to, and
/// enough history for delayed edges.
///
/// The level starts at the initial value and accumulates shocks. Each step
/// computes `M_v(t+1) = A_v(level_v, Σ contributions from M(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: u64,
    pub seed: u64,
    values: Vec<Vec<f64>>,
    levels: Vec<Vec<f64>>,
    initial: Vec<Vec<f64>>,
    /// Front is M(t-1).
    history: VecDeque<Vec<Vec<f64>>>,
    depth: usize,
}

impl State {
    /// State at t=0 from the nodes' declared initial values.
    pub fn new(graph: &Graph) -> Self {
        let values: Vec<Vec<f64>> = graph.nodes().iter().map(|n| n.init.clone()).collect();
        State::at_zero(graph, values)
    }

    /// Zero vectors for every node.
    pub fn zero(graph: &Graph) -> Self {
        let values = graph.nodes().iter().map(|n| vec![0.0; n.dim()]).collect();
        State::at_zero(graph, values)
    }

    /// State at t=0 with per-node overrides of the initial value.
    pub fn with_init(graph: &Graph, init: &BTreeMap<String, Vec<f64>>) -> Result<Self, MpgError> {
        let mut values: Vec<Vec<f64>> = graph.nodes().iter().map(|n| n.init.clone()).collect();
        for (id, v) in init {
            let i = graph.require(id)?;
            if v.len() != values[i].len() {
                return Err(MpgError::ShockShape {
                    node: id.clone(),
                    expected: values[i].len(),
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MpgError::Node {
                    id: id.clone(),
                    msg: "initial value is not finite".into(),
                });
            }
            values[i] = v.clone();
        }
        Ok(State::at_zero(graph, values))
    }

    fn at_zero(graph: &Graph, values: Vec<Vec<f64>>) -> Self {
        State {
            t: 0,
            seed: 0,
            levels: values.clone(),
            initial: values.clone(),
            values,
            history: VecDeque::new(),
            depth: graph.max_delay() as usize,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Overrides the history depth. A depth below the graph's largest delay
    /// makes delayed reads fail once `t` reaches the delay.
    pub fn with_history_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self.history.truncate(depth);
        self
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node]
    }

    pub fn get(&self, graph: &Graph, id: &str) -> Option<&[f64]> {
        graph.node_index(id).map(|i| self.values[i].as_slice())
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// All components, node-major.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Overwrites one component. The level is left alone.
    pub fn set_component(&mut self, node: usize, component: usize, value: f64) {
        self.values[node][component] = value;
    }

    /// M_node(t - lag); the initial value before the start of the run.
    pub fn lagged(&self, node: usize, lag: u32) -> Result<&[f64], MpgError> {
        if lag == 0 {
            return Ok(&self.values[node]);
        }
        if u64::from(lag) > self.t {
            return Ok(&self.initial[node]);
        }
        self.history
            .get(lag as usize - 1)
            .map(|h| h[node].as_slice())
            .ok_or_else(|| {
                MpgError::State(format!(
                    "delayed read {lag} step(s) back at t={} but only {} step(s) of history are kept",
                    self.t,
                    self.history.len()
                ))
            })
    }

    /// Adds shock vectors to both the current value and the level.
    pub fn apply_shock(&mut self, graph: &Graph, shock: &BTreeMap<String, Vec<f64>>) -> Result<(), MpgError> {
        for (id, delta) in shock {
            let i = graph.require(id)?;
            if delta.len() != self.values[i].len() {
                return Err(MpgError::ShockShape {
                    node: id.clone(),
                    expected: self.values[i].len(),
                    got: delta.len(),
                });
            }
            for (c, d) in delta.iter().enumerate() {
                self.values[i][c] += d;
                self.levels[i][c] += d;
            }
        }
        Ok(())
    }
}

impl Graph {
    pub(super) fn stream(&self, state: &State, edge: usize) -> NoiseStream {
        NoiseStream {
            run_seed: state.seed,
            t: state.t,
            edge: edge as u64,
        }
    }

    /// Source value seen by edge `k`: current, or lagged for delayed edges.
    pub(super) fn edge_input<'a>(&self, state: &'a State, k: usize) -> Result<&'a [f64], MpgError> {
        let src = self.edge_src[k];
        match &self.edges()[k].op {
            OperatorSpec::Delayed { delta_t, .. } => state.lagged(src, *delta_t),
            _ => Ok(state.value(src)),
        }
    }

    /// Σ inbound contributions at every node, in edge declaration order.
    pub(super) fn contributions(&self, state: &State) -> Result<Vec<Vec<f64>>, MpgError> {
        let mut y: Vec<Vec<f64>> = self.nodes().iter().map(|n| vec![0.0; n.dim()]).collect();
        for (k, e) in self.edges().iter().enumerate() {
            let x = self.edge_input(state, k)?;
            let stream = self.stream(state, k);
            let dst = &mut y[self.edge_dst[k]];
            for (c, &xc) in x.iter().enumerate() {
                dst[c] += e.op.eval_scalar(xc, stream, c);
            }
        }
        Ok(y)
    }

    /// One simultaneous update with no shock.
    pub fn advance(&self, state: &State) -> Result<State, MpgError> {
        let y = self.contributions(state)?;
        let mut next = Vec::with_capacity(y.len());
        for (i, yi) in y.iter().enumerate() {
            let agg = self.aggregation[i];
            let has_inbound = !self.inbound[i].is_empty();
            let v: Vec<f64> = yi
                .iter()
                .zip(&state.levels[i])
                .map(|(&yc, &level)| agg.combine(level, yc, has_inbound))
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MpgError::Overflow {
                    node: self.nodes()[i].id.clone(),
                    t: state.t + 1,
                });
            }
            next.push(v);
        }
        let mut history = state.history.clone();
        if state.depth > 0 {
            history.push_front(state.values.clone());
            history.truncate(state.depth);
        }
        Ok(State {
            t: state.t + 1,
            seed: state.seed,
            values: next,
            levels: state.levels.clone(),
            initial: state.initial.clone(),
            history,
            depth: state.depth,
        })
    }

    /// Applies `shock` at step t, then advances to t+1.
    pub fn step(&self, state: &State, shock: &BTreeMap<String, Vec<f64>>) -> Result<State, MpgError> {
        if shock.is_empty() {
            return self.advance(state);
        }
        let mut shocked = state.clone();
        shocked.apply_shock(self, shock)?;
        self.advance(&shocked)
    }
}
