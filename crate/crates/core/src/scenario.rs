//! Time-horizon runs over a propagation graph, the built-in 1024-GPU case
//! study, and trajectory summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::mpg::{
    parse_graph_document, parse_graph_value, DocumentError, EdgeSpec, Graph, GraphSpec, MpgError,
    NodeSpec, OperatorSpec, State,
};
use crate::taxonomy::validate_cell;

pub const SCENARIO_SCHEMA: &str = "scn-v1";

/// Any value this large in magnitude stops a run and flags overflow.
pub const OVERFLOW_LIMIT: f64 = 1e30;

/// Two successive values closer than this count as settled.
pub const SETTLE_TOL: f64 = 1e-12;

/// The bundled `mpg-v1` document for the case study.
pub const CASE_STUDY_DOCUMENT: &str = include_str!("../data/case_study.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("shock at t={t} lies outside [0, {horizon})")]
    ShockStep { t: u64, horizon: u64 },
    #[error(transparent)]
    Graph(#[from] MpgError),
    #[error("graph document: {0}")]
    Document(#[from] DocumentError),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario schema '{0}'")]
    Schema(String),
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// True when the inputs parsed but describe an invalid graph or run.
    pub fn is_validation(&self) -> bool {
        match self {
            ScenarioError::Graph(_) | ScenarioError::Horizon | ScenarioError::ShockStep { .. } => true,
            ScenarioError::Document(d) => d.is_validation(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shock {
    pub t: u64,
    pub node: String,
    pub delta: Vec<f64>,
}

/// Exogenous shocks keyed by step. Several entries for the same node and
/// step add up.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShockSchedule {
    pub entries: Vec<Shock>,
}

impl ShockSchedule {
    pub fn new() -> Self {
        ShockSchedule::default()
    }

    pub fn impulse(node: &str, delta: Vec<f64>) -> Self {
        ShockSchedule::new().with(0, node, delta)
    }

    /// The same delta at every step in `0..horizon`.
    pub fn sustained(node: &str, delta: Vec<f64>, horizon: u64) -> Self {
        let mut s = ShockSchedule::new();
        for t in 0..horizon {
            s.push(t, node, delta.clone());
        }
        s
    }

    pub fn push(&mut self, t: u64, node: &str, delta: Vec<f64>) -> &mut Self {
        self.entries.push(Shock {
            t,
            node: node.to_string(),
            delta,
        });
        self
    }

    pub fn with(mut self, t: u64, node: &str, delta: Vec<f64>) -> Self {
        self.push(t, node, delta);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check(&self, horizon: u64) -> Result<(), ScenarioError> {
        match self.entries.iter().find(|s| s.t >= horizon) {
            Some(s) => Err(ScenarioError::ShockStep { t: s.t, horizon }),
            None => Ok(()),
        }
    }

    fn by_step(&self, graph: &Graph) -> Result<BTreeMap<u64, BTreeMap<String, Vec<f64>>>, MpgError> {
        let mut out: BTreeMap<u64, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for s in &self.entries {
            let node = graph.node(&s.node).ok_or_else(|| MpgError::UnknownNode(s.node.clone()))?;
            if s.delta.len() != node.dim() {
                return Err(MpgError::ShockShape {
                    node: s.node.clone(),
                    expected: node.dim(),
                    got: s.delta.len(),
                });
            }
            let slot = out
                .entry(s.t)
                .or_default()
                .entry(s.node.clone())
                .or_insert_with(|| vec![0.0; node.dim()]);
            for (a, d) in slot.iter_mut().zip(&s.delta) {
                *a += d;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Graph,
    pub horizon: u64,
    /// Overrides of the nodes' declared initial values.
    pub init: BTreeMap<String, Vec<f64>>,
    pub shocks: ShockSchedule,
    pub seed: u64,
}

impl Scenario {
    pub fn new(graph: Graph, horizon: u64) -> Result<Self, ScenarioError> {
        if horizon == 0 {
            return Err(ScenarioError::Horizon);
        }
        Ok(Scenario {
            graph,
            horizon,
            init: BTreeMap::new(),
            shocks: ShockSchedule::new(),
            seed: 0,
        })
    }

    pub fn with_shocks(mut self, shocks: ShockSchedule) -> Result<Self, ScenarioError> {
        shocks.check(self.horizon)?;
        self.shocks = shocks;
        Ok(self)
    }

    pub fn with_init(mut self, init: BTreeMap<String, Vec<f64>>) -> Self {
        self.init = init;
        self
    }

    /// Every node starts at zero.
    pub fn from_zero(mut self) -> Self {
        self.init = self
            .graph
            .nodes()
            .iter()
            .map(|n| (n.id.clone(), vec![0.0; n.dim()]))
            .collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn initial_state(&self) -> Result<State, MpgError> {
        Ok(State::with_init(&self.graph, &self.init)?.with_seed(self.seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverflowFlag {
    /// First step whose state could not be recorded or exceeded the limit.
    pub t: u64,
    pub node: usize,
}

/// Recorded states t = 0..=T. Row t is the state after the shocks scheduled
/// at t were applied. A run that overflows stops early and is shorter.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ids: Vec<String>,
    pub dims: Vec<usize>,
    pub horizon: u64,
    pub states: Vec<Vec<Vec<f64>>>,
    pub overflow: Option<OverflowFlag>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|n| n == id)
    }

    /// Component series of one node.
    pub fn series(&self, id: &str, component: usize) -> Option<Vec<f64>> {
        let i = self.node_index(id)?;
        if component >= self.dims[i] {
            return None;
        }
        Some(self.states.iter().map(|s| s[i][component]).collect())
    }

    /// Scalar value of `id` at step `t`.
    pub fn value(&self, t: usize, id: &str) -> Option<f64> {
        let i = self.node_index(id)?;
        self.states.get(t).map(|s| s[i][0])
    }

    pub fn final_state(&self) -> Option<&[Vec<f64>]> {
        self.states.last().map(|s| s.as_slice())
    }

    /// Column labels: `id` for scalar nodes, `id[c]` for vector nodes.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for (id, &d) in self.ids.iter().zip(&self.dims) {
            if d == 1 {
                cols.push(id.clone());
            } else {
                cols.extend((0..d).map(|c| format!("{id}[{c}]")));
            }
        }
        cols
    }

    /// Euclidean norm of the whole state at step `t`.
    pub fn norm(&self, t: usize) -> f64 {
        self.states[t].iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn exceeds(state: &State) -> Option<usize> {
    state
        .values()
        .iter()
        .position(|v| v.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_LIMIT))
}

/// Runs the scenario for its horizon. Divergence past the overflow limit
/// is a flagged early stop, not an error.
pub fn run(scenario: &Scenario) -> Result<Trajectory, ScenarioError> {
    scenario.shocks.check(scenario.horizon)?;
    let graph = &scenario.graph;
    let shocks = scenario.shocks.by_step(graph)?;
    let mut state = scenario.initial_state()?;
    let mut traj = Trajectory {
        ids: graph.nodes().iter().map(|n| n.id.clone()).collect(),
        dims: graph.nodes().iter().map(|n| n.dim()).collect(),
        horizon: scenario.horizon,
        states: Vec::with_capacity(scenario.horizon as usize + 1),
        overflow: None,
    };
    for t in 0..=scenario.horizon {
        if let Some(s) = shocks.get(&t) {
            state.apply_shock(graph, s)?;
        }
        if let Some(node) = exceeds(&state) {
            traj.overflow = Some(OverflowFlag { t, node });
            if state.values()[node].iter().all(|x| x.is_finite()) {
                traj.states.push(state.values().to_vec());
            }
            break;
        }
        traj.states.push(state.values().to_vec());
        if t == scenario.horizon {
            break;
        }
        state = match graph.advance(&state) {
            Ok(next) => next,
            Err(MpgError::Overflow { node, t }) => {
                let node = graph.node_index(&node).unwrap_or(0);
                traj.overflow = Some(OverflowFlag { t, node });
                break;
            }
            Err(e) => return Err(e.into()),
        };
    }
    Ok(traj)
}

/// Each node's value at t=T after a single impulse `delta` on `node` at t=0,
/// starting from zero. Entries follow declaration order.
pub fn perturbation_response(
    graph: &Graph,
    node: &str,
    delta: f64,
    horizon: u64,
) -> Result<Vec<(String, Vec<f64>)>, ScenarioError> {
    let dim = graph
        .node(node)
        .ok_or_else(|| MpgError::UnknownNode(node.to_string()))?
        .dim();
    let scenario = Scenario::new(graph.clone(), horizon)?
        .from_zero()
        .with_shocks(ShockSchedule::impulse(node, vec![delta; dim]))?;
    let traj = run(&scenario)?;
    if let Some(f) = traj.overflow {
        return Err(MpgError::Overflow {
            node: traj.ids[f.node].clone(),
            t: f.t,
        }
        .into());
    }
    let last = traj.final_state().expect("non-empty trajectory");
    Ok(traj.ids.iter().cloned().zip(last.iter().cloned()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Constant,
    NonDecreasing,
    NonIncreasing,
    Mixed,
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monotonicity::Constant => "constant",
            Monotonicity::NonDecreasing => "non-decreasing",
            Monotonicity::NonIncreasing => "non-increasing",
            Monotonicity::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    /// Column label, `id` or `id[c]`.
    pub label: String,
    pub peak: f64,
    pub peak_step: usize,
    pub final_value: f64,
    pub settled: bool,
    pub monotonicity: Monotonicity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub series: Vec<SeriesSummary>,
    /// First step from which no value changes by SETTLE_TOL or more.
    pub settle_step: Option<usize>,
    pub overflow: Option<OverflowFlag>,
}

impl Summary {
    pub fn all_settled(&self) -> bool {
        self.overflow.is_none() && self.series.iter().all(|s| s.settled)
    }

    pub fn get(&self, label: &str) -> Option<&SeriesSummary> {
        self.series.iter().find(|s| s.label == label)
    }
}

fn summarize_series(label: String, xs: &[f64], overflowed: bool) -> SeriesSummary {
    let mut peak = 0.0;
    let mut peak_step = 0;
    for (t, x) in xs.iter().enumerate() {
        if x.abs() > peak {
            peak = x.abs();
            peak_step = t;
        }
    }
    let up = xs.windows(2).any(|w| w[1] > w[0]);
    let down = xs.windows(2).any(|w| w[1] < w[0]);
    let monotonicity = match (up, down) {
        (false, false) => Monotonicity::Constant,
        (true, false) => Monotonicity::NonDecreasing,
        (false, true) => Monotonicity::NonIncreasing,
        (true, true) => Monotonicity::Mixed,
    };
    let settled = !overflowed
        && match xs {
            [.., a, b] => (b - a).abs() < SETTLE_TOL,
            _ => true,
        };
    SeriesSummary {
        label,
        peak,
        peak_step,
        final_value: xs.last().copied().unwrap_or(0.0),
        settled,
        monotonicity,
    }
}

pub fn summarize(traj: &Trajectory) -> Summary {
    let overflowed = traj.overflow.is_some();
    let labels = traj.columns();
    let rows: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|s| s.iter().flatten().copied().collect())
        .collect();
    let series = labels
        .into_iter()
        .enumerate()
        .map(|(j, label)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            summarize_series(label, &xs, overflowed)
        })
        .collect();
    let settle_step = if overflowed || rows.is_empty() {
        None
    } else {
        let last = rows.len() - 1;
        let mut s = last;
        while s > 0 && rows[s - 1].iter().zip(&rows[s]).all(|(a, b)| (a - b).abs() < SETTLE_TOL) {
            s -= 1;
        }
        // A change in the very last step means nothing is known to be settled.
        (s < last || last == 0).then_some(s)
    };
    Summary {
        series,
        settle_step,
        overflow: traj.overflow,
    }
}

pub const CASE_STUDY_NODES: [&str; 5] = ["ci", "pue", "flops_per_watt", "tokens_per_s", "cost_per_1k_tokens"];

/// The 1024-GPU case study: a five-node upward chain in relative-deviation
/// units, plus the default run of a +0.20 carbon-intensity impulse over ten
/// steps.
pub fn build_case_study() -> (Graph, Scenario) {
    let cell = |l, d| validate_cell(l, d).expect("fixed coordinates");
    let nodes = vec![
        NodeSpec::scalar("ci", cell(1, 1), 0.0),
        NodeSpec::scalar("pue", cell(2, 1), 0.0),
        NodeSpec::scalar("flops_per_watt", cell(3, 2), 0.0),
        NodeSpec::scalar("tokens_per_s", cell(5, 2), 0.0),
        NodeSpec::scalar("cost_per_1k_tokens", cell(6, 3), 0.0),
    ];
    let edges = [0.15, 0.07, 0.80, 0.90]
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            EdgeSpec::new(CASE_STUDY_NODES[i], CASE_STUDY_NODES[i + 1], OperatorSpec::Linear { alpha })
        })
        .collect();
    let graph = Graph::new(GraphSpec {
        nodes,
        edges,
        allow_intra_layer_cycles: Vec::new(),
    })
    .expect("case-study chain is valid");
    let scenario = Scenario::new(graph.clone(), 10)
        .and_then(|s| s.with_shocks(ShockSchedule::impulse("ci", vec![0.20])))
        .expect("default scenario is valid");
    (graph, scenario)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: String,
    graph: Value,
    horizon: u64,
    #[serde(default)]
    init: BTreeMap<String, RawVector>,
    #[serde(default)]
    shocks: Vec<RawShock>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawVector {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShock {
    t: u64,
    node: String,
    delta: RawVector,
}

fn vector(raw: RawVector, dim: usize) -> Vec<f64> {
    match raw {
        RawVector::Scalar(x) => vec![x; dim],
        RawVector::Vector(v) => v,
    }
}

/// Parses an `scn-v1` document. A string `graph` is a path, resolved
/// against `base` when relative; an object is an inline `mpg-v1` graph.
/// Scalar deltas and init values broadcast over the node dimension.
pub fn parse_scenario_document(text: &str, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_json::from_str(text)?;
    if raw.schema != SCENARIO_SCHEMA {
        return Err(ScenarioError::Schema(raw.schema));
    }
    let graph = match raw.graph {
        Value::String(p) => {
            let path = match base {
                Some(b) if Path::new(&p).is_relative() => b.join(&p),
                _ => PathBuf::from(&p),
            };
            let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
            parse_graph_document(&text)?
        }
        v @ Value::Object(_) => parse_graph_value(v)?,
        _ => {
            return Err(ScenarioError::Field {
                field: "graph".into(),
                msg: "expected a path or an inline graph document".into(),
            })
        }
    };
    let dim = |id: &str| graph.node(id).map(|n| n.dim()).unwrap_or(1);
    let init = raw
        .init
        .into_iter()
        .map(|(id, v)| {
            let d = dim(&id);
            (id, vector(v, d))
        })
        .collect();
    let mut shocks = ShockSchedule::new();
    for s in raw.shocks {
        let d = dim(&s.node);
        shocks.push(s.t, &s.node, vector(s.delta, d));
    }
    let scenario = Scenario::new(graph, raw.horizon)?
        .with_init(init)
        .with_shocks(shocks)?
        .with_seed(raw.seed.unwrap_or(0));
    // Surface unknown nodes and shape errors now rather than at run time.
    scenario.initial_state()?;
    scenario.shocks.by_step(&scenario.graph)?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_document(&text, path.parent())
}
