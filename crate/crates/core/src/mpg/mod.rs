//! Metric propagation graphs: metrics as nodes placed in taxonomy cells,
//! directed edges carrying propagation operators, a discrete-time update,
//! and analyses of the linearised system.

mod analysis;
mod document;
mod graph;
mod linearize;
pub mod operator;
mod spectral;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Cell, LayerId};
use crate::units::Unit;

pub use analysis::{
    amplification_factor, by_influence, compose_path, find_bottlenecks, find_leverage_points,
    synthesize_composite_metric, Amplification, CompositeMetric, CompositeOperator, LeveragePoint,
    PathSpec, RankedNode, INFLUENCE_MAX_LEN, MAX_PATHS,
};
pub use document::{graph_to_document, parse_graph_document, parse_graph_value, DocumentError, GRAPH_SCHEMA};
pub use graph::{validate_graph, Graph, ValidationReport};
pub use linearize::{linearize, LegendEntry, PropagationMatrix};
pub use operator::{apply_operator, Noise, NoiseStream, OperatorSpec};
pub use spectral::{spectral_radius, stability_classification, SpectralEstimate, Stability, StabilityReport};
pub use state::State;

/// How a node combines its exogenous level with inbound contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationSpec {
    /// `level + y`
    Additive,
    /// `level * (1 + y)`
    Multiplicative,
    /// `min(level, y)` when the node has inbound edges
    Min,
    /// `level + y / (1 + rate)`
    DiscountedAdditive { rate: f64 },
}

impl AggregationSpec {
    pub fn combine(self, level: f64, y: f64, has_inbound: bool) -> f64 {
        match self {
            AggregationSpec::Additive => level + y,
            AggregationSpec::Multiplicative => level * (1.0 + y),
            AggregationSpec::Min => {
                if has_inbound {
                    level.min(y)
                } else {
                    level
                }
            }
            AggregationSpec::DiscountedAdditive { rate } => level + y / (1.0 + rate),
        }
    }

    /// ∂A/∂y.
    pub fn dy(self, level: f64, y: f64) -> f64 {
        match self {
            AggregationSpec::Additive => 1.0,
            AggregationSpec::Multiplicative => level,
            AggregationSpec::Min => {
                if y < level {
                    1.0
                } else {
                    0.0
                }
            }
            AggregationSpec::DiscountedAdditive { rate } => 1.0 / (1.0 + rate),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregationSpec::Additive => "additive",
            AggregationSpec::Multiplicative => "multiplicative",
            AggregationSpec::Min => "min",
            AggregationSpec::DiscountedAdditive { .. } => "discounted-additive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub cell: Cell,
    /// Initial value; its length is the node dimension k.
    pub init: Vec<f64>,
    pub unit: Unit,
    pub metric_id: Option<String>,
    /// `None` selects the default: multiplicative when any inbound edge is
    /// multiplicative, additive otherwise.
    pub aggregation: Option<AggregationSpec>,
}

impl NodeSpec {
    /// Scalar dimensionless node.
    pub fn scalar(id: &str, cell: Cell, init: f64) -> Self {
        NodeSpec {
            id: id.to_string(),
            cell,
            init: vec![init],
            unit: Unit::dimensionless(),
            metric_id: None,
            aggregation: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.init.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub op: OperatorSpec,
    /// Explicit gain; `None` uses the operator's local sensitivity.
    pub gain: Option<f64>,
}

impl EdgeSpec {
    pub fn new(src: &str, dst: &str, op: OperatorSpec) -> Self {
        EdgeSpec {
            src: src.to_string(),
            dst: dst.to_string(),
            op,
            gain: None,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = Some(gain);
        self
    }
}

/// Graph as declared, before validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    /// Layers whose internal cycles are accepted.
    pub allow_intra_layer_cycles: Vec<LayerId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpgError {
    #[error("node id '{0}' is declared more than once")]
    DuplicateNode(String),
    #[error("node '{id}': {msg}")]
    Node { id: String, msg: String },
    #[error("edge {edge} references unknown node '{node}'")]
    Reference { edge: usize, node: String },
    #[error("edge {edge} is a self-loop on '{node}'")]
    SelfLoop { edge: usize, node: String },
    #[error("edge {edge} ({src} -> {dst}) joins dimension {src_dim} to dimension {dst_dim}")]
    DimensionMismatch {
        edge: usize,
        src: String,
        dst: String,
        src_dim: usize,
        dst_dim: usize,
    },
    #[error("edge {edge}: {msg}")]
    Operator { edge: usize, msg: String },
    #[error("cross-layer cycle: {}", path.join(" -> "))]
    CrossLayerCycle { path: Vec<String> },
    #[error("cycle within layer L{layer} is not whitelisted: {}", path.join(" -> "))]
    IntraLayerCycle { layer: u8, path: Vec<String> },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("shock for '{node}' has length {got}, node dimension is {expected}")]
    ShockShape { node: String, expected: usize, got: usize },
    #[error("state error: {0}")]
    State(String),
    #[error("numeric overflow at node '{node}' (step {t})")]
    Overflow { node: String, t: u64 },
    #[error("path error: {0}")]
    Path(String),
    #[error("no path from '{src}' to '{dst}'")]
    Unreachable { src: String, dst: String },
    #[error("path enumeration exceeds {limit} paths")]
    Scale { limit: usize },
    #[error("matrix is {rows}x{cols}; a square matrix is required")]
    Shape { rows: usize, cols: usize },
}
