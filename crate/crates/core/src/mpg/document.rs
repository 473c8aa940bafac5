use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::operator::OPERATOR_KINDS;
use super::{AggregationSpec, EdgeSpec, Graph, GraphSpec, MpgError, NodeSpec, OperatorSpec};
use crate::taxonomy::{validate_cell, LayerId};
use crate::units::Unit;

pub const GRAPH_SCHEMA: &str = "mpg-v1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema '{found}', expected '{expected}'")]
    Schema { found: String, expected: &'static str },
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("{field}: unknown operator kind '{kind}' (expected one of {})", OPERATOR_KINDS.join(", "))]
    UnknownOperator { field: String, kind: String },
    #[error(transparent)]
    Graph(#[from] MpgError),
}

impl DocumentError {
    /// True for structural graph failures (cycles, references) as
    /// opposed to malformed text.
    pub fn is_validation(&self) -> bool {
        matches!(self, DocumentError::Graph(_))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    schema: String,
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    #[serde(default)]
    allow_intra_layer_cycles: Vec<i64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInit {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawAggregation {
    Name(String),
    Spec(AggregationSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    layer: i64,
    domain: i64,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    init: Option<RawInit>,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    aggregation: Option<RawAggregation>,
    #[serde(default)]
    metric_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    src: String,
    dst: String,
    op: Value,
    #[serde(default)]
    gain: Option<f64>,
}

fn field(field: String, msg: impl ToString) -> DocumentError {
    DocumentError::Field {
        field,
        msg: msg.to_string(),
    }
}

fn check_op_kinds(v: &Value, at: &str) -> Result<(), DocumentError> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| field(at.to_string(), "operator needs a string 'kind'"))?;
    if !OPERATOR_KINDS.contains(&kind) {
        return Err(DocumentError::UnknownOperator {
            field: at.to_string(),
            kind: kind.to_string(),
        });
    }
    for inner in ["base", "inner"] {
        if let Some(sub) = v.get(inner) {
            check_op_kinds(sub, &format!("{at}.{inner}"))?;
        }
    }
    Ok(())
}

fn aggregation(raw: RawAggregation, at: String) -> Result<AggregationSpec, DocumentError> {
    match raw {
        RawAggregation::Spec(s) => Ok(s),
        RawAggregation::Name(n) => match n.as_str() {
            "additive" => Ok(AggregationSpec::Additive),
            "multiplicative" => Ok(AggregationSpec::Multiplicative),
            "min" => Ok(AggregationSpec::Min),
            "discounted-additive" => Err(field(at, "discounted-additive needs {\"kind\": ..., \"rate\": r}")),
            other => Err(field(at, format!("unknown aggregation '{other}'"))),
        },
    }
}

fn node(raw: RawNode, i: usize) -> Result<NodeSpec, DocumentError> {
    let at = |f: &str| format!("nodes[{i}].{f}");
    let cell = validate_cell(raw.layer, raw.domain).map_err(|e| field(at("layer"), e))?;
    let init = match (raw.init, raw.dim) {
        (None, d) => vec![0.0; d.unwrap_or(1)],
        (Some(RawInit::Scalar(x)), d) => vec![x; d.unwrap_or(1)],
        (Some(RawInit::Vector(v)), Some(d)) if v.len() != d => {
            return Err(field(at("init"), format!("has {} values but dim is {d}", v.len())))
        }
        (Some(RawInit::Vector(v)), _) => v,
    };
    if init.is_empty() {
        return Err(field(at("dim"), "must be at least 1"));
    }
    let unit = match raw.unit {
        None => Unit::dimensionless(),
        Some(u) => Unit::parse(&u).map_err(|e| field(at("unit"), e))?,
    };
    let aggregation = raw.aggregation.map(|a| aggregation(a, at("aggregation"))).transpose()?;
    Ok(NodeSpec {
        id: raw.id,
        cell,
        init,
        unit,
        metric_id: raw.metric_id,
        aggregation,
    })
}

/// Parses an already-decoded `mpg-v1` value into a validated graph.
pub fn parse_graph_value(value: Value) -> Result<Graph, DocumentError> {
    let raw: RawGraph = serde_json::from_value(value)?;
    if raw.schema != GRAPH_SCHEMA {
        return Err(DocumentError::Schema {
            found: raw.schema,
            expected: GRAPH_SCHEMA,
        });
    }
    let nodes = raw
        .nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| node(n, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut edges = Vec::with_capacity(raw.edges.len());
    for (k, e) in raw.edges.into_iter().enumerate() {
        let at = format!("edges[{k}].op");
        check_op_kinds(&e.op, &at)?;
        let op: OperatorSpec = serde_json::from_value(e.op).map_err(|err| field(at, err))?;
        edges.push(EdgeSpec {
            src: e.src,
            dst: e.dst,
            op,
            gain: e.gain,
        });
    }
    let allow_intra_layer_cycles = raw
        .allow_intra_layer_cycles
        .iter()
        .enumerate()
        .map(|(i, &l)| LayerId::new(l).map_err(|e| field(format!("allow_intra_layer_cycles[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Graph::new(GraphSpec {
        nodes,
        edges,
        allow_intra_layer_cycles,
    })?)
}

/// Parses and validates an `mpg-v1` document.
pub fn parse_graph_document(text: &str) -> Result<Graph, DocumentError> {
    let value: Value = serde_json::from_str(text)?;
    parse_graph_value(value)
}

/// Serialises a graph spec as an `mpg-v1` document.
pub fn graph_to_document(spec: &GraphSpec) -> String {
    serde_json::to_string_pretty(&graph_to_value(spec)).expect("plain data serializes")
}

pub(crate) fn graph_to_value(spec: &GraphSpec) -> Value {
    let nodes: Vec<Value> = spec
        .nodes
        .iter()
        .map(|n| {
            let mut m = Map::new();
            m.insert("id".into(), json!(n.id));
            m.insert("layer".into(), json!(n.cell.layer.get()));
            m.insert("domain".into(), json!(n.cell.domain.get()));
            m.insert("dim".into(), json!(n.dim()));
            m.insert(
                "init".into(),
                if n.dim() == 1 { json!(n.init[0]) } else { json!(n.init) },
            );
            m.insert("unit".into(), json!(n.unit.symbol()));
            if let Some(a) = n.aggregation {
                let v = match a {
                    AggregationSpec::DiscountedAdditive { .. } => json!(a),
                    _ => json!(a.name()),
                };
                m.insert("aggregation".into(), v);
            }
            if let Some(id) = &n.metric_id {
                m.insert("metric_id".into(), json!(id));
            }
            Value::Object(m)
        })
        .collect();
    let edges: Vec<Value> = spec
        .edges
        .iter()
        .map(|e| {
            let mut m = Map::new();
            m.insert("src".into(), json!(e.src));
            m.insert("dst".into(), json!(e.dst));
            m.insert("op".into(), serde_json::to_value(&e.op).expect("operator serializes"));
            if let Some(g) = e.gain {
                m.insert("gain".into(), json!(g));
            }
            Value::Object(m)
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("schema".into(), json!(GRAPH_SCHEMA));
    doc.insert("nodes".into(), Value::Array(nodes));
    doc.insert("edges".into(), Value::Array(edges));
    if !spec.allow_intra_layer_cycles.is_empty() {
        let layers: Vec<u8> = spec.allow_intra_layer_cycles.iter().map(|l| l.get()).collect();
        doc.insert("allow_intra_layer_cycles".into(), json!(layers));
    }
    Value::Object(doc)
}
