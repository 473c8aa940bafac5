use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::{
    Bound, BoundKind, Catalog, CatalogError, Direction, DiscountedSum, Formula, Levelized,
    LevelizedOutput, Marginal, MetricDef, Range,
};
use crate::expr::Expr;
use crate::taxonomy::{validate_cell, validate_unique_assignment, Assignment};
use crate::units::Unit;

pub const CATALOG_SCHEMA: &str = "catalog-v1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    schema: String,
    #[serde(default)]
    metrics: Vec<RawMetric>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    id: String,
    name: String,
    #[serde(default)]
    symbol: Option<String>,
    #[serde(default)]
    layer: Option<i64>,
    #[serde(default)]
    domain: Option<i64>,
    unit: String,
    #[serde(default)]
    inputs: BTreeMap<String, String>,
    #[serde(default)]
    formula: Option<String>,
    #[serde(default)]
    builtin: Option<Value>,
    direction: Direction,
    #[serde(default)]
    range: Option<RawRange>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    min: Option<f64>,
    max: Option<f64>,
    #[serde(default = "hard")]
    min_kind: BoundKind,
    #[serde(default = "hard")]
    max_kind: BoundKind,
    #[serde(default)]
    min_exclusive: bool,
    #[serde(default)]
    max_exclusive: bool,
}

fn hard() -> BoundKind {
    BoundKind::Hard
}

fn one() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscountedSum {
    #[allow(dead_code)]
    kind: String,
    upfront: Option<String>,
    per_period: String,
    rate: String,
    periods: String,
    #[serde(default = "one")]
    start: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevelized {
    #[allow(dead_code)]
    kind: String,
    upfront_cost: Option<String>,
    cost_per_period: Option<String>,
    output_per_period: Option<String>,
    output_total: Option<String>,
    rate: String,
    periods: String,
    #[serde(default = "one")]
    start: u32,
    #[serde(default)]
    reciprocal: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarginal {
    #[allow(dead_code)]
    kind: String,
    of: String,
    wrt: String,
    step: Option<f64>,
}

pub(super) fn parse(text: &str) -> Result<Catalog, CatalogError> {
    if text.trim().is_empty() {
        return Ok(Catalog::default());
    }
    let raw: RawCatalog = serde_json::from_str(text)?;
    if raw.schema != CATALOG_SCHEMA {
        return Err(CatalogError::Schema(raw.schema));
    }
    // Placement errors (duplicates, missing cells) are reported before any
    // per-metric checks.
    let mut assignments = Vec::with_capacity(raw.metrics.len());
    for m in &raw.metrics {
        let cell = match (m.layer, m.domain) {
            (Some(l), Some(d)) => Some(validate_cell(l, d).map_err(|source| {
                CatalogError::Coordinate {
                    id: m.id.clone(),
                    source,
                }
            })?),
            _ => None,
        };
        assignments.push(Assignment {
            id: m.id.clone(),
            cell,
        });
    }
    validate_unique_assignment(assignments.iter().cloned())?;

    let mut metrics = Vec::with_capacity(raw.metrics.len());
    for (m, a) in raw.metrics.into_iter().zip(assignments) {
        metrics.push(convert(m, a.cell.expect("assignment validated"))?);
    }
    Catalog::from_metrics(metrics)
}

fn convert(m: RawMetric, cell: crate::taxonomy::Cell) -> Result<MetricDef, CatalogError> {
    let id = m.id.clone();
    let unit_err = |source| CatalogError::Unit {
        id: id.clone(),
        source,
    };
    let unit = Unit::parse(&m.unit).map_err(unit_err)?;
    let mut inputs = BTreeMap::new();
    for (k, u) in &m.inputs {
        inputs.insert(k.clone(), Unit::parse(u).map_err(unit_err)?);
    }
    let formula = match (m.formula, m.builtin) {
        (Some(f), None) => Formula::Expr(expr(&id, &f)?),
        (None, Some(b)) => builtin(&id, b)?,
        _ => return Err(CatalogError::FormulaShape(id)),
    };
    let range = m.range.map(|r| Range {
        lower: r.min.map(|value| Bound {
            value,
            kind: r.min_kind,
            exclusive: r.min_exclusive,
        }),
        upper: r.max.map(|value| Bound {
            value,
            kind: r.max_kind,
            exclusive: r.max_exclusive,
        }),
    });
    Ok(MetricDef {
        id: m.id,
        name: m.name,
        symbol: m.symbol,
        cell,
        unit,
        inputs,
        formula,
        direction: m.direction,
        range,
        tags: m.tags,
        note: m.note,
    })
}

fn expr(id: &str, src: &str) -> Result<Expr, CatalogError> {
    Expr::parse(src).map_err(|source| CatalogError::Formula {
        id: id.to_string(),
        source,
    })
}

fn opt_expr(id: &str, src: Option<String>) -> Result<Option<Expr>, CatalogError> {
    src.map(|s| expr(id, &s)).transpose()
}

fn builtin(id: &str, value: Value) -> Result<Formula, CatalogError> {
    let bad = |msg: String| CatalogError::BadBuiltin {
        id: id.to_string(),
        msg,
    };
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("builtin needs a string 'kind'".into()))?
        .to_string();
    let shape = |e: serde_json::Error| bad(format!("{kind}: {e}"));
    match kind.as_str() {
        "discounted-sum" => {
            let r: RawDiscountedSum = serde_json::from_value(value).map_err(shape)?;
            Ok(Formula::DiscountedSum(DiscountedSum {
                upfront: opt_expr(id, r.upfront)?,
                per_period: expr(id, &r.per_period)?,
                rate: r.rate,
                periods: r.periods,
                start: r.start,
            }))
        }
        "levelized" => {
            let r: RawLevelized = serde_json::from_value(value).map_err(shape)?;
            let output = match (r.output_per_period, r.output_total) {
                (Some(p), None) => LevelizedOutput::PerPeriod(expr(id, &p)?),
                (None, Some(t)) => LevelizedOutput::Total(expr(id, &t)?),
                _ => {
                    return Err(bad(
                        "levelized needs exactly one of output_per_period or output_total".into(),
                    ))
                }
            };
            Ok(Formula::Levelized(Levelized {
                upfront_cost: opt_expr(id, r.upfront_cost)?,
                cost_per_period: opt_expr(id, r.cost_per_period)?,
                output,
                rate: r.rate,
                periods: r.periods,
                start: r.start,
                reciprocal: r.reciprocal,
            }))
        }
        "marginal" => {
            let r: RawMarginal = serde_json::from_value(value).map_err(shape)?;
            if let Some(s) = r.step {
                if !(s > 0.0) {
                    return Err(bad(format!("marginal step {s} must be positive")));
                }
            }
            Ok(Formula::Marginal(Marginal {
                of: expr(id, &r.of)?,
                wrt: r.wrt,
                step: r.step,
            }))
        }
        _ => Err(CatalogError::UnknownBuiltin {
            id: id.to_string(),
            kind,
        }),
    }
}
