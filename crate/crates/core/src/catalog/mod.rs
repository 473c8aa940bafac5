//! Metric dictionary: data-driven definitions, dimension-checked at load,
//! and an evaluator over unit-carrying bindings.

mod document;
pub mod finance;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::taxonomy::{
    validate_unique_assignment, Assignment, AssignmentError, AssignmentReport, Cell,
    CoordinateError,
};
use crate::units::{Dimension, Quantity, Unit, UnitError};

pub use document::CATALOG_SCHEMA;
use finance::FinanceError;

const BUILTIN_JSON: &str = include_str!("../../data/catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
    Contextual,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LowerBetter => "lower-better",
            Direction::HigherBetter => "higher-better",
            Direction::Contextual => "contextual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    /// In the metric's declared unit.
    pub value: f64,
    pub kind: BoundKind,
    pub exclusive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Range {
    pub lower: Option<Bound>,
    pub upper: Option<Bound>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RangeVerdict {
    Ok,
    SoftWarning(String),
    HardViolation(String),
}

impl RangeVerdict {
    pub fn is_hard_violation(&self) -> bool {
        matches!(self, RangeVerdict::HardViolation(_))
    }
}

impl fmt::Display for RangeVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeVerdict::Ok => f.write_str("ok"),
            RangeVerdict::SoftWarning(m) => write!(f, "soft-warning: {m}"),
            RangeVerdict::HardViolation(m) => write!(f, "hard-violation: {m}"),
        }
    }
}

/// Flows `upfront` at t=0 and `per_period` at each t in `start..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedSum {
    pub upfront: Option<Expr>,
    pub per_period: Expr,
    pub rate: String,
    pub periods: String,
    pub start: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelizedOutput {
    PerPeriod(Expr),
    /// A lifetime total booked at t=0.
    Total(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Levelized {
    pub upfront_cost: Option<Expr>,
    pub cost_per_period: Option<Expr>,
    pub output: LevelizedOutput,
    pub rate: String,
    pub periods: String,
    pub start: u32,
    /// Output per cost instead of cost per output.
    pub reciprocal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub of: Expr,
    pub wrt: String,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Expr(Expr),
    DiscountedSum(DiscountedSum),
    Levelized(Levelized),
    Marginal(Marginal),
}

impl Formula {
    pub fn kind(&self) -> &'static str {
        match self {
            Formula::Expr(_) => "expression",
            Formula::DiscountedSum(_) => "discounted-sum",
            Formula::Levelized(_) => "levelized",
            Formula::Marginal(_) => "marginal",
        }
    }

    /// Every variable the formula reads, sorted and deduplicated.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        let add_expr = |e: &Expr, out: &mut Vec<String>| out.extend(e.variables());
        match self {
            Formula::Expr(e) => add_expr(e, &mut out),
            Formula::DiscountedSum(d) => {
                if let Some(u) = &d.upfront {
                    add_expr(u, &mut out);
                }
                add_expr(&d.per_period, &mut out);
                out.push(d.rate.clone());
                out.push(d.periods.clone());
            }
            Formula::Levelized(l) => {
                for e in [&l.upfront_cost, &l.cost_per_period].into_iter().flatten() {
                    add_expr(e, &mut out);
                }
                match &l.output {
                    LevelizedOutput::PerPeriod(e) | LevelizedOutput::Total(e) => {
                        add_expr(e, &mut out)
                    }
                }
                out.push(l.rate.clone());
                out.push(l.periods.clone());
            }
            Formula::Marginal(m) => {
                add_expr(&m.of, &mut out);
                out.push(m.wrt.clone());
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Expr(e) => write!(f, "{e}"),
            Formula::DiscountedSum(d) => {
                write!(f, "discounted-sum(")?;
                if let Some(u) = &d.upfront {
                    write!(f, "t=0: {u}; ")?;
                }
                write!(f, "t={}..{}: {}; rate {})", d.start, d.periods, d.per_period, d.rate)
            }
            Formula::Levelized(l) => {
                let out = match &l.output {
                    LevelizedOutput::PerPeriod(e) => format!("per period {e}"),
                    LevelizedOutput::Total(e) => format!("total {e}"),
                };
                write!(f, "levelized(")?;
                if let Some(u) = &l.upfront_cost {
                    write!(f, "t=0: {u}; ")?;
                }
                if let Some(c) = &l.cost_per_period {
                    write!(f, "t={}..{}: {c}; ", l.start, l.periods)?;
                }
                write!(f, "output {out}; rate {}", l.rate)?;
                if l.reciprocal {
                    write!(f, "; reciprocal")?;
                }
                write!(f, ")")
            }
            Formula::Marginal(m) => write!(f, "d({})/d{}", m.of, m.wrt),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDef {
    pub id: String,
    pub name: String,
    pub symbol: Option<String>,
    pub cell: Cell,
    pub unit: Unit,
    pub inputs: BTreeMap<String, Unit>,
    pub formula: Formula,
    pub direction: Direction,
    pub range: Option<Range>,
    pub tags: Vec<String>,
    pub note: Option<String>,
}

impl MetricDef {
    /// Symbol if declared, otherwise the upper-cased id.
    pub fn label(&self) -> String {
        self.symbol.clone().unwrap_or_else(|| self.id.to_uppercase())
    }

    /// Checks the formula against the declared inputs and unit.
    pub fn check(&self) -> Result<(), CatalogError> {
        let dims: BTreeMap<String, Dimension> = self
            .inputs
            .iter()
            .map(|(k, u)| (k.clone(), u.dimension))
            .collect();
        let err = |e: ExprError| CatalogError::Formula {
            id: self.id.clone(),
            source: e,
        };
        let scalar = |name: &str| -> Result<(), CatalogError> {
            match dims.get(name) {
                None => Err(err(ExprError::Undeclared(name.to_string()))),
                Some(d) if !d.is_dimensionless() => Err(CatalogError::BadBuiltin {
                    id: self.id.clone(),
                    msg: format!("'{name}' must be dimensionless"),
                }),
                Some(_) => Ok(()),
            }
        };
        let inferred = match &self.formula {
            Formula::Expr(e) => e.infer(&dims).map_err(err)?,
            Formula::DiscountedSum(d) => {
                scalar(&d.rate)?;
                scalar(&d.periods)?;
                let per = d.per_period.infer(&dims).map_err(err)?;
                if let Some(u) = &d.upfront {
                    self.same(u.infer(&dims).map_err(err)?, per)?;
                }
                per
            }
            Formula::Levelized(l) => {
                scalar(&l.rate)?;
                scalar(&l.periods)?;
                let mut cost = None;
                for e in [&l.upfront_cost, &l.cost_per_period].into_iter().flatten() {
                    let d = e.infer(&dims).map_err(err)?;
                    if let Some(c) = cost {
                        self.same(c, d)?;
                    }
                    cost = Some(d);
                }
                let Some(cost) = cost else {
                    return Err(CatalogError::BadBuiltin {
                        id: self.id.clone(),
                        msg: "levelized metric needs upfront_cost or cost_per_period".into(),
                    });
                };
                let output = match &l.output {
                    LevelizedOutput::PerPeriod(e) | LevelizedOutput::Total(e) => {
                        e.infer(&dims).map_err(err)?
                    }
                };
                if l.reciprocal {
                    output / cost
                } else {
                    cost / output
                }
            }
            Formula::Marginal(m) => {
                let Some(wrt) = dims.get(&m.wrt) else {
                    return Err(err(ExprError::Undeclared(m.wrt.clone())));
                };
                m.of.infer(&dims).map_err(err)? / *wrt
            }
        };
        self.same(self.unit.dimension, inferred)?;
        if let Some(r) = &self.range {
            if let (Some(lo), Some(hi)) = (r.lower, r.upper) {
                if !(lo.value <= hi.value) {
                    return Err(CatalogError::Range(self.id.clone()));
                }
            }
        }
        Ok(())
    }

    fn same(&self, declared: Dimension, inferred: Dimension) -> Result<(), CatalogError> {
        if declared == inferred {
            Ok(())
        } else {
            Err(CatalogError::DimensionMismatch {
                id: self.id.clone(),
                declared,
                inferred,
            })
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported catalog schema '{0}', expected '{CATALOG_SCHEMA}'")]
    Schema(String),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("metric '{id}': {source}")]
    Coordinate { id: String, source: CoordinateError },
    #[error("metric '{id}': {source}")]
    Unit { id: String, source: UnitError },
    #[error("metric '{id}': {source}")]
    Formula { id: String, source: ExprError },
    #[error("metric '{id}': declared unit has dimension {declared} but the formula yields {inferred}")]
    DimensionMismatch {
        id: String,
        declared: Dimension,
        inferred: Dimension,
    },
    #[error("metric '{id}': unknown builtin kind '{kind}'")]
    UnknownBuiltin { id: String, kind: String },
    #[error("metric '{id}': {msg}")]
    BadBuiltin { id: String, msg: String },
    #[error("metric '{0}' needs exactly one of 'formula' or 'builtin'")]
    FormulaShape(String),
    #[error("metric '{0}': range bounds are not ordered")]
    Range(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("value unit '{found}' is incompatible with metric unit '{expected}'")]
    ValueUnit { expected: Unit, found: Unit },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("missing binding for '{0}'")]
    Missing(String),
    #[error("binding '{variable}' has unit '{found}', incompatible with '{expected}'")]
    DimensionMismatch {
        variable: String,
        expected: Unit,
        found: Unit,
    },
    #[error("singular input: denominator '{0}' is zero")]
    Singular(String),
    #[error("non-finite result for metric '{0}'")]
    NonFinite(String),
    #[error("'{variable}': {msg}")]
    BadInput { variable: String, msg: String },
    #[error(transparent)]
    Expr(ExprError),
    #[error(transparent)]
    Finance(#[from] FinanceError),
}

impl From<ExprError> for EvalError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Singular(d) => EvalError::Singular(d),
            ExprError::Missing(v) => EvalError::Missing(v),
            other => EvalError::Expr(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindingError {
    #[error("binding '{0}' given more than once")]
    Duplicate(String),
    #[error("binding '{0}' is not of the form name=value")]
    Malformed(String),
    #[error("binding '{name}': {source}")]
    Value { name: String, source: UnitError },
}

/// Variable name → quantity. Names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, Quantity>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn insert(&mut self, name: &str, value: Quantity) -> Result<(), BindingError> {
        if self.0.contains_key(name) {
            return Err(BindingError::Duplicate(name.to_string()));
        }
        self.0.insert(name.to_string(), value);
        Ok(())
    }

    /// Inserts or replaces.
    pub fn set(&mut self, name: &str, value: Quantity) {
        self.0.insert(name.to_string(), value);
    }

    /// Builder form of [`Bindings::set`] taking a quantity literal such as
    /// `1.56MWh`. Panics on a malformed literal.
    pub fn with(mut self, name: &str, quantity: &str) -> Self {
        let q = Quantity::parse(quantity).unwrap_or_else(|e| panic!("{name}: {e}"));
        self.set(name, q);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Quantity> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Quantity)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses `name=<number><unit>` pairs.
    pub fn parse_pairs<'a, I>(pairs: I) -> Result<Self, BindingError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = Bindings::new();
        for pair in pairs {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| BindingError::Malformed(pair.to_string()))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(BindingError::Malformed(pair.to_string()));
            }
            let q = Quantity::parse(value).map_err(|source| BindingError::Value {
                name: name.to_string(),
                source,
            })?;
            out.insert(name, q)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub metric_id: String,
    pub value: f64,
    pub unit: Unit,
    pub note: String,
}

impl MetricValue {
    pub fn quantity(&self) -> Quantity {
        Quantity::new(self.value, self.unit.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    metrics: Vec<MetricDef>,
    index: BTreeMap<String, usize>,
}

impl Catalog {
    /// The bundled dictionary, parsed once.
    pub fn builtin() -> &'static Catalog {
        static BUILTIN: OnceLock<Catalog> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            load_catalog(BUILTIN_JSON).unwrap_or_else(|e| panic!("bundled catalog: {e}"))
        })
    }

    pub fn builtin_document() -> &'static str {
        BUILTIN_JSON
    }

    /// Builds a catalog from already-constructed definitions.
    pub fn from_metrics(metrics: Vec<MetricDef>) -> Result<Self, CatalogError> {
        validate_unique_assignment(metrics.iter().map(|m| Assignment {
            id: m.id.clone(),
            cell: Some(m.cell),
        }))?;
        for m in &metrics {
            m.check()?;
        }
        let index = metrics
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();
        Ok(Catalog { metrics, index })
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MetricDef> {
        self.index.get(id).map(|&i| &self.metrics[i])
    }

    pub fn metrics(&self) -> &[MetricDef] {
        &self.metrics
    }

    pub fn with_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a MetricDef> + 'a {
        self.metrics.iter().filter(move |m| m.tags.iter().any(|t| t == tag))
    }

    pub fn assignment_report(&self) -> AssignmentReport {
        validate_unique_assignment(self.metrics.iter().map(|m| Assignment {
            id: m.id.clone(),
            cell: Some(m.cell),
        }))
        .expect("checked at construction")
    }

    fn metric(&self, id: &str) -> Result<&MetricDef, EvalError> {
        self.get(id).ok_or_else(|| EvalError::UnknownMetric(id.to_string()))
    }

    /// Evaluates a metric; the result is in the metric's declared unit.
    pub fn evaluate(&self, id: &str, bindings: &Bindings) -> Result<MetricValue, EvalError> {
        let m = self.metric(id)?;
        let vars = canonical_inputs(m, bindings)?;
        let canonical = eval_formula(m, &vars)?;
        if !canonical.is_finite() {
            return Err(EvalError::NonFinite(m.id.clone()));
        }
        Ok(MetricValue {
            metric_id: m.id.clone(),
            value: m.unit.from_canonical(canonical),
            unit: m.unit.clone(),
            note: m.note.clone().unwrap_or_else(|| m.formula.to_string()),
        })
    }

    /// Central-difference sensitivity of a metric to one of its inputs, in
    /// metric unit per input unit. `h` is in the input's bound unit.
    pub fn marginal(
        &self,
        id: &str,
        at: &Bindings,
        wrt: &str,
        h: f64,
    ) -> Result<Quantity, EvalError> {
        let m = self.metric(id)?;
        let x = at.get(wrt).ok_or_else(|| EvalError::Missing(wrt.to_string()))?.clone();
        let mut probe = at.clone();
        let slope = finance::marginal::<EvalError, _>(
            |v| {
                probe.set(wrt, Quantity::new(v, x.unit.clone()));
                Ok(self.evaluate(id, &probe)?.value)
            },
            x.value,
            h,
        )?;
        Ok(Quantity::new(slope, m.unit.per(&x.unit)))
    }

    /// Classifies `value` against the metric's range.
    pub fn check_range(&self, id: &str, value: &MetricValue) -> Result<RangeVerdict, CatalogError> {
        let m = self
            .get(id)
            .ok_or_else(|| CatalogError::UnknownMetric(id.to_string()))?;
        if value.unit.dimension != m.unit.dimension {
            return Err(CatalogError::ValueUnit {
                expected: m.unit.clone(),
                found: value.unit.clone(),
            });
        }
        let v = m.unit.from_canonical(value.unit.to_canonical(value.value));
        Ok(range_verdict(m, v))
    }
}

fn range_verdict(m: &MetricDef, v: f64) -> RangeVerdict {
    let Some(range) = &m.range else {
        return RangeVerdict::Ok;
    };
    let label = m.label();
    let mut soft = None;
    let checks = [
        range.lower.map(|b| (b, if b.exclusive { v > b.value } else { v >= b.value }, ">")),
        range.upper.map(|b| (b, if b.exclusive { v < b.value } else { v <= b.value }, "<")),
    ];
    for (b, inside, op) in checks.into_iter().flatten() {
        if inside {
            continue;
        }
        let eq = if b.exclusive { "" } else { "=" };
        let msg = format!("{label} = {v} outside {label} {op}{eq} {}", b.value);
        match b.kind {
            BoundKind::Hard => return RangeVerdict::HardViolation(msg),
            BoundKind::Soft => soft = soft.or(Some(msg)),
        }
    }
    soft.map_or(RangeVerdict::Ok, RangeVerdict::SoftWarning)
}

fn canonical_inputs(m: &MetricDef, bindings: &Bindings) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut vars = BTreeMap::new();
    for name in m.formula.variables() {
        let q = bindings
            .get(&name)
            .ok_or_else(|| EvalError::Missing(name.clone()))?;
        let expected = &m.inputs[&name];
        if q.unit.dimension != expected.dimension {
            return Err(EvalError::DimensionMismatch {
                variable: name,
                expected: expected.clone(),
                found: q.unit.clone(),
            });
        }
        if !q.value.is_finite() {
            return Err(EvalError::BadInput {
                variable: name,
                msg: "value is not finite".into(),
            });
        }
        vars.insert(name, q.canonical());
    }
    Ok(vars)
}

fn periods(vars: &BTreeMap<String, f64>, name: &str) -> Result<u32, EvalError> {
    let t = vars[name];
    let rounded = t.round();
    if (t - rounded).abs() > 1e-9 || !(0.0..=1e6).contains(&rounded) {
        return Err(EvalError::BadInput {
            variable: name.to_string(),
            msg: format!("period count {t} must be a non-negative integer"),
        });
    }
    Ok(rounded as u32)
}

fn rate(vars: &BTreeMap<String, f64>, name: &str) -> Result<f64, EvalError> {
    let r = vars[name];
    finance::check_rate(r)?;
    Ok(r)
}

fn eval_formula(m: &MetricDef, vars: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    match &m.formula {
        Formula::Expr(e) => Ok(e.eval(vars)?),
        Formula::DiscountedSum(d) => {
            let r = rate(vars, &d.rate)?;
            let t_end = periods(vars, &d.periods)?;
            let per = d.per_period.eval(vars)?;
            let mut flows = Vec::new();
            if let Some(u) = &d.upfront {
                flows.push((0, u.eval(vars)?));
            }
            flows.extend((d.start..=t_end).map(|t| (t, per)));
            Ok(finance::discount(flows, r))
        }
        Formula::Levelized(l) => {
            let r = rate(vars, &l.rate)?;
            let t_end = periods(vars, &l.periods)?;
            let mut costs = Vec::new();
            if let Some(u) = &l.upfront_cost {
                costs.push((0, u.eval(vars)?));
            }
            if let Some(c) = &l.cost_per_period {
                let c = c.eval(vars)?;
                costs.extend((l.start..=t_end).map(|t| (t, c)));
            }
            let (out_expr, outputs) = match &l.output {
                LevelizedOutput::PerPeriod(e) => {
                    let o = e.eval(vars)?;
                    (e, (l.start..=t_end).map(|t| (t, o)).collect::<Vec<_>>())
                }
                LevelizedOutput::Total(e) => (e, vec![(0, e.eval(vars)?)]),
            };
            let c = finance::discount(costs, r);
            let o = finance::discount(outputs, r);
            let (num, den, den_text) = if l.reciprocal {
                (o, c, "discounted cost".to_string())
            } else {
                (c, o, format!("discounted {out_expr}"))
            };
            if den == 0.0 {
                return Err(EvalError::Singular(den_text));
            }
            Ok(num / den)
        }
        Formula::Marginal(mg) => {
            let x = vars[&mg.wrt];
            let h = mg.step.map_or_else(|| finance::default_step(x), |s| s * m.inputs[&mg.wrt].scale);
            let mut probe = vars.clone();
            finance::marginal::<EvalError, _>(
                |v| {
                    probe.insert(mg.wrt.clone(), v);
                    Ok(mg.of.eval(&probe)?)
                },
                x,
                h,
            )
        }
    }
}

/// Parses a `catalog-v1` document. Blank text is an empty catalog.
pub fn load_catalog(text: &str) -> Result<Catalog, CatalogError> {
    document::parse(text)
}
