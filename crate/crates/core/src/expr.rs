//! Units-aware expression trees for closed-form metric formulas.
//!
//! Formulas are written in a small infix language:
//!
//! ```text
//! E_total / E_IT
//! (1 - ERF) * PUE
//! V0 * (1 - d)^t
//! max(price_i, price_j) - min(price_i, price_j)
//! if(load >= 0.8, penalty, 0[USD])
//! 1000[token] * C_token
//! ```
//!
//! Literals may carry a unit in brackets. Evaluation happens in canonical
//! units; the caller converts the result into the declared unit.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::units::{Dimension, Quantity, Unit, UnitError};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    /// Value already in canonical units, plus the unit as written.
    Lit { canonical: f64, unit: Unit, written: f64 },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    /// `if(lhs >= threshold, then, otherwise)`
    Cond {
        lhs: Box<Expr>,
        threshold: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset} in '{src}': {msg}")]
    Syntax {
        src: String,
        offset: usize,
        msg: String,
    },
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error("undeclared variable '{0}'")]
    Undeclared(String),
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    Dimension {
        context: String,
        left: Dimension,
        right: Dimension,
    },
    #[error("exponent of a dimensional base must be a constant rational, found '{0}'")]
    NonConstantExponent(String),
    #[error("exponent {exponent} leaves fractional dimension exponents on {base}")]
    FractionalDimension { base: Dimension, exponent: f64 },
    #[error("missing value for variable '{0}'")]
    Missing(String),
    #[error("singular input: denominator '{0}' is zero")]
    Singular(String),
    #[error("non-finite result while evaluating '{0}'")]
    NonFinite(String),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser::new(src)?;
        let e = p.expr()?;
        if !p.at_end() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn lit(value: f64, unit: Unit) -> Expr {
        Expr::Lit {
            canonical: unit.to_canonical(value),
            unit,
            written: value,
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Variable names referenced, sorted and deduplicated.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Var(n) => out.push(n.clone()),
            Expr::Lit { .. } => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Min(xs) | Expr::Max(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Expr::Cond {
                lhs,
                threshold,
                then,
                otherwise,
            } => {
                for e in [lhs, threshold, then, otherwise] {
                    e.collect_vars(out);
                }
            }
        }
    }

    /// Infers the result dimension given each variable's dimension.
    pub fn infer(&self, vars: &BTreeMap<String, Dimension>) -> Result<Dimension, ExprError> {
        match self {
            Expr::Var(n) => vars
                .get(n)
                .copied()
                .ok_or_else(|| ExprError::Undeclared(n.clone())),
            Expr::Lit { unit, .. } => Ok(unit.dimension),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (l, r) = (a.infer(vars)?, b.infer(vars)?);
                same(l, r, self)
            }
            Expr::Mul(a, b) => Ok(a.infer(vars)? * b.infer(vars)?),
            Expr::Div(a, b) => Ok(a.infer(vars)? / b.infer(vars)?),
            Expr::Neg(a) => a.infer(vars),
            Expr::Pow(base, exp) => {
                let bd = base.infer(vars)?;
                let ed = exp.infer(vars)?;
                if !ed.is_dimensionless() {
                    return Err(ExprError::Dimension {
                        context: format!("exponent of {self}"),
                        left: ed,
                        right: Dimension::NONE,
                    });
                }
                if bd.is_dimensionless() {
                    return Ok(bd);
                }
                let k = exp
                    .constant()
                    .ok_or_else(|| ExprError::NonConstantExponent(exp.to_string()))?;
                let (num, den) = rational(k).ok_or(ExprError::FractionalDimension {
                    base: bd,
                    exponent: k,
                })?;
                bd.pow_rational(num, den)
                    .ok_or(ExprError::FractionalDimension { base: bd, exponent: k })
            }
            Expr::Min(xs) | Expr::Max(xs) => {
                let mut it = xs.iter();
                let first = it
                    .next()
                    .ok_or_else(|| ExprError::Undeclared("min/max of nothing".into()))?
                    .infer(vars)?;
                for x in it {
                    same(first, x.infer(vars)?, self)?;
                }
                Ok(first)
            }
            Expr::Cond {
                lhs,
                threshold,
                then,
                otherwise,
            } => {
                same(lhs.infer(vars)?, threshold.infer(vars)?, self)?;
                same(then.infer(vars)?, otherwise.infer(vars)?, self)
            }
        }
    }

    /// Constant value of a variable-free subtree, in canonical units.
    pub fn constant(&self) -> Option<f64> {
        if !self.variables().is_empty() {
            return None;
        }
        self.eval(&BTreeMap::new()).ok()
    }

    /// Evaluates with canonical-unit variable values.
    pub fn eval(&self, vars: &BTreeMap<String, f64>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Var(n) => *vars.get(n).ok_or_else(|| ExprError::Missing(n.clone()))?,
            Expr::Lit { canonical, .. } => *canonical,
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => {
                let num = a.eval(vars)?;
                let den = b.eval(vars)?;
                if den == 0.0 {
                    return Err(ExprError::Singular(b.to_string()));
                }
                num / den
            }
            Expr::Neg(a) => -a.eval(vars)?,
            Expr::Pow(a, b) => {
                let base = a.eval(vars)?;
                let exp = b.eval(vars)?;
                if base == 0.0 && exp < 0.0 {
                    return Err(ExprError::Singular(a.to_string()));
                }
                base.powf(exp)
            }
            Expr::Min(xs) => fold(xs, vars, f64::min)?,
            Expr::Max(xs) => fold(xs, vars, f64::max)?,
            Expr::Cond {
                lhs,
                threshold,
                then,
                otherwise,
            } => {
                if lhs.eval(vars)? >= threshold.eval(vars)? {
                    then.eval(vars)?
                } else {
                    otherwise.eval(vars)?
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite(self.to_string()))
        }
    }
}

fn fold(
    xs: &[Expr],
    vars: &BTreeMap<String, f64>,
    f: fn(f64, f64) -> f64,
) -> Result<f64, ExprError> {
    let mut acc: Option<f64> = None;
    for x in xs {
        let v = x.eval(vars)?;
        acc = Some(acc.map_or(v, |a| f(a, v)));
    }
    acc.ok_or_else(|| ExprError::Missing("argument".into()))
}

fn same(l: Dimension, r: Dimension, e: &Expr) -> Result<Dimension, ExprError> {
    if l == r {
        Ok(l)
    } else {
        Err(ExprError::Dimension {
            context: e.to_string(),
            left: l,
            right: r,
        })
    }
}

/// Small-denominator rational approximation (exact for k = p/q, q ≤ 12).
fn rational(k: f64) -> Option<(i32, i32)> {
    for den in 1..=12 {
        let num = k * den as f64;
        if (num - num.round()).abs() < 1e-12 {
            return Some((num.round() as i32, den));
        }
    }
    None
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(n) => f.write_str(n),
            Expr::Lit { unit, written, .. } => {
                if unit.is_dimensionless() && unit.scale == 1.0 {
                    write!(f, "{written}")
                } else {
                    write!(f, "{written}[{unit}]")
                }
            }
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, b) => write!(f, "{a}^{b}"),
            Expr::Min(xs) | Expr::Max(xs) => {
                f.write_str(if matches!(self, Expr::Min(_)) { "min(" } else { "max(" })?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            Expr::Cond {
                lhs,
                threshold,
                then,
                otherwise,
            } => write!(f, "if({lhs} >= {threshold}, {then}, {otherwise})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Unit(String),
    Op(char),
    Ge,
    LParen,
    RParen,
    Comma,
}

struct Parser {
    src: String,
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ExprError> {
        let mut toks = Vec::new();
        let chars: Vec<(usize, char)> = src.char_indices().collect();
        let mut i = 0;
        let syntax = |offset: usize, msg: &str| ExprError::Syntax {
            src: src.to_string(),
            offset,
            msg: msg.to_string(),
        };
        while i < chars.len() {
            let (off, c) = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        while j < chars.len() && chars[j].1.is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().map(|c| c.1).collect();
                let v = text.parse().map_err(|_| syntax(off, "bad number"))?;
                toks.push((off, Tok::Num(v)));
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                toks.push((off, Tok::Ident(chars[start..i].iter().map(|c| c.1).collect())));
            } else if c == '[' {
                let start = i + 1;
                while i < chars.len() && chars[i].1 != ']' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(syntax(off, "unterminated unit bracket"));
                }
                toks.push((off, Tok::Unit(chars[start..i].iter().map(|c| c.1).collect())));
                i += 1;
            } else if c == '>' && chars.get(i + 1).map(|c| c.1) == Some('=') {
                toks.push((off, Tok::Ge));
                i += 2;
            } else {
                let t = match c {
                    '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                    '·' => Tok::Op('*'),
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => return Err(syntax(off, "unexpected character")),
                };
                toks.push((off, t));
                i += 1;
            }
        }
        Ok(Parser {
            src: src.to_string(),
            toks,
            pos: 0,
        })
    }

    fn error(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            src: self.src.clone(),
            offset: self.toks.get(self.pos).map_or(self.src.len(), |t| t.0),
            msg: msg.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Op('+')) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Op('-')) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Op('*')) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Op('/')) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Tok::Op('-')) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Op('^')) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect(Tok::LParen, "'('")?;
        let mut out = vec![self.expr()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.expr()?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(out)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.bump() {
            Some(Tok::Num(v)) => {
                if let Some(Tok::Unit(u)) = self.peek().cloned() {
                    self.pos += 1;
                    let unit = Unit::parse(&u)?;
                    Ok(Expr::lit(v, unit))
                } else {
                    Ok(Expr::lit(v, Unit::dimensionless()))
                }
            }
            Some(Tok::Ident(name)) => match (name.as_str(), self.peek()) {
                ("min", Some(Tok::LParen)) => Ok(Expr::Min(self.args()?)),
                ("max", Some(Tok::LParen)) => Ok(Expr::Max(self.args()?)),
                ("if", Some(Tok::LParen)) => {
                    self.pos += 1;
                    let lhs = self.expr()?;
                    self.expect(Tok::Ge, "'>='")?;
                    let threshold = self.expr()?;
                    self.expect(Tok::Comma, "','")?;
                    let then = self.expr()?;
                    self.expect(Tok::Comma, "','")?;
                    let otherwise = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::Cond {
                        lhs: Box::new(lhs),
                        threshold: Box::new(threshold),
                        then: Box::new(then),
                        otherwise: Box::new(otherwise),
                    })
                }
                _ => Ok(Expr::Var(name)),
            },
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected a value"))
            }
        }
    }
}

/// Canonicalised variable values from unit-carrying quantities.
pub fn canonical_values<'a, I>(vars: I) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = (&'a String, &'a Quantity)>,
{
    vars.into_iter()
        .map(|(k, q)| (k.clone(), q.canonical()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::BaseDim;

    fn dims(pairs: &[(&str, &str)]) -> BTreeMap<String, Dimension> {
        pairs
            .iter()
            .map(|(k, u)| (k.to_string(), Unit::parse(u).unwrap().dimension))
            .collect()
    }

    fn vals(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2 * 3 - 4 / 2").unwrap();
        assert_eq!(e.eval(&BTreeMap::new()).unwrap(), 5.0);
        let e = Expr::parse("2 ^ 3 ^ 2").unwrap();
        assert_eq!(e.eval(&BTreeMap::new()).unwrap(), 512.0);
        let e = Expr::parse("-2 ^ 2").unwrap();
        assert_eq!(e.eval(&BTreeMap::new()).unwrap(), -4.0);
        let e = Expr::parse("8 / 2 / 2").unwrap();
        assert_eq!(e.eval(&BTreeMap::new()).unwrap(), 2.0);
    }

    #[test]
    fn ratio_dimension() {
        let e = Expr::parse("E_total / E_IT").unwrap();
        let d = e.infer(&dims(&[("E_total", "kWh"), ("E_IT", "MWh")])).unwrap();
        assert!(d.is_dimensionless());
        assert_eq!(e.variables(), vec!["E_IT", "E_total"]);
    }

    #[test]
    fn adding_unlike_dimensions_fails() {
        let e = Expr::parse("a + b").unwrap();
        assert!(matches!(
            e.infer(&dims(&[("a", "kWh"), ("b", "L")])),
            Err(ExprError::Dimension { .. })
        ));
    }

    #[test]
    fn unit_literals() {
        let e = Expr::parse("1000[token] * c").unwrap();
        let d = e.infer(&dims(&[("c", "USD/token")])).unwrap();
        assert_eq!(d, Dimension::base(BaseDim::Currency));
        assert_eq!(e.eval(&vals(&[("c", 0.002)])).unwrap(), 2.0);
        let e = Expr::parse("1[MWh]").unwrap();
        assert_eq!(e.eval(&BTreeMap::new()).unwrap(), 1000.0);
    }

    #[test]
    fn powers() {
        let e = Expr::parse("V0 * (1 - d)^t").unwrap();
        let d = e
            .infer(&dims(&[("V0", "USD"), ("d", "1"), ("t", "1")]))
            .unwrap();
        assert_eq!(d, Dimension::base(BaseDim::Currency));
        let v = e.eval(&vals(&[("V0", 100.0), ("d", 0.5), ("t", 2.0)])).unwrap();
        assert_eq!(v, 25.0);
        let e = Expr::parse("x^2").unwrap();
        assert_eq!(
            e.infer(&dims(&[("x", "kWh")])).unwrap(),
            Dimension::base(BaseDim::Energy).powi(2)
        );
        let e = Expr::parse("x^t").unwrap();
        assert!(matches!(
            e.infer(&dims(&[("x", "kWh"), ("t", "1")])),
            Err(ExprError::NonConstantExponent(_))
        ));
        let e = Expr::parse("x^0.5").unwrap();
        assert!(matches!(
            e.infer(&dims(&[("x", "kWh")])),
            Err(ExprError::FractionalDimension { .. })
        ));
    }

    #[test]
    fn min_max_and_conditionals() {
        let e = Expr::parse("max(a, b) - min(a, b)").unwrap();
        assert_eq!(e.eval(&vals(&[("a", 3.0), ("b", 7.5)])).unwrap(), 4.5);
        let e = Expr::parse("if(x >= 1, 10, 20)").unwrap();
        assert_eq!(e.eval(&vals(&[("x", 1.0)])).unwrap(), 10.0);
        assert_eq!(e.eval(&vals(&[("x", 0.5)])).unwrap(), 20.0);
    }

    #[test]
    fn division_by_zero_names_denominator() {
        let e = Expr::parse("E_total / E_IT").unwrap();
        let err = e.eval(&vals(&[("E_total", 1.0), ("E_IT", 0.0)])).unwrap_err();
        assert_eq!(err, ExprError::Singular("E_IT".into()));
    }

    #[test]
    fn missing_and_syntax_errors() {
        let e = Expr::parse("a * b").unwrap();
        assert_eq!(
            e.eval(&vals(&[("a", 1.0)])).unwrap_err(),
            ExprError::Missing("b".into())
        );
        assert!(matches!(Expr::parse("a +"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(a"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("a $ b"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("1[furlong]"), Err(ExprError::Unit(_))));
    }

    #[test]
    fn display_reparses_to_same_value() {
        let src = "if(a >= 2[kWh], (a - b) / c, max(a, b) / c)^2";
        let e = Expr::parse(src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let v = vals(&[("a", 3.0), ("b", 1.0), ("c", 2.0)]);
        assert_eq!(e.eval(&v).unwrap(), again.eval(&v).unwrap());
    }
}
