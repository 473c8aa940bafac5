//! Dimensions and units.
//!
//! A [`Dimension`] is a vector of integer exponents over a fixed set of base
//! dimensions. Power is derived (energy per time). Token, FLOP, operation,
//! inference and bit counts are separate base dimensions and never convert
//! into one another. A [`Unit`] pairs a dimension with a positive scale to
//! the canonical unit of that dimension (kWh, h, USD, kg CO2e, L, K, m², A,
//! kg H2, and one of each count species).

use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseDim {
    Energy,
    Time,
    Currency,
    Co2e,
    Water,
    Temperature,
    Area,
    Current,
    Hydrogen,
    Token,
    Flop,
    Op,
    Inference,
    Bit,
}

pub const BASE_DIMS: [BaseDim; 14] = [
    BaseDim::Energy,
    BaseDim::Time,
    BaseDim::Currency,
    BaseDim::Co2e,
    BaseDim::Water,
    BaseDim::Temperature,
    BaseDim::Area,
    BaseDim::Current,
    BaseDim::Hydrogen,
    BaseDim::Token,
    BaseDim::Flop,
    BaseDim::Op,
    BaseDim::Inference,
    BaseDim::Bit,
];

impl BaseDim {
    fn canonical_symbol(self) -> &'static str {
        match self {
            BaseDim::Energy => "kWh",
            BaseDim::Time => "h",
            BaseDim::Currency => "USD",
            BaseDim::Co2e => "kgCO2e",
            BaseDim::Water => "L",
            BaseDim::Temperature => "K",
            BaseDim::Area => "m2",
            BaseDim::Current => "A",
            BaseDim::Hydrogen => "kgH2",
            BaseDim::Token => "token",
            BaseDim::Flop => "flop",
            BaseDim::Op => "op",
            BaseDim::Inference => "inference",
            BaseDim::Bit => "bit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dimension([i8; BASE_DIMS.len()]);

impl Dimension {
    pub const NONE: Dimension = Dimension([0; BASE_DIMS.len()]);

    pub fn base(d: BaseDim) -> Self {
        let mut e = [0; BASE_DIMS.len()];
        e[d as usize] = 1;
        Dimension(e)
    }

    pub fn exponent(self, d: BaseDim) -> i8 {
        self.0[d as usize]
    }

    pub fn is_dimensionless(self) -> bool {
        self == Self::NONE
    }

    pub fn powi(self, n: i32) -> Self {
        let mut e = self.0;
        for x in &mut e {
            *x = (*x as i32 * n) as i8;
        }
        Dimension(e)
    }

    /// Raises to `num/den`; `None` if any exponent would be fractional.
    pub fn pow_rational(self, num: i32, den: i32) -> Option<Self> {
        let mut e = self.0;
        for x in &mut e {
            let scaled = *x as i32 * num;
            if scaled % den != 0 {
                return None;
            }
            *x = (scaled / den) as i8;
        }
        Some(Dimension(e))
    }

    pub fn recip(self) -> Self {
        self.powi(-1)
    }
}

impl Mul for Dimension {
    type Output = Dimension;
    fn mul(self, rhs: Self) -> Self {
        let mut e = self.0;
        for (a, b) in e.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Dimension(e)
    }
}

impl Div for Dimension {
    type Output = Dimension;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut first = true;
        for d in BASE_DIMS {
            let e = self.exponent(d);
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            f.write_str(d.canonical_symbol())?;
            if e != 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit symbol '{0}'")]
    UnknownSymbol(String),
    #[error("malformed unit expression '{0}'")]
    Malformed(String),
    #[error("cannot parse quantity '{0}'")]
    BadQuantity(String),
}

/// A unit: dimension plus multiplicative scale to the canonical unit.
/// The textual form is kept for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Unit {
    pub dimension: Dimension,
    pub scale: f64,
    symbol: String,
}

impl Unit {
    pub fn dimensionless() -> Self {
        Unit {
            dimension: Dimension::NONE,
            scale: 1.0,
            symbol: "1".into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, UnitError> {
        let trimmed = text.trim();
        let (dimension, scale) = UnitParser::new(trimmed).parse()?;
        Ok(Unit {
            dimension,
            scale,
            symbol: if trimmed.is_empty() {
                "1".into()
            } else {
                trimmed.to_string()
            },
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn is_dimensionless(&self) -> bool {
        self.dimension.is_dimensionless()
    }

    /// `self / other`, with a parenthesised symbol.
    pub fn per(&self, other: &Unit) -> Unit {
        let symbol = match (self.symbol.as_str(), other.symbol.as_str()) {
            (a, "1") => a.to_string(),
            ("1", b) => format!("1/({b})"),
            (a, b) if a == b => "1".into(),
            (a, b) => format!("({a})/({b})"),
        };
        Unit {
            dimension: self.dimension / other.dimension,
            scale: self.scale / other.scale,
            symbol,
        }
    }

    pub fn to_canonical(&self, value: f64) -> f64 {
        value * self.scale
    }

    pub fn from_canonical(&self, canonical: f64) -> f64 {
        canonical / self.scale
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

impl TryFrom<String> for Unit {
    type Error = UnitError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Unit::parse(&s)
    }
}

impl From<Unit> for String {
    fn from(u: Unit) -> String {
        u.symbol
    }
}

/// A scalar with a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    pub fn dimensionless(value: f64) -> Self {
        Quantity::new(value, Unit::dimensionless())
    }

    pub fn canonical(&self) -> f64 {
        self.unit.to_canonical(self.value)
    }

    /// Parses `<number><unit>`, e.g. `1.56MWh` or `0.4kgCO2e/kWh`. A bare
    /// number is dimensionless.
    pub fn parse(text: &str) -> Result<Self, UnitError> {
        let t = text.trim();
        let split = number_prefix_len(t);
        if split == 0 {
            return Err(UnitError::BadQuantity(text.into()));
        }
        let value: f64 = t[..split]
            .parse()
            .map_err(|_| UnitError::BadQuantity(text.into()))?;
        let unit = Unit::parse(&t[split..])?;
        Ok(Quantity { value, unit })
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unit.is_dimensionless() && self.unit.scale == 1.0 {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{} {}", self.value, self.unit)
        }
    }
}

/// Length of the leading floating-point literal in `s`.
fn number_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return 0;
    }
    // exponent only when followed by a digit (so "1e" stays ambiguous-free
    // and "1eV" would not be eaten)
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

struct Atom {
    dimension: Dimension,
    scale: f64,
    prefixable: bool,
}

fn atom(symbol: &str) -> Option<Atom> {
    use BaseDim::*;
    let d = Dimension::base;
    let power = d(Energy) / d(Time);
    let (dimension, scale, prefixable) = match symbol {
        "1" | "" => (Dimension::NONE, 1.0, false),
        "%" => (Dimension::NONE, 0.01, false),
        // energy
        "Wh" => (d(Energy), 1e-3, true),
        "J" => (d(Energy), 1.0 / 3.6e6, true),
        // power
        "W" => (power, 1e-3, true),
        // time
        "s" => (d(Time), 1.0 / 3600.0, true),
        "min" => (d(Time), 1.0 / 60.0, false),
        "h" | "hr" => (d(Time), 1.0, false),
        "day" | "d" => (d(Time), 24.0, false),
        "yr" | "year" => (d(Time), 8760.0, false),
        // money
        "USD" | "$" => (d(Currency), 1.0, true),
        // emissions
        "gCO2e" | "gCO2" => (d(Co2e), 1e-3, true),
        "tCO2e" | "tCO2" => (d(Co2e), 1e3, false),
        // water
        "L" => (d(Water), 1.0, true),
        "m3" => (d(Water), 1e3, false),
        // temperature difference
        "K" | "degC" | "°C" => (d(Temperature), 1.0, false),
        "degF" => (d(Temperature), 5.0 / 9.0, false),
        "m2" => (d(Area), 1.0, false),
        "A" => (d(Current), 1.0, true),
        "V" => (power / d(Current), 1e-3, true),
        "gH2" => (d(Hydrogen), 1e-3, true),
        // count species
        "token" | "tokens" | "tok" => (d(Token), 1.0, true),
        "flop" | "FLOP" | "flops" | "FLOPs" => (d(Flop), 1.0, true),
        "op" | "ops" => (d(Op), 1.0, true),
        "inference" | "inferences" | "inf" => (d(Inference), 1.0, true),
        "bit" | "bits" | "b" => (d(Bit), 1.0, true),
        "B" | "byte" | "bytes" => (d(Bit), 8.0, true),
        // dimensionless counting nouns
        "rack" | "racks" | "GPU" | "GPUs" | "req" | "request" | "requests" | "query"
        | "queries" | "step" | "steps" | "failure" | "failures" | "event" | "events"
        | "checkpoint" | "checkpoints" => (Dimension::NONE, 1.0, false),
        _ => return None,
    };
    Some(Atom {
        dimension,
        scale,
        prefixable,
    })
}

fn prefix(c: char) -> Option<f64> {
    Some(match c {
        'p' => 1e-12,
        'n' => 1e-9,
        'u' | 'µ' => 1e-6,
        'm' => 1e-3,
        'k' => 1e3,
        'M' => 1e6,
        'G' => 1e9,
        'T' => 1e12,
        'P' => 1e15,
        'E' => 1e18,
        _ => return None,
    })
}

fn lookup(symbol: &str) -> Result<(Dimension, f64), UnitError> {
    if let Some(a) = atom(symbol) {
        return Ok((a.dimension, a.scale));
    }
    let mut chars = symbol.chars();
    if let Some(first) = chars.next() {
        if let (Some(p), Some(a)) = (prefix(first), atom(chars.as_str())) {
            if a.prefixable {
                return Ok((a.dimension, a.scale * p));
            }
        }
    }
    Err(UnitError::UnknownSymbol(symbol.into()))
}

/// `expr := factor (('*' | '·' | '/') factor)*`,
/// `factor := (symbol | '(' expr ')') ('^' int)?`
struct UnitParser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> UnitParser<'a> {
    fn new(src: &'a str) -> Self {
        UnitParser {
            src,
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn err(&self) -> UnitError {
        UnitError::Malformed(self.src.into())
    }

    fn parse(mut self) -> Result<(Dimension, f64), UnitError> {
        if self.src.is_empty() {
            return Ok((Dimension::NONE, 1.0));
        }
        let out = self.expr()?;
        self.skip_ws();
        if self.pos != self.chars.len() {
            return Err(self.err());
        }
        Ok(out)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<(Dimension, f64), UnitError> {
        let (mut dim, mut scale) = self.factor()?;
        loop {
            match self.peek() {
                Some('*') | Some('·') => {
                    self.pos += 1;
                    let (d, s) = self.factor()?;
                    dim = dim * d;
                    scale *= s;
                }
                Some('/') => {
                    self.pos += 1;
                    let (d, s) = self.factor()?;
                    dim = dim / d;
                    scale /= s;
                }
                _ => return Ok((dim, scale)),
            }
        }
    }

    fn factor(&mut self) -> Result<(Dimension, f64), UnitError> {
        let (dim, scale) = match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err());
                }
                self.pos += 1;
                inner
            }
            Some(_) => {
                let start = self.pos;
                while self.pos < self.chars.len() {
                    let c = self.chars[self.pos];
                    if c.is_alphanumeric() || c == '%' || c == '$' || c == '°' || c == 'µ' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                if start == self.pos {
                    return Err(self.err());
                }
                let symbol: String = self.chars[start..self.pos].iter().collect();
                lookup(&symbol)?
            }
            None => return Err(self.err()),
        };
        if self.peek() == Some('^') {
            self.pos += 1;
            let start = self.pos;
            if self.pos < self.chars.len() && self.chars[self.pos] == '-' {
                self.pos += 1;
            }
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            let n: i32 = text.parse().map_err(|_| self.err())?;
            return Ok((dim.powi(n), scale.powi(n)));
        }
        Ok((dim, scale))
    }
}
